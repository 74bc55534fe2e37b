"""Driver and checks for the speculative replication phase-one protocol."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from ..auth import full_mesh_keystore
from ..reader import parse_term, term_text
from ..runtime import NodeConfig
from ..sim import SimNetwork
from ..terms import deref
from . import facts, load_asset

CLIENT = "c1"


@dataclass
class CommitStatus:
    request: str
    committed: bool
    senders: Tuple[str, ...] = ()
    output: Optional[str] = None


class ZyzzyvaSim:
    """Four replicas (f=1), one client, full-mesh pairwise keys."""

    def __init__(self, batch_size: int = 1, seed: int = 0, replicas: int = 4,
                 key_seed: int = 1234):
        self.batch_size = batch_size
        self.replicas = ["r%d" % i for i in range(1, replicas + 1)]
        self.primary = self.replicas[0]
        self.keystore = full_mesh_keystore(self.replicas + [CLIENT],
                                           seed=b"mesh-%d" % key_seed)
        self.net = SimNetwork(seed=seed)
        self.compute_calls = 0

        replica_prog = load_asset("zyzzyva_replica")
        base = ["primary(%s)" % self.primary, "batch_size(%d)" % batch_size]
        base += ["replica(%s)" % r for r in self.replicas]
        for r in self.replicas:
            self.net.add_node(NodeConfig(
                address=r,
                program=replica_prog,
                facts=facts(*(base + ["seqno(1)"])),
                keystore=self.keystore,
                extra_builtins={("compute_output", 2): self._bi_compute},
            ))
        self.net.add_node(NodeConfig(
            address=CLIENT,
            program=load_asset("zyzzyva_client"),
            facts=facts("primary(%s)" % self.primary),
            keystore=self.keystore,
        ))
        self._submitted: List[str] = []

    def _bi_compute(self, solver, args):
        # echo, but counted: cache hits must not come through here
        self.compute_calls += 1
        m = solver.mark()
        if solver.unify(args[0], args[1]):
            yield
        solver.undo(m)

    # --- driving ---

    def submit(self, req: str) -> None:
        self._submitted.append(req)
        self.net.inject_term(self.net.clock, CLIENT, parse_term("kick(%s)" % req))
        self.net.run_until(self.net.clock + 1)

    def settle(self, grace_ms: float = 50) -> None:
        self.net.run_until(self.net.clock + grace_ms)

    def run_requests(self, count: int, prefix: str = "q") -> List[str]:
        reqs = ["%s%d" % (prefix, i) for i in range(count)]
        for r in reqs:
            self.submit(r)
        self.settle()
        return reqs

    # --- verdicts ---

    def client_replies(self) -> Dict[str, Dict[Tuple[str, str], set]]:
        """request -> (seq key text, output text) -> set of reply senders."""
        out: Dict[str, Dict[Tuple[str, str], set]] = {}
        for t in self.net.nodes[CLIENT].db.facts("rep", 4):
            src, seq, req, val = (deref(a) for a in t.args)
            key = (term_text(seq), term_text(val))
            out.setdefault(term_text(req), {}).setdefault(key, set()).add(src.name)
        return out

    def status(self, req: str, quorum: int = 4) -> CommitStatus:
        groups = self.client_replies().get(req, {})
        for (seq, val), senders in groups.items():
            if len(senders) >= quorum:
                return CommitStatus(req, True, tuple(sorted(senders)), val)
        return CommitStatus(req, False)

    def all_committed(self, reqs: List[str], quorum: int = 4) -> bool:
        return all(self.status(r, quorum).committed for r in reqs)

    # --- replay: re-deliver a recorded batch message from the primary ---

    def recorded_batches(self, replica: str) -> List[str]:
        return [rec.term for rec in self.net.trace
                if rec.node == replica and rec.origin == "network"
                and rec.term.startswith("process(")]

    def replay_batch(self, replica: str, batch_term: str) -> None:
        self.net.inject_term(self.net.clock, replica, parse_term(batch_term),
                             sender=self.primary, keystore=self.keystore)
        self.settle()


def tamper_mac_hook(frame: bytes) -> bytes:
    """Flip one bit inside the MAC field of a signed frame."""
    if len(frame) < 8 or not frame[4] & 0x01:
        return frame
    sender_len = int.from_bytes(frame[5:7], "big")
    mac_start = 4 + 1 + 2 + sender_len + 3
    if mac_start >= len(frame):
        return frame
    out = bytearray(frame)
    out[mac_start] ^= 0x40
    return bytes(out)
