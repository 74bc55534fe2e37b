"""The node kernel: one-at-a-time handler dispatch plus networking builtins.

A node owns a clause database and is driven entirely by envelopes handed to
`dispatch` by its transport.  Handlers run as first-solution queries; the
answer is discarded, side effects stay, and failures or errors never stop
the node.  Signature checks are lazy and cached per handler.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

from .auth import KeyStore
from .engine import Database, EngineError, SolveLimits, Solver
from .reader import Clause, Program, ReaderError, deserialize, serialize, term_text
from .terms import Atom, Int, Term, copy_term, deref, indicator
from .wire import Envelope

log = logging.getLogger("logicnode.runtime")

POLICIES = ("fail", "throw", "ignore")


class LinkError(Exception):
    """Raised by a transport when a message cannot be handed off."""


@dataclass
class NodeConfig:
    address: str
    program: Program
    facts: list = field(default_factory=list)  # of Clause
    policy: str = "fail"
    limits: SolveLimits = field(default_factory=SolveLimits)
    keystore: Optional[KeyStore] = None
    extra_builtins: dict = field(default_factory=dict)  # (name, arity) -> fn
    debug_endpoint: bool = True

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError("unknown send-error policy %r" % self.policy)


@dataclass
class Metrics:
    delivered: int = 0
    discarded: int = 0
    decode_errors: int = 0
    handler_failures: int = 0
    handler_errors: int = 0
    sends: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


class _HandlerContext:
    __slots__ = ("envelope", "state")

    def __init__(self, envelope: Envelope):
        self.envelope = envelope
        self.state = "unchecked"  # unchecked | valid | invalid


class Node:
    """A running node; also the engine's builtin host."""

    def __init__(self, config: NodeConfig, transport):
        self.config = config
        self.address = config.address
        self.transport = transport
        self.db = Database()
        self.db.load_program(config.program)
        for fact in config.facts:
            self.db.add_clause(fact)
        self.metrics = Metrics()
        self._ctx: Optional[_HandlerContext] = None
        self._sends_in_dispatch = 0
        self._builtins = {
            ("this_node", 1): self._bi_this_node,
            ("send", 2): self._bi_send,
            ("sendall", 3): self._bi_sendall,
            ("send_signed", 2): self._bi_send_signed,
            ("sendall_signed", 3): self._bi_sendall_signed,
            ("alarm", 2): self._bi_alarm,
            ("signed", 0): self._bi_signed,
            ("signed_by", 1): self._bi_signed_by1,
            ("signed_by", 2): self._bi_signed_by2,
            ("digest_id", 2): self._bi_digest_id,
        }
        self._builtins.update(config.extra_builtins)

    # --- BuiltinHost interface ---

    def lookup(self, name: str, arity: int) -> Optional[Callable]:
        return self._builtins.get((name, arity))

    # --- dispatch ---

    def dispatch(self, envelope: Envelope):
        """Evaluate one envelope; returns (outcome, term_text, sends)."""
        try:
            term = deserialize(envelope.payload)
        except ReaderError:
            self.metrics.decode_errors += 1
            return "decode_error", "", 0
        ind = indicator(term)
        text = term_text(term)
        if ind is None:
            self.metrics.discarded += 1
            return "discarded", text, 0
        allowed = ind in self.db.events
        if envelope.origin == "alarm":
            allowed = allowed or ind in self.db.alarms
        if not allowed:
            self.metrics.discarded += 1
            return "discarded", text, 0
        self.metrics.delivered += 1
        self._ctx = _HandlerContext(envelope)
        self._sends_in_dispatch = 0
        limits = SolveLimits(self.config.limits.max_steps,
                             self.config.limits.occurs_check)
        solver = Solver(self.db, limits, host=self)
        try:
            if solver.solve_first(term) is not None:
                outcome = "success"
            else:
                outcome = "failure"
                self.metrics.handler_failures += 1
        except EngineError as e:
            outcome = "error:%s" % e.kind
            self.metrics.handler_errors += 1
            log.warning("%s: handler %s aborted: %s", self.address, text, e)
        finally:
            self._ctx = None
        return outcome, text, self._sends_in_dispatch

    def dump_facts(self, name: str, arity: int) -> str:
        lines = [term_text(t) for t in self.db.facts(name, arity)]
        return "\n".join(lines)

    # --- send machinery ---

    def _resolve_address(self, t: Term) -> str:
        t = deref(t)
        if isinstance(t, Atom):
            return t.name
        raise EngineError("type", "destination address must be a ground atom")

    def _transmit(self, dest: str, message: Term, signed: bool) -> bool:
        payload = serialize(message)
        mac = None
        if signed:
            ks = self.config.keystore
            if ks is None or not ks.has_key(self.address, dest):
                raise EngineError("auth", "no key for destination %s" % dest)
            mac = ks.sign(self.address, dest, self.address.encode("utf-8"), payload)
        env = Envelope(self.address, payload, mac, "network")
        try:
            self.transport.send(self.address, dest, env)
        except LinkError as e:
            policy = self.config.policy
            if policy == "throw":
                raise EngineError("send", str(e))
            return policy == "ignore"
        self.metrics.sends += 1
        self._sends_in_dispatch += 1
        return True

    # --- builtins ---

    def _bi_this_node(self, solver, args):
        m = solver.mark()
        if solver.unify(args[0], Atom(self.address)):
            yield
        solver.undo(m)

    def _send_impl(self, solver, args, signed):
        dest = self._resolve_address(args[0])
        if self._transmit(dest, deref(args[1]), signed):
            yield

    def _bi_send(self, solver, args):
        yield from self._send_impl(solver, args, False)

    def _bi_send_signed(self, solver, args):
        yield from self._send_impl(solver, args, True)

    def _sendall_impl(self, solver, args, signed):
        destv, generator, message = args
        pairs = []
        m = solver.mark()
        barrier = next(solver._barrier)
        try:
            for _ in solver.prove(generator, barrier):
                mapping: dict = {}
                pairs.append((copy_term(destv, mapping), copy_term(message, mapping)))
        except Exception as e:
            from .engine import _Cut
            if not (isinstance(e, _Cut) and e.depth == barrier):
                raise
        solver.undo(m)
        for dest_t, msg_t in pairs:
            dest = self._resolve_address(dest_t)
            if not self._transmit(dest, msg_t, signed):
                return
        yield

    def _bi_sendall(self, solver, args):
        yield from self._sendall_impl(solver, args, False)

    def _bi_sendall_signed(self, solver, args):
        yield from self._sendall_impl(solver, args, True)

    def _bi_alarm(self, solver, args):
        msg = deref(args[0])
        delay = deref(args[1])
        if not isinstance(delay, Int) or delay.value < 0:
            raise EngineError("type", "alarm delay must be a non-negative integer")
        env = Envelope(self.address, serialize(msg), None, "alarm")
        self.transport.schedule_alarm(self.address, delay.value, env)
        yield

    # --- signature checks ---

    def _verified(self) -> bool:
        ctx = self._ctx
        if ctx is None:
            raise EngineError("context", "signature check outside a handler")
        if ctx.state == "unchecked":
            env = ctx.envelope
            ks = self.config.keystore
            if env.mac is None or env.origin == "alarm" or ks is None:
                ctx.state = "invalid"
            else:
                ok = ks.verify(env.sender, self.address,
                               env.sender.encode("utf-8"), env.payload, env.mac)
                ctx.state = "valid" if ok else "invalid"
        return ctx.state == "valid"

    def _bi_signed(self, solver, args):
        if self._verified():
            yield

    def _bi_signed_by1(self, solver, args):
        if self._verified():
            m = solver.mark()
            if solver.unify(args[0], Atom(self._ctx.envelope.sender)):
                yield
            solver.undo(m)

    def _bi_signed_by2(self, solver, args):
        if self._verified():
            env = self._ctx.envelope
            m = solver.mark()
            if (solver.unify(args[0], Atom(env.sender))
                    and solver.unify(args[1], Atom(env.mac.data.hex()))):
                yield
            solver.undo(m)

    def _bi_digest_id(self, solver, args):
        from .auth import digest_int
        value = digest_int(serialize(deref(args[0])))
        m = solver.mark()
        if solver.unify(args[1], Int(value)):
            yield
        solver.undo(m)


def start_node(config: NodeConfig, transport) -> Node:
    node = Node(config, transport)
    transport.register(config.address, node)
    return node
