#!/usr/bin/env python3
"""Sweep random connected graphs and check the tree invariants on each."""

import argparse
import random
import sys

from logicnode.protocols.spanning_tree import (
    check_tree, extract_tree, random_connected_graph, run_spanning_tree)


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--graphs", type=int, default=50)
    ap.add_argument("--max-nodes", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    bad = 0
    for i in range(args.graphs):
        n = rng.randint(2, args.max_nodes)
        adj = random_connected_graph(n, rng)
        root = rng.choice(sorted(adj))
        net = run_spanning_tree(adj, root, seed=rng.randrange(2**31))
        problems = check_tree(adj, root, extract_tree(net, root))
        status = "ok" if not problems else "BAD " + "; ".join(problems)
        print("graph %02d n=%3d root=%s events=%d %s"
              % (i, n, root, len(net.trace), status))
        bad += bool(problems)
    print("%d/%d graphs valid" % (args.graphs - bad, args.graphs))
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
