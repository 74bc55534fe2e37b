#!/usr/bin/env python3
"""Static ring experiment: build, quiesce, run lookups, print a summary.

Equivalent to `logicnode experiment-chord` but prints per-size rows for a
sweep instead of writing CSVs.
"""

import argparse
import math
import sys

from logicnode.protocols.chord import ChordSim


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="16,64,128")
    ap.add_argument("--lookups", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    failed = False
    for n in (int(s) for s in args.sizes.split(",")):
        sim = ChordSim(seed=args.seed + n)
        sim.build(n)
        sim.quiesce()
        results = sim.run_lookup_batch(args.lookups)
        answered = [r for r in results if r.answered]
        agree = sum(1 for r in answered if r.consistent)
        bound = math.ceil(math.log2(n))
        max_hops = max((r.hops for r in answered), default=0)
        ok = agree == len(results) and max_hops <= bound
        failed |= not ok
        print("n=%4d lookups=%d answered=%d agree=%d max_hops=%d bound=%d %s"
              % (n, len(results), len(answered), agree, max_hops, bound,
                 "ok" if ok else "FAIL"))
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
