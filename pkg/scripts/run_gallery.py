"""Run every built-in example end to end and print one verdict line each.

Equivalent to `jsm example <name>` for each gallery entry, but in-process
and with a shared settings block, which makes it a convenient smoke test
after touching the core modules.

Usage:
    python scripts/run_gallery.py [--seed N] [--trials N] [--tol X]
"""

import argparse
import sys
import time

from jacobisigma import expr as ex
from jacobisigma import sigma as sg


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=ex.DEFAULT_SEED)
    ap.add_argument("--trials", type=int, default=ex.DEFAULT_TRIALS)
    ap.add_argument("--tol", type=float, default=ex.DEFAULT_TOL)
    args = ap.parse_args()

    bad = 0
    for name in sg.BUILTIN_EXAMPLES:
        t0 = time.perf_counter()
        out = sg.builtin_example(name).verify(tol=args.tol,
                                              trials=args.trials,
                                              seed=args.seed)
        dt = time.perf_counter() - t0
        status = "PASS" if out["ok"] else "FAIL"
        print(f"{status}  {name:<24} ({dt:.2f} s)")
        if not out["ok"]:
            bad += 1
            for key, sub in sorted(out.items()):
                if isinstance(sub, dict) and not sub.get("ok", True):
                    print(f"      {key}: {sub}")
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
