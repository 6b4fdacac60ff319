"""Run the nonsmooth calculus checks for several seeds and with a faulty max rule.

The faulty rule swaps the x = 0 branch; the suite should flag it while the
correct rule passes for every seed.
"""

import argparse

from shapevi.cli import _wrong_max
from shapevi.hadamard_calc import run_calculus_suite


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()
    for label, impl in (("dh_max", None), ("faulty max", _wrong_max)):
        for seed in range(args.seeds):
            res = run_calculus_suite(impl, seed=seed) if impl else run_calculus_suite(seed=seed)
            cells = "  ".join(f"{r.name}={'ok' if r.passed else 'FAIL'}({r.max_error:.1e})" for r in res)
            print(f"{label:10s} seed {seed}: {cells}")


if __name__ == "__main__":
    main()
