"""Run the acceptance criteria and write one CSV row per criterion.

    python scripts/run_acceptance.py [--seed 0] [--out runs/acceptance_script] [AC-1 AC-5 ...]
"""
import argparse
import csv
import sys
from pathlib import Path

from levycoupling import acceptance as acc


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("criteria", nargs="*", choices=list(acc.SUITE) + [[]])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/acceptance_script")
    a = ap.parse_args(argv)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    res = acc.run_suite(a.criteria or None, seed=a.seed, echo=print)
    with open(out / "acceptance.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["criterion", "passed", "seconds", "summary"])
        for c in res:
            w.writerow([c.name, c.passed, f"{c.seconds:.2f}", c.summary])
    return 0 if all(c.passed for c in res) else 1


if __name__ == "__main__":
    sys.exit(main())
