"""Run the convergence studies behind the reference tables and write CSV/markdown.

    python3 scripts/reproduce_tables.py --out results/
    python3 scripts/reproduce_tables.py --only ns-morley --levels 6
"""
import argparse
import logging
from pathlib import Path

from hdm.study import StudyConfig, emit, run_study

# name -> (problem, method, domain, pattern, levels)
STUDIES = {
    "ns-morley": ("ns", "morley", "square", "crisscross", 5),
    "ns-morley-diagonal": ("ns", "morley", "square", "diagonal", 5),
    "ns-adini": ("ns", "adini", "square", "diagonal", 5),
    "ns-gr": ("ns", "gr", "square", "diagonal", 7),
    "vk-morley": ("vk", "morley", "square", "crisscross", 5),
    "vk-adini": ("vk", "adini", "square", "diagonal", 5),
    "vk-gr": ("vk", "gr", "square", "diagonal", 7),
    "vk-lshape-morley": ("vk", "morley", "lshape", "diagonal", 6),
    "vk-lshape-adini": ("vk", "adini", "lshape", "diagonal", 6),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--only", nargs="*", choices=sorted(STUDIES))
    ap.add_argument("--levels", type=int, help="override the number of levels of every study")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ok = True
    for name in args.only or STUDIES:
        problem, method, domain, pattern, levels = STUDIES[name]
        cfg = StudyConfig(problem=problem, method=method, domain=domain, pattern=pattern,
                          levels=args.levels or levels, outputs="both", threads=args.threads)
        print(f"== {name}")
        rep = run_study(cfg)
        print(emit(rep, "both", out / f"{name}.csv")["markdown"])
        ok &= rep.converged
    raise SystemExit(0 if ok else 1)


if __name__ == "__main__":
    main()
