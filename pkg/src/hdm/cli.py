"""Command-line front end for convergence studies.

Options may also come from a plain-text config file of ``key = value`` lines
(``#`` starts a comment; keys are the long flag names with or without the
leading dashes, ``-`` and ``_`` interchangeable). Command-line flags override
the file.

Exit status: 0 if every Newton solve converged, 1 otherwise, 2 on usage errors.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .solver import NewtonConfig
from .study import FORMATS, METHODS, PROBLEMS, StudyConfig, StudyConfigError, emit, run_study

DEFAULTS = {
    "problem": "ns",
    "method": "morley",
    "domain": "square",
    "levels": 4,
    "out": None,
    "format": "csv",
    "newton_tol": 1e-9,
    "newton_max_iter": 20,
    "linear_solver": "direct",
    "properties": False,
    "allow_extension": False,
    "threads": 1,
    "pattern": "diagonal",
    "start_level": 0,
    "seed": 0,
}
_BOOL = {"properties", "allow_extension"}
_INT = {"levels", "newton_max_iter", "threads", "start_level", "seed"}
_FLOAT = {"newton_tol"}


def parse_config_file(path) -> dict:
    """Read ``key = value`` lines into a dict with typed values."""
    out = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key not in DEFAULTS:
            raise ValueError(f"{path}:{n}: unknown key {key!r}")
        if key in _BOOL:
            low = val.lower()
            if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
                raise ValueError(f"{path}:{n}: {key} expects a boolean")
            out[key] = low in ("true", "yes", "1", "on")
        elif key in _INT:
            out[key] = int(val)
        elif key in _FLOAT:
            out[key] = float(val)
        else:
            out[key] = val
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hdm-study", description=__doc__.split("\n\n")[0],
                                argument_default=argparse.SUPPRESS)
    p.add_argument("--config", help="key = value file; flags given here override it")
    p.add_argument("--problem", choices=PROBLEMS)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--domain", choices=("square", "lshape"))
    p.add_argument("--levels", type=int, help="number of mesh levels (default 4)")
    p.add_argument("--out", help="output path; stdout when omitted")
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--newton-tol", type=float, help="stop when ||increment||_D <= tol (default 1e-9)")
    p.add_argument("--newton-max-iter", type=int)
    p.add_argument("--linear-solver", choices=("direct", "iterative"))
    p.add_argument("--properties", action="store_true", help="also compute property measures")
    p.add_argument("--allow-extension", action="store_true",
                   help="permit combinations not covered by the reference tables")
    p.add_argument("--threads", type=int, help="assembly threads (default 1)")
    p.add_argument("--pattern", choices=("diagonal", "crisscross"),
                   help="initial triangulation of the square (default diagonal)")
    p.add_argument("--start-level", type=int, help="first mesh level (default 0)")
    p.add_argument("--seed", type=int, help="seed for the C_D multistart ascent")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def resolve_options(argv=None) -> tuple:
    args = vars(build_parser().parse_args(argv))
    verbose = args.pop("verbose", 0)
    opts = dict(DEFAULTS)
    cfg_path = args.pop("config", None)
    if cfg_path:
        opts.update(parse_config_file(cfg_path))
    opts.update(args)
    return opts, verbose


def config_from_options(opts: dict) -> StudyConfig:
    newton = NewtonConfig(tol_increment=opts["newton_tol"], max_iter=opts["newton_max_iter"],
                          linear_solver=opts["linear_solver"])
    return StudyConfig(problem=opts["problem"], method=opts["method"], domain=opts["domain"],
                       levels=opts["levels"], outputs=opts["format"], newton=newton,
                       properties=opts["properties"], allow_extension=opts["allow_extension"],
                       threads=opts["threads"], pattern=opts["pattern"],
                       start_level=opts["start_level"], seed=opts["seed"])


def main(argv=None) -> int:
    try:
        opts, verbose = resolve_options(argv)
        cfg = config_from_options(opts)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0)
    except (StudyConfigError, ValueError, OSError) as exc:
        print(f"hdm-study: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), format="%(message)s")
    report = run_study(cfg)
    try:
        texts = emit(report, cfg.outputs, opts["out"])
    except OSError as exc:
        print(f"hdm-study: error: {exc}", file=sys.stderr)
        return 2
    if opts["out"] is None:
        sys.stdout.write("\n".join(texts[k] for k in ("csv", "markdown", "properties") if k in texts))
    return 0 if report.converged else 1


if __name__ == "__main__":
    sys.exit(main())
