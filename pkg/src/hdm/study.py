"""Convergence studies over a hierarchy of uniformly refined meshes."""
from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import (ErrorBundle, PropertyMeasures, compute_errors, compute_properties,
                       observed_order)
from .assembly import Assembler
from .discretisation import build_discretisation, mesh_kind_for
from .mesh import PATTERNS, build_initial_mesh, refine_red
from .problems import get_exact, get_problem
from .solver import NewtonConfig, NewtonReport, d_norm, newton_solve

log = logging.getLogger(__name__)

PROBLEMS = ("ns", "vk")
METHODS = ("morley", "adini", "gr")
FORMATS = ("csv", "markdown", "both")


class StudyConfigError(ValueError):
    """Invalid combination of study options."""


@dataclass
class StudyConfig:
    problem: str = "ns"
    method: str = "morley"
    domain: str = "square"
    levels: int = 4
    outputs: str = "csv"
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    properties: bool = False
    allow_extension: bool = False
    threads: int = 1
    pattern: str = "diagonal"
    start_level: int = 0
    seed: int = 0

    def __post_init__(self):
        for name, val, allowed in (("problem", self.problem, PROBLEMS), ("method", self.method, METHODS),
                                   ("domain", self.domain, ("square", "lshape")),
                                   ("format", self.outputs, FORMATS), ("pattern", self.pattern, PATTERNS)):
            if val not in allowed:
                raise StudyConfigError(f"{name} must be one of {', '.join(allowed)}; got {val!r}")
        if self.levels < 1:
            raise StudyConfigError("levels must be >= 1")
        if self.start_level < 0:
            raise StudyConfigError("start_level must be >= 0")
        if self.threads < 1:
            raise StudyConfigError("threads must be >= 1")
        if self.domain == "lshape" and not self.allow_extension:
            if self.problem != "vk":
                raise StudyConfigError(f"(problem={self.problem}, domain=lshape) is outside the "
                                       "reference tables; pass --allow-extension to run it")
            if self.method == "gr":
                raise StudyConfigError("(method=gr, domain=lshape) is outside the reference tables; "
                                       "pass --allow-extension to run it")
        if self.pattern == "crisscross" and (self.domain != "square" or self.method == "adini"):
            raise StudyConfigError(f"(pattern=crisscross, method={self.method}, domain={self.domain}): "
                                   "crisscross only applies to triangle meshes of the square")


@dataclass
class LevelRow:
    level: int
    h: float
    n_dofs: int
    newton: NewtonReport
    errors: ErrorBundle
    orders: list  # per component, None on the first row
    psi_norm: float = 0.0
    seconds: float = 0.0

    @property
    def newton_iters(self) -> int:
        return self.newton.iterations


@dataclass
class ConvergenceReport:
    config: StudyConfig
    rows: list = field(default_factory=list)
    properties: dict = field(default_factory=dict)  # level -> PropertyMeasures

    @property
    def k(self) -> int:
        return get_problem(self.config.problem).k

    @property
    def converged(self) -> bool:
        return all(r.newton.converged for r in self.rows)

    def errors(self, c: int = 0, norm: str = "rel_h1") -> list:
        return [getattr(r.errors[c], norm) for r in self.rows]

    def orders(self, c: int = 0, norm: str = "rel_h1") -> list:
        return observed_order(self.errors(c, norm))


def run_study(cfg: StudyConfig) -> ConvergenceReport:
    """Solve on levels ``start_level .. start_level + levels - 1`` and collect errors."""
    problem = get_problem(cfg.problem)
    exact = get_exact(cfg.problem, cfg.domain)
    report = ConvergenceReport(cfg)
    mesh = build_initial_mesh(cfg.domain, mesh_kind_for(cfg.method), cfg.pattern)
    for _ in range(cfg.start_level):
        mesh = refine_red(mesh)
    for i in range(cfg.levels):
        if i:
            mesh = refine_red(mesh)
        t0 = time.perf_counter()
        hd = build_discretisation(cfg.method, mesh)
        asm = Assembler(hd, problem, cfg.threads)
        psi, nrep = newton_solve(hd, problem, exact, cfg.newton, assembler=asm)
        if not nrep.converged:
            log.warning("level %d: Newton did not converge (increments %s)", mesh.level,
                        nrep.increment_history)
        errs = compute_errors(hd, problem, exact, psi)
        prev = report.rows[-1] if report.rows else None
        orders = [None if prev is None else observed_order([prev.errors[c].rel_h1, errs[c].rel_h1])[0]
                  for c in range(problem.k)]
        row = LevelRow(mesh.level, mesh.h, hd.n_dofs, nrep, errs, orders,
                       d_norm(asm.hessian_gram(), np.asarray(psi)))
        if cfg.properties:
            report.properties[mesh.level] = compute_properties(hd, seed=cfg.seed)
        row.seconds = time.perf_counter() - t0
        log.info("level %d: h=%.5f ndofs=%d newton=%d err_h1=%s (%.1fs)", mesh.level, mesh.h,
                 hd.n_dofs, nrep.iterations, [f"{e.rel_h1:.3e}" for e in errs.components], row.seconds)
        report.rows.append(row)
    return report


# -- output -----------------------------------------------------------------------

def _g(v) -> str:
    return "" if v is None else f"{v:.6g}"


def csv_header(k: int) -> list:
    cols = ["level", "h", "ndofs", "newton_iters"]
    for c in range(1, k + 1):
        cols += [f"err_l2_c{c}", f"err_h1_c{c}", f"err_w14_c{c}", f"err_h2_c{c}", f"order_h1_c{c}"]
    return cols


def to_csv(report: ConvergenceReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_header(report.k))
    for r in report.rows:
        line = [r.level, _g(r.h), r.n_dofs, r.newton_iters]
        for c in range(report.k):
            e = r.errors[c]
            line += [_g(e.rel_l2), _g(e.rel_h1), _g(e.rel_w14), _g(e.rel_h2), _g(r.orders[c])]
        w.writerow(line)
    return buf.getvalue()


def read_csv(text: str) -> list:
    """Parse a study CSV back into dicts of floats/ints (``None`` for empty cells)."""
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        out = {}
        for key, val in rec.items():
            if val == "":
                out[key] = None
            elif key in ("level", "ndofs", "newton_iters"):
                out[key] = int(val)
            else:
                out[key] = float(val)
        rows.append(out)
    return rows


def to_markdown(report: ConvergenceReport) -> str:
    cfg = report.config
    names = ["u", "v"][:report.k]
    lines = [f"## {cfg.method} / {cfg.problem} / {cfg.domain}", ""]
    head = "| level | h | ndofs | newton |"
    sep = "|---|---|---|---|"
    for n in names:
        head += f" err_D(grad {n}) | order |"
        sep += "---|---|"
    lines += [head, sep]
    for r in report.rows:
        line = f"| {r.level} | {r.h:.5f} | {r.n_dofs} | {r.newton_iters} |"
        for c in range(report.k):
            o = r.orders[c]
            line += f" {r.errors[c].rel_h1:.6f} | {'-' if o is None else f'{o:.4f}'} |"
        lines.append(line)
    if report.properties:
        lines += ["", "### Property measures", "",
                  "| level | C_D | alpha_D | gamma_D | max S_D | max W_D | max W^_D | max W~_D |",
                  "|---|---|---|---|---|---|---|---|"]
        for lvl, p in sorted(report.properties.items()):
            lines.append(f"| {lvl} | {p.c_d:.6g} | {p.alpha_d:.6g} | {p.gamma_d:.6g} | "
                         f"{max(p.s_d.values()):.6g} | {max(p.w_d.values()):.6g} | "
                         f"{max(p.w_hat_d.values()):.6g} | {max(p.w_tilde_d.values()):.6g} |")
    return "\n".join(lines) + "\n"


def properties_csv(report: ConvergenceReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    items = sorted(report.properties.items())
    if not items:
        w.writerow(["level"])
        return buf.getvalue()
    p0 = items[0][1]
    cols = ["level", "c_d", "c_d_l2", "c_d_l4", "alpha_d", "gamma_d"]
    cols += [f"s_d_{k}" for k in p0.s_d] + [f"w_d_{k}" for k in p0.w_d]
    cols += [f"w_hat_d_{k}" for k in p0.w_hat_d] + [f"w_tilde_d_{k}" for k in p0.w_tilde_d]
    w.writerow(cols)
    for lvl, p in items:
        w.writerow([lvl] + [_g(v) for v in (p.c_d, p.c_d_l2, p.c_d_l4, p.alpha_d, p.gamma_d)]
                   + [_g(v) for d in (p.s_d, p.w_d, p.w_hat_d, p.w_tilde_d) for v in d.values()])
    return buf.getvalue()


def emit(report: ConvergenceReport, fmt: str, path=None) -> dict:
    """Write the report; returns {format: text}. With ``path=None`` nothing is written.

    For ``both`` the suffix of ``path`` is replaced by ``.csv`` and ``.md``.
    Property measures, when present, go to ``<stem>.properties.csv``.
    """
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    texts = {}
    if fmt in ("csv", "both"):
        texts["csv"] = to_csv(report)
    if fmt in ("markdown", "both"):
        texts["markdown"] = to_markdown(report)
    if report.properties:
        texts["properties"] = properties_csv(report)
    if path is not None:
        path = Path(path)
        targets = {"csv": path if fmt == "csv" else path.with_suffix(".csv"),
                   "markdown": path if fmt == "markdown" else path.with_suffix(".md"),
                   "properties": path.with_suffix(".properties.csv")}
        for key, text in texts.items():
            try:
                targets[key].write_text(text)
            except OSError as exc:
                raise OSError(f"cannot write {targets[key]}: {exc.strerror or exc}") from None
    return texts
