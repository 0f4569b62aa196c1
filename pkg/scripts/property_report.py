"""Tabulate C_D, S_D and the limit-conformity defects per method and level.

    python3 scripts/property_report.py --levels 1 2 3 4 --out results/properties.md
"""
import argparse
from pathlib import Path

from hdm.analysis import compute_properties, observed_order
from hdm.discretisation import build_discretisation, mesh_kind_for
from hdm.mesh import build_mesh


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--methods", nargs="*", default=["morley", "adini", "gr"])
    ap.add_argument("--levels", nargs="*", type=int, default=[1, 2, 3, 4])
    ap.add_argument("--domain", default="square", choices=("square", "lshape"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out")
    args = ap.parse_args()

    lines = []
    for method in args.methods:
        props = {}
        for L in args.levels:
            hd = build_discretisation(method, build_mesh(args.domain, mesh_kind_for(method), L))
            props[L] = compute_properties(hd, seed=args.seed)
        p0 = props[args.levels[0]]
        lines += [f"## {method}", "", "| quantity | " + " | ".join(f"level {L}" for L in args.levels)
                  + " | finest order |", "|---" * (len(args.levels) + 2) + "|"]

        def row(label, vals, order=True):
            o = observed_order(vals)[-1] if order and len(vals) > 1 else None
            cells = " | ".join(f"{v:.4g}" for v in vals)
            lines.append(f"| {label} | {cells} | {'-' if o is None else f'{o:.3f}'} |")

        row("C_D", [props[L].c_d for L in args.levels], order=False)
        row("alpha_D", [props[L].alpha_d for L in args.levels], order=False)
        row("gamma_D", [props[L].gamma_d for L in args.levels], order=False)
        for key in p0.s_d:
            row(f"S_D {key}", [props[L].s_d[key] for L in args.levels])
        for key in p0.w_d:
            row(f"W_D {key}", [props[L].w_d[key] for L in args.levels])
            row(f"W~_D {key}", [props[L].w_tilde_d[key] for L in args.levels])
        for key in p0.w_hat_d:
            row(f"W^_D {key}", [props[L].w_hat_d[key] for L in args.levels])
        lines.append("")
    text = "\n".join(lines)
    print(text)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)


if __name__ == "__main__":
    main()
