"""Command-line front end.

Exit codes: 0 success or pass, 1 fail verdict, 2 usage error, 3 structural defect.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from fractions import Fraction
from typing import List, Optional, Sequence

from .grading import ChartError, nilpotentize, structure_constants
from .structure import StructuralDefect, adapted_frame, classify_point_detailed
from .spacefile import SpaceFileError, UnknownFixture, catalog_text, parse_space, print_space

SCHEMA_VERSION = 1
EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_DEFECT = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _parse_point(text: Optional[str], dim: int, what: str):
    if text is None:
        return None
    try:
        vals = [Fraction(s.strip()) for s in text.split(",")]
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"{what}: cannot parse {text!r} as comma-separated numbers")
    if len(vals) != dim:
        raise UsageError(f"{what}: expected {dim} coordinates, got {len(vals)}")
    return tuple(vals)


def _parse_grid(text: Optional[str]):
    if text is None:
        return None
    try:
        return [float(Fraction(s.strip())) for s in text.split(",") if s.strip()]
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"--eps-grid: cannot parse {text!r}")


def _load(args):
    if args.space and args.catalog:
        raise UsageError("give either --space or --catalog, not both")
    if args.space:
        try:
            with open(args.space, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read {args.space}: {exc.strerror}")
    elif args.catalog:
        text = catalog_text(args.catalog)
    else:
        raise UsageError("one of --space or --catalog is required")
    system = parse_space(text)
    anchor = _parse_point(args.anchor, system.dim, "--anchor")
    if anchor is not None:
        system = dataclasses.replace(system, anchor=anchor, depth=None, _cache={})
    return system


def _fmt(x) -> str:
    return str(x) if isinstance(x, Fraction) else repr(float(x))


def _finite(x):
    return x if math.isfinite(x) else None


def _emit(args, payload: dict, lines: List[str]):
    if args.json:
        payload = {"schema_version": SCHEMA_VERSION, "command": args.command, **payload}
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print("\n".join(lines))


def cmd_analyze(args) -> int:
    system = _load(args)
    p = _parse_point(args.point, system.dim, "--point") or system.anchor
    c = classify_point_detailed(system, p, seed=args.seed)
    pt = [_fmt(a) for a in p]
    _emit(args, {"space": system.label, "point": pt, "depth": system.depth, "dims": list(c.dims),
                 "class": str(c.verdict), "reason": c.reason},
          [f"space: {system.label}", f"point: ({', '.join(pt)})", f"depth: {system.depth}",
           f"dims: {tuple(c.dims)}", f"class: {c.verdict}", f"reason: {c.reason}"])
    return EXIT_OK


def cmd_frame(args) -> int:
    system = _load(args)
    p = _parse_point(args.point, system.dim, "--point") or system.anchor
    fr = adapted_frame(system, p)
    rows = [{"word": system.label_of(w.word), "weight": w.hdeg} for w in fr.words]
    _emit(args, {"space": system.label, "point": [_fmt(a) for a in fr.point], "frame": rows,
                 "weight_sum": fr.weight_sum, "length_sum": fr.length_sum},
          [f"{r['word']}  weight {r['weight']}" for r in rows]
          + [f"weight sum {fr.weight_sum}, length sum {fr.length_sum}"])
    return EXIT_OK


def cmd_nilpotentize(args) -> int:
    system = _load(args)
    na = nilpotentize(system, system.anchor)
    sc = structure_constants(na)
    chart = [str(p) for p in na.chart.forward_polys]
    hats = {system.label_of(w): str(f) for w, f in sorted(
        na.hat_fields.items(), key=lambda kv: (na.word_hdeg(kv[0]), len(kv[0]), kv[0]))
        if len(w) == 1 or not f.is_zero()}
    table = [[i, j, k, str(c)] for i, j, k, c in sc.table()]
    lines = [f"privileged coordinates {', '.join(na.chart.names)} "
             f"(weights {tuple(na.coordinate_weights)})"]
    lines += [f"  {system.chart.names[i]} = {s}" for i, s in enumerate(chart)]
    lines += ["approximating fields:"] + [f"  {k}^ = {v}" for k, v in hats.items()]
    lines += [f"structure constants ({'closed' if sc.closed else 'not closed'}):"]
    lines += [f"  [Y{i},Y{j}] has Y{k} component {c}" for i, j, k, c in table] or ["  all zero"]
    _emit(args, {"space": system.label, "anchor": [_fmt(a) for a in system.anchor],
                 "coordinate_names": list(na.chart.names),
                 "coordinate_weights": list(na.coordinate_weights), "chart": chart,
                 "hat_fields": hats, "structure_constants": table, "closed": sc.closed},
          lines)
    return EXIT_OK


def cmd_lift(args) -> int:
    from .freelift import lift_system

    system = _load(args)
    ls = lift_system(system, system.anchor)
    text = print_space(ls.lifted, name=f"{system.label or 'space'}-lifted")
    if args.out:
        _write_text(args.out, text)
    _emit(args, {"space": system.label, "dim": ls.lifted.dim, "space_file": text,
                 "out": args.out}, [text.rstrip("\n")])
    return EXIT_OK


def _write_text(path: str, text: str):
    tmp = path + ".tmp"
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}")


def cmd_rho(args) -> int:
    from .quasimetric import QuasimetricConfig, rho_estimate, rho_u_estimate

    system = _load(args)
    if args.point is None or args.target is None:
        raise UsageError("rho needs --point and --target")
    v = [float(a) for a in _parse_point(args.point, system.dim, "--point")]
    w = [float(a) for a in _parse_point(args.target, system.dim, "--target")]
    cfg = QuasimetricConfig(seed=args.seed)
    if args.nilpotent:
        est = rho_u_estimate(nilpotentize(system, system.anchor), v, w, cfg)
    else:
        est = rho_estimate(system, v, w, cfg)
    _emit(args, {"space": system.label, "value": est.value, "status": str(est.status),
                 "controls": dict(zip(est.words, est.controls.tolist())),
                 "endpoint_residual": est.endpoint_residual, "seed": args.seed},
          [f"rho = {est.value!r} ({est.status})",
           *[f"  {lab}: {float(c)!r}" for lab, c in zip(est.words, est.controls)],
           f"endpoint residual {est.endpoint_residual:.3g}"])
    return EXIT_OK


def cmd_converge(args) -> int:
    from .lab import DEFAULT_GRID, EXPERIMENTS, ExperimentConfig, emit_report

    system = _load(args)
    grid = DEFAULT_GRID if args.eps_grid is None else _parse_grid(args.eps_grid)
    cfg = ExperimentConfig(space=system.label, anchor=system.anchor, eps_grid=grid,
                           samples=args.samples, controls_per_anchor=args.controls,
                           seed=args.seed, out_dir=args.out)
    report = EXPERIMENTS[args.experiment](system, system.anchor, cfg)
    os.makedirs(args.out, exist_ok=True)
    stem = os.path.join(args.out, f"{args.experiment}-{system.label or 'space'}")
    paths = emit_report(report, stem)
    _emit(args, {"space": system.label, "experiment": report.experiment, "verdict": report.verdict,
                 "slope": _finite(report.slope), "intercept": _finite(report.intercept),
                 "r2": _finite(report.r2),
                 "expected": report.expected, "note": report.note, "files": paths,
                 "seed": args.seed},
          [f"{report.experiment} on {system.label}: {report.verdict}",
           f"slope {report.slope:.4f} (expected {'>=' if report.direction == 'ge' else '<='} "
           f"{report.expected:.4f}), R^2 {report.r2:.4f}",
           *([report.note] if report.note else []), *[f"wrote {p}" for p in paths]])
    return EXIT_OK if report.verdict == "Pass" else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_argument_group("space")
    src.add_argument("--space", metavar="FILE", help="space definition file")
    src.add_argument("--catalog", metavar="NAME", help="built-in fixture name")
    common.add_argument("--anchor", help="anchor point u, e.g. '0,1,0'")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--json", action="store_true", help="machine-readable output")

    ap = argparse.ArgumentParser(prog="ccgeom", description="Weighted Carnot-Caratheodory workbench")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="filtration dims and regularity")
    p.add_argument("--point")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("frame", parents=[common], help="adapted frame at a point")
    p.add_argument("--point")
    p.set_defaults(func=cmd_frame)

    p = sub.add_parser("nilpotentize", parents=[common], help="hat fields and structure constants")
    p.set_defaults(func=cmd_nilpotentize)

    p = sub.add_parser("lift", parents=[common], help="emit the lifted space file")
    p.add_argument("--out", metavar="FILE")
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser("rho", parents=[common], help="quasimetric estimate between two points")
    p.add_argument("--point", help="start point v")
    p.add_argument("--target", help="end point w")
    p.add_argument("--nilpotent", action="store_true", help="use the approximating fields at the anchor")
    p.set_defaults(func=cmd_rho)

    p = sub.add_parser("converge", parents=[common], help="convergence-rate experiment")
    p.add_argument("experiment", choices=["divergence", "local-approx", "cone", "gromov"])
    p.add_argument("--eps-grid", help="comma-separated, strictly decreasing")
    p.add_argument("--samples", type=int, default=16, help="anchors (or pairs) per grid point")
    p.add_argument("--controls", type=int, default=64, help="control tuples per anchor (divergence)")
    p.add_argument("--out", metavar="DIR", default=".")
    p.set_defaults(func=cmd_converge)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    from .lab import ExperimentError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, SpaceFileError, UnknownFixture, ExperimentError) as exc:
        print(f"ccgeom: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StructuralDefect, ChartError) as exc:
        print(f"ccgeom: structural defect: {exc}", file=sys.stderr)
        return EXIT_DEFECT


if __name__ == "__main__":
    sys.exit(main())
