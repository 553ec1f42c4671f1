"""Convergence experiments at a regular point of the three-field example.

Writes CSV and SVG reports into ``demos/out`` and prints the fitted rates.
Takes about a minute; the divergence experiment dominates.
"""
from pathlib import Path

from ccgeom.lab import EXPERIMENTS, ExperimentConfig, emit_report
from ccgeom.spacefile import catalog_system

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)
sys = catalog_system("example3-unit")
anchor = (0, 1, 0)

for name, run in EXPERIMENTS.items():
    cfg = ExperimentConfig(samples=4 if name == "divergence" else 8, controls_per_anchor=4, seed=1)
    rep = run(sys, anchor, cfg)
    csv_path, _ = emit_report(rep, str(out / name))
    print(f"{name:13s} slope {rep.slope:6.3f}  r2 {rep.r2:.3f}  {rep.verdict:12s} -> {csv_path}")
