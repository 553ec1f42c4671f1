"""Convergence-rate experiments with CSV and SVG output.

All experiments work in privileged coordinates at the anchor u.  There the
manifold dilation is the coordinate scaling delta_eps, the original fields
are the pushed-forward X'_I and the approximation is the hat fields.  The
quasimetrics are invariant under the chart change, so nothing is lost.
"""
from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .flows import EndpointMap, FlowError
from .grading import NilpotentApproximation, nilpotentize
from .quasimetric import DEFAULT_QM, QuasimetricConfig, RhoContext, Status, select_words
from .structure import WeightedSystem

CSV_HEADER = ("epsilon", "value", "n_samples", "n_failures", "seed")
DEFAULT_GRID = tuple(2.0 ** -k for k in range(3, 10))


class ExperimentError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    space: str = ""
    anchor: Optional[Sequence[float]] = None
    eps_grid: Sequence[float] = DEFAULT_GRID
    samples: int = 16
    controls_per_anchor: int = 64
    seed: int = 0
    out_dir: Optional[str] = None
    qm: QuasimetricConfig = DEFAULT_QM
    pair_radius: float = 0.5
    gromov_grid: int = 5

    def __post_init__(self):
        grid = [float(e) for e in self.eps_grid]
        if not grid:
            raise ExperimentError("empty epsilon grid")
        if any(e <= 0 for e in grid) or any(b >= a for a, b in zip(grid, grid[1:])):
            raise ExperimentError("epsilon grid must be positive and strictly decreasing")
        self.eps_grid = tuple(grid)


@dataclass
class ConvergenceRow:
    epsilon: float
    value: float
    n_samples: int
    n_failures: int
    seed: int


@dataclass
class ConvergenceReport:
    experiment: str
    rows: List[ConvergenceRow]
    expected: float
    direction: str                 # "ge": pass if slope >= expected; "le": slope <= expected
    x_name: str = "epsilon"        # "lambda" when the fit runs against 1/epsilon
    floor: float = 0.0
    slope: float = math.nan
    intercept: float = math.nan
    r2: float = math.nan
    verdict: str = "Inconclusive"
    note: str = ""
    space: str = ""

    def fit(self):
        """Least-squares log-log fit; verdicts require R^2 >= 0.9 and >= 4 points."""
        vals = np.array([r.value for r in self.rows])
        if len(self.rows) and np.all(vals <= 2 * self.floor):
            self.verdict = "Pass"
            self.note = "all values at the noise floor; no rate fitted"
            self.slope = self.intercept = self.r2 = math.nan
            return self
        xs = np.array([r.epsilon for r in self.rows])
        if self.x_name == "lambda":
            xs = 1.0 / xs
        mask = vals > 0
        if mask.sum() < 4:
            self.verdict = "Inconclusive"
            self.note = "fewer than 4 positive values"
            return self
        lx, ly = np.log(xs[mask]), np.log(vals[mask])
        A = np.vstack([lx, np.ones_like(lx)]).T
        (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
        pred = A @ np.array([slope, intercept])
        ss_res = float(np.sum((ly - pred) ** 2))
        ss_tot = float(np.sum((ly - ly.mean()) ** 2))
        self.slope, self.intercept = float(slope), float(intercept)
        self.r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
        if self.r2 < 0.9:
            self.verdict = "Inconclusive"
            self.note = f"R^2 = {self.r2:.3f} below 0.9"
            return self
        ok = self.slope >= self.expected if self.direction == "ge" else self.slope <= self.expected
        self.verdict = "Pass" if ok else "Fail"
        return self


def _rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *keys])))


@dataclass
class _Setup:
    na: NilpotentApproximation
    orig: RhoContext
    hat: RhoContext


def _setup(sys: WeightedSystem, u, cfg: ExperimentConfig) -> _Setup:
    na = nilpotentize(sys, sys.anchor if u is None else u)
    return _Setup(na, RhoContext.from_approximation(na, cfg.qm, hat=False),
                  RhoContext.from_approximation(na, cfg.qm, hat=True))


def _sample_at_radius(ctx: RhoContext, r: float, n: int, rng) -> np.ndarray:
    """Endpoints from 0 with scaled controls in [-1,1] and one entry at +-1 (rho close to r)."""
    out = []
    zero = np.zeros(ctx.dim)
    for _ in range(n):
        s = rng.uniform(-1, 1, size=ctx.K)
        k = rng.integers(ctx.K)
        s[k] = 1.0 if s[k] >= 0 else -1.0
        out.append(ctx.endpoint(zero, s * r ** ctx.hdegs))
    return np.array(out)


def _floor(cfg: ExperimentConfig) -> float:
    return cfg.qm.tol


def divergence_experiment(sys: WeightedSystem, u=None, cfg: ExperimentConfig | None = None
                          ) -> ConvergenceReport:
    """Sampled R(u, v, r): distance between endpoints of matching original and approximate flows."""
    cfg = cfg or ExperimentConfig()
    st = _setup(sys, u, cfg)
    na = st.na
    words = sorted(na.pushforward.words, key=lambda w: (na.word_hdeg(w), len(w), w))
    kept = select_words([na.pushforward[w] for w in words], [na.word_hdeg(w) for w in words],
                        words, cfg.qm.word_policy)
    orig_map = EndpointMap([k[0] for k in kept], cfg.qm.flow)
    hat_map = EndpointMap([na.hat(k[2]) for k in kept], cfg.qm.flow)
    hd = np.array([k[1] for k in kept], dtype=float)
    rows = []
    for idx, eps in enumerate(cfg.eps_grid):
        rng = _rng(cfg.seed, idx)
        anchors = _sample_at_radius(st.orig, eps, cfg.samples, rng)
        worst, fails, count = 0.0, 0, 0
        for v in anchors:
            b = rng.uniform(-1, 1, size=(cfg.controls_per_anchor, len(kept))) * eps ** hd
            for bi in b:
                try:
                    y = orig_map(v, bi)
                    yh = hat_map(v, bi)
                except FlowError:
                    fails += 1
                    continue
                if np.array_equal(y, yh):
                    count += 1
                    continue
                e1 = st.hat.estimate(y, yh)
                e2 = st.orig.estimate(y, yh)
                if e1.status != Status.CONVERGED or e2.status != Status.CONVERGED:
                    fails += 1
                    continue
                worst = max(worst, e1.value, e2.value)
                count += 1
        rows.append(ConvergenceRow(eps, worst, count, fails, cfg.seed))
    M = sys.depth
    return ConvergenceReport("divergence", rows, 1 + 1 / M - 0.1, "ge", floor=_floor(cfg),
                             space=sys.label).fit()


def local_approx_exponent(sys: WeightedSystem) -> float:
    """1 + d_1 / max(d_q, M); equals 1 + 1/M for unit weights."""
    return 1 + sys.weights[0] / max(sys.weights[-1], sys.depth)


def local_approx_experiment(sys: WeightedSystem, u=None, cfg: ExperimentConfig | None = None
                            ) -> ConvergenceReport:
    cfg = cfg or ExperimentConfig()
    st = _setup(sys, u, cfg)
    rows = []
    for idx, eps in enumerate(cfg.eps_grid):
        rng = _rng(cfg.seed, idx)
        vs = _sample_at_radius(st.orig, eps, cfg.samples, rng)
        ws = _sample_at_radius(st.orig, eps, cfg.samples, rng)
        worst, fails, count = 0.0, 0, 0
        for v, w in zip(vs, ws):
            a = st.orig.estimate(v, w)
            b = st.hat.estimate(v, w)
            if a.status != Status.CONVERGED or b.status != Status.CONVERGED:
                fails += 1
                continue
            worst = max(worst, abs(a.value - b.value))
            count += 1
        rows.append(ConvergenceRow(eps, worst, count, fails, cfg.seed))
    return ConvergenceReport("local-approx", rows, local_approx_exponent(sys) - 0.1, "ge",
                             floor=_floor(cfg), space=sys.label).fit()


def cone_rescale_experiment(sys: WeightedSystem, u=None, cfg: ExperimentConfig | None = None
                            ) -> ConvergenceReport:
    """dis(lambda) = max |lambda rho(delta_{1/lambda} v, delta_{1/lambda} w) - rho^u(v, w)|.

    The grid entries are eps = 1/lambda; the slope is fitted against lambda.
    """
    cfg = cfg or ExperimentConfig()
    st = _setup(sys, u, cfg)
    rng0 = _rng(cfg.seed, 10 ** 6)
    vs = _sample_at_radius(st.hat, 1.0, cfg.samples, rng0)
    ws = _sample_at_radius(st.hat, 1.0, cfg.samples, rng0)
    base = [st.hat.estimate(v, w) for v, w in zip(vs, ws)]
    rows = []
    for idx, eps in enumerate(cfg.eps_grid):
        worst, fails, count = 0.0, 0, 0
        for v, w, b in zip(vs, ws, base):
            if b.status != Status.CONVERGED:
                fails += 1
                continue
            e = st.orig.estimate(st.na.chart.delta(eps, v), st.na.chart.delta(eps, w))
            if e.status != Status.CONVERGED:
                fails += 1
                continue
            worst = max(worst, abs(e.value / eps - b.value))
            count += 1
        rows.append(ConvergenceRow(eps, worst, count, fails, cfg.seed))
    M = sys.depth
    return ConvergenceReport("cone", rows, -(1 / M - 0.1), "le", x_name="lambda",
                             floor=_floor(cfg), space=sys.label).fit()


def gromov_convergence_experiment(sys: WeightedSystem, u=None, cfg: ExperimentConfig | None = None
                                  ) -> ConvergenceReport:
    """Sup deviation of eps^{|I|_h} delta_eps^* X'_I from the hat field on a unit-box grid."""
    cfg = cfg or ExperimentConfig()
    na = nilpotentize(sys, sys.anchor if u is None else u)
    N = sys.dim
    g = np.linspace(-1.0, 1.0, cfg.gromov_grid)
    pts = np.array(np.meshgrid(*([g] * N), indexing="ij")).reshape(N, -1).T
    words = [w for w, f in na.pushforward.words.items() if not f.is_zero()]
    rows = []
    for eps in cfg.eps_grid:
        worst = 0.0
        for w in words:
            diff = na.rescaled_field(w, float(eps)) - na.hat(w)
            if diff.is_zero():
                continue
            worst = max(worst, float(np.max(np.abs(diff.compiled(pts)))))
        rows.append(ConvergenceRow(eps, worst, len(pts) * len(words), 0, cfg.seed))
    return ConvergenceReport("gromov", rows, 0.9, "ge", floor=1e-14, space=sys.label).fit()


EXPERIMENTS: dict = {
    "divergence": divergence_experiment,
    "local-approx": local_approx_experiment,
    "cone": cone_rescale_experiment,
    "gromov": gromov_convergence_experiment,
}


def report_csv(report: ConvergenceReport) -> str:
    if not report.rows:
        raise ExperimentError("report has no rows")
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(CSV_HEADER)
    for r in report.rows:
        wr.writerow(["%.17g" % r.epsilon, "%.17g" % r.value, r.n_samples, r.n_failures, r.seed])
    return buf.getvalue()


def report_svg(report: ConvergenceReport) -> bytes:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs = np.array([r.epsilon for r in report.rows])
    if report.x_name == "lambda":
        xs = 1.0 / xs
    ys = np.array([r.value for r in report.rows])
    with matplotlib.rc_context({"svg.hashsalt": "ccgeom", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(5, 3.6))
        mask = ys > 0
        if mask.any():
            ax.loglog(xs[mask], ys[mask], "o", label="measured")
        if math.isfinite(report.slope):
            fx = np.array([xs.min(), xs.max()])
            ax.loglog(fx, np.exp(report.intercept) * fx ** report.slope, "-",
                      label=f"slope {report.slope:.3f}, R² {report.r2:.3f}")
        else:
            ax.set_xscale("log")
            ax.set_yscale("log")
            ax.set_ylim(1e-17, 1)
        ax.set_xlabel(report.x_name)
        ax.set_ylabel("value")
        ax.set_title(f"{report.experiment} {report.space}: {report.verdict}")
        if ax.get_legend_handles_labels()[0]:
            ax.legend(loc="best", fontsize=8)
        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue()


def _atomic_write(path: str, data: bytes):
    d = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise ExperimentError(f"cannot write {path}: {exc}") from exc


def emit_report(report: ConvergenceReport, path: str) -> List[str]:
    """Write <path>.csv and <path>.svg; both or neither appear."""
    if not report.rows:
        raise ExperimentError("empty grid: nothing to write")
    csv_text = report_csv(report).encode()
    svg = report_svg(report)
    base = path[:-4] if path.endswith(".csv") else path
    out = [base + ".csv", base + ".svg"]
    _atomic_write(out[0], csv_text)
    try:
        _atomic_write(out[1], svg)
    except ExperimentError:
        os.unlink(out[0])
        raise
    return out
