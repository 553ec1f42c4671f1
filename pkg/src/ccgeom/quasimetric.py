"""Estimates of the quasimetric rho and its nilpotent counterpart.

rho(v, w) is the least delta such that w = exp(sum_I w_I X_I)(v) for constant
controls with |w_I| <= delta^{|I|_h}.  The estimate is an upper bound with a
feasible witness: local-frame Newton solves give a first witness, SLSQP on
the epigraph form improves it when there are more words than dimensions, and
a final downward check confirms that value * (1 - rel_gap) is not reachable
from any of the tried starts.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import least_squares, minimize

from .flows import DEFAULT_FLOW, EndpointMap, FlowConfig, FlowError
from .grading import NilpotentApproximation
from .polyalg import PolyVectorField
from .structure import WeightedSystem, enumerate_commutators


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    STALLED = "Stalled"
    INFEASIBLE = "Infeasible"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class QuasimetricConfig:
    tol: float = 1e-10
    rel_gap: float = 1e-4
    n_starts: int = 8
    verify_starts: int = 4
    seed: int = 0
    word_policy: str = "reduced"   # "reduced" or "all"
    controls: str = "constant"     # reserved for piecewise-constant controls
    max_descent_steps: int = 40
    slsqp_maxiter: int = 300
    max_frame_subsets: int = 32
    flow: FlowConfig = DEFAULT_FLOW


DEFAULT_QM = QuasimetricConfig()


@dataclass
class QuasimetricEstimate:
    value: float
    controls: np.ndarray
    words: List[str]
    endpoint_residual: float
    status: Status
    gap: float = 0.0
    message: str = ""
    hdegs: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def feasible(self, slack: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.controls) <= self._bounds() + slack))

    def _bounds(self):
        return self.value ** self.hdegs


def _proportional(f: PolyVectorField, g: PolyVectorField) -> bool:
    """True if f = c g for a nonzero constant c (exact)."""
    ratio = None
    for a, b in zip(f.components, g.components):
        if set(a.terms) != set(b.terms):
            return False
        for e, c in a.terms.items():
            r = c / b.terms[e]
            if ratio is None:
                ratio = r
            elif r != ratio:
                return False
    return ratio is not None


def select_words(fields, hdegs, labels, policy: str):
    """Drop zero fields; under "reduced" also keep one representative per
    proportionality class (the first in (hdeg, length, lex) order)."""
    if policy not in ("reduced", "all"):
        raise ValueError(f"unknown word policy {policy!r}")
    keep = []
    for f, h, lab in zip(fields, hdegs, labels):
        if f.is_zero():
            continue
        if policy == "reduced" and any(_proportional(f, g) for g, _, _ in keep):
            continue
        keep.append((f, h, lab))
    return keep


class RhoContext:
    """Word fields plus a compiled endpoint map for one quasimetric."""

    def __init__(self, fields: Sequence[PolyVectorField], hdegs: Sequence[int], labels: Sequence[str],
                 config: QuasimetricConfig = DEFAULT_QM, frame_weights: Sequence[int] | None = None):
        kept = select_words(fields, hdegs, labels, config.word_policy)
        if not kept:
            raise ValueError("no nonzero words")
        self.fields = [k[0] for k in kept]
        self.hdegs = np.array([k[1] for k in kept], dtype=float)
        self.labels = [k[2] for k in kept]
        self.config = config
        self.dim = self.fields[0].dim
        self.K = len(self.fields)
        self.endpoint = EndpointMap(self.fields, config.flow)
        self._values = [f.compiled for f in self.fields]

    @classmethod
    def from_system(cls, sys: WeightedSystem, config: QuasimetricConfig = DEFAULT_QM) -> "RhoContext":
        key = ("rho", config)
        if key not in sys._cache:
            words = enumerate_commutators(sys)
            sys._cache[key] = cls([w.field for w in words], [w.hdeg for w in words],
                                  [sys.label_of(w.word) for w in words], config)
        return sys._cache[key]

    @classmethod
    def from_approximation(cls, na: NilpotentApproximation, config: QuasimetricConfig = DEFAULT_QM,
                           hat: bool = True) -> "RhoContext":
        """Hat fields (hat=True) or pushed-forward fields on the privileged chart."""
        key = ("rho-na", tuple(na.chart.base), na.chart.config, hat, config)
        cache = na.system._cache
        if key not in cache:
            src = na.hat_fields if hat else na.pushforward.words
            words = sorted(src, key=lambda w: (na.word_hdeg(w), len(w), w))
            cache[key] = cls([src[w] for w in words], [na.word_hdeg(w) for w in words],
                             [na.system.label_of(w) for w in words], config)
        return cache[key]

    def values_at(self, v) -> np.ndarray:
        """(K, N) matrix of word field values at v."""
        return np.array([f(np.asarray(v, dtype=float)) for f in self._values])

    def control_value(self, w) -> float:
        w = np.asarray(w, dtype=float)
        return float(np.max(np.abs(w) ** (1.0 / self.hdegs))) if w.size else 0.0

    # -- estimation ------------------------------------------------------
    def estimate(self, v, target, config: QuasimetricConfig | None = None,
                 seed: int | None = None) -> QuasimetricEstimate:
        cfg = config or self.config
        v = np.asarray(v, dtype=float)
        target = np.asarray(target, dtype=float)
        if v.shape != (self.dim,) or target.shape != (self.dim,):
            raise ValueError("points must match the chart dimension")
        d = target - v
        K = self.K
        if not np.any(d):
            return self._result(0.0, np.zeros(K), 0.0, Status.CONVERGED, "identical points")
        rng = np.random.Generator(np.random.Philox(cfg.seed if seed is None else seed))
        try:
            cands = self._frame_witnesses(v, target, cfg, rng)
        except FlowError as exc:
            return self._result(math.inf, np.zeros(K), math.inf, Status.INFEASIBLE, str(exc))
        if not cands:
            return self._result(math.inf, np.zeros(K), math.inf, Status.INFEASIBLE,
                                "no frame subset reaches the target")
        best_w, best_val, frame = min(cands, key=lambda c: c[1])
        if K == self.dim:
            res = self._residual(v, best_w, target)
            st = Status.CONVERGED if res <= cfg.tol else Status.STALLED
            return self._result(best_val, best_w, res, st, "square frame solve")
        scale = self._scaling(v, frame, best_val)
        w, val = self._improve(v, target, cands, scale, best_val, cfg, rng)
        w, val, gap = self._descend(v, target, w, val, scale, cfg, rng)
        res = self._residual(v, w, target)
        st = Status.CONVERGED if res <= cfg.tol else Status.STALLED
        return self._result(val, w, res, st, "epigraph solve", gap)

    def _result(self, value, w, res, status, msg, gap=0.0):
        return QuasimetricEstimate(float(value), np.asarray(w, dtype=float), list(self.labels),
                                   float(res), status, gap, msg, hdegs=self.hdegs.copy())

    def _residual(self, v, w, target) -> float:
        return float(np.max(np.abs(self.endpoint(v, w) - target)))

    def _frame_witnesses(self, v, target, cfg, rng):
        """Newton solves restricted to N-word subsets independent at v."""
        N, K = self.dim, self.K
        V = self.values_at(v)
        subsets = []
        if math.comb(K, N) <= cfg.max_frame_subsets:
            subsets = list(itertools.combinations(range(K), N))
        else:
            subsets.append(self._greedy_frame(V))
            while len(subsets) < cfg.max_frame_subsets:
                s = tuple(sorted(rng.choice(K, size=N, replace=False)))
                if s not in subsets:
                    subsets.append(s)
        out = []
        for sub in subsets:
            A = V[list(sub)].T
            if np.linalg.matrix_rank(A, tol=1e-9 * max(np.abs(A).max(), 1e-300)) < N:
                continue
            w = self._newton_subset(v, target, list(sub), A)
            if w is not None:
                out.append((w, self.control_value(w), list(sub)))
        return out

    def _greedy_frame(self, V):
        chosen = []
        for i in range(self.K):
            trial = chosen + [i]
            A = V[trial]
            if np.linalg.matrix_rank(A, tol=1e-9 * max(np.abs(A).max(), 1e-300)) == len(trial):
                chosen = trial
            if len(chosen) == self.dim:
                break
        return tuple(chosen)

    def _newton_subset(self, v, target, sub, A, iters: int = 60):
        K = self.K
        w = np.zeros(K)
        try:
            w[sub] = np.linalg.solve(A, target - v)
        except np.linalg.LinAlgError:
            return None
        tscale = max(1.0, float(np.max(np.abs(target))))
        for _ in range(iters):
            try:
                end, J = self.endpoint.with_jacobian(v, w)
            except FlowError:
                return None
            r = end - target
            nr = float(np.max(np.abs(r)))
            if nr <= 1e-15 * tscale:
                return w
            Js = J[:, sub]
            try:
                step = np.linalg.solve(Js, r)
            except np.linalg.LinAlgError:
                return None
            t = 1.0
            while t > 1e-8:
                wn = w.copy()
                wn[sub] -= t * step
                try:
                    rn = float(np.max(np.abs(self.endpoint(v, wn) - target)))
                except FlowError:
                    rn = math.inf
                if rn < nr or nr < 1e-13 * tscale:
                    break
                t /= 2
            if t <= 1e-8:
                break
            w = wn
        return w if self._residual(v, w, target) <= max(self.config.tol, 1e-13 * tscale) else None

    def _scaling(self, v, frame, delta):
        """Normalizer: residual r -> D^{-1} V_F^{-1} r, D = diag(delta^{deg})."""
        A = self.values_at(v)[frame].T
        hd = self.hdegs[frame]
        Ainv = np.linalg.inv(A)
        D = np.maximum(delta, 1e-300) ** hd
        return Ainv / D[:, None]

    def _improve(self, v, target, cands, scale, delta0, cfg, rng):
        """SLSQP over (s, tau) with w = delta0^h s; minimize tau."""
        K = self.K
        h = self.hdegs
        base = np.maximum(delta0, 1e-300) ** h

        def eq(x):
            return scale @ (self.endpoint(v, x[:K] * base) - target)

        def eq_jac(x):
            _, J = self.endpoint.with_jacobian(v, x[:K] * base)
            out = np.zeros((self.dim, K + 1))
            out[:, :K] = scale @ J * base[None, :]
            return out

        def ineq(x):
            s, tau = x[:K], x[K]
            t = np.maximum(tau, 0.0) ** h
            return np.concatenate([t - s, t + s])

        def ineq_jac(x):
            tau = max(x[K], 0.0)
            g = h * tau ** (h - 1)
            out = np.zeros((2 * K, K + 1))
            out[:K, :K] = -np.eye(K)
            out[K:, :K] = np.eye(K)
            out[:K, K] = g
            out[K:, K] = g
            return out

        starts = []
        for w, val, _ in sorted(cands, key=lambda c: c[1])[: max(1, cfg.n_starts // 2)]:
            starts.append(np.concatenate([w / base, [max(val / delta0, 1e-3)]]))
        while len(starts) < cfg.n_starts:
            s0 = starts[0][:K] + rng.normal(scale=0.3, size=K)
            starts.append(np.concatenate([s0, [max(1.0, float(np.max(np.abs(s0) ** (1 / h))))]]))
        best_w, best_val = cands[0][0], math.inf
        for w, val, _ in cands:
            if val < best_val:
                best_w, best_val = w, val
        cons = [{"type": "eq", "fun": eq, "jac": eq_jac},
                {"type": "ineq", "fun": ineq, "jac": ineq_jac}]
        for x0 in starts:
            try:
                r = minimize(lambda x: x[K], x0, jac=lambda x: np.eye(K + 1)[K], method="SLSQP",
                             constraints=cons, options={"maxiter": cfg.slsqp_maxiter, "ftol": 1e-14})
            except FlowError:
                continue
            w = self._project(v, target, r.x[:K] * base, scale)
            if w is None:
                continue
            val = self.control_value(w)
            if val < best_val:
                best_w, best_val = w, val
        return best_w, best_val

    def _project(self, v, target, w, scale, iters: int = 20):
        """Minimum-norm Gauss-Newton correction onto the endpoint constraint."""
        tol = self.config.tol
        for _ in range(iters):
            try:
                end, J = self.endpoint.with_jacobian(v, w)
            except FlowError:
                return None
            r = end - target
            if np.max(np.abs(r)) <= 1e-3 * tol:
                return w
            Js = scale @ J
            step, *_ = np.linalg.lstsq(Js, scale @ r, rcond=None)
            w = w - step
        return w if self._residual(v, w, target) <= tol else None

    def _feasible_at(self, v, target, trial, w, scale, cfg, rng):
        """Controls reaching the target with |w_I| <= trial^{|I|_h}, or None."""
        K = self.K
        base = trial ** self.hdegs

        def fun(s):
            return scale @ (self.endpoint(v, s * base) - target)

        def jac(s):
            _, J = self.endpoint.with_jacobian(v, s * base)
            return scale @ J * base[None, :]

        starts = [np.clip(w / base, -1, 1)]
        starts += [rng.uniform(-1, 1, size=K) for _ in range(cfg.verify_starts - 1)]
        for s0 in starts:
            try:
                r = least_squares(fun, s0, jac=jac, bounds=(-np.ones(K), np.ones(K)),
                                  xtol=1e-10, ftol=1e-10, gtol=1e-12, max_nfev=40)
            except FlowError:
                continue
            if np.max(np.abs(r.fun)) > 1e-6:
                continue
            wt = self._project(v, target, r.x * base, scale)
            if wt is not None and self.control_value(wt) <= trial * (1 + 1e-12):
                return wt
        return None

    def _descend(self, v, target, w, val, scale, cfg, rng):
        """Try value*(1 - gap*2^k) while feasible; stop when value*(1 - gap) fails."""
        k = 0
        for _ in range(cfg.max_descent_steps):
            trial = val * (1 - min(cfg.rel_gap * 2 ** k, 0.5))
            found = self._feasible_at(v, target, trial, w, scale, cfg, rng)
            if found is None:
                if k == 0:
                    return w, val, cfg.rel_gap
                k = 0
                continue
            w, val = found, self.control_value(found)
            k += 1
        return w, val, cfg.rel_gap


def rho_estimate(sys: WeightedSystem, v, w, config: QuasimetricConfig = DEFAULT_QM
                 ) -> QuasimetricEstimate:
    return RhoContext.from_system(sys, config).estimate(v, w, config)


def rho_u_estimate(na: NilpotentApproximation, v, w, config: QuasimetricConfig = DEFAULT_QM,
                   privileged: bool = False) -> QuasimetricEstimate:
    """rho^u between v and w; points are in base coordinates unless privileged=True."""
    ctx = RhoContext.from_approximation(na, config, hat=True)
    if not privileged:
        v = na.chart.inverse(v)
        w = na.chart.inverse(w)
    return ctx.estimate(v, w, config)


def ball_sample(ctx: RhoContext, center, r: float, n: int, seed: int = 0) -> np.ndarray:
    """n endpoints exp(sum w_I X_I)(center) with |w_I| <= r^{|I|_h}, uniform in scaled controls."""
    if r <= 0:
        raise ValueError("radius must be positive")
    rng = np.random.Generator(np.random.Philox(seed))
    s = rng.uniform(-1.0, 1.0, size=(n, ctx.K))
    w = s * float(r) ** ctx.hdegs
    center = np.asarray(center, dtype=float)
    return np.array([ctx.endpoint(center, wi) for wi in w])


@dataclass
class QuasimetricDiagnostics:
    symmetry_defect: float = 0.0
    triangle_Q: float = 0.0
    cone_defect: float = 0.0
    n_samples: int = 0
    n_failures: int = 0
    seed: int = 0


def triangle_constant(ctx: RhoContext, samples: int, scale: float, seed: int = 0,
                      center=None, config: QuasimetricConfig | None = None) -> QuasimetricDiagnostics:
    """Empirical Q = max rho(v,w) / (rho(u,v) + rho(u,w)) on triples around ``center``."""
    cfg = config or ctx.config
    u = np.zeros(ctx.dim) if center is None else np.asarray(center, dtype=float)
    rng = np.random.Generator(np.random.Philox(seed))
    Q = 0.0
    sym = 0.0
    fails = 0
    counted = 0
    for k in range(samples):
        pts = ball_sample(ctx, u, scale, 2, seed=int(rng.integers(2 ** 31)))
        v, w = pts
        ests = [ctx.estimate(u, v, cfg), ctx.estimate(u, w, cfg), ctx.estimate(v, w, cfg),
                ctx.estimate(w, v, cfg)]
        if any(e.status != Status.CONVERGED for e in ests):
            fails += 1
            continue
        a, b, c, c2 = (e.value for e in ests)
        sym = max(sym, abs(c - c2))
        if a + b > 0:
            Q = max(Q, c / (a + b))
            counted += 1
    return QuasimetricDiagnostics(symmetry_defect=sym, triangle_Q=Q, n_samples=counted,
                                  n_failures=fails, seed=seed)


def cone_check(na: NilpotentApproximation, pairs: int, eps_list: Sequence[float], seed: int = 0,
               radius: float = 0.5, config: QuasimetricConfig = DEFAULT_QM) -> QuasimetricDiagnostics:
    """max |rho^u(D_eps v, D_eps w) - eps rho^u(v, w)| / (eps rho^u(v, w)) in privileged coordinates."""
    ctx = RhoContext.from_approximation(na, config, hat=True)
    rng = np.random.Generator(np.random.Philox(seed))
    zero = np.zeros(ctx.dim)
    worst = 0.0
    fails = 0
    for _ in range(pairs):
        v, w = ball_sample(ctx, zero, radius, 2, seed=int(rng.integers(2 ** 31)))
        base = ctx.estimate(v, w, config)
        if base.status != Status.CONVERGED or base.value == 0:
            fails += 1
            continue
        for eps in eps_list:
            e = ctx.estimate(na.chart.delta(eps, v), na.chart.delta(eps, w), config)
            if e.status != Status.CONVERGED:
                fails += 1
                continue
            worst = max(worst, abs(e.value - eps * base.value) / (eps * base.value))
    return QuasimetricDiagnostics(cone_defect=worst, n_samples=pairs, n_failures=fails, seed=seed)


@dataclass
class InclusionReport:
    r: float
    xi: float
    inflation: float
    C_estimate: float
    n_samples: int
    n_failures: int
    seed: int


def box_inclusion_check(ctx: RhoContext, v, r: float, xi: float, n: int, seed: int = 0,
                        config: QuasimetricConfig | None = None) -> InclusionReport:
    """Sample x in B(v, r), y in B(x, xi); report R = max rho(v, y) and (R - r) / xi."""
    cfg = config or ctx.config
    v = np.asarray(v, dtype=float)
    xs = ball_sample(ctx, v, r, n, seed)
    rng = np.random.Generator(np.random.Philox(seed + 1))
    R = 0.0
    fails = 0
    for x in xs:
        ys = ball_sample(ctx, x, xi, 1, seed=int(rng.integers(2 ** 31))) if xi > 0 else [x]
        for y in ys:
            e = ctx.estimate(v, y, cfg)
            if e.status != Status.CONVERGED:
                fails += 1
                continue
            R = max(R, e.value)
    C = (R - r) / xi if xi > 0 else 0.0
    return InclusionReport(r, xi, R, C, n, fails, seed)


def inclusion_constant_fit(ctx: RhoContext, v, r_grid, xi_grid, n: int, seed: int = 0):
    """Least-squares C in R ~ r + C xi across a grid of (r, xi)."""
    reps = [box_inclusion_check(ctx, v, r, xi, n, seed) for r in r_grid for xi in xi_grid]
    A = np.array([rep.xi for rep in reps])
    b = np.array([rep.inflation - rep.r for rep in reps])
    C = float(A @ b / (A @ A)) if np.any(A) else 0.0
    return C, reps
