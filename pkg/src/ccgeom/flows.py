"""Flows of polynomial vector fields: terminating Lie series or adaptive integration."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import factorial
from typing import Mapping, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from .polyalg import (CompiledPolys, CoordinateChart, Polynomial, PolyVectorField,
                      linear_combination)


class FlowError(RuntimeError):
    pass


class IntegrationFailure(FlowError):
    pass


class LeftTrustBox(FlowError):
    pass


@dataclass(frozen=True)
class FlowConfig:
    rtol: float = 1e-12
    atol: float = 1e-14
    trust_half_width: float = 10.0
    max_series_order: int = 12
    max_series_terms: int = 20000


DEFAULT_FLOW = FlowConfig()


@dataclass
class FlowResult:
    endpoint: np.ndarray
    method: str  # "exact-series" or "numeric"
    estimated_error: float = 0.0

    def __post_init__(self):
        if self.method not in ("exact-series", "numeric"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.method == "exact-series" and self.estimated_error != 0:
            raise ValueError("exact-series results carry zero error")


def lie_series(X: PolyVectorField, polys: Sequence[Polynomial], max_order: int,
               max_terms: int = DEFAULT_FLOW.max_series_terms):
    """Iterated derivatives [f, Xf, X^2 f, ...] for each f, up to max_order.

    Returns (iterates, terminated) where iterates[j][k] = X^k f_j and
    terminated says every sequence hit the zero polynomial.
    """
    out = []
    terminated = True
    for f in polys:
        seq = [f]
        cur = f
        done = cur.is_zero()
        while not done and len(seq) <= max_order:
            cur = X.apply(cur)
            if cur.is_zero():
                done = True
                break
            if len(cur.terms) > max_terms:
                break
            seq.append(cur)
        if not done:
            terminated = False
        out.append(seq)
    return out, terminated


def _series_value(iterates, p, t):
    vals = []
    for seq in iterates:
        total = 0.0
        tk = 1.0
        for k, g in enumerate(seq):
            if k:
                tk = tk * t / k
            total += tk * float(g.evaluate([float(a) for a in p]))
        vals.append(total)
    return np.array(vals)


def _coordinate_polys(X: PolyVectorField):
    return [Polynomial.var(X.chart.names, i) for i in range(X.dim)]


def _check_box(y: np.ndarray, half_width: float):
    if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > half_width:
        raise LeftTrustBox(f"trajectory left the trust box |x|<={half_width}: {y}")


def _integrate(X: PolyVectorField, p, time, cfg: FlowConfig) -> FlowResult:
    f = X.compiled
    hw = cfg.trust_half_width

    def rhs(_t, y):
        if np.max(np.abs(y)) > hw or not np.all(np.isfinite(y)):
            raise LeftTrustBox(f"trajectory left the trust box |x|<={hw}: {y}")
        return f(y)

    y0 = np.asarray(p, dtype=float)
    if time == 0:
        return FlowResult(y0.copy(), "numeric", 0.0)
    sol = solve_ivp(rhs, (0.0, float(time)), y0, method="DOP853", rtol=cfg.rtol, atol=cfg.atol)
    if not sol.success:
        raise IntegrationFailure(sol.message)
    end = sol.y[:, -1]
    _check_box(end, hw)
    err = cfg.rtol * float(np.max(np.abs(end))) + cfg.atol
    return FlowResult(end, "numeric", err)


def flow(X: PolyVectorField, p: Sequence, time: float, config: FlowConfig = DEFAULT_FLOW,
         method: str = "auto") -> FlowResult:
    """Time-``time`` flow of X starting at p."""
    p = np.asarray(p, dtype=float)
    if p.shape != (X.dim,):
        raise ValueError(f"point has shape {p.shape}, expected ({X.dim},)")
    if not np.isfinite(time):
        raise ValueError("time must be finite")
    _check_box(p, config.trust_half_width)
    if method in ("auto", "exact-series"):
        iterates, ok = lie_series(X, _coordinate_polys(X), config.max_series_order,
                                  config.max_series_terms)
        if ok:
            end = _series_value(iterates, p, float(time))
            _check_box(end, config.trust_half_width)
            return FlowResult(end, "exact-series", 0.0)
        if method == "exact-series":
            raise FlowError("Lie series does not terminate within the order cap")
    return _integrate(X, p, time, config)


def exp_combination(coeffs, fields: Sequence[PolyVectorField], p: Sequence,
                    config: FlowConfig = DEFAULT_FLOW, method: str = "auto") -> FlowResult:
    """Unit-time flow of sum_I coeffs[I] X_I from p.

    ``coeffs`` is a sequence aligned with ``fields`` or a mapping from index
    to coefficient.
    """
    if isinstance(coeffs, Mapping):
        if set(coeffs) - set(range(len(fields))):
            raise ValueError("coefficient keys do not index the field list")
        coeffs = [coeffs.get(i, 0.0) for i in range(len(fields))]
    if len(coeffs) != len(fields):
        raise ValueError(f"{len(coeffs)} coefficients for {len(fields)} fields")
    Z = linear_combination([float(c) for c in coeffs], fields)
    return flow(Z, p, 1.0, config, method)


def exp_product(steps: Sequence[Tuple[float, PolyVectorField]], p: Sequence,
                config: FlowConfig = DEFAULT_FLOW) -> FlowResult:
    """exp(c1 X1) o exp(c2 X2) o ... o exp(ck Xk)(p): the last step acts first."""
    if not steps:
        raise ValueError("exp_product needs at least one step")
    point = np.asarray(p, dtype=float)
    exact = True
    err = 0.0
    for c, X in reversed(list(steps)):
        r = flow(X, point, float(c), config)
        point = r.endpoint
        exact = exact and r.method == "exact-series"
        err += r.estimated_error
    return FlowResult(point, "exact-series" if exact else "numeric", 0.0 if exact else err)


class EndpointMap:
    """(v, w) -> exp(sum_I w_I X_I)(v) with its Jacobian in w.

    When the Lie series of the generic combination terminates, the map is a
    polynomial in (v, w) compiled once; otherwise the flow and its variational
    equations are integrated numerically.
    """

    def __init__(self, fields: Sequence[PolyVectorField], config: FlowConfig = DEFAULT_FLOW,
                 max_order: int | None = None):
        if not fields:
            raise ValueError("EndpointMap needs at least one field")
        self.fields = list(fields)
        self.chart = fields[0].chart
        self.dim = self.chart.dim
        self.n_controls = len(fields)
        self.config = config
        self.exact = False
        order = max_order if max_order is not None else config.max_series_order
        self._build_series(order)
        if not self.exact:
            self._field_funcs = [f.compiled for f in self.fields]
            self._field_jacs = [
                CompiledPolys([c.diff(i) for c in f.components for i in range(self.dim)])
                for f in self.fields
            ]

    def _build_series(self, order: int):
        ctrl = tuple(f"_w{k}" for k in range(self.n_controls))
        names = self.chart.names + ctrl
        big = CoordinateChart(names)
        Z = None
        for k, X in enumerate(self.fields):
            wk = Polynomial.var(names, self.dim + k)
            comps = [c.embed(names) * wk for c in X.components]
            comps += [Polynomial.zero(names)] * self.n_controls
            term = PolyVectorField(big, comps)
            Z = term if Z is None else Z + term
        increments = []
        for j in range(self.dim):
            xj = Polynomial.var(names, j)
            total = Polynomial.zero(names)
            cur = xj
            k = 0
            n_terms = 0
            while True:
                cur = Z.apply(cur)
                k += 1
                if cur.is_zero():
                    break
                n_terms += len(cur.terms)
                if k > order or n_terms > self.config.max_series_terms:
                    return
                total = total + cur.scale(Fraction(1, factorial(k)))
            increments.append(total)
        self.exact = True
        self._increments = CompiledPolys(increments)
        self._jac = CompiledPolys(
            [inc.diff(self.dim + k) for inc in increments for k in range(self.n_controls)]
        )
        self.series_polynomials = increments

    def _stack(self, v, w):
        v = np.asarray(v, dtype=float)
        w = np.asarray(w, dtype=float)
        return np.concatenate([np.broadcast_to(v, w.shape[:-1] + v.shape[-1:]), w], axis=-1)

    def __call__(self, v, w) -> np.ndarray:
        if self.exact:
            return np.asarray(v, dtype=float) + self._increments(self._stack(v, w))
        return self._numeric(v, w, jac=False)[0]

    def with_jacobian(self, v, w):
        """Endpoint and d(endpoint)/dw of shape (dim, n_controls)."""
        if self.exact:
            z = self._stack(v, w)
            end = np.asarray(v, dtype=float) + self._increments(z)
            J = self._jac(z).reshape(self.dim, self.n_controls)
            return end, J
        return self._numeric(v, w, jac=True)

    def _numeric(self, v, w, jac: bool):
        n, m = self.dim, self.n_controls
        w = np.asarray(w, dtype=float)
        hw = self.config.trust_half_width
        funcs, jacs = self._field_funcs, self._field_jacs

        def rhs(_t, s):
            x = s[:n]
            if np.max(np.abs(x)) > hw or not np.all(np.isfinite(x)):
                raise LeftTrustBox(f"trajectory left the trust box |x|<={hw}")
            vals = np.array([f(x) for f in funcs])  # (m, n)
            dx = w @ vals
            if not jac:
                return dx
            P = s[n:].reshape(n, m)
            A = sum(wk * J(x).reshape(n, n) for wk, J in zip(w, jacs))
            dP = A @ P + vals.T
            return np.concatenate([dx, dP.ravel()])

        s0 = np.asarray(v, dtype=float)
        if jac:
            s0 = np.concatenate([s0, np.zeros(n * m)])
        sol = solve_ivp(rhs, (0.0, 1.0), s0, method="DOP853",
                        rtol=self.config.rtol, atol=self.config.atol)
        if not sol.success:
            raise IntegrationFailure(sol.message)
        s = sol.y[:, -1]
        end = s[:n]
        _check_box(end, hw)
        return end, (s[n:].reshape(n, m) if jac else None)

