"""Privileged coordinates, dilations, nilpotent approximation and BCH.

The privileged chart at u is x -> exp(x_1 Y_1) o ... o exp(x_N Y_N)(u) for the
adapted frame Y.  Everything here is computed symbolically: the chart map is
a polynomial when the Lie series terminate (they do for all polynomial
nilpotent fixtures), and the pushed-forward fields are polynomials when the
Neumann series for the inverse Jacobian terminates.  Otherwise both are
truncated at a total degree that keeps every graded part we use exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import factorial
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ._exact import EchelonBasis, solve_exact
from .polyalg import (CompiledPolys, CoordinateChart, Polynomial, PolyVectorField, as_exact,
                      graded_parts, is_homogeneous, lie_bracket)
from .structure import (AdaptedFrame, StructuralDefect, WeightedSystem, Word, adapted_frame,
                        enumerate_commutators)


class ChartError(RuntimeError):
    pass


@dataclass(frozen=True)
class GradingConfig:
    working_half_width: float = 1.0
    inverse_tol: float = 1e-12
    newton_max_iter: int = 60
    max_series_order: int = 16


DEFAULT_GRADING = GradingConfig()


def privileged_names(n: int) -> Tuple[str, ...]:
    return tuple(f"c{i + 1}" for i in range(n))


def _truncate_all(polys, degree):
    if degree is None:
        return polys
    return [p.truncate(degree) for p in polys]


def _flow_compose(Y: PolyVectorField, time_var: Polynomial, P: List[Polynomial],
                  max_order: int, degree_cap: Optional[int]):
    """Substitute the map P into exp(s Y): returns (new map, terminated)."""
    coords = [Polynomial.var(Y.chart.names, j) for j in range(Y.dim)]
    out = []
    terminated = True
    for xj in coords:
        total = Polynomial.zero(time_var.variables)
        cur = xj
        k = 0
        powk = Polynomial.constant(time_var.variables, 1)
        while True:
            term = cur.compose(P)
            if degree_cap is not None:
                term = term.truncate(degree_cap)
            total = total + (powk * term).scale(Fraction(1, factorial(k)))
            if degree_cap is not None:
                total = total.truncate(degree_cap)
            cur = Y.apply(cur)
            k += 1
            if cur.is_zero():
                break
            if k > max_order:
                terminated = False
                break
            powk = powk * time_var
        out.append(total)
    return out, terminated


@dataclass(eq=False)
class PrivilegedChart:
    base: tuple
    frame: AdaptedFrame
    coordinate_weights: Tuple[int, ...]
    names: Tuple[str, ...]
    forward_polys: List[Polynomial]
    exact: bool
    config: GradingConfig = DEFAULT_GRADING
    _compiled: Optional[CompiledPolys] = field(default=None, repr=False)
    _jac: Optional[CompiledPolys] = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def chart(self) -> CoordinateChart:
        return CoordinateChart(self.names)

    def _ensure(self):
        if self._compiled is None:
            self._compiled = CompiledPolys(self.forward_polys)
            self._jac = CompiledPolys([p.diff(i) for p in self.forward_polys for i in range(self.dim)])

    def forward(self, x) -> np.ndarray:
        self._ensure()
        return self._compiled(np.asarray(x, dtype=float))

    def jacobian(self, x) -> np.ndarray:
        self._ensure()
        x = np.asarray(x, dtype=float)
        return self._jac(x).reshape(x.shape[:-1] + (self.dim, self.dim))

    def inverse(self, p, x0=None) -> np.ndarray:
        """Newton solve of forward(x) = p, started from the linearization."""
        p = np.asarray(p, dtype=float)
        A0 = self.jacobian(np.zeros(self.dim))
        base = np.array([float(a) for a in self.base])
        x = np.linalg.solve(A0, p - base) if x0 is None else np.asarray(x0, dtype=float).copy()
        scale = max(1.0, float(np.max(np.abs(p))))
        for _ in range(self.config.newton_max_iter):
            r = self.forward(x) - p
            if np.max(np.abs(r)) <= self.config.inverse_tol * scale:
                return x
            step = np.linalg.solve(self.jacobian(x), r)
            t = 1.0
            nr = np.linalg.norm(r)
            while t > 1e-6:
                xn = x - t * step
                if np.linalg.norm(self.forward(xn) - p) < nr:
                    break
                t /= 2
            x = xn
            if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > 1e6:
                break
        r = self.forward(x) - p
        if np.max(np.abs(r)) <= 1e3 * self.config.inverse_tol * scale:
            return x
        raise ChartError(f"inverse chart Newton did not converge at {p} (residual {np.max(np.abs(r)):.3g})")

    def delta(self, eps, x) -> np.ndarray:
        """In-chart dilation: coordinate i scales by eps^{w_i}."""
        w = np.array(self.coordinate_weights, dtype=float)
        return np.asarray(x, dtype=float) * float(eps) ** w


def privileged_chart(sys: WeightedSystem, u: Sequence, config: GradingConfig = DEFAULT_GRADING
                     ) -> PrivilegedChart:
    frame = adapted_frame(sys, u)
    N = sys.dim
    names = privileged_names(N)
    base = frame.point
    M = sys.depth
    # a total-degree cap only kicks in if some series fails to terminate
    P = [Polynomial.constant(names, a) for a in base]
    exact = True
    cap = None
    for i in reversed(range(N)):
        Y = frame.words[i].field
        xi = Polynomial.var(names, i)
        newP, ok = _flow_compose(Y, xi, P, config.max_series_order, cap)
        if not ok:
            exact = False
            cap = 2 * M + 2
            newP = _truncate_all(newP, cap)
        P = newP
    return PrivilegedChart(base, frame, tuple(frame.frame_weights), names, P, exact, config)


def _matrix_inverse_exact(A):
    n = len(A)
    cols = []
    for j in range(n):
        e = [Fraction(int(i == j)) for i in range(n)]
        x = solve_exact([[A[r][c] for r in range(n)] for c in range(n)], e)
        if x is None:
            raise StructuralDefect("frame values at the base point are dependent")
        cols.append(x)
    return [[cols[j][i] for j in range(n)] for i in range(n)]


@dataclass(eq=False)
class Pushforward:
    """Fields X'_I = (Phi^{-1})_* X_I on the privileged chart."""

    chart: PrivilegedChart
    system: WeightedSystem
    words: Dict[Word, PolyVectorField]
    exact: bool
    truncation_degree: Optional[int]
    residual_bound: float

    def __getitem__(self, word: Word) -> PolyVectorField:
        return self.words[tuple(word)]


def _pushforward_field(X: PolyVectorField, Phi: List[Polynomial], Jinv_series, names, cap):
    chart = CoordinateChart(names)
    XPhi = [c.compose(Phi) for c in X.components]
    if cap is not None:
        XPhi = _truncate_all(XPhi, cap)
    comps = []
    for i in range(len(names)):
        total = Polynomial.zero(names)
        for j in range(len(names)):
            a = Jinv_series[i][j]
            if not a.is_zero() and not XPhi[j].is_zero():
                total = total + a * XPhi[j]
        if cap is not None:
            total = total.truncate(cap)
        comps.append(total)
    return PolyVectorField(chart, comps)


def _inverse_jacobian_series(Phi: List[Polynomial], names, cap_hint: int):
    """Neumann series for D Phi^{-1}; returns (matrix, terminated, cap)."""
    n = len(names)
    D = [[Phi[i].diff(j) for j in range(n)] for i in range(n)]
    A0 = [[D[i][j].constant_term() for j in range(n)] for i in range(n)]
    A0inv = _matrix_inverse_exact(A0)
    R = [[D[i][j] - A0[i][j] for j in range(n)] for i in range(n)]
    # K = -A0^{-1} R
    K = [[sum((R[m][j].scale(-A0inv[i][m]) for m in range(n)), Polynomial.zero(names))
          for j in range(n)] for i in range(n)]
    A0inv_p = [[Polynomial.constant(names, A0inv[i][j]) for j in range(n)] for i in range(n)]

    def matmul(A, B, cap):
        C = []
        for i in range(n):
            row = []
            for j in range(n):
                t = Polynomial.zero(names)
                for m in range(n):
                    if not A[i][m].is_zero() and not B[m][j].is_zero():
                        t = t + A[i][m] * B[m][j]
                row.append(t.truncate(cap) if cap is not None else t)
            C.append(row)
        return C

    total = [row[:] for row in A0inv_p]
    term = A0inv_p
    for k in range(1, 4 * n + 4):
        term = matmul(K, term, None)
        if all(t.is_zero() for row in term for t in row):
            return total, True, None
        total = [[a + b for a, b in zip(r1, r2)] for r1, r2 in zip(total, term)]
    # not nilpotent: restart with a degree cap
    cap = cap_hint
    total = [row[:] for row in A0inv_p]
    term = A0inv_p
    for k in range(1, cap + 1):
        term = matmul(K, term, cap)
        total = [[(a + b).truncate(cap) for a, b in zip(r1, r2)] for r1, r2 in zip(total, term)]
    return total, False, cap


def pushforward_system(sys: WeightedSystem, chart: PrivilegedChart) -> Pushforward:
    names = chart.names
    M = sys.depth
    cap_hint = 2 * M + 2
    Jinv, terminated, cap = _inverse_jacobian_series(chart.forward_polys, names, cap_hint)
    if not chart.exact:
        cap = cap_hint
    exact = chart.exact and terminated
    gens = [_pushforward_field(X, chart.forward_polys, Jinv, names, cap) for X in sys.generators]
    if exact:
        # certify D Phi . X' == X o Phi as a polynomial identity
        D = [[p.diff(j) for j in range(len(names))] for p in chart.forward_polys]
        for X, Xp in zip(sys.generators, gens):
            lhs = [sum((D[i][j] * Xp.components[j] for j in range(len(names))), Polynomial.zero(names))
                   for i in range(len(names))]
            rhs = [c.compose(chart.forward_polys) for c in X.components]
            if lhs != rhs:
                raise StructuralDefect("pushforward identity failed; chart is not polynomial-exact")
    psys = WeightedSystem(CoordinateChart(names), gens, sys.weights, depth=sys.depth,
                          anchor=tuple(Fraction(0) for _ in names), names=sys.names,
                          label=f"{sys.label} (privileged)", minimal_depth=False)
    words = {}
    for cw in enumerate_commutators(psys):
        f = cw.field
        if cap is not None:
            f = PolyVectorField(f.chart, [c.truncate(cap - len(cw.word) + 1) for c in f.components])
        words[cw.word] = f
    return Pushforward(chart, psys, words, exact, cap, 0.0 if exact else float("nan"))


@dataclass(eq=False)
class NilpotentApproximation:
    system: WeightedSystem
    chart: PrivilegedChart
    pushforward: Pushforward
    hat_fields: Dict[Word, PolyVectorField]
    hat_frame: List[PolyVectorField]
    hat_system: WeightedSystem

    @property
    def coordinate_weights(self):
        return self.chart.coordinate_weights

    @property
    def depth(self) -> int:
        return self.system.depth

    def word_hdeg(self, word: Word) -> int:
        return sum(self.system.weights[i] for i in word)

    def hat(self, word) -> PolyVectorField:
        return self.hat_fields[tuple(word)]

    def rescaled_field(self, word: Word, eps) -> PolyVectorField:
        """eps^{|I|_h} (delta_eps)^* X'_I, which tends to the hat field as eps -> 0."""
        h = self.word_hdeg(word)
        parts = graded_parts(self.pushforward[word], self.coordinate_weights)
        out = None
        for s, part in parts.items():
            term = part.scale(_pow(eps, h + s))
            out = term if out is None else out + term
        return out if out is not None else PolyVectorField.zero(self.hat_system.chart)


def _pow(eps, k):
    if isinstance(eps, float):
        return eps ** k
    eps = as_exact(eps)
    return eps ** k


def nilpotentize(sys: WeightedSystem, u: Sequence, config: GradingConfig = DEFAULT_GRADING
                 ) -> NilpotentApproximation:
    chart = privileged_chart(sys, u, config)
    push = pushforward_system(sys, chart)
    w = chart.coordinate_weights
    hats = {}
    for word, Xp in push.words.items():
        h = sum(sys.weights[i] for i in word)
        hats[word] = graded_parts(Xp, w).get(-h, PolyVectorField.zero(Xp.chart))
    hat_frame = [hats[cw.word] for cw in chart.frame.words]
    hat_gens = [hats[(i,)] for i in range(sys.q)]
    hat_sys = WeightedSystem(CoordinateChart(chart.names), hat_gens, sys.weights, depth=sys.depth,
                             anchor=tuple(Fraction(0) for _ in chart.names), names=sys.names,
                             label=f"{sys.label} (nilpotent approximation)",
                             minimal_depth=False)
    na = NilpotentApproximation(sys, chart, push, hats, hat_frame, hat_sys)
    problems = verify_nilpotent_approximation(na)
    if problems:
        raise StructuralDefect("; ".join(problems))
    return na


def verify_nilpotent_approximation(na: NilpotentApproximation) -> List[str]:
    """Exact checks of the graded identities; returns a list of violations."""
    problems = []
    w = na.coordinate_weights
    M = na.depth
    maxw = max(w)
    zero = tuple(Fraction(0) for _ in w)
    for word, f in na.hat_fields.items():
        h = na.word_hdeg(word)
        if not is_homogeneous(f, w, -h):
            problems.append(f"hat field {na.system.label_of(word)} is not homogeneous of order {-h}")
        if h > maxw and not f.is_zero():
            problems.append(f"hat field {na.system.label_of(word)} should vanish")
    # hat fields of brackets are brackets of hat fields
    for word, f in na.hat_fields.items():
        if len(word) > 1:
            inner = na.hat_fields.get(word[1:])
            if inner is None:
                continue
            if lie_bracket(na.hat_fields[(word[0],)], inner) != f:
                problems.append(f"hat bracket mismatch on {na.system.label_of(word)}")
    # anchor agreement of filtrations
    for l in range(1, M + 1):
        orig = EchelonBasis(len(w))
        hat = EchelonBasis(len(w))
        for word, f in na.pushforward.words.items():
            if na.word_hdeg(word) <= l:
                orig.add(f.evaluate(zero))
                hat.add(na.hat_fields[word].evaluate(zero))
        both = EchelonBasis(len(w))
        for r in orig.rows:
            both.add(r)
        for r in hat.rows:
            both.add(r)
        if not (orig.rank == hat.rank == both.rank):
            problems.append(f"filtration level {l} differs at the base point")
    for i, f in enumerate(na.hat_frame):
        e = [Fraction(int(j == i)) for j in range(len(w))]
        if f.evaluate(zero) != e:
            problems.append(f"hat frame entry {i + 1} is not the coordinate vector at 0")
    return problems


def dilate(chart: PrivilegedChart, eps: float, p: Sequence) -> np.ndarray:
    """Manifold dilation Phi o delta_eps o Phi^{-1}."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = chart.inverse(p)
    hw = chart.config.working_half_width
    if np.max(np.abs(x)) > hw * (1 + 1e-12):
        raise ChartError(f"point {p} lies outside the working box (privileged coordinates {x})")
    return chart.forward(chart.delta(eps, x))


@dataclass(frozen=True)
class StructureConstants:
    """c[i][j][k]: component k of [hat Y_i, hat Y_j](0)."""

    constants: Tuple[Tuple[Tuple[object, ...], ...], ...]
    weights: Tuple[int, ...]
    depth: int
    closed: bool

    @property
    def dim(self) -> int:
        return len(self.weights)

    def bracket(self, a: Sequence, b: Sequence) -> list:
        n = self.dim
        out = [0] * n
        for i in range(n):
            if a[i] == 0:
                continue
            for j in range(n):
                if b[j] == 0 or i == j:
                    continue
                row = self.constants[i][j]
                f = a[i] * b[j]
                for k in range(n):
                    if row[k] != 0:
                        out[k] = out[k] + f * row[k]
        return out

    def nonzero(self):
        return [(i, j, k, c) for i, row in enumerate(self.constants) for j, col in enumerate(row)
                for k, c in enumerate(col) if c != 0]

    def jacobi_residual(self):
        """Largest |sum_cyc [[e_i,e_j],e_k]| over basis triples (exact zero when valid)."""
        n = self.dim
        E = [[Fraction(int(a == b)) for a in range(n)] for b in range(n)]
        worst = Fraction(0)
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    t = [x + y + z for x, y, z in zip(
                        self.bracket(self.bracket(E[i], E[j]), E[k]),
                        self.bracket(self.bracket(E[j], E[k]), E[i]),
                        self.bracket(self.bracket(E[k], E[i]), E[j]))]
                    worst = max(worst, max(abs(v) for v in t))
        return worst

    def table(self) -> List[Tuple[int, int, int, object]]:
        """Rows (i, j, k, value) with i < j, 1-based."""
        return [(i + 1, j + 1, k + 1, c) for i, j, k, c in self.nonzero() if i < j]


def structure_constants(na: NilpotentApproximation) -> StructureConstants:
    n = len(na.hat_frame)
    zero = tuple(Fraction(0) for _ in range(n))
    w = na.coordinate_weights
    C = [[[Fraction(0)] * n for _ in range(n)] for _ in range(n)]
    closed = True
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            br = lie_bracket(na.hat_frame[i], na.hat_frame[j])
            val = br.evaluate(zero)
            for k in range(n):
                if val[k] != 0 and w[k] != w[i] + w[j]:
                    raise StructuralDefect("bracket value outside the degree-additive slot")
            C[i][j] = list(val)
            combo = PolyVectorField.zero(br.chart)
            for k in range(n):
                if val[k] != 0:
                    combo = combo + na.hat_frame[k].scale(val[k])
            if combo != br:
                closed = False
    sc = StructureConstants(tuple(tuple(tuple(c) for c in row) for row in C), tuple(w), na.depth, closed)
    if sc.jacobi_residual() != 0:
        raise StructuralDefect("structure constants violate the Jacobi identity")
    return sc


# -- Campbell-Hausdorff -------------------------------------------------

def _nc_mul(p, q, maxlen):
    out = {}
    for w1, c1 in p.items():
        for w2, c2 in q.items():
            if len(w1) + len(w2) > maxlen:
                continue
            w = w1 + w2
            out[w] = out.get(w, 0) + c1 * c2
    return {w: c for w, c in out.items() if c != 0}


@lru_cache(maxsize=None)
def bch_word_coefficients(order: int) -> Tuple[Tuple[Tuple[int, ...], Fraction], ...]:
    """Coefficients of right-nested words in z = log(e^a e^b) through length ``order``.

    z = sum over words x_1..x_n (letters 0=a, 1=b) of coef * [x_1,[x_2,...,x_n]].
    Obtained from the truncated noncommutative logarithm and the Dynkin map,
    which sends a homogeneous Lie element of degree n to n times itself.
    """
    ea = {(0,) * k: Fraction(1, factorial(k)) for k in range(order + 1)}
    eb = {(1,) * k: Fraction(1, factorial(k)) for k in range(order + 1)}
    X = _nc_mul(ea, eb, order)
    X.pop((), None)
    log = {}
    power = {(): Fraction(1)}
    for k in range(1, order + 1):
        power = _nc_mul(power, X, order)
        for w, c in power.items():
            log[w] = log.get(w, 0) + Fraction((-1) ** (k + 1), k) * c
    out = []
    for w, c in sorted(log.items(), key=lambda t: (len(t[0]), t[0])):
        if c != 0:
            out.append((w, c / len(w)))
    return tuple(out)


def _nested(sc: StructureConstants, letters, a, b):
    vec = a if letters[-1] == 0 else b
    for x in reversed(letters[:-1]):
        vec = sc.bracket(a if x == 0 else b, vec)
        if all(v == 0 for v in vec):
            break
    return vec


def bch_compose(sc: StructureConstants, a: Sequence, b: Sequence) -> list:
    """z with exp(b) o exp(a) = exp(z), i.e. z = a + b + [a,b]/2 + ... in the hat algebra.

    Exact (Fractions) when a and b are rational, floats otherwise.
    """
    n = sc.dim
    if len(a) != n or len(b) != n:
        raise ValueError("group elements must have one coefficient per frame entry")
    exact = all(isinstance(v, (int, Fraction)) for v in list(a) + list(b))
    conv = as_exact if exact else float
    a = [conv(v) for v in a]
    b = [conv(v) for v in b]
    z = [0] * n
    for letters, c in bch_word_coefficients(sc.depth):
        if len(letters) > 1 and letters[-1] == letters[-2]:
            continue
        vec = _nested(sc, letters, a, b)
        cc = c if exact else float(c)
        z = [zi + cc * vi for zi, vi in zip(z, vec)]
    return z
