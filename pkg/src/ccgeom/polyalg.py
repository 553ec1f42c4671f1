"""Exact multivariate polynomials and polynomial vector fields.

Coefficients are kept as :class:`fractions.Fraction` whenever the inputs are
rational; floats are accepted and propagate (they enter at evaluation and
optimization boundaries only).  Terms are stored as ``{exponent tuple: coeff}``
with zero coefficients never stored.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from numbers import Number, Rational
from typing import Dict, Iterable, Mapping, Sequence, Tuple

import numpy as np

Exponent = Tuple[int, ...]


class ChartMismatch(ValueError):
    pass


def as_exact(c):
    """Convert ints/Fractions/float to Fraction (floats exactly); leave others."""
    if isinstance(c, Fraction):
        return c
    if isinstance(c, (int, np.integer)):
        return Fraction(int(c))
    if isinstance(c, (float, np.floating)):
        return Fraction(float(c))
    if isinstance(c, Rational):
        return Fraction(c.numerator, c.denominator)
    return c


def _clean(c):
    if isinstance(c, np.floating):
        return float(c)
    if isinstance(c, (int, np.integer)) and not isinstance(c, bool):
        return Fraction(int(c))
    return c


@dataclass(frozen=True)
class CoordinateChart:
    names: Tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if len(names) < 1:
            raise ValueError("a chart needs at least one coordinate")
        if len(set(names)) != len(names):
            raise ValueError(f"coordinate names must be distinct: {names}")

    @property
    def dim(self) -> int:
        return len(self.names)

    @classmethod
    def numbered(cls, prefix: str, n: int) -> "CoordinateChart":
        return cls(tuple(f"{prefix}{i + 1}" for i in range(n)))

    def extend(self, more: Sequence[str]) -> "CoordinateChart":
        return CoordinateChart(self.names + tuple(more))


class Polynomial:
    """Sparse multivariate polynomial over an ordered tuple of variables."""

    __slots__ = ("variables", "terms", "_hash")

    def __init__(self, variables: Sequence[str], terms: Mapping[Exponent, object] | None = None):
        self.variables = tuple(variables)
        n = len(self.variables)
        clean: Dict[Exponent, object] = {}
        if terms:
            for e, c in terms.items():
                e = tuple(int(a) for a in e)
                if len(e) != n:
                    raise ValueError(f"exponent {e} does not match {n} variables")
                if any(a < 0 for a in e):
                    raise ValueError(f"negative exponent {e}")
                c = _clean(c)
                if c != 0:
                    clean[e] = c
        self.terms = clean
        self._hash = None

    # -- constructors -------------------------------------------------
    @classmethod
    def _raw(cls, variables, terms):
        p = cls.__new__(cls)
        p.variables = variables
        p.terms = terms
        p._hash = None
        return p

    @classmethod
    def zero(cls, variables):
        return cls._raw(tuple(variables), {})

    @classmethod
    def constant(cls, variables, c):
        variables = tuple(variables)
        return cls(variables, {(0,) * len(variables): c})

    @classmethod
    def var(cls, variables, name_or_index, power: int = 1):
        variables = tuple(variables)
        i = name_or_index if isinstance(name_or_index, int) else variables.index(name_or_index)
        e = [0] * len(variables)
        e[i] = power
        return cls._raw(variables, {tuple(e): Fraction(1)})

    # -- basic queries ------------------------------------------------
    @property
    def nvars(self) -> int:
        return len(self.variables)

    def is_zero(self) -> bool:
        return not self.terms

    def is_constant(self) -> bool:
        return all(not any(e) for e in self.terms)

    def is_exact(self) -> bool:
        return all(isinstance(c, Fraction) for c in self.terms.values())

    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=-1)

    def weighted_degrees(self, weights: Sequence[int]) -> set:
        return {sum(a * w for a, w in zip(e, weights)) for e in self.terms}

    def constant_term(self):
        return self.terms.get((0,) * self.nvars, Fraction(0))

    def _check(self, other: "Polynomial"):
        if self.variables != other.variables:
            raise ChartMismatch(f"variables differ: {self.variables} vs {other.variables}")

    def _coerce(self, other):
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        if isinstance(other, Number):
            return Polynomial.constant(self.variables, other)
        return NotImplemented

    # -- arithmetic ---------------------------------------------------
    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self.terms)
        for e, c in other.terms.items():
            s = out.get(e, 0) + c
            if s != 0:
                out[e] = s
            else:
                out.pop(e, None)
        return Polynomial._raw(self.variables, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial._raw(self.variables, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c) -> "Polynomial":
        c = _clean(c)
        if c == 0:
            return Polynomial.zero(self.variables)
        out = {}
        for e, a in self.terms.items():
            v = a * c
            if v != 0:
                out[e] = v
        return Polynomial._raw(self.variables, out)

    def __mul__(self, other):
        if isinstance(other, Number):
            return self.scale(other)
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out: Dict[Exponent, object] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                s = out.get(e, 0) + c1 * c2
                if s != 0:
                    out[e] = s
                else:
                    out.pop(e, None)
        return Polynomial._raw(self.variables, out)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, c):
        if not isinstance(c, Number):
            return NotImplemented
        c = as_exact(c) if isinstance(c, (int, Fraction)) else c
        return self.scale(1 / c)

    def __pow__(self, k: int):
        if not isinstance(k, (int, np.integer)) or k < 0:
            raise ValueError("only non-negative integer powers")
        result = Polynomial.constant(self.variables, 1)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def __eq__(self, other):
        if isinstance(other, Number):
            other = Polynomial.constant(self.variables, other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.variables == other.variables and self.terms == other.terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.variables, frozenset(self.terms.items())))
        return self._hash

    # -- calculus / substitution ----------------------------------------
    def diff(self, i: int) -> "Polynomial":
        out = {}
        for e, c in self.terms.items():
            a = e[i]
            if a:
                e2 = e[:i] + (a - 1,) + e[i + 1:]
                out[e2] = c * a
        return Polynomial._raw(self.variables, out)

    def evaluate(self, point: Sequence):
        if len(point) != self.nvars:
            raise ValueError(f"point has {len(point)} coordinates, expected {self.nvars}")
        total = 0
        for e, c in self.terms.items():
            term = c
            for x, a in zip(point, e):
                if a:
                    term = term * x ** a
            total = total + term
        return total if self.terms else Fraction(0)

    def compose(self, substitutes: Sequence["Polynomial"]) -> "Polynomial":
        """Substitute polynomial ``substitutes[i]`` for variable ``i``."""
        if len(substitutes) != self.nvars:
            raise ValueError("need one substitute per variable")
        target_vars = substitutes[0].variables if substitutes else ()
        powers: Dict[Tuple[int, int], Polynomial] = {}

        def pw(i, a):
            key = (i, a)
            if key not in powers:
                powers[key] = substitutes[i] ** a
            return powers[key]

        result = Polynomial.zero(target_vars)
        for e, c in self.terms.items():
            term = Polynomial.constant(target_vars, c)
            for i, a in enumerate(e):
                if a:
                    term = term * pw(i, a)
            result = result + term
        return result

    def embed(self, variables: Sequence[str]) -> "Polynomial":
        """Re-express over a larger variable tuple containing all current variables."""
        variables = tuple(variables)
        idx = [variables.index(v) for v in self.variables]
        out = {}
        for e, c in self.terms.items():
            e2 = [0] * len(variables)
            for i, a in zip(idx, e):
                e2[i] = a
            out[tuple(e2)] = c
        return Polynomial._raw(variables, out)

    def truncate(self, max_degree: int) -> "Polynomial":
        return Polynomial._raw(self.variables, {e: c for e, c in self.terms.items() if sum(e) <= max_degree})

    def map_coefficients(self, fn) -> "Polynomial":
        return Polynomial(self.variables, {e: fn(c) for e, c in self.terms.items()})

    def sorted_terms(self):
        """Terms in descending graded-lexicographic order."""
        return sorted(self.terms.items(), key=lambda t: (sum(t[0]), t[0]), reverse=True)

    # -- rendering ------------------------------------------------------
    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for e, c in self.sorted_terms():
            mono = "*".join(
                v if a == 1 else f"{v}^{a}" for v, a in zip(self.variables, e) if a
            )
            neg = c < 0
            mag = -c if neg else c
            if isinstance(mag, Fraction):
                cs = str(mag)
            else:
                cs = repr(float(mag))
            if mono:
                body = mono if mag == 1 else f"{cs}*{mono}"
            else:
                body = cs
            parts.append(("-" if neg else "+", body))
        sign, body = parts[0]
        out = ("-" if sign == "-" else "") + body
        for sign, body in parts[1:]:
            out += f" {sign} {body}"
        return out

    def __repr__(self):
        return f"Polynomial({self})"


class PolyVectorField:
    """Vector field sum_j a_j(x) d/dx_j with polynomial coefficients."""

    __slots__ = ("chart", "components", "__dict__")

    def __init__(self, chart: CoordinateChart, components: Sequence[Polynomial]):
        components = tuple(components)
        if len(components) != chart.dim:
            raise ValueError(f"{len(components)} components for a {chart.dim}-dimensional chart")
        for c in components:
            if c.variables != chart.names:
                raise ChartMismatch("component variables do not match chart")
        self.chart = chart
        self.components = components

    @classmethod
    def from_coefficients(cls, chart: CoordinateChart, coeffs: Sequence) -> "PolyVectorField":
        comps = []
        for c in coeffs:
            comps.append(c if isinstance(c, Polynomial) else Polynomial.constant(chart.names, c))
        return cls(chart, comps)

    @classmethod
    def coordinate(cls, chart: CoordinateChart, i: int) -> "PolyVectorField":
        return cls.from_coefficients(chart, [1 if j == i else 0 for j in range(chart.dim)])

    @classmethod
    def zero(cls, chart: CoordinateChart) -> "PolyVectorField":
        return cls(chart, [Polynomial.zero(chart.names)] * chart.dim)

    @property
    def dim(self):
        return self.chart.dim

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.components)

    def is_exact(self) -> bool:
        return all(c.is_exact() for c in self.components)

    def _check(self, other):
        if self.chart != other.chart:
            raise ChartMismatch("vector fields live on different charts")

    def __add__(self, other):
        self._check(other)
        return PolyVectorField(self.chart, [a + b for a, b in zip(self.components, other.components)])

    def __sub__(self, other):
        self._check(other)
        return PolyVectorField(self.chart, [a - b for a, b in zip(self.components, other.components)])

    def __neg__(self):
        return PolyVectorField(self.chart, [-a for a in self.components])

    def scale(self, c):
        return PolyVectorField(self.chart, [a.scale(c) for a in self.components])

    def __mul__(self, c):
        if isinstance(c, Number):
            return self.scale(c)
        return NotImplemented

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, PolyVectorField):
            return NotImplemented
        return self.chart == other.chart and self.components == other.components

    def __hash__(self):
        return hash((self.chart, self.components))

    def apply(self, f: Polynomial) -> Polynomial:
        """Directional derivative X f."""
        total = Polynomial.zero(f.variables)
        for i, a in enumerate(self.components):
            if a.is_zero():
                continue
            d = f.diff(i)
            if not d.is_zero():
                total = total + a * d
        return total

    def evaluate(self, p: Sequence):
        if len(p) != self.dim:
            raise ValueError(f"point has {len(p)} coordinates, expected {self.dim}")
        return [c.evaluate(p) for c in self.components]

    def graded_parts(self, weights: Sequence[int]) -> Dict[int, "PolyVectorField"]:
        return graded_parts(self, weights)

    def pullback_dilation(self, weights: Sequence[int], eps) -> "PolyVectorField":
        """delta_eps^* X: component j becomes eps^{-w_j} a_j(delta_eps x)."""
        comps = []
        for j, a in enumerate(self.components):
            out = {}
            for e, c in a.terms.items():
                hd = sum(k * w for k, w in zip(e, weights)) - weights[j]
                out[e] = c * _power(eps, hd)
            comps.append(Polynomial(a.variables, out))
        return PolyVectorField(self.chart, comps)

    def embed(self, chart: CoordinateChart) -> "PolyVectorField":
        """Extend to a larger chart (leading coordinates shared) with zero new components."""
        comps = [c.embed(chart.names) for c in self.components]
        comps += [Polynomial.zero(chart.names)] * (chart.dim - self.dim)
        return PolyVectorField(chart, comps)

    @cached_property
    def compiled(self) -> "CompiledPolys":
        return CompiledPolys(self.components)

    def __str__(self):
        parts = []
        for name, c in zip(self.chart.names, self.components):
            if not c.is_zero():
                parts.append(f"({c})*d_{name}")
        return " + ".join(parts) if parts else "0"

    def __repr__(self):
        return f"PolyVectorField({self})"


def _power(eps, k: int):
    if k >= 0:
        return eps ** k
    return 1 / (eps ** (-k)) if not isinstance(eps, int) else Fraction(1, eps ** (-k))


def linear_combination(coeffs: Sequence, fields: Sequence[PolyVectorField]) -> PolyVectorField:
    if len(coeffs) != len(fields):
        raise ValueError(f"{len(coeffs)} coefficients for {len(fields)} fields")
    if not fields:
        raise ValueError("empty combination")
    chart = fields[0].chart
    for f in fields[1:]:
        if f.chart != chart:
            raise ChartMismatch("fields live on different charts")
    comps = []
    for j in range(chart.dim):
        out: Dict[Exponent, object] = {}
        for c, f in zip(coeffs, fields):
            c = _clean(c)
            if c == 0:
                continue
            for e, a in f.components[j].terms.items():
                s = out.get(e, 0) + c * a
                if s != 0:
                    out[e] = s
                else:
                    out.pop(e, None)
        comps.append(Polynomial._raw(chart.names, out))
    return PolyVectorField(chart, comps)


def lie_bracket(X: PolyVectorField, Y: PolyVectorField) -> PolyVectorField:
    """[X, Y] = XY - YX, componentwise X(Y_j) - Y(X_j)."""
    X._check(Y)
    return PolyVectorField(X.chart, [X.apply(b) - Y.apply(a) for a, b in zip(X.components, Y.components)])


def evaluate(X: PolyVectorField, p: Sequence) -> np.ndarray:
    return np.array([float(v) for v in X.evaluate(p)])


def graded_parts(X: PolyVectorField, weights: Sequence[int]) -> Dict[int, PolyVectorField]:
    """Split X by homogeneity order: x^alpha d_j has order |alpha|_h - w_j."""
    weights = tuple(int(w) for w in weights)
    if len(weights) != X.dim:
        raise ValueError(f"{len(weights)} weights for a {X.dim}-dimensional chart")
    buckets: Dict[int, list] = {}
    for j, a in enumerate(X.components):
        for e, c in a.terms.items():
            s = sum(k * w for k, w in zip(e, weights)) - weights[j]
            buckets.setdefault(s, [{} for _ in range(X.dim)])[j][e] = c
    return {
        s: PolyVectorField(X.chart, [Polynomial._raw(X.chart.names, t) for t in comps])
        for s, comps in sorted(buckets.items())
    }


def is_homogeneous(X: PolyVectorField, weights: Sequence[int], order: int) -> bool:
    parts = graded_parts(X, weights)
    return X.is_zero() or set(parts) == {order}


def field_values_matrix(fields: Sequence[PolyVectorField], p: Sequence) -> list:
    """Columns are the field values at p (exact when inputs are exact)."""
    return [f.evaluate(p) for f in fields]


class CompiledPolys:
    """Vectorised float evaluation of a list of polynomials sharing variables."""

    def __init__(self, polys: Sequence[Polynomial]):
        polys = list(polys)
        self.n_out = len(polys)
        nvars = polys[0].nvars if polys else 0
        monos = sorted({e for p in polys for e in p.terms})
        index = {e: i for i, e in enumerate(monos)}
        self.exponents = np.array(monos, dtype=np.int64).reshape(len(monos), nvars)
        coef = np.zeros((self.n_out, len(monos)))
        for j, p in enumerate(polys):
            for e, c in p.terms.items():
                coef[j, index[e]] = float(c)
        self.coef = coef
        self.max_power = int(self.exponents.max()) if self.exponents.size else 0
        self.nvars = nvars

    def monomials(self, x: np.ndarray) -> np.ndarray:
        """x: (..., nvars) -> (..., n_monomials)."""
        x = np.asarray(x, dtype=float)
        if self.exponents.shape[0] == 0:
            return np.zeros(x.shape[:-1] + (0,))
        if self.max_power <= 1:
            mask = self.exponents.astype(bool)
            out = np.ones(x.shape[:-1] + (len(self.exponents),))
            for i in range(self.nvars):
                col = mask[:, i]
                if col.any():
                    out[..., col] *= x[..., i:i + 1]
            return out
        # table of powers: (..., nvars, max_power+1)
        pw = np.ones(x.shape + (self.max_power + 1,))
        for k in range(1, self.max_power + 1):
            pw[..., k] = pw[..., k - 1] * x
        out = np.ones(x.shape[:-1] + (len(self.exponents),))
        for i in range(self.nvars):
            e = self.exponents[:, i]
            if e.any():
                out *= pw[..., i, :][..., e]
        return out

    def __call__(self, x) -> np.ndarray:
        return self.monomials(x) @ self.coef.T
