"""Weighted commutators, filtrations, regularity and adapted frames."""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ._exact import EchelonBasis, determinant
from .polyalg import CoordinateChart, PolyVectorField, as_exact, lie_bracket


class StructuralDefect(ValueError):
    """The input violates the spanning/weight requirements of a C-C space."""


Word = Tuple[int, ...]


def word_label(word: Word, names: Sequence[str]) -> str:
    if len(word) == 1:
        return names[word[0]]
    return f"[{names[word[0]]},{word_label(word[1:], names)}]"


@dataclass(frozen=True)
class CommutatorWord:
    word: Word
    hdeg: int
    field: PolyVectorField = field(compare=False, repr=False)

    @property
    def length(self) -> int:
        return len(self.word)

    @property
    def is_zero(self) -> bool:
        return self.field.is_zero()

    def sort_key(self):
        return (self.hdeg, len(self.word), self.word)


@dataclass(eq=False)
class WeightedSystem:
    """Generators X_1..X_q with weights d_1 <= ... <= d_q and depth M."""

    chart: CoordinateChart
    generators: List[PolyVectorField]
    weights: Tuple[int, ...]
    depth: Optional[int] = None
    anchor: Optional[Tuple] = None
    names: Optional[Tuple[str, ...]] = None
    label: str = ""
    # depth must be minimal at the anchor unless inherited from another base point
    minimal_depth: bool = field(default=True, compare=False)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.generators = list(self.generators)
        self.weights = tuple(int(w) for w in self.weights)
        q = len(self.generators)
        if q < 1:
            raise StructuralDefect("at least one generator is required")
        if len(self.weights) != q:
            raise StructuralDefect(f"{len(self.weights)} weights for {q} generators")
        if any(w < 1 for w in self.weights):
            raise StructuralDefect("weights must be positive integers")
        if list(self.weights) != sorted(self.weights):
            raise StructuralDefect(f"weights must be nondecreasing, got {self.weights}")
        for g in self.generators:
            if g.chart != self.chart:
                raise StructuralDefect("generator defined on a different chart")
        if self.names is None:
            self.names = tuple(f"X{i + 1}" for i in range(q))
        self.names = tuple(self.names)
        if len(self.names) != q or len(set(self.names)) != q:
            raise StructuralDefect("generator names must be distinct, one per generator")
        if self.anchor is None:
            self.anchor = tuple(Fraction(0) for _ in range(self.chart.dim))
        self.anchor = tuple(as_exact(a) for a in self.anchor)
        if len(self.anchor) != self.chart.dim:
            raise StructuralDefect("anchor dimension does not match the chart")
        minimal = self._minimal_depth(self.anchor)
        if self.depth is None:
            self.depth = minimal
        elif self.depth < minimal or (self.minimal_depth and self.depth != minimal):
            raise StructuralDefect(
                f"declared depth {self.depth} is not minimal at the anchor (minimal is {minimal})")

    @property
    def q(self) -> int:
        return len(self.generators)

    @property
    def dim(self) -> int:
        return self.chart.dim

    def __eq__(self, other):
        if not isinstance(other, WeightedSystem):
            return NotImplemented
        return (self.chart == other.chart and self.generators == other.generators
                and self.weights == other.weights and self.depth == other.depth
                and self.anchor == other.anchor and self.names == other.names)

    __hash__ = None

    def words_up_to(self, max_hdeg: int) -> List[CommutatorWord]:
        """All right-nested words with hdeg <= max_hdeg, sorted (hdeg, length, lex)."""
        key = ("words", max_hdeg)
        if key in self._cache:
            return self._cache[key]
        found: Dict[Word, CommutatorWord] = {}
        frontier = []
        for i, (X, d) in enumerate(zip(self.generators, self.weights)):
            if d <= max_hdeg:
                cw = CommutatorWord((i,), d, X)
                found[cw.word] = cw
                frontier.append(cw)
        while frontier:
            nxt = []
            for inner in frontier:
                for i, (X, d) in enumerate(zip(self.generators, self.weights)):
                    h = inner.hdeg + d
                    if h > max_hdeg:
                        continue
                    cw = CommutatorWord((i,) + inner.word, h, lie_bracket(X, inner.field))
                    found[cw.word] = cw
                    nxt.append(cw)
            frontier = nxt
        out = sorted(found.values(), key=CommutatorWord.sort_key)
        self._cache[key] = out
        return out

    def _minimal_depth(self, p) -> int:
        cap = max(self.weights) * max(self.dim, 1) * 2 + 2
        k = 1
        basis = EchelonBasis(self.dim)
        seen = set()
        while k <= cap:
            for cw in self.words_up_to(k):
                if cw.hdeg == k and cw.word not in seen:
                    seen.add(cw.word)
                    if not cw.is_zero:
                        basis.add(cw.field.evaluate(p))
            if basis.rank == self.dim:
                return k
            k += 1
        raise StructuralDefect(
            f"commutators of degree <= {cap} do not span the tangent space at {tuple(map(str, p))}")

    def label_of(self, word: Word) -> str:
        return word_label(word, self.names)


def enumerate_commutators(sys: WeightedSystem) -> List[CommutatorWord]:
    return sys.words_up_to(sys.depth)


@dataclass(frozen=True)
class FiltrationSnapshot:
    point: tuple
    dims: Tuple[int, ...]
    witnesses: Tuple[Tuple[Word, ...], ...]


def _exact_point(p):
    return tuple(as_exact(a) for a in p)


def filtration_dims(sys: WeightedSystem, p: Sequence) -> FiltrationSnapshot:
    if len(p) != sys.dim:
        raise ValueError(f"point has {len(p)} coordinates, expected {sys.dim}")
    pe = _exact_point(p)
    basis = EchelonBasis(sys.dim)
    dims, witnesses, chosen = [], [], []
    words = enumerate_commutators(sys)
    for k in range(1, sys.depth + 1):
        for cw in words:
            if cw.hdeg == k and not cw.is_zero and basis.add(cw.field.evaluate(pe)):
                chosen.append(cw.word)
        dims.append(basis.rank)
        witnesses.append(tuple(chosen))
    if dims[-1] < sys.dim:
        raise StructuralDefect(
            f"at {tuple(str(a) for a in pe)} commutators of degree <= {sys.depth} span only "
            f"{dims[-1]} of {sys.dim} dimensions")
    return FiltrationSnapshot(pe, tuple(dims), tuple(witnesses))


class PointClass(str, enum.Enum):
    REGULAR = "Regular"
    NONREGULAR = "Nonregular"
    UNDETERMINED = "Undetermined"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class Classification:
    verdict: PointClass
    dims: Tuple[int, ...]
    reason: str


def _minors_vanish(sys: WeightedSystem, snap: FiltrationSnapshot, budget: int) -> Optional[bool]:
    """True if every filtration rank is locally constant at the point.

    For each level k with witnesses W (independent at p), the rank stays n_k
    near p iff every (n_k+1)-minor of [W | X_J] vanishes identically for
    every other word J of degree <= k.  Returns None if the symbolic work
    would exceed ``budget`` determinant evaluations.
    """
    words = {cw.word: cw for cw in enumerate_commutators(sys)}
    spent = 0
    for k, (nk, wit) in enumerate(zip(snap.dims, snap.witnesses), start=1):
        if nk == sys.dim:
            continue
        W = [words[w].field.components for w in wit]
        for cw in words.values():
            if cw.hdeg > k or cw.is_zero or cw.word in wit:
                continue
            cols = W + [cw.field.components]
            for rows in itertools.combinations(range(sys.dim), nk + 1):
                spent += 1
                if spent > budget:
                    return None
                mat = [[cols[c][r] for c in range(nk + 1)] for r in rows]
                if not determinant(mat).is_zero():
                    return False
    return True


def classify_point(sys: WeightedSystem, p: Sequence, probe_radius: float = 1e-2,
                   probe_count: int = 64, seed: int = 0, minor_budget: int = 5000) -> PointClass:
    return classify_point_detailed(sys, p, probe_radius, probe_count, seed, minor_budget).verdict


def classify_point_detailed(sys: WeightedSystem, p: Sequence, probe_radius: float = 1e-2,
                            probe_count: int = 64, seed: int = 0,
                            minor_budget: int = 5000) -> Classification:
    if probe_radius <= 0:
        raise ValueError("probe_radius must be positive")
    snap = filtration_dims(sys, p)
    # rational probes inside the Euclidean ball
    rng = np.random.Generator(np.random.Philox(seed))
    denom = 2 ** 20
    for _ in range(probe_count):
        d = rng.normal(size=sys.dim)
        d *= probe_radius * rng.uniform() ** (1 / sys.dim) / max(np.linalg.norm(d), 1e-300)
        probe = tuple(a + Fraction(int(round(b * denom)), denom) for a, b in zip(snap.point, d))
        try:
            other = filtration_dims(sys, probe).dims
        except StructuralDefect:
            continue
        if other != snap.dims:
            return Classification(PointClass.NONREGULAR, snap.dims,
                                  f"probe {tuple(map(float, probe))} has dims {other}")
    cert = _minors_vanish(sys, snap, minor_budget)
    if cert is True:
        return Classification(PointClass.REGULAR, snap.dims, "all bordering minors vanish identically")
    if cert is False:
        return Classification(PointClass.NONREGULAR, snap.dims, "a bordering minor is a nonzero polynomial")
    return Classification(PointClass.UNDETERMINED, snap.dims, "probes agree; minor certificate over budget")


@dataclass(frozen=True)
class AdaptedFrame:
    words: Tuple[CommutatorWord, ...]
    frame_weights: Tuple[int, ...]
    point: tuple
    dims: Tuple[int, ...]
    tie_break: str = "greedy by (hdeg, length, lex)"

    @property
    def weight_sum(self) -> int:
        return sum(self.frame_weights)

    @property
    def length_sum(self) -> int:
        return sum(w.length for w in self.words)

    def fields(self) -> List[PolyVectorField]:
        return [w.field for w in self.words]


def adapted_frame(sys: WeightedSystem, u: Sequence) -> AdaptedFrame:
    """Greedy basis: at each degree k, words of hdeg k independent mod H_{k-1}(u).

    Greedy selection in a matroid ordered by (hdeg, length, lex) minimizes the
    weight sum and then the total word length.
    """
    snap = filtration_dims(sys, u)
    basis = EchelonBasis(sys.dim)
    chosen = []
    for cw in enumerate_commutators(sys):
        if cw.is_zero:
            continue
        if basis.add(cw.field.evaluate(snap.point)):
            chosen.append(cw)
    if len(chosen) != sys.dim:
        raise StructuralDefect("adapted frame does not have full rank")
    return AdaptedFrame(tuple(chosen), tuple(c.hdeg for c in chosen), snap.point, snap.dims)
