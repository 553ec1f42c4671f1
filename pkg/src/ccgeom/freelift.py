"""Weighted free nilpotent Lie algebras, their realization, and lifting.

Hall elements are binary trees: an int is a generator, a pair (u, v) is the
bracket [u, v].  The free algebra is realized by left-invariant polynomial
fields in exponential coordinates of the first kind, so that
exp(sum_j xi_j F_j)(0) = xi.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from ._exact import EchelonBasis, solve_exact
from .flows import lie_series
from .grading import NilpotentApproximation, nilpotentize
from .polyalg import CoordinateChart, Polynomial, PolyVectorField, lie_bracket
from .structure import StructuralDefect, WeightedSystem

Tree = Union[int, Tuple["Tree", "Tree"]]


def tree_hdeg(t: Tree, weights: Sequence[int]) -> int:
    return weights[t] if isinstance(t, int) else tree_hdeg(t[0], weights) + tree_hdeg(t[1], weights)


def tree_length(t: Tree) -> int:
    return 1 if isinstance(t, int) else tree_length(t[0]) + tree_length(t[1])


def tree_label(t: Tree, names: Sequence[str] | None = None) -> str:
    if isinstance(t, int):
        return names[t] if names else f"x{t + 1}"
    return f"[{tree_label(t[0], names)},{tree_label(t[1], names)}]"


def tree_letters(t: Tree) -> Tuple[int, ...]:
    return (t,) if isinstance(t, int) else tree_letters(t[0]) + tree_letters(t[1])


def expand(t: Tree) -> Dict[Tuple[int, ...], int]:
    """Expansion in the free associative algebra: [u, v] = uv - vu."""
    if isinstance(t, int):
        return {(t,): 1}
    a, b = expand(t[0]), expand(t[1])
    out: Dict[Tuple[int, ...], int] = {}
    for w1, c1 in a.items():
        for w2, c2 in b.items():
            out[w1 + w2] = out.get(w1 + w2, 0) + c1 * c2
            out[w2 + w1] = out.get(w2 + w1, 0) - c1 * c2
    return {w: c for w, c in out.items() if c}


def bracket_expansions(p: Dict, q: Dict) -> Dict:
    out: Dict[Tuple[int, ...], int] = {}
    for w1, c1 in p.items():
        for w2, c2 in q.items():
            out[w1 + w2] = out.get(w1 + w2, 0) + c1 * c2
            out[w2 + w1] = out.get(w2 + w1, 0) - c1 * c2
    return {w: c for w, c in out.items() if c}


@dataclass(frozen=True)
class HallBasis:
    q: int
    gen_weights: Tuple[int, ...]
    M: int
    elements: Tuple[Tree, ...]
    constants: Tuple[Tuple[Tuple[Fraction, ...], ...], ...] = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.elements)

    @property
    def hdegs(self) -> Tuple[int, ...]:
        return tuple(tree_hdeg(t, self.gen_weights) for t in self.elements)

    def labels(self, names=None) -> List[str]:
        return [tree_label(t, names) for t in self.elements]

    def bracket(self, a: Sequence, b: Sequence) -> list:
        n = self.dim
        out = [0] * n
        for i in range(n):
            if a[i] == 0:
                continue
            for j in range(n):
                if b[j] == 0:
                    continue
                f = a[i] * b[j]
                row = self.constants[i][j]
                for k in range(n):
                    if row[k] != 0:
                        out[k] = out[k] + f * row[k]
        return out


def _hall_trees(q: int, weights: Sequence[int], M: int) -> List[Tree]:
    """Hall set of right-normed basic commutators, pruned at hdeg > M.

    [u, v] is basic when u < v and, if v = [v1, v2], v1 <= u; this is the
    mirror image of the classical convention.
    """
    order: List[Tree] = list(range(q))
    by_len: Dict[int, List[Tree]] = {1: [g for g in range(q) if weights[g] <= M]}
    pos = {t: i for i, t in enumerate(order)}
    for n in range(2, M + 1):
        new = []
        for lu in range(1, n):
            lv = n - lu
            for u in by_len.get(lu, []):
                for v in by_len.get(lv, []):
                    if pos[u] >= pos[v]:
                        continue
                    if not isinstance(v, int) and pos[v[0]] > pos[u]:
                        continue
                    t = (u, v)
                    if tree_hdeg(t, weights) > M:
                        continue
                    new.append(t)
        # creation order within a length is deterministic; extend the total order
        new.sort(key=lambda t: (pos[t[0]], pos[t[1]]))
        for t in new:
            pos[t] = len(order)
            order.append(t)
        by_len[n] = new
    kept = [t for t in order if tree_hdeg(t, weights) <= M]
    return sorted(kept, key=lambda t: (tree_hdeg(t, weights), tree_length(t), pos[t]))


def _word_vector(exp: Dict, index: Dict) -> list:
    v = [Fraction(0)] * len(index)
    for w, c in exp.items():
        v[index[w]] = Fraction(c)
    return v


def hall_basis(q: int, gen_weights: Sequence[int], M: int) -> HallBasis:
    gen_weights = tuple(int(w) for w in gen_weights)
    if q < 1 or len(gen_weights) != q:
        raise ValueError("need one weight per generator")
    if any(w < 1 for w in gen_weights):
        raise ValueError("weights must be positive")
    if M < max(gen_weights):
        raise ValueError("depth must be at least the largest generator weight")
    return _hall_basis(q, gen_weights, M)


@lru_cache(maxsize=64)
def _hall_basis(q, gen_weights, M) -> HallBasis:
    trees = _hall_trees(q, gen_weights, M)
    n = len(trees)
    hd = [tree_hdeg(t, gen_weights) for t in trees]
    exps = [expand(t) for t in trees]
    C = [[[Fraction(0)] * n for _ in range(n)] for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if hd[i] + hd[j] > M:
                continue
            br = bracket_expansions(exps[i], exps[j])
            if not br:
                continue
            cand = [k for k in range(n) if hd[k] == hd[i] + hd[j]]
            words = sorted(set(br) | {w for k in cand for w in exps[k]})
            index = {w: r for r, w in enumerate(words)}
            sol = solve_exact([_word_vector(exps[k], index) for k in cand], _word_vector(br, index))
            if sol is None:
                raise RuntimeError("bracket of Hall elements outside the Hall span")
            for k, c in zip(cand, sol):
                C[i][j][k] = c
                C[j][i][k] = -c
    consts = tuple(tuple(tuple(c) for c in row) for row in C)
    return HallBasis(q, gen_weights, M, tuple(trees), consts)


def free_dimension_oracle(q: int, gen_weights: Sequence[int], M: int) -> int:
    """Rank of all right-nested words of hdeg <= M in the free associative algebra."""
    words = []
    frontier = [((g,), gen_weights[g], {(g,): 1}) for g in range(q) if gen_weights[g] <= M]
    while frontier:
        words.extend(frontier)
        nxt = []
        for w, h, e in frontier:
            for g in range(q):
                if h + gen_weights[g] <= M:
                    nxt.append(((g,) + w, h + gen_weights[g], bracket_expansions({(g,): 1}, e)))
        frontier = nxt
    allw = sorted({x for _, _, e in words for x in e})
    index = {w: r for r, w in enumerate(allw)}
    basis = EchelonBasis(len(allw))
    for _, _, e in words:
        if e:
            basis.add(_word_vector(e, index))
    return basis.rank


@lru_cache(maxsize=None)
def bernoulli_plus(n: int) -> Fraction:
    """Bernoulli numbers with B_1 = +1/2."""
    B = [Fraction(1)]
    for m in range(1, n + 1):
        B.append(-sum(comb(m + 1, k) * B[k] for k in range(m)) / Fraction(m + 1))
    b = B[n]
    return -b if n == 1 else b


@dataclass(eq=False)
class FreeRealization:
    basis: HallBasis
    chart: CoordinateChart
    fields: List[PolyVectorField]


def free_realization(basis: HallBasis, prefix: str = "xi") -> FreeRealization:
    """F_e(xi) = sum_n B_n^+/n! ad_xi^n e, left-invariant in first-kind coordinates."""
    n = basis.dim
    chart = CoordinateChart.numbered(prefix, n)
    names = chart.names
    xi = [Polynomial.var(names, i) for i in range(n)]
    zero = Polynomial.zero(names)
    fields = []
    for e in range(n):
        vec = [Polynomial.constant(names, int(i == e)) for i in range(n)]
        total = list(vec)
        k = 0
        while True:
            k += 1
            vec = [p if not isinstance(p, int) else zero for p in basis.bracket(xi, vec)]
            if all(p.is_zero() for p in vec):
                break
            c = bernoulli_plus(k) / factorial(k)
            if c != 0:
                total = [t + p.scale(c) for t, p in zip(total, vec)]
        fields.append(PolyVectorField(chart, total))
    real = FreeRealization(basis, chart, fields)
    problems = verify_realization(real)
    if problems:
        raise RuntimeError("; ".join(problems))
    return real


def verify_realization(real: FreeRealization) -> List[str]:
    b = real.basis
    n = b.dim
    problems = []
    zero = [Fraction(0)] * n
    for i, F in enumerate(real.fields):
        if F.evaluate(zero) != [Fraction(int(j == i)) for j in range(n)]:
            problems.append(f"F_{i + 1}(0) is not e_{i + 1}")
    for i in range(n):
        for j in range(i + 1, n):
            br = lie_bracket(real.fields[i], real.fields[j])
            expect = PolyVectorField.zero(real.chart)
            for k in range(n):
                c = b.constants[i][j][k]
                if c != 0:
                    expect = expect + real.fields[k].scale(c)
            if br != expect:
                problems.append(f"[F_{i + 1},F_{j + 1}] does not match the Hall table")
    return problems


@dataclass(eq=False)
class LiftedSystem:
    base: WeightedSystem            # the pushed-forward system on the privileged chart
    approximation: NilpotentApproximation
    basis: HallBasis
    realization: FreeRealization
    extended_chart: CoordinateChart
    y_block: Tuple[int, ...]        # Hall indices identified with base coordinates
    z_block: Tuple[int, ...]        # Hall indices completing the free algebra
    tails: List[List[Polynomial]]   # b_k: z-block components of lifted field k
    lifted: WeightedSystem
    lifted_hat: WeightedSystem
    theta: List[Polynomial]         # (y, z) as functions of free coordinates
    theta_inverse: List[Polynomial]  # free coordinates as functions of (y, z)

    @property
    def coordinate_weights(self) -> Tuple[int, ...]:
        hd = self.basis.hdegs
        return tuple(self.approximation.coordinate_weights) + tuple(hd[j] for j in self.z_block)

    def project(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return p[..., : self.base.dim].copy()

    def tail_fields(self) -> List[PolyVectorField]:
        n0 = self.base.dim
        zero = Polynomial.zero(self.extended_chart.names)
        return [PolyVectorField(self.extended_chart, [zero] * n0 + list(t)) for t in self.tails]


def project(ls: LiftedSystem, p) -> np.ndarray:
    return ls.project(p)


def _hat_image(t: Tree, gens: List[PolyVectorField], cache: dict) -> PolyVectorField:
    if t in cache:
        return cache[t]
    f = gens[t] if isinstance(t, int) else lie_bracket(_hat_image(t[0], gens, cache),
                                                       _hat_image(t[1], gens, cache))
    cache[t] = f
    return f


def lift_system(sys: WeightedSystem, u: Sequence, na: NilpotentApproximation | None = None
                ) -> LiftedSystem:
    na = na or nilpotentize(sys, u)
    N = sys.dim
    M = sys.depth
    basis = hall_basis(sys.q, sys.weights, M)
    real = free_realization(basis)
    Ntil = basis.dim
    hd = basis.hdegs
    wy = na.coordinate_weights
    hat_gens = [na.hat((k,)) for k in range(sys.q)]
    cache: dict = {}
    psi = [_hat_image(t, hat_gens, cache) for t in basis.elements]
    zero_pt = [Fraction(0)] * N
    ech = EchelonBasis(N)
    y_block = []
    for j, f in enumerate(psi):
        if ech.add(f.evaluate(zero_pt)):
            y_block.append(j)
    if len(y_block) != N:
        raise StructuralDefect("free algebra image does not span the base at the anchor")
    z_block = [j for j in range(Ntil) if j not in y_block]

    # P(xi) = exp(sum xi_j Psi_j)(0) as a polynomial in xi
    ynames = na.chart.names
    xinames = real.chart.names
    both = ynames + xinames
    big = CoordinateChart(both)
    Z = None
    for j, f in enumerate(psi):
        xj = Polynomial.var(both, N + j)
        comps = [c.embed(both) * xj for c in f.components] + [Polynomial.zero(both)] * Ntil
        term = PolyVectorField(big, comps)
        Z = term if Z is None else Z + term
    iters, ok = lie_series(Z, [Polynomial.var(both, i) for i in range(N)], 4 * M + 4)
    if not ok:
        raise StructuralDefect("projection map series did not terminate")
    sub = [Polynomial.zero(xinames)] * N + [Polynomial.var(xinames, j) for j in range(Ntil)]
    P = []
    for seq in iters:
        total = Polynomial.zero(xinames)
        for k, g in enumerate(seq):
            total = total + g.compose(sub).scale(Fraction(1, factorial(k)))
        P.append(total)

    ext_names = ynames + tuple(f"c{N + i + 1}" for i in range(len(z_block)))
    ext = CoordinateChart(ext_names)
    theta = P + [Polynomial.var(xinames, j) for j in z_block]
    theta_inv = _triangular_inverse(P, y_block, z_block, hd, wy, psi, ext_names, Ntil)

    # check Theta o Theta^{-1} = id
    ident = [p.compose(theta_inv) for p in theta]
    for i, p in enumerate(ident):
        if p != Polynomial.var(ext_names, i):
            raise StructuralDefect("lifting chart inverse failed")

    tails = []
    lifted_hat_fields = []
    lifted_fields = []
    DP = [[p.diff(j) for j in range(Ntil)] for p in P]
    for k in range(sys.q):
        F = real.fields[k]
        ycomp = []
        for i in range(N):
            s = Polynomial.zero(xinames)
            for j in range(Ntil):
                if not DP[i][j].is_zero() and not F.components[j].is_zero():
                    s = s + DP[i][j] * F.components[j]
            ycomp.append(s.compose(theta_inv))
        expect = [c.embed(ext_names) for c in hat_gens[k].components]
        if ycomp != expect:
            raise StructuralDefect(f"lifted field {sys.names[k]} does not project onto its hat field")
        b = [F.components[j].compose(theta_inv) for j in z_block]
        tails.append(b)
        lifted_hat_fields.append(PolyVectorField(ext, expect + b))
        base_part = [c.embed(ext_names) for c in na.pushforward[(k,)].components]
        lifted_fields.append(PolyVectorField(ext, base_part + b))
    zero_anchor = tuple(Fraction(0) for _ in ext_names)
    lifted = WeightedSystem(ext, lifted_fields, sys.weights, depth=None, anchor=zero_anchor,
                            names=sys.names, label=f"{sys.label} (lifted)")
    lifted_hat = WeightedSystem(ext, lifted_hat_fields, sys.weights, depth=None, anchor=zero_anchor,
                                names=sys.names, label=f"{sys.label} (lifted, nilpotent)")
    if lifted.depth != M:
        raise StructuralDefect(f"lifted depth {lifted.depth} differs from {M}")
    return LiftedSystem(na.pushforward.system, na, basis, real, ext, tuple(y_block), tuple(z_block),
                        tails, lifted, lifted_hat, theta, theta_inv)


def _triangular_inverse(P, y_block, z_block, hd, wy, psi, ext_names, Ntil):
    """Solve (y, z) = (P(xi), xi_S) for xi, degree by degree in the weights."""
    N = len(P)
    sol: Dict[int, Polynomial] = {}
    for pos, j in enumerate(z_block):
        sol[j] = Polynomial.var(ext_names, N + pos)
    zero_pt = [Fraction(0)] * N
    for h in sorted(set(wy)):
        rows = [i for i in range(N) if wy[i] == h]
        cols = [j for j in y_block if hd[j] == h]
        if len(rows) != len(cols):
            raise StructuralDefect("weight bookkeeping mismatch in the lifting chart")
        A = [[psi[j].evaluate(zero_pt)[i] for j in cols] for i in rows]
        # residual Q_i = P_i with the unknown degree-h block set to zero
        subs = []
        for j in range(Ntil):
            if j in sol:
                subs.append(sol[j])
            else:
                subs.append(Polynomial.zero(ext_names))
        rhs = [Polynomial.var(ext_names, i) - P[i].compose(subs) for i in rows]
        # A * xi_cols = rhs, solved column by column of an exact inverse
        n = len(rows)
        inv_cols = []
        for r in range(n):
            e = [Fraction(int(r == c)) for c in range(n)]
            x = solve_exact([[A[a][b] for a in range(n)] for b in range(n)], e)
            inv_cols.append(x)
        for b, j in enumerate(cols):
            total = Polynomial.zero(ext_names)
            for r in range(n):
                c = inv_cols[r][b]
                if c != 0:
                    total = total + rhs[r].scale(c)
            sol[j] = total
    return [sol[j] for j in range(Ntil)]
