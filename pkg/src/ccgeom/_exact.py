"""Small exact linear algebra over Fractions (and a float fallback)."""
from __future__ import annotations

from fractions import Fraction
from typing import List, Optional, Sequence

import numpy as np

from .polyalg import as_exact


def is_exact_vector(v) -> bool:
    return all(isinstance(a, (int, Fraction)) for a in v)


class EchelonBasis:
    """Incrementally maintained row-echelon basis for testing independence.

    Works over Fractions when every inserted vector is exact, otherwise
    falls back to a float Gram-Schmidt with a relative threshold.
    """

    def __init__(self, dim: int, rel_tol: float = 1e-9):
        self.dim = dim
        self.rows: List[list] = []
        self.pivots: List[int] = []
        self.rel_tol = rel_tol
        self._float = False
        self._q: List[np.ndarray] = []
        self._scale = 0.0

    @property
    def rank(self) -> int:
        return len(self.rows) if not self._float else len(self._q)

    def _reduce(self, v):
        v = list(v)
        for row, p in zip(self.rows, self.pivots):
            if v[p] != 0:
                f = v[p] / row[p]
                v = [a - f * b for a, b in zip(v, row)]
        return v

    def _to_float(self):
        self._float = True
        self._q = []
        rows, self.rows, self.pivots = self.rows, [], []
        for r in rows:
            self._add_float(np.array([float(a) for a in r]))

    def _add_float(self, v: np.ndarray) -> bool:
        self._scale = max(self._scale, float(np.linalg.norm(v)))
        r = v.copy()
        for _ in range(2):
            for q in self._q:
                r -= (q @ r) * q
        nr = float(np.linalg.norm(r))
        if nr <= self.rel_tol * max(self._scale, 1e-300):
            return False
        self._q.append(r / nr)
        return True

    def add(self, v) -> bool:
        """Insert v; return True if it was independent of the current span."""
        if len(v) != self.dim:
            raise ValueError("dimension mismatch")
        if not self._float and is_exact_vector(v):
            w = self._reduce([as_exact(a) for a in v])
            for i, a in enumerate(w):
                if a != 0:
                    self.rows.append(w)
                    self.pivots.append(i)
                    return True
            return False
        if not self._float:
            self._to_float()
        return self._add_float(np.array([float(a) for a in v]))

    def contains(self, v) -> bool:
        if not self._float and is_exact_vector(v):
            return all(a == 0 for a in self._reduce([as_exact(a) for a in v]))
        probe = EchelonBasis(self.dim, self.rel_tol)
        probe._float = True
        probe._q = list(self._q) if self._float else []
        if not self._float:
            for r in self.rows:
                probe._add_float(np.array([float(a) for a in r]))
        probe._scale = max(self._scale, probe._scale)
        return not probe._add_float(np.array([float(a) for a in v]))


def rank(vectors: Sequence[Sequence], dim: Optional[int] = None) -> int:
    vectors = list(vectors)
    if not vectors:
        return 0
    basis = EchelonBasis(dim or len(vectors[0]))
    for v in vectors:
        basis.add(v)
    return basis.rank


def solve_exact(columns: Sequence[Sequence], rhs: Sequence) -> Optional[list]:
    """Solve sum_j x_j columns[j] = rhs exactly; None if inconsistent.

    Free variables (if any) are set to zero.
    """
    n = len(rhs)
    m = len(columns)
    A = [[as_exact(columns[j][i]) for j in range(m)] + [as_exact(rhs[i])] for i in range(n)]
    pivots = []
    r = 0
    for c in range(m):
        piv = next((i for i in range(r, n) if A[i][c] != 0), None)
        if piv is None:
            continue
        A[r], A[piv] = A[piv], A[r]
        inv = 1 / A[r][c]
        A[r] = [a * inv for a in A[r]]
        for i in range(n):
            if i != r and A[i][c] != 0:
                f = A[i][c]
                A[i] = [a - f * b for a, b in zip(A[i], A[r])]
        pivots.append(c)
        r += 1
        if r == n:
            break
    for i in range(r, n):
        if A[i][m] != 0:
            return None
    x = [Fraction(0)] * m
    for i, c in enumerate(pivots):
        x[c] = A[i][m]
    return x


def determinant(rows: Sequence[Sequence]):
    """Determinant by Laplace expansion with memoised minors.

    Entries only need ``+``, ``-`` and ``*``, so this works for polynomial
    matrices as well as Fractions.  Cost is O(2^n n), fine for n <= 8.
    """
    n = len(rows)
    if n == 0:
        return Fraction(1)
    memo = {}

    def minor(r: int, cols: tuple):
        # determinant of rows r.. with the given columns
        if r == n - 1:
            return rows[r][cols[0]]
        key = (r, cols)
        if key in memo:
            return memo[key]
        total = None
        for k, c in enumerate(cols):
            a = rows[r][c]
            if a == 0:
                continue
            sub = minor(r + 1, cols[:k] + cols[k + 1:])
            term = a * sub
            if k % 2:
                term = -term
            total = term if total is None else total + term
        if total is None:
            total = 0 * rows[r][cols[0]]
        memo[key] = total
        return total

    return minor(0, tuple(range(n)))
