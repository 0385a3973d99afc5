"""Real block realization of a monomial generator and its Gram matrix.

Each monomial ``r * D**e`` in column ``l`` becomes ``r`` times the
``q x (q + h_l)`` shift block ``[0_{q x e} I_q 0_{q x (h_l - e)}]`` where
``h_l`` is the largest exponent in that column.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .polyalg import PolyMatrix, ValidationError


class UnderdeterminedError(ValidationError):
    """Fewer than ``k`` workers were selected."""


def shift_block(h: int, j: int, q: int) -> np.ndarray:
    """``q x (q+h)`` matrix ``[0_{q x j}  I_q  0_{q x (h-j)}]``."""
    if not 0 <= j <= h:
        raise ValidationError(f"shift offset {j} outside [0, {h}]")
    out = np.zeros((q, q + h))
    out[:, j:j + q] = np.eye(q)
    return out


def upper_shift(q: int, p: int = 1) -> np.ndarray:
    """``U**p``: ones on the ``p``-th superdiagonal (zero matrix once ``p >= q``)."""
    return np.eye(q, k=p)


@dataclass(frozen=True)
class ExpandedMatrix:
    data: np.ndarray
    q: int
    col_offsets: tuple  # (start, width) per source column
    columns: tuple = field(default=())
    k: int = 0

    @property
    def shape(self):
        return self.data.shape

    @property
    def delta(self) -> int:
        """Columns beyond ``q`` per source column."""
        return self.data.shape[1] - self.q * len(self.col_offsets)

    def block(self, i: int, pos: int) -> np.ndarray:
        start, width = self.col_offsets[pos]
        return self.data[i * self.q:(i + 1) * self.q, start:start + width]


def _column_heights(G: PolyMatrix) -> np.ndarray:
    E = G.exp_array()
    return np.maximum(E.max(axis=0), 0)


def expand_subset(G: PolyMatrix, q: int, I: Optional[Iterable[int]] = None, *,
                  systematic: bool = True) -> ExpandedMatrix:
    """Expand the columns ``I`` of ``G`` into a ``kq x (|I| q + delta')`` real matrix.

    With ``systematic=True`` the generator must have an identity message part,
    which is what the shift-block layout assumes for decoding.
    """
    if q < 1:
        raise ValidationError("q must be positive")
    k = G.rows
    if systematic and not G.is_systematic(k):
        raise ValidationError("expand requires a systematic generator [I_k | parity]")
    cols = tuple(range(G.cols)) if I is None else tuple(sorted(int(c) for c in I))
    if len(set(cols)) != len(cols) or any(c < 0 or c >= G.cols for c in cols):
        raise ValidationError(f"bad column subset {cols}")
    if len(cols) < k:
        raise UnderdeterminedError(f"need at least k={k} columns, got {len(cols)}")
    heights = _column_heights(G)
    offsets = []
    start = 0
    for c in cols:
        width = q + int(heights[c])
        offsets.append((start, width))
        start += width
    data = np.zeros((k * q, start))
    eye = np.eye(q)
    for pos, c in enumerate(cols):
        col_start = offsets[pos][0]
        for i in range(k):
            e = G[i, c]
            if e is None:
                continue
            data[i * q:(i + 1) * q, col_start + e.exp:col_start + e.exp + q] = e.coeff * eye
    return ExpandedMatrix(data, q, tuple(offsets), cols, k)


def expand(G: PolyMatrix, q: int, *, systematic: bool = True) -> ExpandedMatrix:
    """Full ``kq x (nq + delta)`` expansion of ``G``."""
    return expand_subset(G, q, None, systematic=systematic)


@dataclass(frozen=True)
class GramMatrix:
    data: np.ndarray
    q: int

    def block(self, i, j):
        q = self.q
        return self.data[i * q:(i + 1) * q, j * q:(j + 1) * q]


def gram(E: ExpandedMatrix) -> GramMatrix:
    return GramMatrix(E.data @ E.data.T, E.q)


def gram_from_structure(G: PolyMatrix, q: int, I: Iterable[int]) -> GramMatrix:
    """Gram matrix assembled block by block from the shift-product identities.

    Diagonal block ``i``: ``(sum_l r_il^2) I_q``; block ``(i, j)`` with
    ``e_il > e_jl`` adds ``r_il r_jl U^(e_il - e_jl)``.  Works from the
    monomials only, never forming the expanded matrix.
    """
    k = G.rows
    cols = sorted(int(c) for c in I)
    out = np.zeros((k * q, k * q))
    for c in cols:
        col = G.column(c)
        for i, ei in enumerate(col):
            if ei is None:
                continue
            for j, ej in enumerate(col):
                if ej is None:
                    continue
                d = ei.exp - ej.exp
                blk = upper_shift(q, d) if d >= 0 else upper_shift(q, -d).T
                out[i * q:(i + 1) * q, j * q:(j + 1) * q] += ei.coeff * ej.coeff * blk
    return GramMatrix(out, q)


def is_block_toeplitz(M, q: int, atol: float = 0.0) -> bool:
    """True iff every ``q x q`` block of ``M`` has constant diagonals."""
    data = M.data if isinstance(M, GramMatrix) else np.asarray(M)
    n = data.shape[0]
    if data.ndim != 2 or data.shape[1] != n:
        raise ValidationError("matrix must be square")
    if n % q:
        raise ValidationError(f"dimension {n} not divisible by block size {q}")
    nb = n // q
    for bi in range(nb):
        for bj in range(nb):
            blk = data[bi * q:(bi + 1) * q, bj * q:(bj + 1) * q]
            # each entry must equal its up-left neighbour
            if np.any(np.abs(blk[1:, 1:] - blk[:-1, :-1]) > atol):
                return False
    return True
