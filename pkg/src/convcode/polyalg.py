"""Generator matrices whose entries are real-scaled monomials ``c * D**e``.

A :class:`PolyMatrix` stores ``None`` for a zero cell, so a stored
:class:`Monomial` always has a nonzero coefficient.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np


class ValidationError(ValueError):
    """Raised for malformed generator parameters."""


class InfeasibleStorageError(ValidationError):
    """Raised when the storage fraction cannot hold even one block per row."""


@dataclass(frozen=True)
class Monomial:
    coeff: float
    exp: int = 0

    def __post_init__(self):
        if not isinstance(self.exp, (int, np.integer)) or self.exp < 0:
            raise ValidationError(f"exponent must be a non-negative integer, got {self.exp!r}")
        if self.coeff == 0:
            raise ValidationError("zero entries are stored as None, not Monomial(0, e)")
        object.__setattr__(self, "exp", int(self.exp))
        object.__setattr__(self, "coeff", float(self.coeff))

    def __mul__(self, other: "Monomial") -> "Monomial":
        return Monomial(self.coeff * other.coeff, self.exp + other.exp)

    def __str__(self):
        if self.exp == 0:
            return f"{self.coeff:g}"
        c = "" if self.coeff == 1 else f"{self.coeff:g}*"
        return f"{c}D^{self.exp}" if self.exp > 1 else f"{c}D"


Entry = Optional[Monomial]


@dataclass(frozen=True)
class PolyMatrix:
    rows: int
    cols: int
    entries: tuple

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValidationError("PolyMatrix needs positive dimensions")
        entries = tuple(tuple(row) for row in self.entries)
        if len(entries) != self.rows or any(len(row) != self.cols for row in entries):
            raise ValidationError("entries do not match the declared shape")
        for row in entries:
            for e in row:
                if e is not None and not isinstance(e, Monomial):
                    raise ValidationError(f"entry {e!r} is not a Monomial or None")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_arrays(cls, coeffs, exps=None) -> "PolyMatrix":
        """Build from a coefficient array and an (optional) exponent array.

        Cells with a zero coefficient become empty.
        """
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.ndim != 2:
            raise ValidationError("coefficient array must be 2-D")
        exps = np.zeros(coeffs.shape, dtype=int) if exps is None else np.asarray(exps)
        if exps.shape != coeffs.shape:
            raise ValidationError("coefficient and exponent arrays differ in shape")
        entries = [
            [Monomial(coeffs[i, j], int(exps[i, j])) if coeffs[i, j] != 0 else None
             for j in range(coeffs.shape[1])]
            for i in range(coeffs.shape[0])
        ]
        return cls(coeffs.shape[0], coeffs.shape[1], entries)

    @property
    def shape(self):
        return self.rows, self.cols

    def __getitem__(self, idx) -> Entry:
        i, j = idx
        return self.entries[i][j]

    def column(self, j: int) -> tuple:
        return tuple(row[j] for row in self.entries)

    def coeff_array(self) -> np.ndarray:
        return np.array([[0.0 if e is None else e.coeff for e in row] for row in self.entries])

    def exp_array(self) -> np.ndarray:
        """Exponents as an int array; empty cells hold -1."""
        return np.array([[-1 if e is None else e.exp for e in row] for row in self.entries], dtype=np.int64)

    def max_exp(self) -> int:
        return int(self.exp_array().max())

    def evaluate(self, omega) -> np.ndarray:
        """Substitute ``D = exp(i*omega)``.

        A scalar ``omega`` gives a ``rows x cols`` complex array, an array of
        frequencies gives a stacked ``(len(omega), rows, cols)`` array.
        """
        c = self.coeff_array()
        e = np.maximum(self.exp_array(), 0)
        w = np.asarray(omega, dtype=float)
        return c * np.exp(1j * np.multiply.outer(w, e))

    def is_systematic(self, k: Optional[int] = None) -> bool:
        """True when the leading ``k x k`` block is the identity (``D**0`` diagonal)."""
        k = self.rows if k is None else k
        if k != self.rows or self.cols < k:
            return False
        for i in range(k):
            for j in range(k):
                e = self.entries[i][j]
                if i == j:
                    if e is None or e.coeff != 1 or e.exp != 0:
                        return False
                elif e is not None:
                    return False
        return True

    def to_dict(self) -> dict:
        cells = [
            {"r": i, "c": j, "coeff": e.coeff, "exp": e.exp}
            for i, row in enumerate(self.entries)
            for j, e in enumerate(row)
            if e is not None
        ]
        return {"rows": self.rows, "cols": self.cols, "entries": cells}

    @classmethod
    def from_dict(cls, d: dict) -> "PolyMatrix":
        rows, cols = int(d["rows"]), int(d["cols"])
        grid = [[None] * cols for _ in range(rows)]
        for cell in d["entries"]:
            r, c = int(cell["r"]), int(cell["c"])
            if not (0 <= r < rows and 0 <= c < cols):
                raise ValidationError(f"cell ({r}, {c}) outside {rows}x{cols}")
            if grid[r][c] is not None:
                raise ValidationError(f"duplicate cell ({r}, {c})")
            grid[r][c] = Monomial(float(cell["coeff"]), int(cell.get("exp", 0)))
        return cls(rows, cols, grid)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text: str) -> "PolyMatrix":
        return cls.from_dict(json.loads(text))

    def __str__(self):
        cells = [[("0" if e is None else str(e)) for e in row] for row in self.entries]
        width = max(len(c) for row in cells for c in row)
        return "\n".join(" ".join(c.rjust(width) for c in row) for row in cells)


def _strictly_increasing(seq) -> bool:
    return all(x < y for x, y in zip(seq, seq[1:]))


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters of a systematic generator ``[I_k | R o Y(D)]``.

    ``Y[i][j] = D**(a[j] * b[i])``; ``R`` defaults to all ones.
    """

    n: int
    k: int
    s: int
    a: tuple
    b: tuple
    R: Optional[tuple] = None

    def __post_init__(self):
        a = tuple(int(x) for x in self.a)
        b = tuple(int(x) for x in self.b)
        if self.k < 1 or self.s < 0 or self.n != self.k + self.s:
            raise ValidationError(f"need n = k + s with k >= 1, got n={self.n}, k={self.k}, s={self.s}")
        if len(a) != self.s or len(b) != self.k:
            raise ValidationError("len(a) must be s and len(b) must be k")
        if any(x < 0 for x in a + b):
            raise ValidationError("exponent vectors must be non-negative")
        if not _strictly_increasing(a) or not _strictly_increasing(b):
            raise ValidationError("a and b must be strictly increasing")
        if self.R is None:
            R = tuple(tuple(1.0 for _ in range(self.s)) for _ in range(self.k))
        else:
            R = tuple(tuple(float(x) for x in row) for row in np.asarray(self.R, dtype=float).reshape(self.k, self.s))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "R", R)

    @classmethod
    def matvec(cls, k: int, s: int, R=None) -> "GeneratorSpec":
        return cls(k + s, k, s, tuple(range(s)), tuple(range(k)), R)

    @property
    def delta(self) -> int:
        """Extra columns of the expanded matrix, ``b[k-1] * sum(a)``."""
        return self.b[-1] * sum(self.a) if self.s else 0

    def with_R(self, R) -> "GeneratorSpec":
        return GeneratorSpec(self.n, self.k, self.s, self.a, self.b, R)

    def to_dict(self) -> dict:
        return {"n": self.n, "k": self.k, "s": self.s, "a": list(self.a), "b": list(self.b),
                "R": [list(row) for row in self.R]}

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        return cls(int(d["n"]), int(d["k"]), int(d["s"]), tuple(d["a"]), tuple(d["b"]), d.get("R"))

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text: str) -> "GeneratorSpec":
        return cls.from_dict(json.loads(text))


def make_systematic_generator(spec: GeneratorSpec) -> PolyMatrix:
    k, s = spec.k, spec.s
    grid = [[None] * spec.n for _ in range(k)]
    for i in range(k):
        grid[i][i] = Monomial(1.0, 0)
        for j in range(s):
            r = spec.R[i][j]
            grid[i][k + j] = Monomial(r, spec.a[j] * spec.b[i]) if r != 0 else None
    return PolyMatrix(k, spec.n, grid)


def make_matvec_generator(k: int, s: int, R=None) -> PolyMatrix:
    if k < 1 or s < 0:
        raise ValidationError("need k >= 1 and s >= 0")
    return make_systematic_generator(GeneratorSpec.matvec(k, s, R))


def _message_factor_columns(k_A: int, k_B: int):
    """Message parts of the two factors: row i1 of G_A is ones on group i1;
    G_B repeats I_{k_B} k_A times."""
    k = k_A * k_B
    ga = [[None] * k for _ in range(k_A)]
    gb = [[None] * k for _ in range(k_B)]
    for i1 in range(k_A):
        for i2 in range(k_B):
            ga[i1][i1 * k_B + i2] = Monomial(1.0, 0)
            gb[i2][i1 * k_B + i2] = Monomial(1.0, 0)
    return ga, gb


def make_matmat_factors(k_A: int, k_B: int, s: int, z: int, R_A=None, R_B=None):
    """Factor generators ``(G_A, G_B)`` whose Khatri-Rao product is systematic.

    Parity column ``j`` of ``G_A`` holds ``R_A[i][j] * D**(z*j*i)`` and of
    ``G_B`` holds ``R_B[i][j] * D**(j*i)``.
    """
    if min(k_A, k_B) < 1 or s < 0 or z < 1:
        raise ValidationError("need k_A, k_B, z >= 1 and s >= 0")
    R_A = np.ones((k_A, s)) if R_A is None else np.asarray(R_A, dtype=float)
    R_B = np.ones((k_B, s)) if R_B is None else np.asarray(R_B, dtype=float)
    if R_A.shape != (k_A, s) or R_B.shape != (k_B, s):
        raise ValidationError(f"R_A must be {k_A}x{s} and R_B {k_B}x{s}, got {R_A.shape} and {R_B.shape}")
    ga, gb = _message_factor_columns(k_A, k_B)
    for i1 in range(k_A):
        ga[i1].extend(Monomial(R_A[i1, j], z * j * i1) if R_A[i1, j] else None for j in range(s))
    for i2 in range(k_B):
        gb[i2].extend(Monomial(R_B[i2, j], j * i2) if R_B[i2, j] else None for j in range(s))
    n = k_A * k_B + s
    return PolyMatrix(k_A, n, ga), PolyMatrix(k_B, n, gb)


def khatri_rao(G_A: PolyMatrix, G_B: PolyMatrix) -> PolyMatrix:
    """Column-wise Kronecker product; row ``i1*G_B.rows + i2``."""
    if G_A.cols != G_B.cols:
        raise ValidationError(f"column mismatch: {G_A.cols} vs {G_B.cols}")
    grid = [[None] * G_A.cols for _ in range(G_A.rows * G_B.rows)]
    for c in range(G_A.cols):
        for i1, ea in enumerate(G_A.column(c)):
            if ea is None:
                continue
            for i2, eb in enumerate(G_B.column(c)):
                if eb is not None:
                    grid[i1 * G_B.rows + i2][c] = ea * eb
    return PolyMatrix(G_A.rows * G_B.rows, G_A.cols, grid)


def factor_exponent_grid(E) -> tuple:
    """Write an exponent grid as ``E[i, j] = a[j] * b[i]`` with increasing ``a``, ``b``.

    Returns ``(a, b)``; raises :class:`ValidationError` if no such factorization
    exists.  Used to check that a parity block has the form ``Y_{b,a}(D)``.
    """
    E = np.asarray(E, dtype=np.int64)
    k, s = E.shape
    if (E < 0).any():
        raise ValidationError("exponent grid has empty cells")
    nonzero_cols = [j for j in range(s) if E[:, j].any()]
    if not nonzero_cols:
        if k == 1:
            return tuple(range(s)), (0,)
        if s > 1:
            raise ValidationError("an all-zero grid with s > 1 cannot have strictly increasing a")
        return (0,), tuple(range(k))
    col = E[:, nonzero_cols[0]]
    g = math.gcd(*(int(x) for x in col))
    b = col // g
    pivot = int(np.argmax(b))
    a = np.array([E[pivot, j] // b[pivot] for j in range(s)], dtype=np.int64)
    if not np.array_equal(np.outer(b, a), E):
        raise ValidationError("exponent grid is not a rank-one product a_j * b_i")
    if not _strictly_increasing(list(a)) or not _strictly_increasing(list(b)):
        raise ValidationError("factorization exists but a or b is not strictly increasing")
    return tuple(int(x) for x in a), tuple(int(x) for x in b)


def spec_from_generator(G: PolyMatrix) -> GeneratorSpec:
    """Recover the :class:`GeneratorSpec` of a systematic generator."""
    k = G.rows
    if not G.is_systematic(k):
        raise ValidationError("generator is not systematic")
    s = G.cols - k
    if s == 0:
        return GeneratorSpec(k, k, 0, (), tuple(range(k)))
    parity = G.exp_array()[:, k:]
    a, b = factor_exponent_grid(parity)
    return GeneratorSpec(G.cols, k, s, a, b, G.coeff_array()[:, k:])


def as_fraction(x) -> Fraction:
    """Exact rational from ``"p/q"`` strings, ints, Fractions or floats."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10**9)
    return Fraction(x)


def min_q(k: int, s: int, gamma) -> int:
    """Least ``q >= 1`` with ``(q + (s-1)(k-1)) / (k q) <= gamma``."""
    gamma = as_fraction(gamma)
    if k < 1 or s < 1:
        raise ValidationError("need k >= 1 and s >= 1")
    slack = gamma - Fraction(1, k)
    if slack <= 0:
        raise InfeasibleStorageError(f"storage fraction {gamma} must exceed 1/k = 1/{k}")
    bound = Fraction((s - 1) * (k - 1)) / (k * slack)
    return max(1, math.ceil(bound))


def min_z(q_B: int, s: int, k_B: int) -> int:
    if q_B < 1:
        raise ValidationError("q_B must be positive")
    return q_B + (s - 1) * (k_B - 1)


def extract_columns(G: PolyMatrix, I: Iterable[int]) -> PolyMatrix:
    idx = sorted(int(i) for i in I)
    if len(set(idx)) != len(idx):
        raise ValidationError("column indices must be distinct")
    if not idx or idx[0] < 0 or idx[-1] >= G.cols:
        raise ValidationError(f"column indices {idx} out of range for {G.cols} columns")
    return PolyMatrix(G.rows, len(idx), [[row[j] for j in idx] for row in G.entries])


def parity_exponent_grid(G: PolyMatrix, k: Optional[int] = None) -> np.ndarray:
    k = G.rows if k is None else k
    return G.exp_array()[:, k:]


def storage_fractions(G: PolyMatrix, q: int) -> list:
    """Per-worker stored fraction: distinct coded slots over ``k q`` blocks."""
    E = G.exp_array()
    out = []
    for j in range(G.cols):
        col = E[:, j][E[:, j] >= 0]
        out.append(Fraction(q + int(col.max() - col.min()), G.rows * q))
    return out


__all__: Sequence[str] = [
    "Monomial", "PolyMatrix", "GeneratorSpec", "ValidationError", "InfeasibleStorageError",
    "make_systematic_generator", "make_matvec_generator", "make_matmat_factors", "khatri_rao",
    "factor_exponent_grid", "spec_from_generator", "min_q", "min_z", "extract_columns",
    "parity_exponent_grid", "storage_fractions", "as_fraction",
]
