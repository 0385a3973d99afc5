"""Comparison schemes built on the same PolyMatrix pipeline (all exponents 0)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .codec import MatMatPlan
from .polyalg import Monomial, PolyMatrix, ValidationError, _message_factor_columns


def default_nodes(n: int, kind: str = "integers") -> np.ndarray:
    """``1..n`` or ``n`` equispaced points on ``[-1, 1]``."""
    if kind == "integers":
        return np.arange(1, n + 1, dtype=float)
    if kind == "equispaced":
        return np.linspace(-1.0, 1.0, n)
    raise ValidationError(f"unknown node set {kind!r}")


def _check_nodes(nodes, n: int) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=float)
    if nodes.shape != (n,):
        raise ValidationError(f"need {n} nodes, got {nodes.shape}")
    if len(np.unique(nodes)) != n:
        raise ValidationError("evaluation nodes must be distinct")
    return nodes


def poly_code_matrix(n: int, k: int, nodes=None) -> np.ndarray:
    """Vandermonde ``V[i, j] = nodes[j]**i``."""
    nodes = _check_nodes(default_nodes(n) if nodes is None else nodes, n)
    return nodes[None, :] ** np.arange(k)[:, None]


def poly_code_generator(n: int, k: int, nodes=None) -> PolyMatrix:
    return PolyMatrix.from_arrays(poly_code_matrix(n, k, nodes))


def poly_code_factors(n: int, k_A: int, k_B: int, nodes=None):
    """``A(x) = sum A_i x^i``, ``B(x) = sum B_j x^(k_A j)``; the product is degree ``k_A k_B - 1``."""
    if n < k_A * k_B:
        raise ValidationError(f"need n >= k_A*k_B = {k_A * k_B}")
    nodes = _check_nodes(default_nodes(n) if nodes is None else nodes, n)
    VA = nodes[None, :] ** np.arange(k_A)[:, None]
    VB = nodes[None, :] ** (k_A * np.arange(k_B))[:, None]
    return PolyMatrix.from_arrays(VA), PolyMatrix.from_arrays(VB)


def random_kr_factors(n: int, k_A: int, k_B: int, seed: int):
    """Systematic factors whose parity columns are random uniform[-1, 1] vectors."""
    k = k_A * k_B
    if n < k:
        raise ValidationError(f"need n >= k_A*k_B = {k}")
    rng = np.random.default_rng(seed)
    s = n - k
    RA = rng.uniform(-1.0, 1.0, size=(k_A, s))
    RB = rng.uniform(-1.0, 1.0, size=(k_B, s))
    ga, gb = _message_factor_columns(k_A, k_B)
    for i1 in range(k_A):
        ga[i1].extend(Monomial(RA[i1, j]) if RA[i1, j] else None for j in range(s))
    for i2 in range(k_B):
        gb[i2].extend(Monomial(RB[i2, j]) if RB[i2, j] else None for j in range(s))
    return PolyMatrix(k_A, n, ga), PolyMatrix(k_B, n, gb)


def random_kr_matrix(n: int, k_A: int, k_B: int, seed: int) -> np.ndarray:
    """``(k_A k_B) x n`` real matrix ``[I | a_j (x) b_j]``."""
    GA, GB = random_kr_factors(n, k_A, k_B, seed)
    A, B = GA.coeff_array(), GB.coeff_array()
    return np.einsum("ic,jc->ijc", A, B).reshape(k_A * k_B, n)


@dataclass(frozen=True)
class BaselineSpec:
    id: str
    n: int
    k_A: int
    k_B: int = 1
    nodes: Optional[Sequence[float]] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.id not in ("poly", "random_kr"):
            raise ValidationError(f"unknown baseline {self.id!r}")
        if self.id == "random_kr" and self.seed is None:
            raise ValidationError("random_kr needs a seed")
        if self.id == "poly" and self.nodes is not None:
            _check_nodes(self.nodes, self.n)

    def factors(self):
        if self.id == "poly":
            return poly_code_factors(self.n, self.k_A, self.k_B, self.nodes)
        return random_kr_factors(self.n, self.k_A, self.k_B, self.seed)

    def plan(self, q_A: int, q_B: int, t: int, r: int, w: int, **kw) -> MatMatPlan:
        """Mat-mat plan; with every exponent 0 the spacing ``z = q_B`` already separates products."""
        GA, GB = self.factors()
        return MatMatPlan(GA, GB, q_A, q_B, q_B, t, r, w, **kw)
