"""Recover unknown result blocks from a subset of worker outputs.

Values are handled as a 2-D array with one row per unknown (or equation)
and one column per entry of a block, so a single symbolic schedule serves
every right-hand side at once.
"""

from __future__ import annotations

import heapq
import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg as sla
from scipy import sparse

from .codec import DecodingSystem, MatMatPlan, MatVecPlan

logger = logging.getLogger(__name__)


class DecodeError(RuntimeError):
    """Base class for decoding failures."""


class PeelingStuckError(DecodeError):
    def __init__(self, unresolved):
        self.unresolved = list(unresolved)
        super().__init__(f"peeling stuck with {len(self.unresolved)} unresolved unknowns, "
                         f"e.g. {self.unresolved[:5]}")


class DegenerateScalingError(DecodeError):
    pass


class RankDeficientError(DecodeError):
    pass


@dataclass
class ObservationSet:
    """Worker outputs: worker id -> (exponent labels, blocks)."""

    outputs: Dict[int, Tuple[tuple, list]]

    @property
    def workers(self) -> tuple:
        return tuple(sorted(self.outputs))

    def restrict(self, workers) -> "ObservationSet":
        return ObservationSet({w: self.outputs[w] for w in workers})

    def rhs(self, system: DecodingSystem) -> np.ndarray:
        """Stack observations in equation order, one flattened block per row."""
        width = int(np.prod(system.block_shape))
        lookup = {}
        for w, (exps, blocks) in self.outputs.items():
            for e, blk in zip(exps, blocks):
                lookup[(w, e)] = blk
        Y = np.empty((system.n_equations, width))
        for row, loc in enumerate(system.locators):
            try:
                blk = np.asarray(lookup[loc], dtype=float)
            except KeyError:
                raise DecodeError(f"no observation for worker {loc[0]} at exponent {loc[1]}") from None
            if blk.size != width:
                raise DecodeError(f"observation {loc} has {blk.size} entries, expected {width}")
            Y[row] = blk.ravel()
        return Y


@dataclass
class DecodeReport:
    method: str
    iterations: int = 0
    pivots: List[float] = field(default_factory=list)
    residual_norm: float = 0.0
    converged: bool = True
    operations: int = 0
    square_rows: List[int] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    def to_dict(self, include_rows: bool = False) -> dict:
        d = asdict(self)
        if not include_rows:
            d.pop("square_rows")
        d["pivot_values"] = sorted(set(d.pop("pivots")))
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _residual(system, X, Y) -> float:
    return float(np.linalg.norm(system.matrix @ X - Y))


def peeling_order(system: DecodingSystem):
    """Symbolic peeling schedule.

    Returns a list of ``(equation, unknown, pivot coefficient)``.  The
    smallest-index equation with a single unresolved unknown is always taken
    next; equations are ordered by (worker, exponent), so message workers go
    first, then parity workers in ascending id and ascending exponent.
    """
    M = system.matrix
    C = M.tocsc()
    cnt = np.diff(M.indptr).astype(np.int64)
    resolved = np.zeros(system.n_unknowns, dtype=bool)
    used = np.zeros(system.n_equations, dtype=bool)
    heap = [e for e in range(system.n_equations) if cnt[e] == 1]
    heapq.heapify(heap)
    order = []
    while heap:
        e = heapq.heappop(heap)
        if used[e] or cnt[e] != 1:
            continue
        lo, hi = M.indptr[e], M.indptr[e + 1]
        idx = M.indices[lo:hi]
        u = int(idx[~resolved[idx]][0])
        pivot = float(M.data[lo:hi][idx == u][0])
        used[e] = True
        resolved[u] = True
        order.append((e, u, pivot))
        for e2 in C.indices[C.indptr[u]:C.indptr[u + 1]]:
            cnt[e2] -= 1
            if cnt[e2] == 1 and not used[e2]:
                heapq.heappush(heap, int(e2))
    if not resolved.all():
        raise PeelingStuckError([system.unknowns[u] for u in np.flatnonzero(~resolved)])
    return order


def square_subsystem(system: DecodingSystem) -> sparse.csr_matrix:
    """The ``kq`` (or ``k q_A q_B``) equations the peeling decoder pivots on."""
    rows = sorted(e for e, _, _ in peeling_order(system))
    return system.matrix[rows]


def peel(system: DecodingSystem, obs: ObservationSet):
    """Peeling decoder; returns ``(X, report)`` with one row of ``X`` per unknown."""
    Y0 = obs.rhs(system)
    Y = Y0.copy()
    X = np.zeros((system.n_unknowns, Y.shape[1]))
    order = peeling_order(system)
    C = system.matrix.tocsc()
    resolved = np.zeros(system.n_unknowns, dtype=bool)
    ops = 0
    pivots = []
    for e, u, pivot in order:
        if pivot == 0:
            raise DegenerateScalingError(f"zero pivot for unknown {system.unknowns[u]}")
        X[u] = Y[e] if pivot == 1 else Y[e] / pivot
        resolved[u] = True
        pivots.append(pivot)
        lo, hi = C.indptr[u], C.indptr[u + 1]
        for e2, c in zip(C.indices[lo:hi], C.data[lo:hi]):
            if e2 == e:
                continue
            if c == 1:
                Y[e2] -= X[u]
            elif c == -1:
                Y[e2] += X[u]
            else:
                Y[e2] -= c * X[u]
            ops += 1
    report = DecodeReport("peeling", pivots=pivots, residual_norm=_residual(system, X, Y0),
                          operations=ops, square_rows=sorted(e for e, _, _ in order))
    return X, report


def _split_direct(system: DecodingSystem):
    """Unknowns read straight off message workers, and the equations that did it."""
    M = system.matrix
    direct = {}
    for e, (w, _) in enumerate(system.locators):
        if w not in system.message_workers:
            continue
        lo, hi = M.indptr[e], M.indptr[e + 1]
        if hi - lo == 1:
            direct.setdefault(int(M.indices[lo]), (e, float(M.data[lo])))
    return direct


def cgls(A, B, X0=None, max_iter: int = 1000, tol: float = 1e-10):
    """Conjugate gradient on the normal equations for every column of ``B``.

    Columns iterate in lock-step; a column stops updating once its normal
    residual ``||A^T (B - A x)||`` falls below ``tol`` times its initial value.
    Returns ``(X, iterations, converged)``.
    """
    m, n = A.shape
    P = B.shape[1]
    X = np.zeros((n, P)) if X0 is None else X0.copy()
    R = B - A @ X
    S = A.T @ R
    Pdir = S.copy()
    gamma = np.einsum("ij,ij->j", S, S)
    ref = np.sqrt(gamma)
    ref[ref == 0] = 1.0
    active = np.sqrt(gamma) > tol * ref
    it = 0
    while active.any() and it < max_iter:
        it += 1
        Q = A @ Pdir
        qq = np.einsum("ij,ij->j", Q, Q)
        alpha = np.where(active & (qq > 0), gamma / np.where(qq > 0, qq, 1.0), 0.0)
        X += Pdir * alpha
        R -= Q * alpha
        S = A.T @ R
        gnew = np.einsum("ij,ij->j", S, S)
        beta = np.where(active, gnew / np.where(gamma > 0, gamma, 1.0), 0.0)
        Pdir = S + Pdir * beta
        gamma = gnew
        active &= np.sqrt(gamma) > tol * ref
    return X, it, not active.any()


def ls_decode(system: DecodingSystem, obs: ObservationSet, mode: str = "direct",
              T: Optional[int] = None, tol: float = 1e-10):
    """Least-squares decoder over every available equation.

    ``mode="direct"`` factors the normal-equations matrix once (Cholesky) and
    solves all right-hand sides; ``mode="cg"`` runs CGLS for at most ``T``
    iterations.
    """
    if mode not in ("direct", "cg"):
        raise ValueError(f"unknown LS mode {mode!r}")
    Y = obs.rhs(system)
    M = system.matrix
    X = np.zeros((system.n_unknowns, Y.shape[1]))
    direct = _split_direct(system)
    for u, (e, c) in direct.items():
        X[u] = Y[e] / c
    known = np.zeros(system.n_unknowns, dtype=bool)
    known[list(direct)] = True
    rest = np.flatnonzero(~known)
    report = DecodeReport("ls-direct" if mode == "direct" else "ls-cg")
    if rest.size:
        C = M.tocsc()
        M_rest = C[:, rest]
        rows = np.unique(M_rest.nonzero()[0])
        M_rest = M_rest[rows].tocsr()
        Yr = Y[rows] - C[rows][:, np.flatnonzero(known)] @ X[known]
        if mode == "direct":
            X[rest] = _normal_solve(M_rest, Yr, report)
        else:
            if T is None:
                T = _default_cg_iterations(M_rest)
            Xr, it, ok = cgls(M_rest, Yr, max_iter=T, tol=tol)
            X[rest] = Xr
            report.iterations = it
            report.converged = ok
            if not ok:
                msg = f"CG stopped at T={T} iterations before reaching tol={tol:g}"
                report.warnings.append(msg)
                warnings.warn(msg, RuntimeWarning, stacklevel=2)
    report.residual_norm = _residual(system, X, Y)
    return X, report


def _normal_solve(M_rest, Yr, report):
    N = (M_rest.T @ M_rest).toarray()
    rhs = M_rest.T @ Yr
    try:
        factor = sla.cho_factor(N, lower=False, check_finite=False)
        d = np.abs(np.diag(factor[0]))
        # small pivots: N is (nearly) singular, where squaring the conditioning costs too much
        if d.min() > 1e-6 * d.max():
            return sla.cho_solve(factor, rhs, check_finite=False)
    except np.linalg.LinAlgError:
        pass
    # normal equations lost definiteness in floating point; decide by rank
    dense = M_rest.toarray()
    sol, _, rank, _ = np.linalg.lstsq(dense, Yr, rcond=None)
    if rank < dense.shape[1]:
        raise RankDeficientError(f"restricted system has rank {rank} < {dense.shape[1]}")
    report.warnings.append("normal equations ill-posed; solved by orthogonal least squares")
    return sol


def _default_cg_iterations(M_rest) -> int:
    n = M_rest.shape[1]
    if n > 3000:
        return 5000
    sv = np.linalg.svd(M_rest.toarray(), compute_uv=False)
    kappa = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
    return int(min(5000, max(10, np.ceil(10 * kappa))))


def assemble(X, system: DecodingSystem, plan):
    """Place decoded unknown blocks into the final ``A^T x`` or ``A^T B``."""
    X = np.asarray(X, dtype=float)
    width = int(np.prod(system.block_shape))
    if X.shape != (system.n_unknowns, width):
        raise DecodeError(f"expected {system.n_unknowns} blocks of {width} entries, got {X.shape}")
    if np.isnan(X).any():
        missing = [system.unknowns[u] for u in np.flatnonzero(np.isnan(X).any(axis=1))]
        raise DecodeError(f"missing blocks {missing[:5]}")
    if isinstance(plan, MatVecPlan):
        return X.reshape(-1)[:plan.r]
    if isinstance(plan, MatMatPlan):
        nA, nB = plan.k_A * plan.q_A, plan.k_B * plan.q_B
        bA, bB = plan.block_shape
        full = X.reshape(nA, nB, bA, bB).transpose(0, 2, 1, 3).reshape(nA * bA, nB * bB)
        return full[:plan.r, :plan.w]
    raise TypeError(f"unsupported plan type {type(plan).__name__}")


def decode(system: DecodingSystem, obs: ObservationSet, method: str = "peeling", **kw):
    if method == "peeling":
        return peel(system, obs)
    if method in ("ls_direct", "ls-direct"):
        return ls_decode(system, obs, "direct")
    if method in ("ls_cg", "ls-cg"):
        return ls_decode(system, obs, "cg", **kw)
    raise ValueError(f"unknown decoder {method!r}")
