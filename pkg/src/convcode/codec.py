"""Master-side encoding, worker computation, and the symbolic decoding system.

Block-column ``<i, l>`` of an input matrix is stored at position ``i*q + l``.
Every coded submatrix carries the exponent of ``D`` it is the coefficient
of, so parity workers (longer lists) and the gapped matrix-matrix lattice
go through the same code path.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from . import matio
from .polyalg import (PolyMatrix, ValidationError, as_fraction, khatri_rao, make_matmat_factors,
                      make_matvec_generator, min_z, storage_fractions)


def _ceil_to(x: int, m: int) -> int:
    return -(-x // m) * m


@dataclass(frozen=True)
class MatVecPlan:
    generator: PolyMatrix
    q: int
    t: int
    r: int
    pad: bool = True
    gamma: Optional[Fraction] = None

    def __post_init__(self):
        if self.q < 1 or self.t < 1 or self.r < 1:
            raise ValidationError("q, t and r must be positive")
        kq = self.k * self.q
        if self.r % kq and not self.pad:
            raise ValidationError(f"k*q = {kq} does not divide r = {self.r} and padding is off")
        if self.gamma is not None:
            g = as_fraction(self.gamma)
            worst = max(storage_fractions(self.generator, self.q))
            if worst > g:
                raise ValidationError(f"worker storage {worst} exceeds gamma = {g}")

    @property
    def k(self) -> int:
        return self.generator.rows

    @property
    def n(self) -> int:
        return self.generator.cols

    @property
    def s(self) -> int:
        return self.n - self.k

    @property
    def r_padded(self) -> int:
        return _ceil_to(self.r, self.k * self.q)

    @property
    def block_width(self) -> int:
        return self.r_padded // (self.k * self.q)

    @property
    def kind(self) -> str:
        return "matvec"

    def worker_generator(self) -> PolyMatrix:
        return self.generator

    @classmethod
    def standard(cls, k: int, s: int, q: int, t: int, r: int, R=None, **kw) -> "MatVecPlan":
        return cls(make_matvec_generator(k, s, R), q, t, r, **kw)


@dataclass(frozen=True)
class MatMatPlan:
    G_A: PolyMatrix
    G_B: PolyMatrix
    q_A: int
    q_B: int
    z: int
    t: int
    r: int
    w: int
    pad: bool = True

    def __post_init__(self):
        if self.G_A.cols != self.G_B.cols:
            raise ValidationError("factor generators need the same number of columns")
        if min(self.q_A, self.q_B, self.z, self.t, self.r, self.w) < 1:
            raise ValidationError("q_A, q_B, z, t, r, w must be positive")
        # every coded-B exponent must stay below z so products land on distinct slots
        need = self.q_B + self.G_B.max_exp()
        if self.z < need:
            raise ValidationError(f"z = {self.z} too small; need z >= {need}")
        if not self.pad:
            if self.r % (self.k_A * self.q_A) or self.w % (self.k_B * self.q_B):
                raise ValidationError("block counts do not divide r, w and padding is off")

    @property
    def k_A(self) -> int:
        return self.G_A.rows

    @property
    def k_B(self) -> int:
        return self.G_B.rows

    @property
    def k(self) -> int:
        return self.k_A * self.k_B

    @property
    def n(self) -> int:
        return self.G_A.cols

    @property
    def s(self) -> int:
        return self.n - self.k

    @property
    def r_padded(self) -> int:
        return _ceil_to(self.r, self.k_A * self.q_A)

    @property
    def w_padded(self) -> int:
        return _ceil_to(self.w, self.k_B * self.q_B)

    @property
    def block_shape(self) -> Tuple[int, int]:
        return self.r_padded // (self.k_A * self.q_A), self.w_padded // (self.k_B * self.q_B)

    @property
    def kind(self) -> str:
        return "matmat"

    def worker_generator(self) -> PolyMatrix:
        return khatri_rao(self.G_A, self.G_B)

    @classmethod
    def standard(cls, k_A: int, k_B: int, s: int, q_A: int, q_B: int, t: int, r: int, w: int,
                 z: Optional[int] = None, R_A=None, R_B=None, **kw) -> "MatMatPlan":
        z = min_z(q_B, s, k_B) if z is None else z
        G_A, G_B = make_matmat_factors(k_A, k_B, s, z, R_A, R_B)
        return cls(G_A, G_B, q_A, q_B, z, t, r, w, **kw)


def coded_terms(G: PolyMatrix, worker: int, q: int, stride: int = 1) -> Dict[int, List[Tuple[float, int]]]:
    """Symbolic content of one worker's coded polynomial.

    Maps exponent -> list of (coefficient, block index ``i*q + l``) with the
    block ``<i, l>`` contributing at exponent ``stride*l + exp(G[i, worker])``.
    """
    out: Dict[int, List[Tuple[float, int]]] = {}
    for i, e in enumerate(G.column(worker)):
        if e is None:
            continue
        for l in range(q):
            out.setdefault(stride * l + e.exp, []).append((e.coeff, i * q + l))
    return dict(sorted(out.items()))


@dataclass(frozen=True)
class WorkerTask:
    worker: int
    exps_A: tuple
    coded_A: tuple
    exps_B: Optional[tuple] = None
    coded_B: Optional[tuple] = None

    def manifest(self) -> dict:
        d = {"worker": self.worker, "exps_A": list(self.exps_A),
             "shapes_A": [list(m.shape) for m in self.coded_A]}
        if self.coded_B is not None:
            d["exps_B"] = list(self.exps_B)
            d["shapes_B"] = [list(m.shape) for m in self.coded_B]
        return d

    def save(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "manifest.json"), "w") as f:
            json.dump(self.manifest(), f)
        for tag, blocks in (("A", self.coded_A), ("B", self.coded_B or ())):
            for idx, M in enumerate(blocks):
                matio.save_matrix(os.path.join(directory, f"{tag}_{idx}.bin"), M)

    @classmethod
    def load(cls, directory) -> "WorkerTask":
        with open(os.path.join(directory, "manifest.json")) as f:
            d = json.load(f)
        A = tuple(matio.load_matrix(os.path.join(directory, f"A_{i}.bin")) for i in range(len(d["exps_A"])))
        if "exps_B" not in d:
            return cls(d["worker"], tuple(d["exps_A"]), A)
        B = tuple(matio.load_matrix(os.path.join(directory, f"B_{i}.bin")) for i in range(len(d["exps_B"])))
        return cls(d["worker"], tuple(d["exps_A"]), A, tuple(d["exps_B"]), B)


def _split_columns(A: np.ndarray, n_blocks: int, padded: int) -> np.ndarray:
    """Zero-pad to ``padded`` columns and return a ``(n_blocks, t, width)`` view."""
    t, r = A.shape
    if padded != r:
        A = np.hstack([A, np.zeros((t, padded - r))])
    width = padded // n_blocks
    return A.reshape(t, n_blocks, width).transpose(1, 0, 2)


def _combine(blocks: np.ndarray, terms) -> np.ndarray:
    c0, f0 = terms[0]
    acc = blocks[f0].copy() if c0 == 1 else c0 * blocks[f0]
    for c, f in terms[1:]:
        if c == 1:
            acc += blocks[f]
        else:
            acc += c * blocks[f]
    return acc


def _encode(blocks: np.ndarray, G: PolyMatrix, worker: int, q: int, stride: int):
    terms = coded_terms(G, worker, q, stride)
    return tuple(terms), tuple(_combine(blocks, tl) for tl in terms.values())


def encode_matvec(A, plan: MatVecPlan) -> List[WorkerTask]:
    A = np.asarray(A, dtype=float)
    if A.shape != (plan.t, plan.r):
        raise ValidationError(f"A has shape {A.shape}, plan expects {(plan.t, plan.r)}")
    blocks = _split_columns(A, plan.k * plan.q, plan.r_padded)
    tasks = []
    for wkr in range(plan.n):
        exps, coded = _encode(blocks, plan.generator, wkr, plan.q, 1)
        tasks.append(WorkerTask(wkr, exps, coded))
    return tasks


def encode_matmat(A, B, plan: MatMatPlan) -> List[WorkerTask]:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != (plan.t, plan.r) or B.shape != (plan.t, plan.w):
        raise ValidationError(f"A, B have shapes {A.shape}, {B.shape}; plan expects "
                              f"{(plan.t, plan.r)}, {(plan.t, plan.w)}")
    blocks_A = _split_columns(A, plan.k_A * plan.q_A, plan.r_padded)
    blocks_B = _split_columns(B, plan.k_B * plan.q_B, plan.w_padded)
    tasks = []
    for wkr in range(plan.n):
        ea, ca = _encode(blocks_A, plan.G_A, wkr, plan.q_A, plan.z)
        eb, cb = _encode(blocks_B, plan.G_B, wkr, plan.q_B, 1)
        tasks.append(WorkerTask(wkr, ea, ca, eb, cb))
    return tasks


def worker_compute_mv(task: WorkerTask, x) -> List[np.ndarray]:
    x = np.asarray(x, dtype=float)
    if task.coded_A and x.shape[0] != task.coded_A[0].shape[0]:
        raise ValidationError(f"x has length {x.shape[0]}, blocks have {task.coded_A[0].shape[0]} rows")
    return [M.T @ x for M in task.coded_A]


def worker_compute_mm(task: WorkerTask) -> List[Tuple[int, np.ndarray]]:
    """Coefficients of ``C_A(D)^T C_B(D)``, one per distinct exponent, ascending."""
    if task.coded_B is None:
        raise ValidationError("task carries no B blocks")
    out: Dict[int, np.ndarray] = {}
    for ea, MA in zip(task.exps_A, task.coded_A):
        for eb, MB in zip(task.exps_B, task.coded_B):
            P = MA.T @ MB
            e = ea + eb
            if e in out:
                out[e] += P
            else:
                out[e] = P
    return sorted(out.items())


@dataclass(frozen=True)
class DecodingSystem:
    """Sparse map from unknown blocks to observed worker coefficients.

    ``matrix[e, u]`` is the coefficient of unknown ``u`` in equation ``e``;
    equation ``e`` is the coefficient at ``locators[e] = (worker, exponent)``.
    """

    unknowns: tuple
    locators: tuple
    matrix: sparse.csr_matrix
    block_shape: tuple
    message_workers: frozenset = field(default_factory=frozenset)

    @property
    def n_unknowns(self) -> int:
        return len(self.unknowns)

    @property
    def n_equations(self) -> int:
        return len(self.locators)

    @property
    def workers(self) -> tuple:
        return tuple(sorted({w for w, _ in self.locators}))

    def equations(self):
        """Yield ``(locator, [(unknown index, coefficient), ...])``."""
        M = self.matrix
        for e, loc in enumerate(self.locators):
            lo, hi = M.indptr[e], M.indptr[e + 1]
            yield loc, list(zip(M.indices[lo:hi].tolist(), M.data[lo:hi].tolist()))

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def _is_message_column(col) -> bool:
    nz = [e for e in col if e is not None]
    return len(nz) == 1 and nz[0].coeff == 1 and nz[0].exp == 0


def _validated_subset(plan, I) -> tuple:
    I = tuple(sorted(set(int(i) for i in I)))
    if any(i < 0 or i >= plan.n for i in I):
        raise ValidationError(f"worker ids {I} outside [0, {plan.n})")
    if len(I) < plan.k:
        raise ValidationError(f"need at least k = {plan.k} workers, got {len(I)}")
    return I


def build_system(plan, I: Iterable[int]) -> DecodingSystem:
    I = _validated_subset(plan, I)
    rows: List[int] = []
    cols: List[int] = []
    vals: List[float] = []
    locators = []
    gen = plan.worker_generator()
    message = frozenset(w for w in I if _is_message_column(gen.column(w)))

    def push(loc, coef_map):
        e = len(locators)
        locators.append(loc)
        for u, c in sorted(coef_map.items()):
            if c != 0:
                rows.append(e)
                cols.append(u)
                vals.append(c)

    if isinstance(plan, MatVecPlan):
        q, k = plan.q, plan.k
        unknowns = tuple((i, l) for i in range(k) for l in range(q))
        for wkr in I:
            for exp, terms in coded_terms(plan.generator, wkr, q).items():
                cmap: Dict[int, float] = {}
                for c, f in terms:
                    cmap[f] = cmap.get(f, 0.0) + c
                push((wkr, exp), cmap)
        block_shape = (plan.block_width,)
    elif isinstance(plan, MatMatPlan):
        nB = plan.k_B * plan.q_B
        unknowns = tuple((i1, j1, i2, j2)
                         for i1 in range(plan.k_A) for j1 in range(plan.q_A)
                         for i2 in range(plan.k_B) for j2 in range(plan.q_B))
        for wkr in I:
            ta = coded_terms(plan.G_A, wkr, plan.q_A, plan.z)
            tb = coded_terms(plan.G_B, wkr, plan.q_B, 1)
            slots: Dict[int, Dict[int, float]] = {}
            for ea, la in ta.items():
                for eb, lb in tb.items():
                    cmap = slots.setdefault(ea + eb, {})
                    for ca, fa in la:
                        for cb, fb in lb:
                            u = fa * nB + fb
                            cmap[u] = cmap.get(u, 0.0) + ca * cb
            for exp in sorted(slots):
                push((wkr, exp), slots[exp])
        block_shape = plan.block_shape
    else:
        raise TypeError(f"unsupported plan type {type(plan).__name__}")

    M = sparse.csr_matrix((vals, (rows, cols)), shape=(len(locators), len(unknowns)))
    return DecodingSystem(unknowns, tuple(locators), M, tuple(block_shape), message)


def worker_outputs(plan, tasks: Sequence[WorkerTask], x=None) -> Dict[int, Tuple[tuple, list]]:
    """Run every task in-process; maps worker -> (exponents, blocks)."""
    out = {}
    for task in tasks:
        if isinstance(plan, MatVecPlan):
            out[task.worker] = (task.exps_A, worker_compute_mv(task, x))
        else:
            prods = worker_compute_mm(task)
            out[task.worker] = (tuple(e for e, _ in prods), [P for _, P in prods])
    return out
