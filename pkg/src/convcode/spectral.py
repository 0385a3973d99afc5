"""Worst-case condition numbers and their frequency-domain upper bounds."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .codec import MatMatPlan, MatVecPlan, build_system
from .expand import expand_subset
from .polyalg import (GeneratorSpec, PolyMatrix, ValidationError, extract_columns, khatri_rao,
                      make_matmat_factors, make_systematic_generator)

LAMBDA_TOL = 1e-12


def default_threads() -> int:
    env = os.environ.get("CONVCODE_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _pmap(fn, items, threads: Optional[int]):
    threads = default_threads() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(fn, items))


def cond(M) -> float:
    """``sigma_max / sigma_min`` from a full SVD (``inf`` when singular)."""
    if hasattr(M, "toarray"):
        M = M.toarray()
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        raise ValidationError("condition number of an empty matrix")
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[0] == 0:
        raise ValidationError("condition number of a zero matrix")
    if sv[-1] < 1e-300:
        return math.inf
    return float(sv[0] / sv[-1])


def subsets_by_stragglers(n: int, k: int) -> List[tuple]:
    """All size-``k`` worker sets, enumerated through their straggler complements."""
    out = []
    for strag in itertools.combinations(range(n), n - k):
        out.append(tuple(w for w in range(n) if w not in strag))
    return out


@dataclass
class SpectralReport:
    subsets: List[tuple]
    conds: List[float]
    complete: bool = True
    lambda_min_bounds: Optional[List[float]] = None
    lambda_max_bounds: Optional[List[float]] = None

    @property
    def kappa_worst(self) -> float:
        return max(self.conds)

    @property
    def argmax(self) -> tuple:
        return self.subsets[int(np.argmax(self.conds))]

    @property
    def argmin(self) -> tuple:
        return self.subsets[int(np.argmin(self.conds))]

    def to_dict(self) -> dict:
        return {"kappa_worst": self.kappa_worst, "argmax": list(self.argmax), "complete": self.complete,
                "subsets": [list(s) for s in self.subsets], "conds": self.conds,
                "lambda_min_bounds": self.lambda_min_bounds, "lambda_max_bounds": self.lambda_max_bounds}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["subset", "cond", "lambda_min_bound", "lambda_max_bound"])
        for i, (sub, c) in enumerate(zip(self.subsets, self.conds)):
            lo = "" if self.lambda_min_bounds is None else repr(self.lambda_min_bounds[i])
            hi = "" if self.lambda_max_bounds is None else repr(self.lambda_max_bounds[i])
            wr.writerow([" ".join(map(str, sub)), repr(c), lo, hi])
        return buf.getvalue()


def decoding_matrix(target, I, q: Optional[int] = None) -> np.ndarray:
    """Dense decoding matrix for worker set ``I``.

    A :class:`PolyMatrix` (with ``q``) or :class:`MatVecPlan` gives the
    expanded ``G_I``; a :class:`MatMatPlan` gives the symbolic system matrix.
    """
    if isinstance(target, PolyMatrix):
        return expand_subset(target, q, I, systematic=False).data
    if isinstance(target, MatVecPlan):
        return expand_subset(target.generator, target.q, I, systematic=False).data
    if isinstance(target, MatMatPlan):
        return build_system(target, I).dense()
    raise TypeError(f"unsupported target {type(target).__name__}")


def kappa_worst(target, q: Optional[int] = None, *, subsets: Optional[Sequence[tuple]] = None,
                max_subsets: Optional[int] = None, threads: Optional[int] = None) -> SpectralReport:
    """Condition number of every size-``k`` decoding matrix and their maximum."""
    if isinstance(target, PolyMatrix):
        if q is None:
            raise ValidationError("q is required for a bare generator")
        n, k = target.cols, target.rows
    else:
        n, k = target.n, target.k
    subs = subsets_by_stragglers(n, k) if subsets is None else [tuple(s) for s in subsets]
    complete = True
    if max_subsets is not None and len(subs) > max_subsets:
        subs = subs[:max_subsets]
        complete = False
    conds = _pmap(lambda I: cond(decoding_matrix(target, I, q)), subs, threads)
    return SpectralReport(subs, conds, complete)


@dataclass(frozen=True)
class FrequencyGrid:
    """``2N+1`` points ``{0, +-pi/N, ..., +-pi}``."""

    N: int = 512

    def __post_init__(self):
        if self.N < 1:
            raise ValidationError("grid size N must be positive")

    @property
    def points(self) -> np.ndarray:
        return np.arange(-self.N, self.N + 1) * (np.pi / self.N)


def freq_matrix(G: PolyMatrix, I, omega) -> np.ndarray:
    """``G_I(e^{i w}) G_I(e^{i w})^*`` (stacked when ``omega`` is an array)."""
    GI = extract_columns(G, I).evaluate(omega)
    return GI @ np.swapaxes(GI.conj(), -1, -2)


def theorem2_bounds(G: PolyMatrix, I, grid: FrequencyGrid = FrequencyGrid()) -> Tuple[float, float]:
    """``(min_w lambda_min, max_w lambda_max)`` of the frequency matrix over the grid.

    These bracket the spectrum of the Gram matrix of the expanded ``G_I`` for
    every block size ``q``.
    """
    ev = np.linalg.eigvalsh(freq_matrix(G, I, grid.points))
    return float(ev[:, 0].min()), float(ev[:, -1].max())


def _all_subset_bounds(G: PolyMatrix, subs: Sequence[tuple], grid: FrequencyGrid, chunk: int = 64):
    """Vectorised bounds for many subsets: arrays of lambda_min and lambda_max bounds."""
    Gw = G.evaluate(grid.points)  # (P, k, n)
    lo = np.empty(len(subs))
    hi = np.empty(len(subs))
    for start in range(0, len(subs), chunk):
        idx = np.array(subs[start:start + chunk])  # (c, k)
        GI = np.moveaxis(Gw[:, :, idx], 2, 0)  # (c, P, k, k)
        B = GI @ np.swapaxes(GI.conj(), -1, -2)
        ev = np.linalg.eigvalsh(B)
        lo[start:start + len(idx)] = ev[..., 0].min(axis=1)
        hi[start:start + len(idx)] = ev[..., -1].max(axis=1)
    return lo, hi


def bound_report(G: PolyMatrix, grid: FrequencyGrid = FrequencyGrid(), subsets=None) -> SpectralReport:
    """Per-subset frequency bounds with the implied condition-number bound as ``conds``."""
    subs = subsets_by_stragglers(G.cols, G.rows) if subsets is None else [tuple(s) for s in subsets]
    lo, hi = _all_subset_bounds(G, subs, grid)
    conds = [math.inf if l <= LAMBDA_TOL else math.sqrt(h / l) for l, h in zip(lo, hi)]
    return SpectralReport(subs, conds, True, lo.tolist(), hi.tolist())


def kappa_R(G: PolyMatrix, grid: FrequencyGrid = FrequencyGrid()) -> float:
    """Largest frequency-domain condition-number bound over all size-``k`` subsets."""
    if G.cols == G.rows:
        return 1.0
    lo, hi = _all_subset_bounds(G, subsets_by_stragglers(G.cols, G.rows), grid)
    if (lo <= LAMBDA_TOL).any():
        return math.inf
    return float(np.sqrt(hi / lo).max())


def draw_R(rng: np.random.Generator, shape, distribution: str = "uniform") -> np.ndarray:
    if distribution == "uniform":
        return rng.uniform(-1.0, 1.0, size=shape)
    if distribution in ("gaussian", "normal"):
        return rng.standard_normal(size=shape)
    raise ValidationError(f"unknown distribution {distribution!r}")


@dataclass
class SearchResult:
    R: np.ndarray
    kappa: float
    trial_kappas: List[float]
    trial_seconds: List[float]
    R_B: Optional[np.ndarray] = None

    @property
    def total_seconds(self) -> float:
        return float(sum(self.trial_seconds))

    def to_dict(self) -> dict:
        d = {"kappa_R": self.kappa, "R": self.R.tolist(), "trial_kappas": self.trial_kappas,
             "trial_seconds": self.trial_seconds, "total_seconds": self.total_seconds}
        if self.R_B is not None:
            d["R_A"] = d.pop("R")
            d["R_B"] = self.R_B.tolist()
        return d


def search_R(n: int, k: int, s: int, a_bar=None, b_bar=None, trials: int = 50,
             grid: FrequencyGrid = FrequencyGrid(), distribution: str = "uniform",
             seed: int = 0) -> SearchResult:
    """Random search for the scaling matrix with the smallest ``kappa_R``."""
    if trials < 1:
        raise ValidationError("trials must be at least 1")
    if n != k + s:
        raise ValidationError("need n = k + s")
    a_bar = tuple(range(s)) if a_bar is None else tuple(a_bar)
    b_bar = tuple(range(k)) if b_bar is None else tuple(b_bar)
    base = GeneratorSpec(n, k, s, a_bar, b_bar)
    rng = np.random.default_rng(seed)
    best = None
    kappas, secs = [], []
    for _ in range(trials):
        t0 = time.perf_counter()
        R = draw_R(rng, (k, s), distribution)
        kap = kappa_R(make_systematic_generator(base.with_R(R)), grid)
        secs.append(time.perf_counter() - t0)
        kappas.append(kap)
        if best is None or kap < best[1]:
            best = (R, kap)
    return SearchResult(best[0], best[1], kappas, secs)


def search_R_matmat(k_A: int, k_B: int, s: int, z: int, trials: int = 50,
                    grid: FrequencyGrid = FrequencyGrid(), distribution: str = "uniform",
                    seed: int = 0) -> SearchResult:
    """Draw ``(R_A, R_B)`` pairs and score the Khatri-Rao product generator."""
    if trials < 1:
        raise ValidationError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    best = None
    kappas, secs = [], []
    for _ in range(trials):
        t0 = time.perf_counter()
        RA = draw_R(rng, (k_A, s), distribution)
        RB = draw_R(rng, (k_B, s), distribution)
        kap = kappa_R(khatri_rao(*make_matmat_factors(k_A, k_B, s, z, RA, RB)), grid)
        secs.append(time.perf_counter() - t0)
        kappas.append(kap)
        if best is None or kap < best[2]:
            best = (RA, RB, kap)
    return SearchResult(best[0], best[2], kappas, secs, R_B=best[1])


def gram_extreme_eigs(G: PolyMatrix, q: int, I) -> Tuple[float, float]:
    """Smallest and largest eigenvalue of ``G~_I G~_I^T``."""
    E = expand_subset(G, q, I, systematic=False).data
    ev = np.linalg.eigvalsh(E @ E.T)
    return float(ev[0]), float(ev[-1])
