"""Master/worker experiment harness with straggler and noise injection."""

from __future__ import annotations

import csv
import functools
import hashlib
import json
import math
import queue
import threading
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import baselines, spectral
from .codec import (MatMatPlan, MatVecPlan, build_system, encode_matmat, encode_matvec,
                    worker_compute_mm, worker_compute_mv)
from .decode import ObservationSet, assemble, decode
from .polyalg import (GeneratorSpec, ValidationError, make_matmat_factors, make_systematic_generator,
                      min_q, min_z)


class UndefinedMSEError(ValidationError):
    pass


# ---- noise ------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseModel:
    kind: str = "none"  # none | awgn | roundoff
    snr_db: Optional[float] = None
    digits: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "awgn", "roundoff"):
            raise ValidationError(f"unknown noise kind {self.kind!r}")
        if self.kind == "awgn" and (self.snr_db is None or not math.isfinite(self.snr_db)):
            raise ValidationError("awgn noise needs a finite snr_db")
        if self.kind == "roundoff" and (self.digits is None or not 0 <= self.digits <= 15):
            raise ValidationError("roundoff noise needs 0 <= digits <= 15")

    @property
    def label(self) -> str:
        if self.kind == "awgn":
            return f"awgn:{self.snr_db:g}dB"
        if self.kind == "roundoff":
            return f"roundoff:{self.digits}"
        return "none"

    def apply(self, worker: int, blocks):
        if self.kind == "none":
            return blocks
        if self.kind == "roundoff":
            return round_digits(blocks, self.digits)
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, worker]))
        return add_awgn(blocks, self.snr_db, rng)


def add_awgn(blocks, snr_db: float, rng: np.random.Generator):
    """Add Gaussian noise at ``snr_db`` relative to the mean-square entry of ``blocks``."""
    blocks = [np.asarray(b, dtype=float) for b in blocks]
    total = sum(b.size for b in blocks)
    power = sum(float(np.sum(b * b)) for b in blocks) / max(total, 1)
    if power == 0:
        warnings.warn("all-zero worker output; noise variance is 0", RuntimeWarning, stacklevel=2)
        return blocks
    sigma = math.sqrt(power * 10.0 ** (-snr_db / 10.0))
    return [b + sigma * rng.standard_normal(b.shape) for b in blocks]


def round_digits(blocks, d: int):
    if not 0 <= d <= 15:
        raise ValidationError("digits must lie in [0, 15]")
    scale = 10.0 ** d
    if isinstance(blocks, (list, tuple)):
        return [np.round(np.asarray(b, dtype=float) * scale) / scale for b in blocks]
    return np.round(np.asarray(blocks, dtype=float) * scale) / scale


def normalized_mse(estimate, truth) -> float:
    """``100 * ||truth - estimate||_F^2 / ||truth||_F^2``."""
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise ValidationError(f"shape mismatch {estimate.shape} vs {truth.shape}")
    denom = float(np.sum(truth * truth))
    if denom == 0:
        raise UndefinedMSEError("normalized MSE is undefined for a zero reference")
    return 100.0 * float(np.sum((truth - estimate) ** 2)) / denom


# ---- stragglers -------------------------------------------------------------

@dataclass(frozen=True)
class StragglerModel:
    kind: str = "none"  # none | explicit | random | worst_case
    workers: tuple = ()
    count: Optional[int] = None
    seed: int = 0
    delay: Optional[float] = None  # seconds; None means the worker never reports

    def __post_init__(self):
        if self.kind not in ("none", "explicit", "random", "worst_case"):
            raise ValidationError(f"unknown straggler kind {self.kind!r}")
        object.__setattr__(self, "workers", tuple(int(w) for w in self.workers))

    def resolve(self, plan) -> tuple:
        s = plan.n - plan.k
        if self.kind == "none":
            return ()
        if self.kind == "explicit":
            S = tuple(sorted(set(self.workers)))
        elif self.kind == "random":
            c = s if self.count is None else self.count
            if c > s:
                raise ValidationError(f"{c} stragglers exceed s = {s}")
            rng = np.random.default_rng(self.seed)
            S = tuple(sorted(int(w) for w in rng.choice(plan.n, size=c, replace=False)))
        else:
            worst = worst_subset(plan)
            S = tuple(w for w in range(plan.n) if w not in worst)
        if len(S) > s:
            raise ValidationError(f"{len(S)} stragglers exceed s = {s}")
        if any(w < 0 or w >= plan.n for w in S):
            raise ValidationError(f"straggler ids {S} outside [0, {plan.n})")
        return S


@functools.lru_cache(maxsize=64)
def worst_subset(plan) -> tuple:
    """The size-``k`` worker set with the largest decoding condition number."""
    return spectral.kappa_worst(plan).argmax


# ---- configuration ----------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    operation: str = "matvec"  # matvec | matmat
    n: int = 4
    s: int = 2
    k: Optional[int] = None
    k_A: Optional[int] = None
    k_B: Optional[int] = None
    t: int = 8
    r: int = 16
    w: int = 12
    scheme: str = "all_ones"  # all_ones | random | poly | random_kr
    gamma: Optional[str] = None
    gamma_A: Optional[str] = None
    gamma_B: Optional[str] = None
    q: Optional[int] = None
    q_A: Optional[int] = None
    q_B: Optional[int] = None
    z: Optional[int] = None
    R: Optional[tuple] = None
    R_A: Optional[tuple] = None
    R_B: Optional[tuple] = None
    R_seed: Optional[int] = None
    R_trials: int = 1
    nodes: Optional[tuple] = None
    decoder: str = "peeling"  # peeling | ls_direct | ls_cg
    cg_T: Optional[int] = None
    cg_tol: float = 1e-10
    noise: NoiseModel = field(default_factory=NoiseModel)
    stragglers: StragglerModel = field(default_factory=StragglerModel)
    data_seed: int = 0

    def __post_init__(self):
        if self.operation not in ("matvec", "matmat"):
            raise ValidationError(f"unknown operation {self.operation!r}")
        if self.scheme not in ("all_ones", "random", "poly", "random_kr"):
            raise ValidationError(f"unknown scheme {self.scheme!r}")
        if self.decoder not in ("peeling", "ls_direct", "ls_cg"):
            raise ValidationError(f"unknown decoder {self.decoder!r}")
        if self.scheme == "random_kr" and self.operation != "matmat":
            raise ValidationError("random_kr is a matrix-matrix scheme")
        if self.scheme in ("random", "random_kr") and self.R_seed is None and self.R is None \
                and self.R_A is None:
            raise ValidationError(f"scheme {self.scheme} needs R_seed or explicit R")
        for name in ("R", "R_A", "R_B", "nodes"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, _freeze(v))
        if isinstance(self.noise, dict):
            object.__setattr__(self, "noise", NoiseModel(**self.noise))
        if isinstance(self.stragglers, dict):
            object.__setattr__(self, "stragglers", StragglerModel(**self.stragglers))
        self.plan()  # surfaces storage and shape errors early

    # derived sizes
    def _k(self) -> int:
        if self.operation == "matvec":
            return self.n - self.s if self.k is None else self.k
        return self.k_A * self.k_B

    def resolved_q(self) -> dict:
        if self.operation == "matvec":
            q = self.q
            if q is None:
                q = 1 if self.gamma is None else min_q(self._k(), self.s, self.gamma)
            return {"q": q}
        if self.k_A is None or self.k_B is None:
            raise ValidationError("matmat needs k_A and k_B")
        qa = self.q_A if self.q_A is not None else (
            1 if self.gamma_A is None else min_q(self.k_A, self.s, self.gamma_A))
        qb = self.q_B if self.q_B is not None else (
            1 if self.gamma_B is None else min_q(self.k_B, self.s, self.gamma_B))
        if self.scheme in ("poly", "random_kr"):
            z = qb if self.z is None else self.z
        else:
            z = min_z(qb, self.s, self.k_B) if self.z is None else self.z
        return {"q_A": qa, "q_B": qb, "z": z}

    def plan(self):
        # data, noise, straggler and decoder settings do not affect the plan
        key = tuple(getattr(self, f) for f in self.__dataclass_fields__ if f not in _RUN_ONLY)
        if key not in _PLANS:
            _PLANS[key] = _build_plan(self)
        return _PLANS[key]

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("R", "R_A", "R_B", "nodes"):
            if d[key] is not None:
                d[key] = np.asarray(d[key]).tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "noise" in d and isinstance(d["noise"], dict):
            d["noise"] = NoiseModel(**d["noise"])
        if "stragglers" in d and isinstance(d["stragglers"], dict):
            d["stragglers"] = StragglerModel(**d["stragglers"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:12]


def _freeze(v):
    a = np.asarray(v, dtype=float)
    if a.ndim == 1:
        return tuple(float(x) for x in a)
    return tuple(tuple(float(x) for x in row) for row in a)


def _draw(rng, shape):
    return rng.uniform(-1.0, 1.0, size=shape)


_RUN_ONLY = frozenset({"noise", "stragglers", "data_seed", "decoder", "cg_T", "cg_tol"})
_PLANS: dict = {}


def _build_plan(cfg: ExperimentConfig):
    qs = cfg.resolved_q()
    if cfg.operation == "matvec":
        k, s, q = cfg._k(), cfg.s, qs["q"]
        if k + s != cfg.n:
            raise ValidationError(f"n = {cfg.n} must equal k + s = {k + s}")
        if cfg.scheme == "poly":
            G = baselines.poly_code_generator(cfg.n, k, cfg.nodes)
        else:
            R = None
            if cfg.scheme == "random":
                if cfg.R is not None:
                    R = np.asarray(cfg.R)
                elif cfg.R_trials > 1:
                    R = spectral.search_R(cfg.n, k, s, trials=cfg.R_trials, seed=cfg.R_seed).R
                else:
                    R = _draw(np.random.default_rng(cfg.R_seed), (k, s))
            G = make_systematic_generator(GeneratorSpec.matvec(k, s, R))
        return MatVecPlan(G, q, cfg.t, cfg.r, gamma=cfg.gamma)
    k = cfg.k_A * cfg.k_B
    if k + cfg.s != cfg.n:
        raise ValidationError(f"n = {cfg.n} must equal k_A k_B + s = {k + cfg.s}")
    qa, qb, z = qs["q_A"], qs["q_B"], qs["z"]
    if cfg.scheme == "poly":
        GA, GB = baselines.poly_code_factors(cfg.n, cfg.k_A, cfg.k_B, cfg.nodes)
    elif cfg.scheme == "random_kr":
        GA, GB = baselines.random_kr_factors(cfg.n, cfg.k_A, cfg.k_B, cfg.R_seed)
    else:
        RA = RB = None
        if cfg.scheme == "random":
            if cfg.R_A is not None:
                RA, RB = np.asarray(cfg.R_A), np.asarray(cfg.R_B)
            elif cfg.R_trials > 1:
                res = spectral.search_R_matmat(cfg.k_A, cfg.k_B, cfg.s, z, trials=cfg.R_trials,
                                               seed=cfg.R_seed)
                RA, RB = res.R, res.R_B
            else:
                rng = np.random.default_rng(cfg.R_seed)
                RA, RB = _draw(rng, (cfg.k_A, cfg.s)), _draw(rng, (cfg.k_B, cfg.s))
        GA, GB = make_matmat_factors(cfg.k_A, cfg.k_B, cfg.s, z, RA, RB)
    return MatMatPlan(GA, GB, qa, qb, z, cfg.t, cfg.r, cfg.w)


# ---- harness ----------------------------------------------------------------

@dataclass
class ExperimentResult:
    mse_percent: float
    t_encode_s: float
    t_worker_max_s: float
    t_worker_median_s: float
    t_decode_s: float
    stragglers: tuple
    workers_used: tuple
    report: dict
    config_hash: str = ""
    estimate: Optional[np.ndarray] = field(default=None, repr=False)
    truth: Optional[np.ndarray] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("estimate", "truth")}
        d["stragglers"] = list(self.stragglers)
        d["workers_used"] = list(self.workers_used)
        return d


def make_data(cfg: ExperimentConfig):
    rng = np.random.default_rng(cfg.data_seed)
    A = rng.standard_normal((cfg.t, cfg.r))
    if cfg.operation == "matvec":
        x = rng.standard_normal(cfg.t)
        return A, x, A.T @ x
    B = rng.standard_normal((cfg.t, cfg.w))
    return A, B, A.T @ B


def _gather(tasks, compute, noise: NoiseModel, stragglers: tuple, delay: Optional[float], k: int):
    """Run every task concurrently; return the first ``k`` completions.

    Each completion is ``(worker, exponents, blocks, seconds)``.
    """
    done: "queue.Queue" = queue.Queue()
    release = threading.Event()

    def run(task):
        if task.worker in stragglers:
            if delay is None or release.wait(delay):
                return  # never reports, or the master already finished
        t0 = time.perf_counter()
        exps, blocks = compute(task)
        blocks = noise.apply(task.worker, blocks)
        done.put((task.worker, exps, blocks, time.perf_counter() - t0))

    pool = ThreadPoolExecutor(max_workers=len(tasks))
    futures = [pool.submit(run, task) for task in tasks]
    got = []
    try:
        while len(got) < k:
            try:
                got.append(done.get(timeout=0.05))
            except queue.Empty:
                live = [f for f in futures if not f.done()]
                for f in futures:
                    if f.done() and f.exception() is not None:
                        raise f.exception()
                if not live and done.empty():
                    raise RuntimeError(f"only {len(got)} of the required {k} workers reported")
    finally:
        release.set()
        pool.shutdown(wait=True)
    return got


def run_experiment(cfg: ExperimentConfig, *, keep_arrays: bool = False) -> ExperimentResult:
    plan = cfg.plan()
    A, other, truth = make_data(cfg)
    S = cfg.stragglers.resolve(plan)

    t0 = time.perf_counter()
    if cfg.operation == "matvec":
        tasks = encode_matvec(A, plan)
        def compute(task):
            return task.exps_A, worker_compute_mv(task, other)
    else:
        tasks = encode_matmat(A, other, plan)
        def compute(task):
            prods = worker_compute_mm(task)
            return tuple(e for e, _ in prods), [P for _, P in prods]
    t_encode = time.perf_counter() - t0

    got = _gather(tasks, compute, cfg.noise, S, cfg.stragglers.delay, plan.k)
    used = tuple(sorted(w for w, _, _, _ in got))
    durations = [d for _, _, _, d in got]

    t0 = time.perf_counter()
    system = build_system(plan, used)
    obs = ObservationSet({w: (exps, blocks) for w, exps, blocks, _ in got})
    kw = {"T": cfg.cg_T, "tol": cfg.cg_tol} if cfg.decoder == "ls_cg" else {}
    X, report = decode(system, obs, cfg.decoder, **kw)
    estimate = assemble(X, system, plan)
    t_decode = time.perf_counter() - t0

    return ExperimentResult(
        mse_percent=normalized_mse(estimate, truth),
        t_encode_s=t_encode,
        t_worker_max_s=float(max(durations)),
        t_worker_median_s=float(np.median(durations)),
        t_decode_s=t_decode,
        stragglers=S,
        workers_used=used,
        report=report.to_dict(),
        config_hash=cfg.config_hash,
        estimate=estimate if keep_arrays else None,
        truth=truth if keep_arrays else None,
    )


# ---- sweeps -----------------------------------------------------------------

CSV_COLUMNS = ["config_hash", "scheme", "n", "s", "q", "q_A", "q_B", "z", "decoder", "noise",
               "stragglers", "mse_percent", "t_encode_s", "t_worker_max_s", "t_decode_s", "kappa"]


def _axis_config(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis == "snr_db":
        return replace(cfg, noise=replace(cfg.noise, kind="awgn", snr_db=float(value), digits=None))
    if axis == "digits":
        return replace(cfg, noise=replace(cfg.noise, kind="roundoff", digits=int(value), snr_db=None))
    if axis == "q":
        if cfg.operation == "matvec":
            return replace(cfg, q=int(value))
        return replace(cfg, q_A=int(value), q_B=int(value), z=None)
    raise ValidationError(f"unknown sweep axis {axis!r}")


def csv_row(cfg: ExperimentConfig, res: ExperimentResult, kappa: Optional[float] = None) -> dict:
    qs = cfg.resolved_q()
    return {
        "config_hash": res.config_hash, "scheme": cfg.scheme, "n": cfg.n, "s": cfg.s,
        "q": qs.get("q", ""), "q_A": qs.get("q_A", ""), "q_B": qs.get("q_B", ""), "z": qs.get("z", ""),
        "decoder": cfg.decoder, "noise": cfg.noise.label,
        "stragglers": " ".join(map(str, res.stragglers)),
        "mse_percent": repr(res.mse_percent), "t_encode_s": f"{res.t_encode_s:.6f}",
        "t_worker_max_s": f"{res.t_worker_max_s:.6f}", "t_decode_s": f"{res.t_decode_s:.6f}",
        "kappa": "" if kappa is None else repr(kappa),
    }


def sweep(cfg: ExperimentConfig, axis: str, values: Sequence, path=None, *,
          with_kappa: bool = False) -> List[dict]:
    """One experiment per axis value; rows follow :data:`CSV_COLUMNS`."""
    if not len(values):
        raise ValidationError("sweep axis is empty")
    rows = []
    for v in values:
        c = _axis_config(cfg, axis, v)
        res = run_experiment(c)
        kappa = spectral.kappa_worst(c.plan()).kappa_worst if with_kappa else None
        rows.append(csv_row(c, res, kappa))
    if path is not None:
        write_csv(rows, path)
    return rows


def write_csv(rows, f_or_path) -> None:
    if hasattr(f_or_path, "write"):
        _write_rows(rows, f_or_path)
        return
    with open(f_or_path, "w", newline="") as f:
        _write_rows(rows, f)


def _write_rows(rows, f):
    wr = csv.DictWriter(f, fieldnames=CSV_COLUMNS, lineterminator="\n")
    wr.writeheader()
    wr.writerows(rows)
