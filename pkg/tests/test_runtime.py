import csv
import io
import itertools
import warnings

import numpy as np
import pytest

from convcode import runtime, spectral
from convcode.runtime import (ExperimentConfig, NoiseModel, StragglerModel, UndefinedMSEError, add_awgn,
                              normalized_mse, round_digits, run_experiment, sweep)
from convcode.polyalg import ValidationError

MV4 = dict(operation="matvec", n=4, s=2, q=4, t=6, r=16)
MM6 = dict(operation="matmat", n=6, s=2, k_A=2, k_B=2, gamma_A="5/8", gamma_B="2/3", t=8, r=16, w=12)


def test_mse_values():
    assert normalized_mse([3, 4], [3, 4]) == 0
    assert normalized_mse([0, 0], [3, 4]) == 100
    assert normalized_mse([3, 5], [3, 4]) == pytest.approx(4.0)
    with pytest.raises(UndefinedMSEError):
        normalized_mse([1, 2], [0, 0])
    with pytest.raises(ValidationError):
        normalized_mse([1, 2, 3], [1, 2])


def test_round_digits():
    assert round_digits(np.array(2.4), 0) == 2.0
    assert round_digits(np.array(3.14159), 2) == pytest.approx(3.14)
    x = np.random.default_rng(0).standard_normal(100)
    once = round_digits(x, 3)
    assert np.array_equal(round_digits(once, 3), once)
    with pytest.raises(ValidationError):
        round_digits(x, 16)


def test_awgn_properties():
    rng = np.random.default_rng(1)
    x = [rng.standard_normal(500_000), rng.standard_normal(500_000)]
    y = add_awgn(x, 20.0, np.random.default_rng(2))
    sig = sum(np.sum(a * a) for a in x)
    noise = sum(np.sum((b - a) ** 2) for a, b in zip(x, y))
    assert abs(10 * np.log10(sig / noise) - 20.0) < 0.2
    hi = add_awgn(x, 300.0, np.random.default_rng(2))
    assert max(np.linalg.norm(b - a) / np.linalg.norm(a) for a, b in zip(x, hi)) <= 1e-14
    again = add_awgn(x, 20.0, np.random.default_rng(2))
    assert all(np.array_equal(a, b) for a, b in zip(y, again))
    with pytest.warns(RuntimeWarning):
        z = add_awgn([np.zeros(3)], 10.0, rng)
    assert not z[0].any()


def test_noise_model_validation():
    with pytest.raises(ValidationError):
        NoiseModel("awgn")
    with pytest.raises(ValidationError):
        NoiseModel("roundoff", digits=16)
    with pytest.raises(ValidationError):
        NoiseModel("awgn", snr_db=float("inf"))


@pytest.mark.parametrize("S", list(itertools.combinations(range(4), 2)) + [(), (1,)])
def test_exact_any_pattern(S):
    cfg = ExperimentConfig(**MV4, stragglers=StragglerModel("explicit", S))
    assert run_experiment(cfg).mse_percent <= 1e-16 * 100


def test_completion_rule_with_long_delay():
    base = ExperimentConfig(**MM6)
    slow = ExperimentConfig(**MM6, stragglers=StragglerModel("explicit", (0, 4), delay=30.0))
    r = run_experiment(slow, keep_arrays=True)
    assert r.workers_used == (1, 2, 3, 5)
    assert r.mse_percent < 1e-20
    assert r.t_worker_max_s < 30.0


def test_awgn_decade():
    mses = []
    for snr in (100.0, 110.0):
        cfg = ExperimentConfig(**MV4, noise=NoiseModel("awgn", snr, seed=3),
                               stragglers=StragglerModel("explicit", (0, 1)))
        mses.append(run_experiment(cfg).mse_percent)
    assert 8 <= mses[0] / mses[1] <= 12


def test_roundoff_steps():
    # ratio of quantisation MSE between d and d+1 digits, averaged over data seeds
    ratios = []
    for d in (3, 4):
        vals = []
        for seed in range(8):
            cfg = ExperimentConfig(**{**MM6, "t": 20, "r": 32, "w": 24}, data_seed=seed,
                                   noise=NoiseModel("roundoff", digits=d),
                                   stragglers=StragglerModel("explicit", (0, 1)))
            vals.append(run_experiment(cfg).mse_percent)
        ratios.append(np.mean(vals))
    assert 80 <= ratios[0] / ratios[1] <= 120


def test_determinism():
    cfg = ExperimentConfig(**MM6, noise=NoiseModel("awgn", 60.0, seed=9), stragglers=StragglerModel("worst_case"),
                           decoder="ls_direct")
    vals = {run_experiment(cfg).mse_percent for _ in range(4)}
    assert len(vals) == 1


def test_worst_case_is_argmax_complement():
    cfg = ExperimentConfig(**MM6, stragglers=StragglerModel("worst_case"))
    worst = spectral.kappa_worst(cfg.plan()).argmax
    assert set(cfg.stragglers.resolve(cfg.plan())) == set(range(6)) - set(worst)


def test_random_stragglers():
    m = StragglerModel("random", seed=4)
    cfg = ExperimentConfig(**MM6, stragglers=m)
    S = m.resolve(cfg.plan())
    assert len(S) == 2 and S == m.resolve(cfg.plan())
    with pytest.raises(ValidationError):
        StragglerModel("random", count=3).resolve(cfg.plan())
    with pytest.raises(ValidationError):
        StragglerModel("explicit", (0, 1, 2)).resolve(cfg.plan())


def test_mse_tracks_conditioning():
    cfg = ExperimentConfig(**{**MM6, "t": 20}, scheme="random", R_seed=5, decoder="ls_direct")
    rep = spectral.kappa_worst(cfg.plan())
    worst = tuple(w for w in range(6) if w not in rep.argmax)
    best = tuple(w for w in range(6) if w not in rep.argmin)
    res = {}
    for name, S in (("worst", worst), ("best", best)):
        vals = []
        for trial in range(10):
            c = ExperimentConfig(**{**cfg.to_dict(), "noise": NoiseModel("awgn", 80.0, seed=trial),
                                    "stragglers": StragglerModel("explicit", S), "data_seed": trial})
            vals.append(run_experiment(c).mse_percent)
        res[name] = np.median(vals)
    assert res["worst"] >= res["best"]


def test_config_validation_and_json():
    with pytest.raises(ValidationError):
        ExperimentConfig(**{**MV4, "gamma": "1/2", "q": None})  # gamma = 1/k is infeasible
    with pytest.raises(ValidationError):
        ExperimentConfig(operation="matvec", n=5, s=2, k=2, q=1)
    with pytest.raises(ValidationError):
        ExperimentConfig(**MV4, scheme="random")
    with pytest.raises(ValidationError):
        ExperimentConfig(**MV4, scheme="random_kr", R_seed=1)
    cfg = ExperimentConfig(**MM6, noise=NoiseModel("awgn", 70.0), scheme="random", R_seed=3)
    back = ExperimentConfig.from_json(cfg.to_json())
    assert back == cfg and back.config_hash == cfg.config_hash
    with pytest.raises(ValidationError):
        ExperimentConfig.from_dict({"bogus": 1})
    assert cfg.resolved_q() == {"q_A": 4, "q_B": 3, "z": 4}


def test_sweep_rows(tmp_path):
    cfg = ExperimentConfig(**MV4, stragglers=StragglerModel("explicit", (0, 2)))
    rows = sweep(cfg, "snr_db", list(range(50, 151, 10)), tmp_path / "s.csv")
    assert len(rows) == 11
    with open(tmp_path / "s.csv") as f:
        header = next(csv.reader(f))
    assert header == runtime.CSV_COLUMNS
    single = sweep(cfg, "snr_db", [80.0])[0]
    direct = run_experiment(ExperimentConfig(**MV4, stragglers=StragglerModel("explicit", (0, 2)),
                                             noise=NoiseModel("awgn", 80.0)))
    assert float(single["mse_percent"]) == direct.mse_percent
    with pytest.raises(ValidationError):
        sweep(cfg, "snr_db", [])


def test_kq_sweep_kappa_monotone():
    cfg = ExperimentConfig(operation="matvec", n=4, s=2, q=2, t=3, r=48)
    rows = sweep(cfg, "q", [2, 4, 8, 12], with_kappa=True)
    kap = [float(r["kappa"]) for r in rows]
    assert all(a <= b for a, b in zip(kap, kap[1:]))
