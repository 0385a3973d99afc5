import itertools

import numpy as np
import pytest

from convcode.codec import MatMatPlan, MatVecPlan, build_system, encode_matmat, encode_matvec, worker_outputs
from convcode.decode import (DecodeError, DegenerateScalingError, ObservationSet, PeelingStuckError,
                             RankDeficientError, assemble, cgls, decode, ls_decode, peel, peeling_order,
                             square_subsystem)
from convcode.polyalg import GeneratorSpec, make_systematic_generator

rng = np.random.default_rng(5)


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def mv_run(plan, I, seed=0):
    g = np.random.default_rng(seed)
    A = g.standard_normal((plan.t, plan.r))
    x = g.standard_normal(plan.t)
    obs = ObservationSet(worker_outputs(plan, encode_matvec(A, plan), x)).restrict(I)
    return build_system(plan, I), obs, A.T @ x


def mm_run(plan, I, seed=0):
    g = np.random.default_rng(seed)
    A = g.standard_normal((plan.t, plan.r))
    B = g.standard_normal((plan.t, plan.w))
    obs = ObservationSet(worker_outputs(plan, encode_matmat(A, B, plan))).restrict(I)
    return build_system(plan, I), obs, A.T @ B


MV4 = MatVecPlan.standard(2, 2, 4, 6, 16)
MM6 = MatMatPlan.standard(2, 2, 2, 4, 3, 5, 8, 12)


def test_appendix_walkthrough_order():
    sysm = build_system(MM6, [2, 3, 4, 5])
    order = peeling_order(sysm)
    first_parity = [(sysm.locators[e], sysm.unknowns[u]) for e, u, _ in order
                    if sysm.locators[e][0] in (4, 5)][:2]
    assert first_parity == [((5, 0), (0, 0, 0, 0)), ((4, 0), (0, 0, 1, 0))]
    # message-worker equations are all consumed before any parity equation
    kinds = [sysm.locators[e][0] in (2, 3) for e, _, _ in order]
    assert kinds == sorted(kinds, reverse=True)


def test_message_set_passthrough():
    sysm, obs, truth = mv_run(MV4, [0, 1])
    X, rep = peel(sysm, obs)
    assert rep.operations == 0
    assert rel(assemble(X, sysm, MV4), truth) <= 1e-15


@pytest.mark.parametrize("I", list(itertools.combinations(range(4), 2)))
def test_mv4_peel_and_ls(I):
    sysm, obs, truth = mv_run(MV4, I)
    Xp, rp = peel(sysm, obs)
    Xl, _ = ls_decode(sysm, obs)
    assert rel(assemble(Xp, sysm, MV4), truth) <= 1e-12
    assert rel(Xl, Xp) <= 1e-10
    assert set(rp.pivots) <= {1.0}


@pytest.mark.parametrize("I", list(itertools.combinations(range(6), 4)))
def test_mm6_all_patterns(I):
    sysm, obs, truth = mm_run(MM6, I)
    for method in ("peeling", "ls_direct", "ls_cg"):
        X, rep = decode(sysm, obs, method)
        assert rel(assemble(X, sysm, MM6), truth) <= 1e-9, method


def test_zero_observations():
    sysm, obs, _ = mv_run(MV4, [2, 3])
    zero = ObservationSet({w: (e, [np.zeros_like(b) for b in bl]) for w, (e, bl) in obs.outputs.items()})
    X, _ = ls_decode(sysm, zero)
    assert not X.any()


def test_ls_beats_square_solve_residual():
    R = rng.uniform(-1, 1, (3, 2))
    G = make_systematic_generator(GeneratorSpec(5, 3, 2, (0, 1), (0, 1, 2), R))
    plan = MatVecPlan(G, 4, 6, 24)
    sysm, obs, _ = mv_run(plan, [1, 3, 4])
    noisy = ObservationSet({w: (e, [b + 1e-3 * rng.standard_normal(b.shape) for b in bl])
                            for w, (e, bl) in obs.outputs.items()})
    _, rl = ls_decode(sysm, noisy)
    _, rp = peel(sysm, noisy)
    assert rl.residual_norm <= rp.residual_norm + 1e-15


def test_ls_vs_peeling_noise_median():
    plan = MatVecPlan(make_systematic_generator(GeneratorSpec(6, 4, 2, (0, 1), (0, 1, 2, 3),
                                                              np.random.default_rng(3).uniform(-1, 1, (4, 2)))),
                      6, 4, 48)
    I = [1, 3, 4, 5]
    ls_err, pe_err = [], []
    for trial in range(21):
        sysm, obs, truth = mv_run(plan, I, seed=trial)
        g = np.random.default_rng(1000 + trial)
        noisy = ObservationSet({w: (e, [b + 1e-4 * g.standard_normal(b.shape) for b in bl])
                                for w, (e, bl) in obs.outputs.items()})
        ls_err.append(rel(assemble(ls_decode(sysm, noisy)[0], sysm, plan), truth))
        pe_err.append(rel(assemble(peel(sysm, noisy)[0], sysm, plan), truth))
    assert np.median(ls_err) <= np.median(pe_err)


def test_peeling_never_stuck_small():
    for k, s in [(2, 2), (3, 2), (4, 3), (5, 3), (6, 2)]:
        R = np.random.default_rng(k * 10 + s).uniform(0.5, 1.5, (k, s))
        plan = MatVecPlan(make_systematic_generator(GeneratorSpec.matvec(k, s, R)), 3, 1, 3 * k)
        for I in itertools.combinations(range(k + s), k):
            assert len(peeling_order(build_system(plan, I))) == 3 * k


def test_square_subsystem_is_square():
    sysm = build_system(MV4, [2, 3])
    S = square_subsystem(sysm)
    assert S.shape == (8, 8)
    assert np.linalg.matrix_rank(S.toarray()) == 8


def test_operation_count_linear_in_q():
    k, s = 3, 2
    ratios = []
    for q in (4, 16, 64):
        plan = MatVecPlan.standard(k, s, q, 1, k * q)
        sysm, obs, _ = mv_run(plan, [0, 3, 4])
        _, rep = peel(sysm, obs)
        ratios.append(rep.operations / (k * q * s))
    assert max(ratios) <= 2.0


def test_stuck_and_degenerate():
    from convcode.codec import DecodingSystem
    from scipy import sparse
    M = sparse.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    sysm = DecodingSystem(((0,), (1,)), ((0, 0), (1, 0)), M, (1,))
    with pytest.raises(PeelingStuckError):
        peeling_order(sysm)
    obs = ObservationSet({0: ((0,), [np.ones(1)]), 1: ((0,), [np.ones(1)])})
    with pytest.raises(RankDeficientError):
        ls_decode(sysm, obs)
    assert issubclass(DegenerateScalingError, DecodeError)


def test_missing_observation():
    sysm, obs, _ = mv_run(MV4, [2, 3])
    with pytest.raises(DecodeError):
        peel(sysm, obs.restrict([2]))


def test_cg_limits_flagged():
    sysm, obs, truth = mm_run(MM6, [2, 3, 4, 5])
    with pytest.warns(RuntimeWarning):
        X, rep = ls_decode(sysm, obs, "cg", T=1)
    assert not rep.converged and rep.iterations == 1 and rep.warnings


def test_cgls_matches_lstsq():
    A = rng.standard_normal((30, 10))
    B = rng.standard_normal((30, 4))
    X, it, ok = cgls(A, B, max_iter=200, tol=1e-12)
    assert ok
    assert np.allclose(X, np.linalg.lstsq(A, B, rcond=None)[0], atol=1e-9)


def test_assemble_shapes():
    plan = MatVecPlan.standard(1, 1, 1, 3, 5)
    sysm, obs, truth = mv_run(plan, [0])
    X, _ = peel(sysm, obs)
    assert np.array_equal(assemble(X, sysm, plan), truth)
    with pytest.raises(DecodeError):
        assemble(np.full_like(X, np.nan), sysm, plan)


def test_report_json():
    sysm, obs, _ = mv_run(MV4, [2, 3])
    _, rep = peel(sysm, obs)
    d = rep.to_dict()
    assert d["method"] == "peeling" and d["pivot_values"] == [1.0]
