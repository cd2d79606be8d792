import math

import numpy as np
import pytest

import extdiv.solver as solver_mod
from extdiv import (LegendreKind, ParamError, PoissonModel, SolverConfig, StepError, Variant,
                    backward_step, fidelity_grad, fidelity_value, mirror_step, solve, step_bound,
                    validate_ext_div_params)
from extdiv import _core_py
from extdiv.harness import SyntheticSpec, make_trial
from oracles import prox_bs_l1, prox_burg_l1

BS, BURG = LegendreKind.BOLTZMANN_SHANNON, LegendreKind.BURG
REF = validate_ext_div_params(2.0, 0.3, 3.0)


def small_instance(seed=0, m=30, n=20, rho=0.2):
    spec = SyntheticSpec(m, n, rho, k_max=100.0, seed=seed, trials=1)
    A, x, b = make_trial(spec, 0)
    return PoissonModel(A, b, np.ones(m)), x


# -- single steps -------------------------------------------------------------------

@pytest.mark.parametrize("kind", [BS, BURG])
def test_mirror_step_with_zero_step_is_identity(kind):
    x = np.array([0.3, 2.0, 7.5])
    np.testing.assert_allclose(mirror_step(x, 0.0, kind, [1.0, -2.0, 3.0]), x, rtol=1e-15)


def test_mirror_step_examples():
    assert mirror_step([1.0], 1.0, BS, [1.0])[0] == pytest.approx(math.exp(-1.0), rel=1e-15)
    assert mirror_step([1.0], 1.0, BURG, [2.0])[0] == pytest.approx(1.0 / 3.0, rel=1e-15)
    with pytest.raises(StepError):
        mirror_step([1.0], 1.0, BURG, [-2.0])


def test_backward_step_examples_against_oracles():
    cfg = SolverConfig(Variant.RKL_L1, lam=1.0, l1_weight=0.3)
    got = backward_step(Variant.RKL_L1, [1.0], cfg)[0]
    assert got == pytest.approx(math.exp(-0.3), rel=1e-15)
    assert got == pytest.approx(prox_bs_l1(1.0, 0.3), rel=1e-12)
    cfg = SolverConfig(Variant.FKL_L1, lam=0.5, l1_weight=2.0)
    got = backward_step(Variant.FKL_L1, [1.0], cfg)[0]
    assert got == 0.5
    assert got == pytest.approx(prox_burg_l1(1.0, 1.0), rel=1e-12)
    x = np.array([0.2, 3.0, 50.0])
    np.testing.assert_array_equal(backward_step(Variant.PROPOSED_A0, x, cfg), x)
    cfg = SolverConfig(Variant.PROPOSED, lam=1.0, ext_div=REF)
    np.testing.assert_allclose(backward_step(Variant.PROPOSED, [2.0, 3.0, 10.0], cfg),
                               [4 * math.exp(0.3) - 3, 3.0, 10.0], rtol=1e-14)


@pytest.mark.parametrize("code", [_core_py.FKL_L1, _core_py.RKL_L1, _core_py.PROPOSED, _core_py.IDENTITY])
def test_kernel_iteration_matches_reference_steps(code):
    """One kernel iteration equals mirror_step followed by backward_step."""
    model, _ = small_instance(3)
    variant = {v.code: v for v in Variant}[code]
    lam = 0.7 * step_bound(variant.fidelity, model)
    cfg = SolverConfig(variant, lam=lam, l1_weight=0.05, ext_div=REF, max_iter=1)
    x0 = np.random.default_rng(1).uniform(0.5, 20.0, model.shape[1])
    cfg.x0 = x0
    ref = backward_step(variant, mirror_step(x0, lam, variant.entropy,
                                             fidelity_grad(variant.fidelity, model, x0)), cfg)
    np.testing.assert_allclose(solve(cfg, model).x, ref, rtol=1e-12)


# -- configuration -------------------------------------------------------------------

def test_default_budgets():
    assert SolverConfig(Variant.FKL_L1, lam=1.0).max_iter == 5_000_000
    for v in (Variant.RKL_L1, Variant.PROPOSED, Variant.PROPOSED_A0):
        assert SolverConfig(v, lam=1.0).max_iter == 10_000


def test_variant_pairings():
    assert Variant.FKL_L1.entropy is BURG
    for v in (Variant.RKL_L1, Variant.PROPOSED, Variant.PROPOSED_A0):
        assert v.entropy is BS


@pytest.mark.parametrize("cfg", [
    SolverConfig(Variant.RKL_L1, lam=0.0),
    SolverConfig(Variant.RKL_L1, lam=2.0),                       # above the bound
    SolverConfig(Variant.RKL_L1, lam=1.0, l1_weight=-1.0),
    SolverConfig(Variant.PROPOSED, lam=1.0),                     # no ext_div parameters
    SolverConfig(Variant.PROPOSED, lam=1.0, ext_div=validate_ext_div_params(2.0, 0.6, 1.0)),
    SolverConfig(Variant.RKL_L1, lam=1.0, x0=np.array([1.0, 0.0])),
    SolverConfig(Variant.RKL_L1, lam=1.0, x0=np.array([1.0])),
    SolverConfig(Variant.RKL_L1, lam=1.0, tol=0.0),
    SolverConfig(Variant.RKL_L1, lam=1.0, trace_every=0),
])
def test_invalid_configurations_rejected(cfg):
    with pytest.raises(ParamError):
        solve(cfg, PoissonModel(np.eye(2), [1.0, 2.0]))


def test_large_step_allowed_with_override():
    res = solve(SolverConfig(Variant.RKL_L1, lam=1.5, allow_large_step=True, max_iter=5),
                PoissonModel(np.eye(2), [1.0, 2.0]))
    assert res.iterations == 5


# -- whole runs ----------------------------------------------------------------------

def test_stationary_point_in_identity_region_is_fixed_after_one_iteration():
    A = np.array([[1.0, 0.5], [0.2, 1.0], [0.3, 0.3]])
    x0 = np.array([9.0, 12.0])  # both above a * kappa ~ 6.23
    eps = np.ones(3)
    model = PoissonModel(A, A @ x0 + eps, eps)
    res = solve(SolverConfig(Variant.PROPOSED, lam=0.5, ext_div=REF, x0=x0), model)
    assert res.iterations == 1 and res.converged
    assert res.trace[0].delta_norm == 0.0
    np.testing.assert_array_equal(res.x, x0)


def test_fixed_points_with_coordinates_at_the_plateau():
    A = np.array([[1.0, 0.5, 0.1], [0.2, 1.0, 0.4], [0.3, 0.3, 1.0]])
    x = np.array([3.0, 20.0, 3.0])  # a, identity region, a
    eps = np.full(3, 0.5)
    model = PoissonModel(A, A @ x + eps, eps)
    res = solve(SolverConfig(Variant.PROPOSED, lam=0.5, ext_div=REF, x0=x, max_iter=3), model)
    np.testing.assert_allclose(res.x, x, rtol=0, atol=1e-12)


def test_reverse_kl_without_penalty_recovers_observation():
    b = np.array([1.0, 4.0, 9.0, 0.5])
    model = PoissonModel(np.eye(4), b)
    # a tight tolerance: the default 1e-4 stopping rule halts at NMSE ~1e-5
    res = solve(SolverConfig(Variant.RKL_L1, lam=0.5, tol=1e-12), model)
    assert res.converged and res.iterations < 10_000
    assert fidelity_value(Variant.RKL_L1.fidelity, model, res.x) < 1e-12
    assert np.linalg.norm(res.x - b) / np.linalg.norm(b) < 1e-6


def test_forward_kl_is_slow_on_the_reference_geometry():
    spec = SyntheticSpec(100, 150, 0.1, seed=0, trials=1)
    A, x_true, b = make_trial(spec, 0)
    model = PoissonModel(A, b, np.ones(100))
    res = solve(SolverConfig(Variant.FKL_L1, lam=step_bound(Variant.FKL_L1.fidelity, model),
                             l1_weight=0.01, max_iter=10_000, trace_every=1000), model, x_true)
    assert not res.converged and res.iterations == 10_000


@pytest.mark.parametrize("variant", list(Variant))
def test_iterates_stay_positive_and_finite(variant):
    model, truth = small_instance(4)
    lam = step_bound(variant.fidelity, model)
    res = solve(SolverConfig(variant, lam=lam, l1_weight=0.1, ext_div=REF, max_iter=3000,
                             trace_every=1), model, truth)
    assert np.all(np.isfinite(res.x)) and np.all(res.x > 0)
    assert np.all(res.trace.delta_norm >= 0)
    assert np.all(np.diff(res.trace.iteration) > 0)
    assert res.trace.iteration[-1] == res.iterations - 1
    assert res.best_nmse <= np.nanmin(res.trace.nmse) + 1e-15


def test_reruns_are_bit_identical():
    model, truth = small_instance(5)
    cfg = SolverConfig(Variant.PROPOSED, lam=step_bound(Variant.PROPOSED.fidelity, model),
                       ext_div=REF, max_iter=2000)
    r1, r2 = solve(cfg, model, truth), solve(cfg, model, truth)
    assert r1.x.tobytes() == r2.x.tobytes()
    for f in ("iteration", "delta_norm", "fidelity", "nmse"):
        assert getattr(r1.trace, f).tobytes() == getattr(r2.trace, f).tobytes()


def test_final_fidelity_nonincreasing_in_budget():
    model, _ = small_instance(6)
    lam = step_bound(Variant.RKL_L1.fidelity, model)
    vals = [fidelity_value(Variant.RKL_L1.fidelity, model,
                           solve(SolverConfig(Variant.RKL_L1, lam=lam, max_iter=k), model).x)
            for k in (1, 3, 10, 30, 100, 300, 1000)]
    assert all(b <= a + 1e-12 * abs(a) for a, b in zip(vals, vals[1:]))


def test_trace_thinning_keeps_first_and_last():
    model, _ = small_instance(7)
    res = solve(SolverConfig(Variant.RKL_L1, lam=0.1, max_iter=95, trace_every=10), model)
    assert list(res.trace.iteration) == list(range(0, 95, 10)) + [94]


def test_step_halving_recovers_from_oversized_forward_step():
    model, _ = small_instance(8)
    lam = 1e4 * step_bound(Variant.FKL_L1.fidelity, model)
    res = solve(SolverConfig(Variant.FKL_L1, lam=lam, allow_large_step=True, max_iter=200), model)
    assert res.halvings > 0 and res.lam_used == lam / 2 ** res.halvings
    assert res.iterations == 200 and np.all(res.x > 0)


def test_step_halving_gives_up(monkeypatch):
    monkeypatch.setattr(solver_mod, "MAX_HALVINGS", 0)
    model, _ = small_instance(8)
    lam = 1e4 * step_bound(Variant.FKL_L1.fidelity, model)
    with pytest.raises(StepError):
        solve(SolverConfig(Variant.FKL_L1, lam=lam, allow_large_step=True, max_iter=50), model)


def test_result_unpacks_to_iterate_and_trace():
    x, trace = solve(SolverConfig(Variant.RKL_L1, lam=0.1, max_iter=3), PoissonModel(np.eye(1), [2.0]))
    assert x.shape == (1,) and len(trace) == 3
    rec = trace[0]
    assert rec.iteration == 0 and rec.nmse is None and rec.elapsed >= 0
