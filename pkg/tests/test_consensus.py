"""Consensus engine: hand-checked arithmetic, invariants, failure paths.

The one-step numbers below were worked out by hand on a 1-D problem with
dyadic values, so every intermediate is exactly representable and the
comparisons can be tight.
"""

import math

import numpy as np
import pytest

from dflsim.certify import (
    cumulative_descent_monitor,
    dual_increment_monitor,
)
from dflsim.consensus import (
    ConsensusEngine,
    consensus_update,
    lagrangian_value,
    multiplier_update,
    primal_step,
    project_ball,
    run_sync_reference,
)
from dflsim.errors import (
    ConfigurationError,
    NonFiniteError,
    StalenessViolationError,
)
from dflsim.losses import (
    LogisticLoss,
    QuadraticLoss,
    generate_synthetic,
    weighted_global_gradient,
)
from dflsim.staleness import DelaySchedule


def random_psd(rng, d, scale=1.0):
    b = rng.standard_normal((d, d))
    return scale * (b @ b.T) / d


def quadratic_clients(rng, count, d, spread=1.0):
    models = []
    for _ in range(count):
        models.append(QuadraticLoss(random_psd(rng, d),
                                    spread * rng.standard_normal(d),
                                    weight=1.0 / count))
    return models


# --- standalone update operators --------------------------------------------

def test_project_ball():
    v = np.array([3.0, 4.0])
    assert np.array_equal(project_ball(v, 10.0), v)
    clipped = project_ball(v, 1.0)
    assert np.linalg.norm(clipped) == pytest.approx(1.0, rel=1e-15)
    assert np.allclose(clipped, v / 5.0)


def test_operator_hand_values():
    # single client, 1-D: G(x) = (x - 1)^2 / 2, penalty 8, start at zero
    x0, lam0 = np.array([0.0]), np.array([1.0])
    w1 = consensus_update([x0], [lam0], (8.0,), radius=1e6)
    assert w1[0] == 0.125
    grad = np.array([0.125 - 1.0])
    x1 = primal_step(w1, lam0, grad, 8.0)
    assert x1[0] == 0.109375
    lam1 = multiplier_update(lam0, 8.0, x1, w1)
    assert lam1[0] == 0.875
    assert lam1[0] == -grad[0]


def test_consensus_update_projection_applies():
    x = [np.array([100.0])]
    lam = [np.array([0.0])]
    w = consensus_update(x, lam, (1.0,), radius=2.0)
    assert w[0] == pytest.approx(2.0, rel=1e-15)


# --- one-step engine trace, exact dyadic arithmetic -------------------------

def test_engine_single_client_step_trace():
    model = QuadraticLoss(np.array([[1.0]]), np.array([1.0]))
    engine = ConsensusEngine([model], 8.0, DelaySchedule("zero", (0,)))
    assert engine.initial_lagrangian == 0.5
    row = engine.step()

    assert row.t == 1
    assert row.dw == 0.125
    assert row.dwk_max == 0.109375
    assert row.dlambda_max == 0.125
    assert row.consensus_gap == 0.015625
    assert row.objective == pytest.approx((0.125 - 1.0) ** 2 / 2, abs=1e-15)

    lagrangian = (0.890625 ** 2 / 2) + 0.875 * (-0.015625) + 4.0 * 0.015625 ** 2
    assert row.L == pytest.approx(lagrangian, abs=1e-15)

    # dual increment bound is tight here: |dlam| = |dw| and m = 1
    assert row.slack_lemma1 == 0.0

    budget = 0.5 * 0.109375 ** 2 + 3.8203125 * 0.125 ** 2
    assert row.slack_lemma3 == pytest.approx(0.5 - budget - lagrangian, abs=1e-14)

    floor = -(2e6) ** 2 * 1.0 / 2.0
    assert row.lemma4_margin == pytest.approx(lagrangian - floor, rel=1e-15)

    assert engine.t == 2
    assert engine.consensus[0] == 0.125
    assert engine.multipliers[0][0] == 0.875


def test_engine_initial_state():
    rng = np.random.default_rng(2)
    models = quadratic_clients(rng, 3, 4)
    engine = ConsensusEngine(models, 8.0, DelaySchedule("zero", (0, 0, 0)))
    assert np.array_equal(engine.consensus, np.zeros(4))
    zero = np.zeros(4)
    expected = math.fsum(m.weighted_value(zero) for m in models)
    assert engine.initial_lagrangian == pytest.approx(expected, rel=1e-15)
    for m, lam in zip(models, engine.multipliers):
        assert np.array_equal(lam, -m.weighted_gradient(zero))


# --- synchronous equivalence ------------------------------------------------

def test_zero_delay_matches_degenerate_random_delay():
    rng = np.random.default_rng(7)
    models = quadratic_clients(rng, 4, 6)
    pens = tuple(8.0 * m.weighted_grad_bound() for m in models)
    a = ConsensusEngine(models, pens, DelaySchedule("zero", (0,) * 4))
    b = ConsensusEngine(models, pens,
                        DelaySchedule("uniform-random", (0,) * 4, seed=99))
    rows_a = a.run(100)
    rows_b = b.run(100)
    assert rows_a == rows_b
    for xa, xb in zip(a.params, b.params):
        assert np.array_equal(xa, xb)


def test_sync_reference_helper_matches_engine():
    rng = np.random.default_rng(8)
    models = quadratic_clients(rng, 3, 5)
    direct = ConsensusEngine(models, 9.0, DelaySchedule("zero", (0, 0, 0))).run(50)
    helper = run_sync_reference(models, 9.0, 50)
    assert direct == helper


# --- convergence and stationarity on certified problems ---------------------

def test_sync_run_descends_and_converges():
    rng = np.random.default_rng(21)
    models = quadratic_clients(rng, 4, 5)
    pens = tuple(8.0 * m.weighted_grad_bound() for m in models)
    engine = ConsensusEngine(models, pens, DelaySchedule("zero", (0,) * 4))
    rows = engine.run(4000)
    levels = [engine.initial_lagrangian] + [r.L for r in rows]
    for before, after in zip(levels, levels[1:]):
        assert after <= before + 1e-12 * (1.0 + abs(before))
    # stationarity of the weighted objective at the consensus vector
    grad = weighted_global_gradient(models, engine.consensus)
    assert np.linalg.norm(grad) < 1e-6
    assert rows[-1].consensus_gap < 1e-7


def test_delayed_certified_run_monitors_stay_nonnegative():
    rng = np.random.default_rng(33)
    for seed in range(4):
        models = quadratic_clients(rng, 4, 5)
        pens = tuple(8.0 * m.weighted_grad_bound() for m in models)
        bounds = (0, 1, 2, 1)
        schedule = DelaySchedule("uniform-random", bounds, seed=seed)
        engine = ConsensusEngine(models, pens, schedule)
        rows = engine.run(300)
        for row in rows:
            assert row.slack_lemma1 >= -1e-9
            assert row.slack_lemma3 >= -1e-8 * (1.0 + abs(row.L))
            assert row.lemma4_margin >= 0.0
        assert engine.dual_residual_max <= 1e-10
        assert rows[-1].consensus_gap < rows[0].consensus_gap


def test_dual_identity_on_logistic_clients():
    data = generate_synthetic("logistic", 120, 4, seed=5)
    third = 40
    models = []
    for i in range(3):
        rows = slice(i * third, (i + 1) * third)
        models.append(LogisticLoss(data.features[rows], data.labels[rows],
                                   weight=1.0 / 3.0))
    pens = tuple(8.0 * m.weighted_grad_bound() for m in models)
    engine = ConsensusEngine(models, pens,
                             DelaySchedule("uniform-random", (2, 1, 2), seed=3))
    engine.run(200)
    assert engine.dual_residual_max <= 1e-10


# --- running monitors agree with the standalone replay ----------------------

def test_engine_monitors_match_offline_replay():
    rng = np.random.default_rng(55)
    models = quadratic_clients(rng, 3, 4)
    pens = tuple(9.0 * m.weighted_grad_bound() for m in models)
    bounds = (1, 0, 2)
    engine = ConsensusEngine(models, pens,
                             DelaySchedule("uniform-random", bounds, seed=17),
                             record_states=True)
    rows = engine.run(60)
    hist = engine.history
    w_hist = [h["consensus"] for h in hist]

    client_steps_sq = np.array([
        [float(np.sum((hist[i + 1]["params"][k] - hist[i]["params"][k]) ** 2))
         for k in range(3)]
        for i in range(60)])
    consensus_steps_sq = np.array([
        float(np.sum((w_hist[i + 1] - w_hist[i]) ** 2)) for i in range(60)])
    slack3 = cumulative_descent_monitor(
        engine.initial_lagrangian, [r.L for r in rows],
        client_steps_sq, consensus_steps_sq,
        pens, engine.grad_bounds, bounds)

    for i, row in enumerate(rows):
        out = dual_increment_monitor(
            w_hist[:i + 2],
            hist[i]["multipliers"], hist[i + 1]["multipliers"],
            engine.grad_bounds, bounds, start_index=1)
        assert out.t == row.t
        assert row.slack_lemma1 == pytest.approx(out.slack, rel=1e-12, abs=1e-15)
        assert row.slack_lemma3 == pytest.approx(slack3[i], rel=1e-12, abs=1e-12)


# --- feasible-region projection ---------------------------------------------

def test_projection_keeps_consensus_inside_ball():
    model = QuadraticLoss(np.array([[1.0]]), np.array([3.0]))
    engine = ConsensusEngine([model], 8.0, DelaySchedule("zero", (0,)), radius=1.0)
    rows = engine.run(500)
    assert abs(engine.consensus[0]) <= 1.0 + 1e-12
    assert all(math.isfinite(r.L) for r in rows)
    # the constrained minimizer sits on the boundary
    assert engine.consensus[0] == pytest.approx(1.0, abs=1e-6)


# --- failure paths ----------------------------------------------------------

def test_staleness_violation_stops_engine():
    model = QuadraticLoss(np.eye(2), np.zeros(2))
    schedule = DelaySchedule("fixed", (1,), offset=3)
    engine = ConsensusEngine([model], 8.0, schedule)
    first = engine.step()
    assert first.t == 1
    with pytest.raises(StalenessViolationError):
        engine.step()
    assert engine.t == 2  # the violating transition was not committed


def test_overflowing_problem_raises_non_finite():
    model = QuadraticLoss(np.array([[1e300]]), np.array([1.0]))
    engine = ConsensusEngine([model], 1.0, DelaySchedule("zero", (0,)))
    with np.errstate(over="ignore"), pytest.raises(NonFiniteError):
        engine.run(10)


# --- construction validation ------------------------------------------------

def test_engine_rejects_bad_setup():
    rng = np.random.default_rng(1)
    models = quadratic_clients(rng, 2, 3)
    sched2 = DelaySchedule("zero", (0, 0))
    with pytest.raises(ConfigurationError):
        ConsensusEngine([], 8.0, sched2)
    with pytest.raises(ConfigurationError):
        ConsensusEngine(models, 8.0, DelaySchedule("zero", (0,)))
    with pytest.raises(ConfigurationError):
        ConsensusEngine(models, (8.0,), sched2)
    with pytest.raises(ConfigurationError):
        ConsensusEngine(models, 0.0, sched2)
    with pytest.raises(ConfigurationError):
        ConsensusEngine(models, (8.0, math.inf), sched2)
    with pytest.raises(ConfigurationError):
        ConsensusEngine(models, 8.0, sched2, radius=math.inf)
    mixed = [models[0], QuadraticLoss(np.eye(5), np.zeros(5))]
    with pytest.raises(ConfigurationError):
        ConsensusEngine(mixed, 8.0, sched2)
    with pytest.raises(ConfigurationError):
        ConsensusEngine(models, 8.0, sched2).run(-1)


def test_record_states_snapshots():
    model = QuadraticLoss(np.eye(2), np.ones(2))
    engine = ConsensusEngine([model], 8.0, DelaySchedule("zero", (0,)),
                             record_states=True)
    engine.run(5)
    assert [h["t"] for h in engine.history] == [1, 2, 3, 4, 5, 6]
    assert np.array_equal(engine.history[-1]["consensus"], engine.consensus)
