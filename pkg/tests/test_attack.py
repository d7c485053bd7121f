import math

import numpy as np
import pytest

from prioropt.attack import (AttackConfig, AttackTrace, CHECKPOINT_EVERY, clip_grad_norm, init_random_directions,
                             init_targeted, line_search, run_attack, adversarial_point)
from prioropt.errors import BadExemplar, InitFailed, InvalidConfig, NoImprovement
from prioropt.estimators import EstimatorConfig
from prioropt.modelzoo import HardLabelOracle, SoftmaxLinearModel, exact_ray_radius, perturb_twin
from prioropt.priors import implicit_ray_gradient, surrogate_ray_gradient
from prioropt.rayoracle import AttackGoal, RayState, phi
from prioropt.vecmath import make_rng, normalize

from oracles import boundary_states, linear_setup, mlp_setup


def check_trace(trace, oracle, budget):
    qs = [q for q, _ in trace.points]
    ds = [d for _, d in trace.points]
    assert all(a < b for a, b in zip(qs, qs[1:]))
    assert all(a >= b for a, b in zip(ds, ds[1:]))
    assert trace.queries == oracle.ledger.count <= budget
    assert sum(c.declared for c in trace.costs) == oracle.ledger.count
    assert all(c.declared == c.ledger_delta for c in trace.costs)


def test_config_validation():
    with pytest.raises(InvalidConfig):
        AttackConfig(T=0)
    with pytest.raises(InvalidConfig):
        AttackConfig(g_max=0)
    with pytest.raises(InvalidConfig):
        AttackConfig(budget=0)
    with pytest.raises(InvalidConfig):
        AttackConfig(init="targeted")
    assert AttackConfig(method="sign_opt", estimator=EstimatorConfig("prior_opt")).estimator.kind == "sign_opt"


def test_clip():
    v = np.array([3.0, 4.0])
    np.testing.assert_allclose(clip_grad_norm(v, 1.0), [0.6, 0.8])
    np.testing.assert_array_equal(clip_grad_norm(0.1 * v, 1.0), 0.1 * v)
    np.testing.assert_array_equal(clip_grad_norm(np.zeros(2), 1.0), np.zeros(2))


def test_init_random_is_best_of_n():
    model, T, _ = linear_setup(10, 4, 0)
    x = T[0]
    goal = AttackGoal(x, 0)
    oracle = HardLabelOracle(model)
    state, spent = init_random_directions(oracle, goal, 100, make_rng(1), tol=1e-4)
    assert spent == oracle.ledger.count
    r2 = make_rng(1)
    exact = [exact_ray_radius(model, x, normalize(r2.standard_normal(10)), goal) for _ in range(100)]
    assert state.radius <= min(exact) + 1e-4
    assert abs(np.linalg.norm(state.theta) - 1) < 1e-10


def test_init_random_single(hyperplane):
    x = np.array([1.0, 0.0])

    class Fixed:
        def standard_normal(self, d):
            return np.array([-2.0, 0.0])

    state, _ = init_random_directions(HardLabelOracle(hyperplane), AttackGoal(x, 0), 1, Fixed())
    np.testing.assert_array_equal(state.theta, [-1.0, 0.0])


def test_init_random_fails_when_nothing_crosses(hyperplane):
    x = np.array([1000.0, 0.0])
    with pytest.raises(InitFailed):
        init_random_directions(HardLabelOracle(hyperplane), AttackGoal(x, 0), 5, make_rng(0), lambda_max=10.0)


@pytest.fixture
def step_model():
    # class 1 iff x1 > 4
    return SoftmaxLinearModel(np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([0.0, -4.0]))


def test_init_targeted(step_model):
    x = np.zeros(2)
    goal = AttackGoal(x, 0, target=1)
    oracle = HardLabelOracle(step_model)
    state, spent = init_targeted(oracle, goal, np.array([10.0, 0.0]))
    np.testing.assert_allclose(state.theta, [1.0, 0.0])
    assert abs(state.radius - 4.0) <= 1e-4 and spent == oracle.ledger.count
    state, _ = init_targeted(oracle, goal, np.array([4.01, 0.0]))
    assert state.radius <= 4.01
    with pytest.raises(BadExemplar):
        init_targeted(oracle, goal, np.array([1.0, 0.0]))


def test_line_search_descent_on_mlp():
    model, rng = mlp_setup(6, 21)
    goal, th, r = boundary_states(model, 1, rng)[0]
    k, dh = surrogate_ray_gradient(model, goal.x, th, r, goal)
    grad = implicit_ray_gradient(k, dh)
    oracle = HardLabelOracle(model)
    res = line_search(oracle, RayState(th, r), goal, grad, tol=1e-6)
    assert res.state.radius < r
    assert res.queries == oracle.ledger.count
    assert len(res.candidates) >= 1
    assert phi(oracle, res.state.point(goal.x), goal) == 1


def test_line_search_ascent_fails(hyperplane):
    x = np.array([1.0, 0.0])
    goal = AttackGoal(x, 0)
    th = normalize(np.array([-1.0, 1.0]))
    k, dh = surrogate_ray_gradient(hyperplane, x, th, math.sqrt(2), goal)
    ascent = -implicit_ray_gradient(k, dh)
    with pytest.raises(NoImprovement) as info:
        line_search(HardLabelOracle(hyperplane), RayState(th, math.sqrt(2)), goal, ascent, eta_init=1e-3)
    assert info.value.queries > 0


def test_line_search_exact_gradient_linear(hyperplane):
    x = np.array([1.0, 0.0])
    goal = AttackGoal(x, 0)
    th = normalize(np.array([-1.0, 1.0]))
    k, dh = surrogate_ray_gradient(hyperplane, x, th, math.sqrt(2), goal)
    res = line_search(HardLabelOracle(hyperplane), RayState(th, math.sqrt(2)), goal, implicit_ray_gradient(k, dh),
                      tol=1e-6)
    assert 1.0 - 1e-6 <= res.state.radius < math.sqrt(2)


def test_prior_opt_copy_surrogate_finds_hyperplane_distance():
    model = SoftmaxLinearModel(np.array([[1.0, 2.0], [-1.0, -2.0]]), np.array([0.5, -0.5]))
    x = np.array([1.0, 1.0])
    goal = AttackGoal(x, model.predict(x))
    optimum = abs(2 * (x @ [1.0, 2.0]) + 1.0) / np.linalg.norm([2.0, 4.0])
    oracle = HardLabelOracle(model)
    cfg = AttackConfig("prior_opt", budget=500, estimator=EstimatorConfig(q=2, bs_tol=1e-6), g_max=1.0)
    trace = run_attack(oracle, goal, [model], cfg)
    assert trace.success
    assert trace.best_distortion <= 1.01 * optimum
    check_trace(trace, oracle, 500)


@pytest.mark.parametrize("method", ["sign_opt", "prior_sign_opt", "prior_opt", "pure_prior", "pure_prior_sign"])
def test_run_attack_invariants(method):
    model, T, rng = linear_setup(16, 4, 3)
    x = T[0] + 0.3 * rng.standard_normal(16)
    goal = AttackGoal(x, model.predict(x))
    sur = perturb_twin(model, 0.2, rng)
    oracle = HardLabelOracle(model)
    cfg = AttackConfig(method, budget=800, estimator=EstimatorConfig(q=5))
    trace = run_attack(oracle, goal, [sur], cfg, make_rng(4))
    check_trace(trace, oracle, 800)
    assert trace.success
    assert abs(np.linalg.norm(trace.final_theta) - 1) < 1e-10
    assert trace.best_distortion == pytest.approx(trace.final_radius)
    assert model.predict(adversarial_point(goal, trace)) != goal.y
    first = trace.points[0][0]
    checkpoints = set(range(CHECKPOINT_EVERY, trace.queries, CHECKPOINT_EVERY))
    assert {c for c in checkpoints if c > first} <= {q for q, _ in trace.points}


def test_run_attack_reproducible():
    model, T, rng = linear_setup(16, 4, 5)
    sur = perturb_twin(model, 0.2, rng)
    goal = AttackGoal(T[0], 0)
    runs = [run_attack(HardLabelOracle(model), goal, [sur], AttackConfig("prior_opt", budget=600, seed=9))
            for _ in range(2)]
    assert runs[0].points == runs[1].points
    assert np.array_equal(runs[0].final_theta, runs[1].final_theta)


def test_budget_one():
    model, T, _ = linear_setup(8, 3, 6)
    oracle = HardLabelOracle(model)
    trace = run_attack(oracle, AttackGoal(T[0], 0), [], AttackConfig("sign_opt", budget=1))
    assert oracle.ledger.count == 1 == trace.queries
    assert "budget_exhausted" in trace.events
    assert not trace.success and trace.points == []
    assert trace.costs[0].partial and sum(c.declared for c in trace.costs) == 1


def test_targeted_run():
    model, T, rng = linear_setup(12, 4, 7)
    goal = AttackGoal(T[0], 0, target=2)
    oracle = HardLabelOracle(model)
    cfg = AttackConfig("prior_opt", init="targeted", exemplar=T[2], budget=600)
    trace = run_attack(oracle, goal, [perturb_twin(model, 0.2, rng)], cfg)
    check_trace(trace, oracle, 600)
    assert model.predict(adversarial_point(goal, trace)) == 2


def test_pgd_init_run():
    model, T, rng = linear_setup(12, 4, 8)
    oracle = HardLabelOracle(model)
    trace = run_attack(oracle, AttackGoal(T[0], 0), [model], AttackConfig("prior_opt", init="pgd", budget=300))
    check_trace(trace, oracle, 300)
    assert trace.success


def test_prior_kinds_need_surrogates():
    with pytest.raises(InvalidConfig):
        run_attack(HardLabelOracle(SoftmaxLinearModel(np.eye(2), np.zeros(2))), AttackGoal(np.ones(2), 0), [],
                   AttackConfig("prior_opt"))


def test_trace_record_checkpoints():
    tr = AttackTrace()
    tr.record(150, 5.0)
    tr.record(420, 4.0)
    tr.finish(430)
    assert tr.points == [(150, 5.0), (200, 5.0), (300, 5.0), (400, 5.0), (420, 4.0), (430, 4.0)]
