import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import target_from
from modules.errors import ConfigError, InvalidSpec, NotATree
from modules.geometry import GeometrySpec, build
from modules.optimizer import (
    ConvergedReason,
    OptimConfig,
    flatten,
    minimize,
    run_trial,
    unflatten,
    write_history_csv,
)
from modules.surrogate import generate_full_random, generate_hidden_tn


def quadratic(c):
    def objective(x):
        d = x - c
        return float(d @ d), 2.0 * d
    return objective


def rosenbrock(x):
    a, b = x
    value = (1 - a) ** 2 + 100 * (b - a ** 2) ** 2
    grad = np.array([-2 * (1 - a) - 400 * a * (b - a ** 2), 200 * (b - a ** 2)])
    return value, grad


def assert_monotone(values, slack=1e-12):
    for before, after in zip(values, values[1:]):
        assert after <= before + slack


class TestOptimConfig:

    def test_defaults(self):
        cfg = OptimConfig()
        assert cfg.memory_pairs == 10
        assert cfg.max_iters == 1000

    def test_wolfe_constants(self):
        with pytest.raises(ConfigError):
            OptimConfig(wolfe_c1=0.9, wolfe_c2=0.1)

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            OptimConfig.from_dict({"learning_rate": 0.1})

    def test_dict_round_trip(self):
        cfg = OptimConfig(max_iters=7)
        assert OptimConfig.from_dict(cfg.to_dict()) == cfg


class TestMinimize:

    def test_quadratic(self, rng):
        c = rng.normal(size=5)
        x, trace = minimize(quadratic(c), np.zeros(5))
        assert trace.iterations <= 3
        assert trace.reason is ConvergedReason.GRAD_TOL
        assert np.max(np.abs(2.0 * (x - c))) <= 1e-12
        assert_allclose(x, c, atol=1e-12)

    def test_rosenbrock(self):
        x, trace = minimize(rosenbrock, np.array([-1.2, 1.0]), OptimConfig(max_iters=100))
        assert rosenbrock(x)[0] <= 1e-10
        assert trace.iterations <= 100
        assert_monotone(trace.values)

    def test_nan_after_start(self):
        x0 = np.array([1.0, 2.0])

        def objective(x):
            if np.array_equal(x, x0):
                return 1.0, np.array([1.0, 1.0])
            return float("nan"), np.array([np.nan, np.nan])

        x, trace = minimize(objective, x0)
        assert trace.reason is ConvergedReason.LINE_SEARCH_FAIL
        assert trace.iterations == 0
        assert np.array_equal(x, x0)

    def test_nan_at_start(self):
        x, trace = minimize(lambda x: (float("nan"), x), np.ones(3))
        assert trace.reason is ConvergedReason.LINE_SEARCH_FAIL
        assert trace.iterations == 0

    def test_max_iters(self):
        _, trace = minimize(rosenbrock, np.array([-1.2, 1.0]), OptimConfig(max_iters=3))
        assert trace.reason is ConvergedReason.MAX_ITERS
        assert trace.iterations == 3

    def test_zero_iterations(self):
        x, trace = minimize(rosenbrock, np.array([-1.2, 1.0]), OptimConfig(max_iters=0))
        assert trace.iterations == 0
        assert_allclose(x, [-1.2, 1.0])

    def test_callback_per_accepted_step(self):
        seen = []
        _, trace = minimize(rosenbrock, np.array([-1.2, 1.0]), OptimConfig(max_iters=10),
                            callback=lambda x: seen.append(x.copy()))
        assert len(seen) == trace.iterations


class TestFlatten:

    def test_unflatten_restores(self, mps6):
        x = flatten(mps6)
        assert x.size == sum(t.size for t in mps6.nodes.values())
        back = unflatten(mps6, x)
        for node in mps6.node_ids:
            assert np.array_equal(back.nodes[node].data, mps6.nodes[node].data)

    def test_order_is_node_id_then_row_major(self, mps6):
        x = flatten(mps6)
        assert np.array_equal(x[:mps6.nodes[0].size], mps6.nodes[0].data.ravel())


class TestRunTrial:

    def test_product_state(self):
        target = generate_hidden_tn(GeometrySpec("mps", 6, 1), seed=1)
        result = run_trial(target, GeometrySpec("mps", 6, 1), seed=2)
        assert result.final_infidelity <= 1e-8

    def test_dense_representable(self):
        target = generate_full_random(6, seed=4)
        result = run_trial(target, GeometrySpec("dense", 6, 8), seed=5)
        assert result.final_infidelity <= 1e-6

    def test_history_and_final_value(self):
        spec = GeometrySpec("balanced", 6, 4)
        target = generate_full_random(6, seed=0)
        result = run_trial(target, spec, seed=3, cfg=OptimConfig(max_iters=30))
        assert len(result.history) == result.iterations + 1
        assert_monotone([loss for loss, _ in result.history])
        # starts on the positive overlap side
        assert result.history[0][1] <= 1.0

    def test_reported_infidelity_is_recomputed(self):
        spec = GeometrySpec("mps", 6, 2)
        target = generate_full_random(6, seed=1)
        result = run_trial(target, spec, seed=1, cfg=OptimConfig(max_iters=5))
        assert abs(result.history[-1][1] - result.final_infidelity) <= 1e-14

    def test_metrics(self):
        spec = GeometrySpec("mps", 8, 4)
        result = run_trial(generate_full_random(8, seed=0), spec, compact=True, seed=0,
                           cfg=OptimConfig(max_iters=2))
        assert result.compact
        assert result.diameter == 5
        assert result.largest_tensor == 2 * 4 * 4
        assert result.peak_elems >= result.largest_tensor
        assert result.contraction_flops > 0

    def test_deterministic(self):
        spec = GeometrySpec("star", 6, 4, k=2)
        target = generate_full_random(6, seed=9)
        a = run_trial(target, spec, seed=9, cfg=OptimConfig(max_iters=20))
        b = run_trial(target, spec, seed=9, cfg=OptimConfig(max_iters=20))
        assert a.history == b.history
        assert a.final_infidelity == b.final_infidelity

    def test_squared_infidelity_loss(self):
        target = generate_full_random(6, seed=2)
        result = run_trial(target, GeometrySpec("dense", 6, 8), seed=2, loss="squared_infidelity")
        assert result.final_infidelity <= 1e-6

    def test_size_mismatch(self):
        with pytest.raises(InvalidSpec):
            run_trial(generate_full_random(5, seed=0), GeometrySpec("mps", 6, 2))

    def test_peps_cannot_be_compact(self):
        with pytest.raises(NotATree):
            run_trial(generate_full_random(4, seed=0), GeometrySpec("peps", 4, 2), compact=True)

    def test_history_csv(self, tmp_path):
        result = run_trial(generate_full_random(4, seed=0), GeometrySpec("mps", 4, 2),
                           cfg=OptimConfig(max_iters=3))
        text = write_history_csv(result)
        lines = text.splitlines()
        assert lines[0] == "iteration,loss,infidelity"
        assert len(lines) == result.iterations + 2
        write_history_csv(result, tmp_path / "history.csv")
        assert (tmp_path / "history.csv").read_text() == text

    @pytest.mark.slow
    def test_mps_representable_target(self):
        spec = GeometrySpec("mps", 6, 8)
        target = target_from(build(spec, seed=21))
        result = run_trial(target, spec, seed=22)
        assert result.final_infidelity <= 1e-6


@pytest.mark.slow
class TestTrainingRuns:

    def test_dense_random_target(self):
        target = generate_full_random(8, seed=100)
        results = [run_trial(target, GeometrySpec("dense", 8, 16), seed=s) for s in range(20)]
        assert sum(r.final_infidelity <= 1e-5 for r in results) >= 18
        for r in results:
            assert_monotone([loss for loss, _ in r.history])

    @pytest.mark.parametrize("family", ["mps", "antenna", "balanced", "star", "dense"])
    def test_exact_representation(self, family):
        target = generate_full_random(8, seed=200)
        spec = GeometrySpec(family, 8, 16)
        results = [run_trial(target, spec, seed=s) for s in range(20)]
        assert sum(r.final_infidelity <= 1e-4 for r in results) >= 16

    def test_peps_exact_representation(self):
        # 2x3 grid at chi_S = 8; the 8-site grid at chi 16 takes minutes per trial
        target = generate_full_random(6, seed=250)
        spec = GeometrySpec("peps", 6, 8)
        results = [run_trial(target, spec, seed=s) for s in range(3)]
        assert sum(r.final_infidelity <= 1e-4 for r in results) >= 2
        for r in results:
            assert_monotone([loss for loss, _ in r.history])

    def test_no_gain_beyond_schmidt_bound(self):
        target = generate_full_random(8, seed=300)
        at_bound = [run_trial(target, GeometrySpec("mps", 8, 16), seed=s).final_infidelity for s in range(10)]
        beyond = [run_trial(target, GeometrySpec("mps", 8, 32), seed=s).final_infidelity for s in range(10)]
        assert min(beyond) >= min(at_bound) / 10
        rate_at = np.mean(np.array(at_bound) < 1e-3)
        rate_beyond = np.mean(np.array(beyond) < 1e-3)
        assert rate_beyond <= rate_at + 0.1
