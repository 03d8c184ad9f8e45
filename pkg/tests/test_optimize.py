from __future__ import annotations

import numpy as np
import pytest

from mfstackelberg.cascade import leader_objective, run_cascade
from mfstackelberg.fv import TimeSeries
from mfstackelberg.optimize import (
    CONVERGED,
    LINE_SEARCH_FAILED,
    MAX_ITER,
    SOLVER_ERROR,
    LineSearchFailure,
    armijo_search,
    objective_trace,
    optimize,
)
from mfstackelberg.problem import DECOUPLED_LEADER, ArmijoConfig, constant_kernel, desired_control, paper_spec


def half_sq(v: TimeSeries) -> float:
    return 0.5 * float(np.sum(v.values**2))


@pytest.fixture
def ones():
    t = np.linspace(0, 1, 11)
    return TimeSeries(t, np.ones(11))


class TestArmijo:
    def test_unit_step_reaches_minimizer(self, ones):
        d = TimeSeries(ones.times, -ones.values)
        sigma, f_new, payload = armijo_search(ones, d, half_sq(ones), -float(np.sum(d.values**2)), half_sq)
        assert sigma == 1.0 and f_new == 0.0 and payload is None

    def test_backtracks(self, ones):
        # overshooting direction: sigma = 1 lands at -3, sigma = 1/2 at -1 (no decrease), 1/4 at 0
        d = TimeSeries(ones.times, -4.0 * ones.values)
        sigma, f_new, _ = armijo_search(ones, d, half_sq(ones), float(np.sum(d.values * ones.values)), half_sq)
        assert sigma == 0.25 and f_new == 0.0

    def test_payload_passed_through(self, ones):
        d = TimeSeries(ones.times, -ones.values)
        _, _, payload = armijo_search(ones, d, half_sq(ones), -11.0, lambda v: (half_sq(v), "tag"))
        assert payload == "tag"

    def test_zero_direction_rejected(self, ones):
        with pytest.raises(ValueError, match="zero"):
            armijo_search(ones, TimeSeries(ones.times, np.zeros(11)), 1.0, -1.0, half_sq)

    def test_ascent_slope_rejected(self, ones):
        with pytest.raises(ValueError, match="slope"):
            armijo_search(ones, ones, 1.0, 0.5, half_sq)

    def test_failure_after_budget(self, ones):
        # an ascent direction paired with a (wrong) negative slope never satisfies the condition
        with pytest.raises(LineSearchFailure):
            armijo_search(ones, ones, half_sq(ones), -1.0, half_sq, ArmijoConfig(max_backtracks=5))

    def test_paper_first_step_decreases(self, coarse):
        from mfstackelberg.cascade import descent_direction

        v = TimeSeries.sample(coarse.v0, coarse.times)
        sol = run_cascade(coarse, v)
        f0 = leader_objective(coarse, v, sol.m_g)
        d = descent_direction(coarse, v, sol.m_g, sol.phi2)

        def obj(trial):
            return leader_objective(coarse, trial, run_cascade(coarse, trial).m_g)

        sigma, f_new, _ = armijo_search(v, d, f0, -float(np.sum(d.values**2)) * coarse.dt_out, obj)
        assert sigma > 0 and f_new < f0


class TestOptimize:
    def test_stationary_start(self, coarse):
        # decoupled leader: d = v_d - (1 + beta) v vanishes at v = v_d / (1 + beta)
        spec = coarse.with_(leader_obj=DECOUPLED_LEADER, beta=3.0, v0=lambda t: desired_control(t) / 4.0)
        res = optimize(spec)
        assert res.status == CONVERGED
        assert res.iterations == 1 and res.history[0].rel_change == 0.0

    def test_decoupled_reaches_closed_form(self, coarse):
        spec = coarse.with_(leader_obj=DECOUPLED_LEADER, beta=1.0, rel_tol=1e-10)
        res = optimize(spec)
        assert res.status == CONVERGED
        np.testing.assert_allclose(res.v_star.values, desired_control(spec.times) / 2.0, atol=1e-8)

    def test_monotone_history(self, coarse):
        res = optimize(coarse)
        obj = np.array([res.initial_objective] + [r.objective for r in res.history])
        assert np.all(np.diff(obj) <= 0)
        assert res.status in (CONVERGED, MAX_ITER)
        assert len(res.history) <= coarse.max_iter
        assert all(r.rel_change >= 0 and np.isfinite(r.objective) for r in res.history)

    def test_converged_status_honours_tolerance(self, coarse):
        res = optimize(coarse)
        if res.status == CONVERGED:
            assert res.history[-1].rel_change < coarse.rel_tol

    def test_max_iter(self, coarse):
        res = optimize(coarse.with_(max_iter=2))
        assert res.status == MAX_ITER and res.iterations == 2

    def test_deterministic(self, coarse):
        a, b = optimize(coarse), optimize(coarse)
        np.testing.assert_array_equal(objective_trace(a), objective_trace(b))
        np.testing.assert_array_equal(a.v_star.values, b.v_star.values)

    def test_line_search_failure_status(self, coarse):
        res = optimize(coarse.with_(armijo=ArmijoConfig(sigma_init=50.0, max_backtracks=0)))
        assert res.status == LINE_SEARCH_FAILED and "backtracks" in res.message

    def test_solver_error_status(self, coarse):
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = optimize(coarse.with_(gamma=1e-300))
        assert res.status == SOLVER_ERROR and res.solution is None

    def test_rejects_invalid_spec(self, coarse):
        with pytest.raises(ValueError, match="gamma"):
            optimize(coarse.with_(gamma=-1.0))
        with pytest.raises(ValueError, match="interaction"):
            optimize(coarse.with_(kernel=constant_kernel(1.0)))

    def test_solution_belongs_to_v_star(self, coarse):
        res = optimize(coarse.with_(max_iter=3))
        fresh = run_cascade(coarse, res.v_star)
        np.testing.assert_array_equal(fresh.m_g.values, res.solution.m_g.values)

    def test_regularization_shrinks_control(self):
        norms = [optimize(paper_spec(n_xi=125, n_t=50).with_(beta=b)).v_star.norm() for b in (0.1, 1.0, 10.0)]
        assert norms[0] >= norms[1] >= norms[2]


def test_objective_trace_shapes(coarse):
    res = optimize(coarse.with_(max_iter=3))
    tr = objective_trace(res)
    assert tr.shape == (3, 4)
    np.testing.assert_array_equal(tr[:, 0], [0, 1, 2])
    empty = optimize(coarse.with_(max_iter=0))
    assert objective_trace(empty).shape == (0, 4)
    assert empty.final_objective == empty.initial_objective
