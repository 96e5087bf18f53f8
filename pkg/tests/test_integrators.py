import math

import numpy as np
import pytest

from expbench.integrators import (
    InstabilityError,
    METHODS,
    MethodConfig,
    integrate,
    exprb42_step,
    exprb_euler_step,
    rk2_step,
    rk4_step,
)
from expbench.linalg import dense_expm
from expbench.problems import AdvDiffProblem, advdiff_kappa

from conftest import DenseLinearProblem


def scalar_decay():
    return DenseLinearProblem(np.array([[-1.0]]))


class TestMethodConfig:
    def test_valid_methods(self):
        for m in METHODS:
            tol = None if m in ("rk2", "rk4") else 1e-6
            MethodConfig(method=m, tau=0.1, tol=tol)

    def test_backend_property(self):
        assert MethodConfig(method="exprb42-leja", tau=0.1, tol=1e-6).backend == "leja"
        assert MethodConfig(method="exprb-euler-krylov", tau=0.1, tol=1e-6).backend == "krylov"
        assert MethodConfig(method="rk4", tau=0.1).backend is None

    def test_validation(self):
        with pytest.raises(ValueError):
            MethodConfig(method="euler", tau=0.1)
        with pytest.raises(ValueError):
            MethodConfig(method="rk2", tau=-0.1)
        with pytest.raises(ValueError):
            MethodConfig(method="exprb42-leja", tau=0.1)  # missing tol


class TestRungeKuttaSteps:
    def test_rk2_scalar_decay(self):
        # midpoint rule on u' = -u, tau = 0.1: 1 - 0.1 + 0.005
        u1 = rk2_step(scalar_decay(), np.array([1.0]), 0.1)
        assert u1[0] == pytest.approx(0.905, abs=1e-15)

    def test_rk4_scalar_decay(self):
        # fourth-order Taylor polynomial of exp(-0.1) = 217161/240000
        u1 = rk4_step(scalar_decay(), np.array([1.0]), 0.1)
        assert u1[0] == pytest.approx(217161.0 / 240000.0, abs=1e-15)

    def test_zero_rhs_leaves_state_unchanged(self):
        pb = DenseLinearProblem(np.zeros((3, 3)))
        u = np.array([1.0, 2.0, 3.0])
        assert np.allclose(rk2_step(pb, u, 0.5), u)
        assert np.allclose(rk4_step(pb, u, 0.5), u)

    def test_rk4_equals_degree4_taylor_on_linear_problem(self):
        rng = np.random.default_rng(4)
        M = rng.standard_normal((8, 8)) * 0.3
        pb = DenseLinearProblem(M)
        u = rng.standard_normal(8)
        tau = 0.2
        T = np.eye(8)
        acc = np.eye(8)
        for k in range(1, 5):
            acc = acc @ (tau * M) / k
            T = T + acc
        assert np.linalg.norm(rk4_step(pb, u, tau) - T @ u) < 1e-13

    def test_rk2_empirical_order_two(self):
        pb = DenseLinearProblem(np.array([[-2.0, 1.0], [0.0, -1.0]]))
        u0 = np.array([1.0, 1.0])
        exact = dense_expm(1.0 * pb.M) @ u0
        errs = []
        for tau in (0.1, 0.05, 0.025):
            u = u0.copy()
            for _ in range(round(1.0 / tau)):
                u = rk2_step(pb, u, tau)
            errs.append(np.linalg.norm(u - exact))
        orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
        assert all(abs(o - 2.0) < 0.2 for o in orders)


class TestExponentialSteps:
    @pytest.mark.parametrize("backend", ["krylov", "leja"])
    def test_single_step_matches_exact_propagator(self, backend):
        pb = AdvDiffProblem(40, advdiff_kappa(("const", 1.0 / 80.0)))
        u0 = pb.initial_state()
        tau, tol = 0.125, 1e-9
        exact = dense_expm(tau * pb.operator.to_dense()) @ u0
        for step in (exprb_euler_step, exprb42_step):
            u1 = step(pb, u0, tau, tol, backend)
            assert np.linalg.norm(u1 - exact) / np.linalg.norm(exact) <= 10 * tol

    def test_zero_rhs_leaves_state_unchanged(self):
        pb = DenseLinearProblem(np.zeros((4, 4)))
        u = np.array([1.0, -1.0, 2.0, 0.5])
        u1 = exprb_euler_step(pb, u, 0.5, 1e-10, "krylov")
        assert np.allclose(u1, u, atol=1e-12)


class TestIntegrate:
    def test_t_end_equal_tau_is_one_step(self):
        pb = AdvDiffProblem(16, advdiff_kappa(("const", 1.0 / 80.0)))
        res = integrate(pb, MethodConfig(method="rk4", tau=0.25), pb.initial_state(), 0.25)
        assert res.steps_taken == 1

    def test_final_partial_step_is_shortened(self):
        pb = AdvDiffProblem(16, advdiff_kappa(("const", 1.0 / 80.0)))
        u0 = pb.initial_state()
        res = integrate(pb, MethodConfig(method="rk4", tau=0.1), u0, 0.25)
        assert res.steps_taken == 3
        # must land on t_end: two full steps plus one shortened 0.05 step
        u = u0.copy()
        for dt in (0.1, 0.1, 0.05):
            u = rk4_step(pb, u, dt)
        assert np.allclose(res.final_state, u, rtol=1e-12, atol=1e-14)

    def test_invalid_t_end(self):
        pb = AdvDiffProblem(8, advdiff_kappa(("const", 1.0 / 80.0)))
        with pytest.raises(ValueError):
            integrate(pb, MethodConfig(method="rk2", tau=0.1), pb.initial_state(), 0.0)

    def test_explicit_method_instability_detected(self):
        pb = AdvDiffProblem(159, advdiff_kappa(("const", 1.0 / 80.0)))
        with pytest.raises(InstabilityError) as excinfo:
            integrate(pb, MethodConfig(method="rk2", tau=0.25), pb.initial_state(), 1.0)
        assert excinfo.value.counter is not None
        assert excinfo.value.steps >= 1

    def test_rk4_single_step_cost_closed_form(self):
        # schedule on the 1D table: initial state copy (fetch + store = 2n),
        # 4 stencil products (4 * 2n), three 2-vector combinations for the
        # stage states (3 * 3n) and one 5-vector combination (6n): 25n total
        n = 159
        pb = AdvDiffProblem(n, advdiff_kappa(("const", 1.0 / 80.0)))
        res = integrate(pb, MethodConfig(method="rk4", tau=0.25), pb.initial_state(), 0.25)
        c = res.counter
        assert c.count("matvec") == 4
        assert c.count("lincomb") == 4
        assert c.lincomb_weight == 3 * 3 + 6
        assert c.count("fetch") == c.count("store") == 1
        assert c.total_cost() == 25 * n

    def test_counter_determinism(self):
        pb = AdvDiffProblem(32, advdiff_kappa(("const", 1.0 / 80.0)))
        cfg = MethodConfig(method="exprb-euler-krylov", tau=0.25, tol=1e-7)
        a = integrate(pb, cfg, pb.initial_state(), 1.0)
        b = integrate(pb, cfg, pb.initial_state(), 1.0)
        assert a.counter.events == b.counter.events
        assert np.array_equal(a.final_state, b.final_state)

    def test_diagnostics_present_for_exponential_methods(self):
        pb = AdvDiffProblem(32, advdiff_kappa(("const", 1.0 / 80.0)))
        cfg = MethodConfig(method="exprb42-krylov", tau=0.5, tol=1e-7)
        res = integrate(pb, cfg, pb.initial_state(), 1.0)
        assert len(res.diagnostics) == res.steps_taken
        assert all(d["phi_iterations"] > 0 for d in res.diagnostics)


class TestJacobianLinearity:
    def test_advdiff_jacobian_linearity(self):
        pb = AdvDiffProblem(24, advdiff_kappa("mixed"))
        rng = np.random.default_rng(6)
        u = rng.standard_normal(24)
        w1 = rng.standard_normal(24)
        w2 = rng.standard_normal(24)
        lhs = pb.jac_action(u, 2.0 * w1 - 3.0 * w2)
        rhs = 2.0 * pb.jac_action(u, w1) - 3.0 * pb.jac_action(u, w2)
        assert np.linalg.norm(lhs - rhs) <= 1e-12 * max(1.0, np.linalg.norm(rhs))
