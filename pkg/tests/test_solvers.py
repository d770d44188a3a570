import numpy as np
import pytest

from lanecoop.solvers import (
    ConstraintSet,
    Quadratic,
    find_feasible,
    golden_section,
    kkt_residual,
    solve_qcqp,
)


def box_constraints(n, lo, hi):
    eye = np.eye(n)
    return ConstraintSet(
        a_mat=np.vstack([eye, -eye]),
        b=np.concatenate([np.full(n, hi), np.full(n, -lo)]),
    )


class TestQP:
    def test_projection_onto_box(self):
        # min 0.5||z - a||^2 with a above the box: solution is the clip.
        a = np.array([2.0, -3.0, 0.4])
        obj = Quadratic(P=np.eye(3), r=-a, s=0.5 * float(a @ a))
        cons = box_constraints(3, -1.0, 1.0)
        res = solve_qcqp(obj, cons, np.zeros(3))
        assert res.ok
        np.testing.assert_allclose(res.z, np.clip(a, -1, 1), atol=1e-7)
        assert res.stationarity <= 1e-6
        assert res.max_violation <= 1e-7

    def test_equality_like_halfspace(self):
        # min 0.5||z||^2 s.t. sum(z) >= 1: uniform split.
        n = 4
        obj = Quadratic(P=np.eye(n), r=np.zeros(n), s=0.0)
        cons = ConstraintSet(a_mat=-np.ones((1, n)), b=np.array([-1.0]))
        res = solve_qcqp(obj, cons, np.zeros(n))
        assert res.ok
        np.testing.assert_allclose(res.z, np.full(n, 0.25), atol=1e-7)

    def test_tiny_objective_scale(self):
        # Disruption-sized coefficients must not change convergence behavior.
        scale = 1e-5
        a = np.array([3.0, 3.0])
        obj = Quadratic(P=scale * np.eye(2), r=-scale * a, s=0.5 * scale * float(a @ a))
        cons = box_constraints(2, -1.0, 1.0)
        res = solve_qcqp(obj, cons, np.zeros(2))
        assert res.ok
        np.testing.assert_allclose(res.z, [1.0, 1.0], atol=1e-6)


class TestQCQP:
    def test_disk_constrained_minimum(self):
        # min (x-2)^2 + y^2 s.t. x^2 + y^2 <= 1 -> (1, 0)
        obj = Quadratic(P=2 * np.eye(2), r=np.array([-4.0, 0.0]), s=4.0)
        disk = Quadratic(P=2 * np.eye(2), r=np.zeros(2), s=-1.0)
        cons = ConstraintSet(a_mat=np.zeros((0, 2)), b=np.zeros(0), quads=(disk,))
        res = solve_qcqp(obj, cons, np.zeros(2))
        assert res.ok
        np.testing.assert_allclose(res.z, [1.0, 0.0], atol=1e-6)
        assert res.objective == pytest.approx(1.0, abs=1e-6)
        assert kkt_residual(obj, cons, res.z, res.lam_lin, res.lam_quad) <= 1e-6

    def test_solution_dominates_feasible_samples(self, rng):
        obj = Quadratic(P=np.diag([2.0, 4.0]), r=np.array([1.0, -2.0]), s=0.0)
        disk = Quadratic(P=2 * np.eye(2), r=np.array([0.4, 0.0]), s=-2.0)
        cons = ConstraintSet(a_mat=np.array([[1.0, 1.0]]), b=np.array([0.5]), quads=(disk,))
        res = solve_qcqp(obj, cons, np.zeros(2))
        assert res.ok
        samples = rng.uniform(-2, 2, size=(4000, 2))
        feasible = samples[
            (samples @ cons.a_mat[0] <= 0.5)
            & (np.einsum("ij,ij->i", samples, samples) + 0.4 * samples[:, 0] - 2.0 <= 0)
        ]
        assert len(feasible) > 100
        values = 0.5 * np.einsum("ij,jk,ik->i", feasible, obj.P, feasible) + feasible @ obj.r
        assert res.objective <= float(values.min()) + 1e-9


class TestFeasibility:
    def test_recovers_a_feasible_point(self):
        cons = box_constraints(2, 0.0, 1.0)
        res = find_feasible(cons, np.array([5.0, -4.0]))
        assert not res.certified_infeasible
        assert res.max_violation <= 1e-9

    def test_certifies_infeasibility(self):
        # x <= 0 and x >= 1 cannot both hold.
        cons = ConstraintSet(
            a_mat=np.array([[1.0], [-1.0]]), b=np.array([0.0, -1.0])
        )
        res = find_feasible(cons, np.array([0.3]))
        assert res.certified_infeasible
        assert res.max_violation >= 0.4

    def test_quadratic_infeasibility(self):
        # unit disk intersected with x >= 2
        disk = Quadratic(P=2 * np.eye(2), r=np.zeros(2), s=-1.0)
        cons = ConstraintSet(
            a_mat=np.array([[-1.0, 0.0]]), b=np.array([-2.0]), quads=(disk,)
        )
        res = find_feasible(cons, np.zeros(2))
        assert res.certified_infeasible


class TestGoldenSection:
    def test_quadratic_minimum(self):
        x, fx = golden_section(lambda x: (x - 1.234) ** 2, 0.0, 3.0, iters=48)
        assert x == pytest.approx(1.234, abs=1e-5)
        assert fx == pytest.approx(0.0, abs=1e-9)

    def test_tolerates_infinite_pockets(self):
        def fn(x):
            return float("inf") if x < 1.0 else (x - 2.0) ** 2

        x, fx = golden_section(fn, 0.0, 4.0, iters=60)
        assert x == pytest.approx(2.0, abs=1e-4)
        assert fx <= 1e-7
