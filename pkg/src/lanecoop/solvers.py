"""In-repo dense solvers for small convex programs.

Every optimization problem in this package is a convex quadratically
constrained quadratic program: a positive-semidefinite quadratic objective,
linear inequality rows, and a handful of convex quadratic inequalities.
``solve_qcqp`` handles them with an augmented-Lagrangian outer loop around a
damped-Newton inner minimizer; ``find_feasible`` minimizes the squared
constraint violation, which for a convex system yields an honest
infeasibility certificate when the residual cannot be driven to zero.

The objective is normalized internally so the penalty scheme behaves the same
for tiny disruption-scale objectives and order-one energy objectives; reported
residuals are in original units.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class Quadratic:
    """q(z) = 0.5 z'Pz + r'z + s with symmetric P (P may be None for affine)."""

    P: np.ndarray | None
    r: np.ndarray
    s: float

    def value(self, z: np.ndarray) -> float:
        out = float(self.r @ z) + self.s
        if self.P is not None:
            out += 0.5 * float(z @ (self.P @ z))
        return out

    def grad(self, z: np.ndarray) -> np.ndarray:
        if self.P is None:
            return self.r.copy()
        return self.P @ z + self.r


@dataclass(frozen=True)
class ConstraintSet:
    """Linear rows a_mat @ z <= b plus quadratic constraints q(z) <= 0."""

    a_mat: np.ndarray
    b: np.ndarray
    quads: tuple[Quadratic, ...] = ()

    @property
    def n_lin(self) -> int:
        return self.a_mat.shape[0]

    def lin_values(self, z: np.ndarray) -> np.ndarray:
        if self.n_lin == 0:
            return np.zeros(0)
        return self.a_mat @ z - self.b

    def quad_values(self, z: np.ndarray) -> np.ndarray:
        return np.array([q.value(z) for q in self.quads])

    def max_violation(self, z: np.ndarray) -> float:
        worst = 0.0
        if self.n_lin:
            worst = max(worst, float(np.max(self.lin_values(z), initial=0.0)))
        for q in self.quads:
            worst = max(worst, q.value(z))
        return max(worst, 0.0)


@dataclass
class SolveResult:
    z: np.ndarray
    objective: float
    status: str  # "optimal" or "max_iter"
    stationarity: float
    max_violation: float
    lam_lin: np.ndarray
    lam_quad: np.ndarray
    newton_iters: int

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


@dataclass
class FeasibilityResult:
    z: np.ndarray
    max_violation: float
    certified_infeasible: bool


def _chol_solve(h_mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    jitter = 0.0
    scale = float(np.trace(h_mat)) / max(1, h_mat.shape[0]) + 1.0
    for _ in range(12):
        try:
            chol = np.linalg.cholesky(
                h_mat + jitter * np.eye(h_mat.shape[0]) if jitter else h_mat
            )
            y = np.linalg.solve(chol, rhs)
            return np.linalg.solve(chol.T, y)
        except np.linalg.LinAlgError:
            jitter = max(jitter * 10.0, 1e-12 * scale)
    return np.linalg.lstsq(h_mat, rhs, rcond=None)[0]


def _newton_minimize(
    value: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    hess: Callable[[np.ndarray], np.ndarray],
    z0: np.ndarray,
    grad_tol: float,
    max_iter: int,
) -> tuple[np.ndarray, int]:
    z = z0.copy()
    f = value(z)
    stall = 0
    for it in range(max_iter):
        g = grad(z)
        if np.linalg.norm(g, ord=np.inf) <= grad_tol:
            return z, it
        step = _chol_solve(hess(z), -g)
        slope = float(g @ step)
        if slope > 0.0:
            step = -g
            slope = -float(g @ g)
        floor = 1e-15 * max(abs(f), 1e-12)
        if -slope <= floor:
            return z, it  # predicted decrease below float resolution
        alpha = 1.0
        accepted = False
        for _ in range(60):
            z_new = z + alpha * step
            f_new = value(z_new)
            if f_new <= f + 1e-4 * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            return z, it + 1
        if f - f_new <= 10.0 * floor:
            stall += 1
        else:
            stall = 0
        z, f = z_new, f_new
        if stall >= 2:
            return z, it + 1
    return z, max_iter


def find_feasible(
    cons: ConstraintSet, z0: np.ndarray, tol: float = 1e-9, max_iter: int = 300
) -> FeasibilityResult:
    """Minimize the squared violation of a convex system from z0.

    The violation functional is convex, so a stationary point with positive
    residual certifies infeasibility of the whole system.
    """

    def phi(z: np.ndarray) -> float:
        total = 0.0
        if cons.n_lin:
            viol = np.maximum(cons.lin_values(z), 0.0)
            total += 0.5 * float(viol @ viol)
        for q in cons.quads:
            gv = q.value(z)
            if gv > 0.0:
                total += 0.5 * gv * gv
        return total

    def phi_grad(z: np.ndarray) -> np.ndarray:
        g = np.zeros_like(z)
        if cons.n_lin:
            viol = np.maximum(cons.lin_values(z), 0.0)
            g += cons.a_mat.T @ viol
        for q in cons.quads:
            gv = q.value(z)
            if gv > 0.0:
                g += gv * q.grad(z)
        return g

    def phi_hess(z: np.ndarray) -> np.ndarray:
        n = z.shape[0]
        h_mat = 1e-10 * np.eye(n)
        if cons.n_lin:
            active = cons.lin_values(z) > 0.0
            if np.any(active):
                rows = cons.a_mat[active]
                h_mat = h_mat + rows.T @ rows
        for q in cons.quads:
            gv = q.value(z)
            if gv > 0.0:
                gq = q.grad(z)
                h_mat = h_mat + np.outer(gq, gq)
                if q.P is not None:
                    h_mat = h_mat + gv * q.P
        return h_mat

    z = z0.astype(float).copy()
    best = z.copy()
    best_viol = cons.max_violation(z)
    stalls = 0
    for _ in range(max_iter):
        if best_viol <= tol:
            break
        g = phi_grad(z)
        if np.linalg.norm(g, ord=np.inf) <= 1e-13 * (1.0 + phi(z)):
            break
        z, _ = _newton_minimize(phi, phi_grad, phi_hess, z, grad_tol=1e-14, max_iter=40)
        viol = cons.max_violation(z)
        if viol < best_viol:
            best, best_viol = z.copy(), viol
            stalls = 0
        else:
            stalls += 1
            if stalls >= 2:
                break
    # Certification margin sits well above the solve tolerance: boundary-active
    # systems routinely settle within ~1e-8 of zero violation, which must not
    # read as infeasibility.
    return FeasibilityResult(
        z=best, max_violation=best_viol, certified_infeasible=best_viol > max(100.0 * tol, 1e-6)
    )


def kkt_residual(
    objective: Quadratic,
    cons: ConstraintSet,
    z: np.ndarray,
    lam_lin: np.ndarray,
    lam_quad: np.ndarray,
) -> float:
    """Inf-norm of the stationarity residual of the original problem."""
    g = objective.grad(z)
    if cons.n_lin:
        g = g + cons.a_mat.T @ lam_lin
    for lam, q in zip(lam_quad, cons.quads):
        g = g + lam * q.grad(z)
    return float(np.linalg.norm(g, ord=np.inf))


def solve_qcqp(
    objective: Quadratic,
    cons: ConstraintSet,
    z0: np.ndarray,
    feas_tol: float = 1e-8,
    stat_tol: float = 1e-8,
    max_outer: int = 60,
    max_newton: int = 200,
) -> SolveResult:
    """Augmented-Lagrangian solve of a convex QCQP.

    ``feas_tol`` bounds the constraint violation and ``stat_tol`` the
    stationarity residual, both in the units of the problem as given. The
    objective is normalized internally (and its constant dropped) so the
    penalty scheme and the line search behave identically across objective
    scales.
    """
    n = z0.shape[0]
    scale_terms = [float(np.max(np.abs(objective.r), initial=0.0))]
    if objective.P is not None:
        scale_terms.append(float(np.max(np.abs(objective.P), initial=0.0)))
    sigma = max(max(scale_terms), 1e-12)
    q_scaled = Quadratic(
        P=None if objective.P is None else objective.P / sigma,
        r=objective.r / sigma,
        s=0.0,
    )
    grad_tol = max(stat_tol / sigma, 1e-12)

    quad_grads = [q.grad for q in cons.quads]
    lam_lin = np.zeros(cons.n_lin)
    lam_quad = np.zeros(len(cons.quads))
    rho = 10.0
    z = z0.astype(float).copy()
    total_newton = 0
    prev_viol = np.inf

    def lagrangian(zv: np.ndarray) -> float:
        val = q_scaled.value(zv)
        if cons.n_lin:
            shifted = np.maximum(lam_lin + rho * cons.lin_values(zv), 0.0)
            val += float(shifted @ shifted - lam_lin @ lam_lin) / (2.0 * rho)
        for lam, q in zip(lam_quad, cons.quads):
            shifted = max(lam + rho * q.value(zv), 0.0)
            val += (shifted * shifted - lam * lam) / (2.0 * rho)
        return val

    def lagrangian_grad(zv: np.ndarray) -> np.ndarray:
        g = q_scaled.grad(zv)
        if cons.n_lin:
            shifted = np.maximum(lam_lin + rho * cons.lin_values(zv), 0.0)
            g = g + cons.a_mat.T @ shifted
        for lam, q, gfun in zip(lam_quad, cons.quads, quad_grads):
            shifted = max(lam + rho * q.value(zv), 0.0)
            if shifted > 0.0:
                g = g + shifted * gfun(zv)
        return g

    def lagrangian_hess(zv: np.ndarray) -> np.ndarray:
        h_mat = np.full((n, n), 0.0)
        if q_scaled.P is not None:
            h_mat += q_scaled.P
        h_mat += 1e-12 * np.eye(n)
        if cons.n_lin:
            active = (lam_lin + rho * cons.lin_values(zv)) > 0.0
            if np.any(active):
                rows = cons.a_mat[active]
                h_mat = h_mat + rho * rows.T @ rows
        for lam, q, gfun in zip(lam_quad, cons.quads, quad_grads):
            shifted = max(lam + rho * q.value(zv), 0.0)
            if shifted > 0.0:
                gq = gfun(zv)
                h_mat = h_mat + rho * np.outer(gq, gq)
                if q.P is not None:
                    h_mat = h_mat + shifted * q.P
        return h_mat

    status = "max_iter"
    prev_grad = np.inf
    for _ in range(max_outer):
        z, iters = _newton_minimize(
            lagrangian, lagrangian_grad, lagrangian_hess, z, grad_tol=grad_tol, max_iter=max_newton
        )
        total_newton += iters
        if cons.n_lin:
            lam_lin = np.maximum(lam_lin + rho * cons.lin_values(z), 0.0)
        for j, q in enumerate(cons.quads):
            lam_quad[j] = max(lam_quad[j] + rho * q.value(z), 0.0)
        viol = cons.max_violation(z)
        # True stationarity of the scaled problem at the updated multipliers
        # (identical to the inner gradient at z before the update).
        kkt = q_scaled.grad(z)
        if cons.n_lin:
            kkt = kkt + cons.a_mat.T @ lam_lin
        for lam, gfun in zip(lam_quad, quad_grads):
            if lam > 0.0:
                kkt = kkt + lam * gfun(z)
        grad_norm = float(np.linalg.norm(kkt, ord=np.inf))
        if viol <= feas_tol and grad_norm <= 10.0 * grad_tol:
            status = "optimal"
            break
        if viol > max(feas_tol, 0.25 * prev_viol):
            rho = min(rho * 10.0, 1e14)
        elif grad_norm > 10.0 * grad_tol and grad_norm > 0.3 * prev_grad:
            # Primal feasible but multipliers converging slowly: stiffen, with
            # a lower cap so the Newton systems stay well conditioned.
            rho = min(rho * 10.0, 1e9)
        prev_viol = viol
        prev_grad = grad_norm

    lam_lin_orig = lam_lin * sigma
    lam_quad_orig = lam_quad * sigma
    stationarity = kkt_residual(objective, cons, z, lam_lin_orig, lam_quad_orig)
    max_violation = cons.max_violation(z)
    if status != "optimal" and max_violation <= feas_tol and stationarity <= stat_tol:
        status = "optimal"  # the scaled check stalled at the float floor
    return SolveResult(
        z=z,
        objective=objective.value(z),
        status=status,
        stationarity=stationarity,
        max_violation=max_violation,
        lam_lin=lam_lin_orig,
        lam_quad=lam_quad_orig,
        newton_iters=total_newton,
    )


def golden_section(
    fn: Callable[[float], float], lo: float, hi: float, iters: int = 40
) -> tuple[float, float]:
    """Golden-section refinement on [lo, hi]; returns the best evaluated point.

    The function may return +inf inside infeasible pockets; the best finite
    evaluation seen is tracked, so the result never regresses below the
    starting bracket's interior samples.
    """
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = float(lo), float(hi)
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = fn(c), fn(d)
    best_x, best_f = (c, fc) if fc <= fd else (d, fd)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = fn(c)
            if fc < best_f:
                best_x, best_f = c, fc
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = fn(d)
            if fd < best_f:
                best_x, best_f = d, fd
    return best_x, best_f
