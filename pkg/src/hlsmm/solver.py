"""Proximal alternating minimization for the rank-constrained 0/1-loss classifier.

Each iteration cycles three blocks:

  W: one projected-gradient step on the smooth part, truncated to rank r by
     SVD, with a backtracked step size accepted only when it satisfies the
     proximal decrease test  h(W+) + tau1/2 ||W+ - W||^2 <= h(W);
  z: the exact per-coordinate global minimizer of the slack subproblem,
     a hard threshold around the weighted center (2 sigma v + tau2 z) / (2 sigma + tau2);
  b: the closed-form minimizer of the damped scalar quadratic.

The z and b blocks minimize their subproblems exactly, so together with the
W acceptance test every iteration decreases the objective by at least
min(tau1, tau2, tau3)/2 times the squared block steps.  That inequality is
asserted at runtime (exact z mode); violation raises NumericalError.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NumericalError
from .linalg import project_rank, svd
from .model import Dataset, Hyperparams, ModelState, SolverTrace, heaviside_count

# Slack allowed on the monotone-objective and sufficient-decrease assertions.
MONOTONE_SLACK = 1e-10
DECREASE_SLACK = 1e-9


@dataclass(frozen=True)
class FitResult:
    """Output of :func:`fit`: final iterate, per-iteration trace, echo of inputs."""

    model: ModelState
    trace: SolverTrace
    hyperparams_echo: Hyperparams
    wall_time: float

    @property
    def converged(self) -> bool:
        return self.trace.status == "converged"


class _Problem:
    """Arrays reused across iterations for one (dataset, sigma) pair.

    F stacks y_i * vec(X_i) row-wise, so that
      margins   v = 1 - (F w + b y)
      gradient  sum_i (z_i - v_i) y_i X_i = unflatten(F.T (z - v))
    """

    def __init__(self, data: Dataset, sigma: float):
        self.data = data
        self.sigma = float(sigma)
        self.shape = data.sample_shape
        self.m = data.m
        self.X = data.xs.reshape(data.m, -1)
        self.ys = data.ys.astype(np.float64)
        self.F = self.ys[:, None] * self.X
        # Trace bound on the Lipschitz constant of grad h.
        self.lipschitz = 1.0 + 2.0 * self.sigma * float(np.dot(self.X.ravel(), self.X.ravel()))

    def margins(self, w: np.ndarray, b: float) -> np.ndarray:
        return 1.0 - (self.F @ w.ravel() + b * self.ys)

    def smooth(self, w: np.ndarray, z: np.ndarray, b: float) -> float:
        """h(W) = 1/2 ||W||^2 + sigma ||z - v(W, b)||^2 (loss term excluded)."""
        gap = z - self.margins(w, b)
        return 0.5 * float(np.dot(w.ravel(), w.ravel())) + self.sigma * float(gap @ gap)

    def objective(self, w: np.ndarray, z: np.ndarray, b: float, beta: float) -> float:
        return self.smooth(w, z, b) + beta * heaviside_count(z)

    def gradient(self, w: np.ndarray, z: np.ndarray, b: float) -> np.ndarray:
        gap = z - self.margins(w, b)
        return w + 2.0 * self.sigma * (self.F.T @ gap).reshape(self.shape)

    def cauchy_step(self, grad: np.ndarray) -> float:
        """Exact minimizer of alpha -> h(W - alpha grad); h is quadratic in W."""
        gn2 = float(np.dot(grad.ravel(), grad.ravel()))
        if gn2 == 0.0:
            return 1.0 / self.lipschitz
        fg = self.F @ grad.ravel()
        curvature = gn2 + 2.0 * self.sigma * float(fg @ fg)
        if not np.isfinite(curvature) or curvature <= 0.0:
            return 1.0 / self.lipschitz
        return gn2 / curvature


def grad_h(w, z, b: float, data: Dataset, sigma: float) -> np.ndarray:
    """Gradient of the smooth part of the W-subproblem at the expansion point.

    grad h(W) = W + 2 sigma sum_i y_i (z_i - 1 + y_i <W, X_i> + b y_i) X_i.
    The proximal term tau1/2 ||W - W^k||^2 contributes nothing at W = W^k.
    """
    if not sigma > 0:
        raise InvalidArgumentError("sigma must be positive")
    w = np.asarray(w, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64).ravel()
    if w.shape != data.sample_shape:
        raise InvalidArgumentError(
            f"w shape {w.shape} does not match sample shape {data.sample_shape}"
        )
    if z.shape[0] != data.m:
        raise InvalidArgumentError("slack length does not match sample count")
    return _Problem(data, sigma).gradient(w, z, float(b))


def _w_step(problem: _Problem, w: np.ndarray, z: np.ndarray, b: float,
            hp: Hyperparams, iteration: int) -> tuple[np.ndarray, int]:
    """One accepted projected-gradient step; returns (new_w, halvings used).

    Falls back to new_w = w (a stall) when no step passes the decrease test
    within ``max_halvings``.
    """
    grad = problem.gradient(w, z, b)
    if not np.isfinite(grad).all():
        raise NumericalError("non-finite gradient in W block", iteration)
    policy = hp.step
    if policy.kind == "fixed":
        alpha = policy.alpha0 if policy.alpha0 is not None else (
            1.0 / (problem.lipschitz + hp.tau1))
        try:
            return project_rank(w - alpha * grad, hp.rank), 0
        except (InvalidArgumentError, np.linalg.LinAlgError) as exc:
            raise NumericalError(f"rank projection failed: {exc}", iteration) from exc

    alpha = policy.alpha0 if policy.alpha0 is not None else problem.cauchy_step(grad)
    h_ref = problem.smooth(w, z, b)
    for halvings in range(policy.max_halvings + 1):
        try:
            candidate = project_rank(w - alpha * grad, hp.rank)
        except (InvalidArgumentError, np.linalg.LinAlgError) as exc:
            raise NumericalError(f"rank projection failed: {exc}", iteration) from exc
        step = candidate - w
        decrease_ok = (problem.smooth(candidate, z, b)
                       + 0.5 * hp.tau1 * float(np.dot(step.ravel(), step.ravel()))
                       <= h_ref)
        if decrease_ok:
            return candidate, halvings
        alpha *= policy.shrink
    return w, policy.max_halvings  # stalled block: keep the previous iterate


def _z_step(problem: _Problem, w_new: np.ndarray, z: np.ndarray, b: float,
            hp: Hyperparams) -> np.ndarray:
    v = problem.margins(w_new, b)
    sigma, tau2, beta = hp.sigma, hp.tau2, hp.beta
    if hp.z_update == "exact":
        # Exact minimizer of beta ||z_+||_0 + sigma ||z - v||^2 + tau2/2 ||z - z^k||^2:
        # complete the square (curvature 2 sigma + tau2), then hard-threshold.
        center = (2.0 * sigma * v + tau2 * z) / (2.0 * sigma + tau2)
        threshold = np.sqrt(2.0 * beta / (2.0 * sigma + tau2))
    else:
        # Constants as printed in the source algorithm; kept for comparison.
        # Not the subproblem minimizer: the center weights sum to more than one
        # and the threshold is wider, so no descent guarantee applies.
        center = (2.0 * sigma * v + tau2 * z) / (sigma + tau2)
        threshold = np.sqrt(4.0 * beta / (sigma + tau2))
    return np.where((center > 0) & (center <= threshold), 0.0, center)


def _b_step(problem: _Problem, w_new: np.ndarray, z_new: np.ndarray, b: float,
            hp: Hyperparams) -> float:
    # First-order condition of  sigma ||z - 1 + A(W) + b y||^2 + tau3/2 (b - b^k)^2.
    sigma, tau3 = hp.sigma, hp.tau3
    scores = problem.X @ w_new.ravel()  # <W, X_i>
    residual_no_b = float(problem.ys @ (z_new - 1.0)) + float(scores.sum())
    return (tau3 * b - 2.0 * sigma * residual_no_b) / (2.0 * sigma * problem.m + tau3)


def update_w(state: ModelState, data: Dataset, hp: Hyperparams) -> tuple[np.ndarray, int]:
    """Public one-shot W update; see the module docstring for the scheme."""
    hp.validate_for_shape(*data.sample_shape)
    problem = _Problem(data, hp.sigma)
    return _w_step(problem, state.w, state.z, state.b, hp, state.iter)


def update_z(state: ModelState, data: Dataset, hp: Hyperparams) -> np.ndarray:
    """Exact (or paper-mode) slack update, assuming ``state.w`` is the new W."""
    problem = _Problem(data, hp.sigma)
    return _z_step(problem, state.w, state.z, state.b, hp)


def update_b(state: ModelState, data: Dataset, hp: Hyperparams) -> float:
    """Closed-form bias update, assuming W and z are already updated."""
    problem = _Problem(data, hp.sigma)
    return _b_step(problem, state.w, state.z, state.b, hp)


def fit(data: Dataset, hp: Hyperparams, init: ModelState | None = None) -> FitResult:
    """Run the three-block scheme until the step/objective tolerances or maxit.

    Stops when ||W_new - W||_F / max(1, ||W||_F) <= tol_step and the objective
    change is at most tol_obj.  The returned model always satisfies
    rank(W) <= hp.rank; the trace objective is non-increasing (exact z mode).

    Raises
    ------
    InvalidArgumentError
        Missing label class, shape/rank bound violations, bad init shapes.
    NumericalError
        Non-finite values or a broken descent inequality, with the iteration.
    """
    t_start = time.perf_counter()
    data.require_both_labels()
    hp.validate_for_shape(*data.sample_shape)

    state = init if init is not None else ModelState.initial(data)
    if state.w.shape != data.sample_shape or state.z.shape[0] != data.m:
        raise InvalidArgumentError("init state does not match dataset shapes")
    if init is not None and svd(state.w).rank > hp.rank:
        # A stalled W block keeps the previous iterate, so feasibility of the
        # returned model requires a feasible start.
        raise InvalidArgumentError(
            f"init weight matrix has rank {svd(state.w).rank} > bound {hp.rank}")

    problem = _Problem(data, hp.sigma)
    w, z, b = state.w.copy(), state.z.copy(), state.b
    g = problem.objective(w, z, b, hp.beta)
    tau_min = min(hp.tau1, hp.tau2, hp.tau3)
    enforce_descent = hp.z_update == "exact"

    trace = SolverTrace()
    trace.append(g, 0.0, 0.0, 0.0, 0)

    iterations = 0
    for k in range(1, hp.maxit + 1):
        # Overflow warnings are silenced: divergence (possible in the
        # paper-mode z-update) is caught by the finiteness guards below.
        with np.errstate(over="ignore", invalid="ignore"):
            w_new, halvings = _w_step(problem, w, z, b, hp, k)
            z_new = _z_step(problem, w_new, z, b, hp)
            b_new = _b_step(problem, w_new, z_new, b, hp)
            if not (np.isfinite(w_new).all() and np.isfinite(z_new).all()
                    and np.isfinite(b_new)):
                raise NumericalError("iterate became non-finite", k)
            g_new = problem.objective(w_new, z_new, b_new, hp.beta)
        if not np.isfinite(g_new):
            raise NumericalError("objective became non-finite", k)

        dw = float(np.linalg.norm(w_new - w))
        dz = float(np.linalg.norm(z_new - z))
        db = abs(b_new - b)
        if enforce_descent:
            if g_new > g + MONOTONE_SLACK:
                raise NumericalError(
                    f"objective increased from {g:.6e} to {g_new:.6e}", k)
            decrease = g - g_new
            required = 0.5 * tau_min * (dw * dw + dz * dz + db * db)
            if decrease < required - DECREASE_SLACK:
                raise NumericalError(
                    f"sufficient decrease violated: {decrease:.3e} < {required:.3e}", k)

        trace.append(g_new, dw, dz, db, halvings)
        w_norm = float(np.linalg.norm(w))
        stop = (dw / max(1.0, w_norm) <= hp.tol_step) and (abs(g_new - g) <= hp.tol_obj)
        w, z, b, g = w_new, z_new, b_new, g_new
        iterations = k
        if stop:
            trace.status = "converged"
            break
    else:
        trace.status = "max_iter"

    final = ModelState(w=w, b=b, z=z, iter=iterations)
    return FitResult(model=final, trace=trace,
                     hyperparams_echo=hp, wall_time=time.perf_counter() - t_start)
