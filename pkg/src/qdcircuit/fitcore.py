"""
Damped least-squares (Levenberg-Marquardt) engine.

All fits in :mod:`qdcircuit.analyses` and :mod:`qdcircuit.localizer` run
through :func:`nlls_fit`.  Bounds are enforced by clamping each trial step
onto the box.  Covariance is ``s^2 (J^T J)^-1`` with ``s^2 = SSR / (n - p)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NonFiniteResidualError, SingularNormalMatrixError, ValidationError
from .types import FitResult

DEFAULT_GRADIENT_TOL = 1e-8
DEFAULT_STEP_TOL = 1e-10
DEFAULT_MAX_ITER = 200
LAMBDA0 = 1e-3
LAMBDA_FACTOR = 10.0
_LAMBDA_MAX = 1e16
_SINGULAR_RCOND = 1e-13
# finite-difference columns carry ~1e-11 relative noise, so rank needs a looser cut
_SINGULAR_RCOND_FD = 1e-8
_RESIDUAL_FLOOR = 1e-3
# residuals below this fraction of the model scale ||J diag|p|| are round-off
_ROUNDOFF_FLOOR = 1e-6
# relative cost changes below this are indistinguishable from summation order
_ROUNDOFF_COST = 1e-13


@dataclass(frozen=True)
class ModelSpec:
    """A least-squares problem.

    Parameters
    ----------
    residual : callable
        ``residual(p) -> r`` with ``len(r) >= len(p)``.
    initial : sequence of float
    lower, upper : sequence of float, optional
        Box bounds; ``-inf``/``inf`` entries leave a side open.
    jacobian : callable, optional
        ``jacobian(p) -> (n, p)`` derivative of the residual.  Central
        finite differences are used when omitted.
    names : sequence of str, optional
    """

    residual: Callable[[np.ndarray], np.ndarray]
    initial: Sequence[float]
    lower: Optional[Sequence[float]] = None
    upper: Optional[Sequence[float]] = None
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    names: Optional[Sequence[str]] = None

    @property
    def n_params(self):
        return len(self.initial)

    def bounds(self):
        p = self.n_params
        lo = np.full(p, -np.inf) if self.lower is None else np.asarray(self.lower, float)
        hi = np.full(p, np.inf) if self.upper is None else np.asarray(self.upper, float)
        if lo.shape != (p,) or hi.shape != (p,):
            raise ValidationError("bounds", "must have one entry per parameter")
        if np.any(lo > hi):
            raise ValidationError("bounds", "lower must not exceed upper")
        return lo, hi

    def param_names(self):
        if self.names is None:
            return tuple(f"p{i}" for i in range(self.n_params))
        if len(self.names) != self.n_params:
            raise ValidationError("names", "must have one entry per parameter")
        return tuple(self.names)


def numeric_jacobian(model, params, rel_step=6e-6):
    """Central finite-difference Jacobian of ``model.residual`` (or of a bare
    callable) at ``params``."""
    fun = model.residual if isinstance(model, ModelSpec) else model
    p = np.asarray(params, dtype=float)
    r0 = np.asarray(fun(p), dtype=float)
    if not np.all(np.isfinite(r0)):
        raise NonFiniteResidualError("residual is not finite at params")
    jac = np.empty((r0.size, p.size))
    for j in range(p.size):
        h = rel_step * max(abs(p[j]), 1.0)
        up, dn = p.copy(), p.copy()
        up[j] += h
        dn[j] -= h
        r_up = np.asarray(fun(up), dtype=float)
        r_dn = np.asarray(fun(dn), dtype=float)
        if not (np.all(np.isfinite(r_up)) and np.all(np.isfinite(r_dn))):
            raise NonFiniteResidualError(f"residual not finite when perturbing parameter {j}")
        jac[:, j] = (r_up - r_dn) / (up[j] - dn[j])
    return jac


def gradient_measure(jac, resid, free=None, floor=1.0):
    """Scale-free gradient norm: per-column cosine between residual and
    Jacobian.  The residual norm is floored at ``floor`` so that exact fits,
    whose residual is pure round-off, still report convergence.  Columns
    outside ``free`` (active bounds) are ignored."""
    g = jac.T @ resid
    col = np.linalg.norm(jac, axis=0)
    denom = col * max(np.linalg.norm(resid), floor)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(denom > 0, np.abs(g) / denom, 0.0)
    if free is not None:
        ratio = ratio[free]
    return float(np.max(ratio)) if ratio.size else 0.0


def _roundoff_finish(resid, jac, p, r, cost, J, free, lo, hi):
    """Undamped Gauss-Newton step for a fit that no damped step can improve.

    When the predicted cost reduction is below float resolution of the cost,
    the fit sits at its round-off minimum: take the step and report
    convergence.  Otherwise leave ``p`` unchanged and not converged."""
    Jf = J[:, free]
    g = Jf.T @ r
    step_free = np.linalg.lstsq(Jf, -r, rcond=None)[0]
    predicted = -(g @ step_free + 0.5 * step_free @ (Jf.T @ Jf) @ step_free)
    if not predicted <= _ROUNDOFF_COST * cost:
        return p, r, cost, J, False
    trial = p.copy()
    trial[free] += step_free
    trial = np.clip(trial, lo, hi)
    r_trial = resid(trial)
    cost_trial = float(r_trial @ r_trial)
    if not cost_trial <= cost * (1 + _ROUNDOFF_COST):
        return p, r, cost, J, True
    return trial, r_trial, cost_trial, jac(trial), True


def _free_mask(p, g, lo, hi):
    """Parameters not pinned at a bound by an outward-pointing descent."""
    at_lo = (p <= lo) & (g > 0)
    at_hi = (p >= hi) & (g < 0)
    return ~(at_lo | at_hi)


def _covariance(jac, ssr, n, p, rcond=_SINGULAR_RCOND):
    """Covariance and the indices of unconstrained directions."""
    u, s, vt = np.linalg.svd(jac, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.full((p, p), np.nan), list(range(p))
    keep = s > rcond * s[0]
    dof = n - p
    s2 = ssr / dof if dof > 0 else np.nan
    v = vt[keep].T
    cov = (v / s[keep] ** 2) @ v.T * s2
    cov = 0.5 * (cov + cov.T)
    degenerate = []
    if not np.all(keep):
        null = vt[~keep]
        weight = np.sum(null ** 2, axis=0)
        degenerate = [j for j in range(p) if weight[j] > 1e-6]
        for j in degenerate:
            cov[j, :] = np.nan
            cov[:, j] = np.nan
    return cov, degenerate


def nlls_fit(model: ModelSpec, gradient_tol=DEFAULT_GRADIENT_TOL,
             step_tol=DEFAULT_STEP_TOL, max_iter=DEFAULT_MAX_ITER) -> FitResult:
    """Minimize ``sum(residual(p)**2)`` inside the box bounds.

    Returns a :class:`FitResult`; ``converged`` is True when the gradient
    measure at the returned point is below ``gradient_tol``, or when the
    remaining predicted cost reduction is below float resolution.
    Hitting ``max_iter`` returns the best point with ``converged=False``.

    Raises
    ------
    NonFiniteResidualError
        Residual is not finite at the initial guess.
    SingularNormalMatrixError
        ``J^T J`` is rank deficient at the solution; the exception carries
        the result with NaN errors for the unconstrained parameters.
    """
    names = model.param_names()
    lo, hi = model.bounds()
    p = np.asarray(model.initial, dtype=float).copy()
    if np.any(p < lo) or np.any(p > hi):
        raise ValidationError("initial", "initial guess must lie within bounds", p.tolist())

    def resid(x):
        return np.asarray(model.residual(x), dtype=float)

    def jac(x):
        if model.jacobian is not None:
            return np.asarray(model.jacobian(x), dtype=float)
        return numeric_jacobian(model.residual, x)

    r = resid(p)
    if not np.all(np.isfinite(r)):
        raise NonFiniteResidualError("residual is not finite at the initial guess")
    n = r.size
    if n < p.size:
        raise ValidationError("residual", "length must be >= number of parameters", n)

    cost = float(r @ r)
    lam = LAMBDA0
    J = jac(p)
    # both floors scale with the residuals, so the convergence test is invariant
    # under residual scaling and per-parameter unit changes
    floor = max(_RESIDUAL_FLOOR * np.sqrt(cost),
                _ROUNDOFF_FLOOR * float(np.linalg.norm(J * np.abs(p))))
    if not floor > 0:
        floor = 1.0
    free = _free_mask(p, J.T @ r, lo, hi)
    gnorm = gradient_measure(J, r, free, floor)
    converged = gnorm < gradient_tol
    iterations = 0
    stalled = False
    while not converged and iterations < max_iter:
        iterations += 1
        g = (J.T @ r)[free]
        Jf = J[:, free]
        A = Jf.T @ Jf
        diag = np.diag(A).copy()
        diag[diag <= 0] = 1.0
        accepted = False
        while lam <= _LAMBDA_MAX:
            try:
                step_free = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= LAMBDA_FACTOR
                continue
            step = np.zeros_like(p)
            step[free] = step_free
            trial = np.clip(p + step, lo, hi)
            r_trial = resid(trial)
            cost_trial = float(r_trial @ r_trial) if np.all(np.isfinite(r_trial)) else np.inf
            if cost_trial < cost:
                accepted = True
                break
            lam *= LAMBDA_FACTOR
        if not accepted:
            stalled = True
            break
        moved = np.linalg.norm(trial - p)
        p, r, cost = trial, r_trial, cost_trial
        lam = max(lam / LAMBDA_FACTOR, 1e-15)
        J = jac(p)
        free = _free_mask(p, J.T @ r, lo, hi)
        gnorm = gradient_measure(J, r, free, floor)
        converged = gnorm < gradient_tol
        if moved <= step_tol * (np.linalg.norm(p) + step_tol):
            stalled = True
            break
    if stalled and not converged:
        p, r, cost, J, converged = _roundoff_finish(resid, jac, p, r, cost, J, free, lo, hi)
        if converged:
            free = _free_mask(p, J.T @ r, lo, hi)
            gnorm = gradient_measure(J, r, free, floor)

    dof = n - p.size
    redchi2 = cost / dof if dof > 0 else np.nan
    rcond = _SINGULAR_RCOND if model.jacobian is not None else _SINGULAR_RCOND_FD
    cov, degenerate = _covariance(J, cost, n, p.size, rcond)
    with np.errstate(invalid="ignore"):
        err = np.sqrt(np.clip(np.diag(cov), 0, None))
    err = np.where(np.isnan(np.diag(cov)), np.nan, err)
    result = FitResult(names=names, values=p, stderr=err, covariance=cov,
                       redchi2=float(redchi2), converged=bool(converged),
                       iterations=iterations, gradient_norm=gnorm,
                       flags=tuple(names[j] for j in degenerate))
    if degenerate:
        raise SingularNormalMatrixError(
            f"normal matrix singular; unconstrained: {', '.join(result.flags)}", result)
    return result


def curve_model(fun, jac, x, y, initial, sigma=None, lower=None, upper=None, names=None):
    """ModelSpec for ``fun(x, p) ~ y`` with optional per-point ``sigma``."""
    x = np.asarray(x, dtype=float) if not isinstance(x, tuple) else x
    y = np.asarray(y, dtype=float)
    w = None if sigma is None else 1.0 / np.asarray(sigma, dtype=float)

    def residual(p):
        r = fun(x, p) - y
        return r if w is None else r * w

    jacobian = None
    if jac is not None:
        def jacobian(p):
            J = jac(x, p)
            return J if w is None else J * w[:, None]

    return ModelSpec(residual=residual, initial=initial, lower=lower, upper=upper,
                     jacobian=jacobian, names=names)


def poisson_sigma(counts, scale=1.0):
    """Per-bin sigma ``sqrt(max(counts, 1)) / scale`` for histogram fits."""
    return np.sqrt(np.maximum(np.asarray(counts, dtype=float), 1.0)) / scale
