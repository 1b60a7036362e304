"""Levenberg-Marquardt minimization of a sum of squared residuals."""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .._validation import ValidationError


@dataclass(frozen=True)
class LMOptions:
    max_iterations: int = 100
    gtol: float = 1e-10
    xtol: float = 1e-10
    ftol: float = 1e-14
    initial_damping: float = 1e-3
    fd_step: float = 1e-7


@dataclass
class LMResult:
    x: np.ndarray
    cost: float
    iterations: int
    converged: bool
    reason: str
    cost_history: list = field(default_factory=list)
    n_evaluations: int = 0


class NonFiniteResidualError(ValidationError):
    def __init__(self, message, diagnostics):
        super().__init__("solver", message)
        self.diagnostics = diagnostics


def forward_difference_jacobian(fun, x, r0=None, step=1e-7):
    """Dense forward-difference Jacobian of ``fun`` at ``x``."""
    x = np.asarray(x, float)
    r0 = fun(x) if r0 is None else r0
    jac = np.empty((r0.size, x.size))
    for k in range(x.size):
        h = step * max(1.0, abs(x[k]))
        xp = x.copy()
        xp[k] += h
        jac[:, k] = (fun(xp) - r0) / h
    return jac


def _normal(jac, r):
    if sp.issparse(jac):
        jtj = (jac.T @ jac).toarray()
        return jtj, jac.T @ r
    return jac.T @ jac, jac.T @ r


def lm_minimize(fun, x0, jac=None, options=None):
    """Minimize ``||fun(x)||^2`` with Levenberg-Marquardt.

    Damping follows Nielsen's gain-ratio rule on ``J^T J + mu D`` with
    ``D = diag(J^T J)``. Only steps that lower the cost are accepted, so
    the cost history is nonincreasing.

    Args:
        fun: residual vector function.
        x0: starting parameters.
        jac: callable returning a dense or sparse Jacobian; forward
            differences when omitted.

    Raises:
        NonFiniteResidualError: the residual is non-finite at ``x0`` or at
            a trial point.
    """
    opts = options or LMOptions()
    x = np.array(x0, dtype=float)
    r = np.asarray(fun(x), float)
    n_eval = 1
    if not np.all(np.isfinite(r)):
        raise NonFiniteResidualError("residual not finite at the initial point",
                                     {"x": x, "iteration": 0})

    def jacobian(xv, rv):
        if jac is not None:
            return jac(xv)
        return forward_difference_jacobian(fun, xv, rv, opts.fd_step)

    cost = float(r @ r)
    history = [cost]
    J = jacobian(x, r)
    A, g = _normal(J, r)
    nu = 2.0
    reason = "max_iterations"
    converged = False
    it = 0
    if np.max(np.abs(g), initial=0.0) <= opts.gtol:
        return LMResult(x, cost, 0, True, "gradient", history, n_eval)
    diag = np.maximum(np.diag(A), 1e-12 * max(np.max(np.diag(A)), 1e-300))
    mu = opts.initial_damping
    while it < opts.max_iterations:
        it += 1
        diag = np.maximum(diag, np.diag(A))
        try:
            h = np.linalg.solve(A + mu * np.diag(diag), -g)
        except np.linalg.LinAlgError:
            mu *= nu
            nu *= 2
            continue
        if np.linalg.norm(h) <= opts.xtol * (np.linalg.norm(x) + opts.xtol):
            reason, converged = "step", True
            break
        x_new = x + h
        r_new = np.asarray(fun(x_new), float)
        n_eval += 1
        if not np.all(np.isfinite(r_new)):
            raise NonFiniteResidualError("residual became non-finite",
                                         {"x": x_new, "iteration": it, "cost_history": history})
        cost_new = float(r_new @ r_new)
        jh = J @ h
        predicted = -(2.0 * (h @ g) + jh @ jh)
        actual = cost - cost_new
        ratio = actual / predicted if predicted > 0 else -1.0
        if ratio > 0 and actual > 0:
            rel = actual / max(cost, 1e-300)
            x, r, cost = x_new, r_new, cost_new
            history.append(cost)
            J = jacobian(x, r)
            A, g = _normal(J, r)
            mu *= max(1.0 / 3.0, 1.0 - (2.0 * ratio - 1.0) ** 3)
            nu = 2.0
            if np.max(np.abs(g)) <= opts.gtol:
                reason, converged = "gradient", True
                break
            if rel <= opts.ftol:
                reason, converged = "ftol", True
                break
        else:
            mu *= nu
            nu *= 2.0
            if mu > 1e250:
                reason = "damping"
                break
    return LMResult(x, cost, it, converged, reason, history, n_eval)
