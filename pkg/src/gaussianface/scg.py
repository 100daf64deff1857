"""Scaled conjugate gradient minimization (Møller, 1993)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ContractViolation, NumericalFailure

log = logging.getLogger(__name__)


@dataclass
class ScgOptions:
    max_iter: int = 200
    ftol: float = 1e-6
    xtol: float = 0.0
    sigma0: float = 1e-4
    max_bad_evals: int = 30


@dataclass
class ScgResult:
    x: np.ndarray
    fun: float
    trace: list = field(default_factory=list)
    n_iter: int = 0
    n_eval: int = 0
    converged: bool = False
    message: str = ""


def _safe_eval(fun, x):
    try:
        f, g = fun(x)
    except (NumericalFailure, ContractViolation, np.linalg.LinAlgError, FloatingPointError, OverflowError):
        return np.inf, None
    f = float(f)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        return np.inf, None
    return f, np.asarray(g, dtype=float)


def scg_minimize(fun, x0, opts: ScgOptions | None = None) -> ScgResult:
    """Minimize ``fun`` where ``fun(x) -> (f, grad)``.

    Every accepted step lowers the objective, so ``trace`` (objective after
    each accepted step, starting with ``f(x0)``) is non-increasing and the
    returned point is the best seen. Non-finite values at a trial point are
    treated as a rejected step; a non-finite start raises
    :class:`NumericalFailure`.
    """
    opts = opts or ScgOptions()
    x = np.array(x0, dtype=float, copy=True)
    n = x.size
    fold, gradnew = _safe_eval(fun, x)
    n_eval = 1
    if gradnew is None:
        raise NumericalFailure("objective is not finite at the starting point")
    res = ScgResult(x, fold, [fold])
    gradold = gradnew
    d = -gradnew
    success = True
    nsuccess = 0
    beta, betamin, betamax = 1.0, 1e-15, 1e100
    bad = 0
    eps = np.finfo(float).eps
    mu = kappa = gamma = 0.0
    g_cache = None

    for it in range(1, opts.max_iter + 1):
        res.n_iter = it
        if success:
            mu = d @ gradnew
            if mu >= 0:
                d = -gradnew
                mu = d @ gradnew
            kappa = d @ d
            if kappa < eps:
                res.converged, res.message = True, "gradient vanished"
                break
            sigma = opts.sigma0 / np.sqrt(kappa)
            _, gplus = _safe_eval(fun, x + sigma * d)
            n_eval += 1
            if gplus is None:
                gamma = 0.0
            else:
                gamma = d @ (gplus - gradnew) / sigma

        delta = gamma + beta * kappa
        if delta <= 0:
            delta = beta * kappa
            beta = beta - gamma / kappa
        alpha = -mu / delta
        xnew = x + alpha * d
        fnew, g_cache = _safe_eval(fun, xnew)
        n_eval += 1

        Delta = 2.0 * (fnew - fold) / (alpha * mu) if np.isfinite(fnew) else -np.inf
        if Delta >= 0 and fnew <= fold:
            success = True
            nsuccess += 1
            bad = 0
            x = xnew
            res.trace.append(fnew)
        else:
            success = False
            if not np.isfinite(fnew):
                bad += 1
                if bad > opts.max_bad_evals:
                    raise NumericalFailure(f"{bad} consecutive non-finite trial evaluations at iteration {it}")

        if success:
            step = np.max(np.abs(alpha * d)) if n else 0.0
            small_f = abs(fnew - fold) <= opts.ftol * max(abs(fold), 1e-300)
            fold = fnew
            gradold = gradnew
            gradnew = g_cache
            if small_f and (opts.xtol <= 0 or step <= opts.xtol):
                res.converged, res.message = True, "relative objective change below tolerance"
                break
            if gradnew @ gradnew == 0.0:
                res.converged, res.message = True, "gradient vanished"
                break

        if Delta < 0.25:
            beta = min(4.0 * beta, betamax)
        if Delta > 0.75:
            beta = max(0.5 * beta, betamin)

        if nsuccess == n:
            d = -gradnew
            nsuccess = 0
        elif success:
            gam = (gradold - gradnew) @ gradnew / mu
            d = gam * d - gradnew
    else:
        res.message = "maximum iterations reached"

    res.x = x
    res.fun = fold
    res.n_eval = n_eval
    return res
