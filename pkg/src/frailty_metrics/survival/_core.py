"""Cox proportional-hazards estimation.

The log partial likelihood over event times t with tied-death sets D_t and
risk sets R_t = {j : time_j >= t} is

    sum_t [ sum_{i in D_t} x_i'b - sum_{l=0}^{d_t-1} log(S0(R_t) - (l/d_t) S0(D_t)) ]

with S0(A) = sum_{j in A} exp(x_j'b). The l/d_t correction is Efron tie
handling; Breslow sets it to zero. Fitting is Newton-Raphson from beta = 0
with step-halving, and inference is Wald on the log-hazard scale using the
observed information at the optimum.

The inner kernel (likelihood, score, Hessian in one descending-time pass) has
a compiled Cython backend with a pure-NumPy fallback selected at import time;
set FRAILTY_METRICS_PURE_KERNEL=1 to force the fallback.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

from ..errors import (
    DimensionMismatch,
    MonotoneLikelihood,
    NoEvents,
    NonFiniteInput,
    NonFiniteZ,
    SingularInformation,
)

if os.environ.get("FRAILTY_METRICS_PURE_KERNEL", "") not in ("", "0"):
    from . import _kernel_py as _impl
    KERNEL_BACKEND = "pure"
else:
    try:
        from . import _kernel as _impl  # type: ignore[attr-defined]
        KERNEL_BACKEND = "compiled"
    except ImportError:
        from . import _kernel_py as _impl
        KERNEL_BACKEND = "pure"

TIES_METHODS = ("efron", "breslow")

MAX_ABS_BETA = 50.0  # beyond this the likelihood is treated as monotone
_SE_DIVERGENCE_BOUND = 1e3  # a separated direction sends the Wald se to infinity
_STEP_CAP = 5.0      # per-iteration cap on the Newton step, inf norm
_MIN_STEP = 2.0 ** -30


@dataclass(frozen=True)
class SurvivalData:
    x: np.ndarray      # (n, p) covariates
    time: np.ndarray   # (n,) positive times
    event: np.ndarray  # (n,) 0/1, 1 = event observed
    ties: str = "efron"


@dataclass(frozen=True)
class CoxFitResult:
    beta: np.ndarray
    se: np.ndarray
    hr: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    z: np.ndarray
    p_value: np.ndarray
    log_likelihood: float
    iterations: int
    converged: bool
    loglik_path: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "se": self.se.tolist(),
            "hr": self.hr.tolist(),
            "ci_low": self.ci_low.tolist(),
            "ci_high": self.ci_high.tolist(),
            "z": self.z.tolist(),
            "p_value": self.p_value.tolist(),
            "log_likelihood": self.log_likelihood,
            "iterations": self.iterations,
            "converged": self.converged,
        }


@dataclass(frozen=True)
class _Prepared:
    x: np.ndarray            # descending-time order, C contiguous
    event: np.ndarray        # int64
    group_start: np.ndarray  # tied-time group boundaries
    group_end: np.ndarray
    term_group: np.ndarray   # group index per likelihood term
    frac: np.ndarray         # Efron l/d per term (zeros for Breslow)
    n: int
    p: int


def _validate(data: SurvivalData) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x = np.asarray(data.x, dtype=np.float64)
    time = np.asarray(data.time, dtype=np.float64)
    event = np.asarray(data.event, dtype=np.int64)
    if x.ndim != 2:
        raise DimensionMismatch(f"x must be 2-D, got ndim={x.ndim}")
    n = x.shape[0]
    if time.shape != (n,) or event.shape != (n,):
        raise DimensionMismatch(
            f"x has {n} rows but time/event have {time.shape}/{event.shape}")
    if n == 0:
        raise DimensionMismatch("empty dataset")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(time))):
        raise NonFiniteInput("covariates and times must be finite")
    if not np.all((event == 0) | (event == 1)):
        raise DimensionMismatch("event indicators must be 0 or 1")
    if data.ties not in TIES_METHODS:
        raise ValueError(f"ties must be one of {TIES_METHODS}, got {data.ties!r}")
    if event.sum() == 0:
        raise NoEvents("no events observed; every subject is censored")
    return x, time, event


def _prepare(x: np.ndarray, time: np.ndarray, event: np.ndarray,
             ties: str) -> _Prepared:
    order = np.argsort(-time, kind="stable")
    x_desc = np.ascontiguousarray(x[order])
    t_desc = time[order]
    e_desc = np.ascontiguousarray(event[order])

    change = np.nonzero(np.diff(t_desc) != 0.0)[0]
    group_start = np.concatenate(([0], change + 1)).astype(np.int64)
    group_end = np.concatenate((change + 1, [len(t_desc)])).astype(np.int64)

    d = np.add.reduceat(e_desc, group_start)
    event_groups = np.nonzero(d > 0)[0]
    d_e = d[event_groups]
    term_group = np.repeat(event_groups, d_e).astype(np.int64)
    if ties == "efron":
        ends = np.cumsum(d_e)
        offsets = np.arange(int(ends[-1])) - np.repeat(ends - d_e, d_e)
        frac = offsets / np.repeat(d_e, d_e)
    else:
        frac = np.zeros(term_group.size)
    return _Prepared(x=x_desc, event=e_desc, group_start=group_start,
                     group_end=group_end, term_group=term_group,
                     frac=np.ascontiguousarray(frac, dtype=np.float64),
                     n=x.shape[0], p=x.shape[1])


def _evaluate(prep: _Prepared, beta: np.ndarray):
    eta = np.ascontiguousarray(prep.x @ beta)
    shift = float(eta.max())
    return _impl.cox_stats(prep.x, prep.event, prep.group_start, prep.group_end,
                           prep.term_group, prep.frac, eta, shift)


def cox_log_partial_likelihood(data: SurvivalData, beta) -> float:
    """Log partial likelihood at beta, with log-sum-exp stabilization."""
    x, time, event = _validate(data)
    b = np.asarray(beta, dtype=np.float64)
    if b.shape != (x.shape[1],):
        raise DimensionMismatch(f"beta has shape {b.shape}, expected ({x.shape[1]},)")
    ll, _, _ = _evaluate(_prepare(x, time, event, data.ties), b)
    return float(ll)


def cox_gradient_hessian(data: SurvivalData, beta) -> tuple[np.ndarray, np.ndarray]:
    """Analytic score vector and Hessian of the log partial likelihood."""
    x, time, event = _validate(data)
    b = np.asarray(beta, dtype=np.float64)
    if b.shape != (x.shape[1],):
        raise DimensionMismatch(f"beta has shape {b.shape}, expected ({x.shape[1]},)")
    _, grad, hess = _evaluate(_prepare(x, time, event, data.ties), b)
    return grad, hess


def _cholesky_or_raise(info: np.ndarray) -> None:
    try:
        np.linalg.cholesky(info)
    except np.linalg.LinAlgError:
        raise SingularInformation(
            "observed information is not positive definite "
            "(constant or collinear covariate column)") from None


def fit_cox(data: SurvivalData, *, max_iter: int = 50, tol_step: float = 1e-7,
            tol_loglik: float = 1e-9, ci_z: float = 1.96) -> CoxFitResult:
    """Newton-Raphson fit with step-halving and Wald inference.

    Convergence is declared when the largest coefficient update falls below
    ``tol_step`` or the log-likelihood gain falls below ``tol_loglik``.
    Exhausting ``max_iter`` returns a result flagged unconverged.
    """
    x, time, event = _validate(data)
    n, p = x.shape
    if p < 1:
        raise DimensionMismatch("need at least one covariate column")
    if n <= p:
        raise SingularInformation(f"n={n} subjects cannot identify p={p} coefficients")
    spans = np.ptp(x, axis=0)
    if np.any(spans == 0.0):
        idx = int(np.nonzero(spans == 0.0)[0][0])
        raise SingularInformation(f"covariate column {idx} is constant")

    prep = _prepare(x, time, event, data.ties)
    beta = np.zeros(p)
    ll, grad, hess = _evaluate(prep, beta)
    path = [float(ll)]
    converged = False
    iterations = 0

    for it in range(1, max_iter + 1):
        iterations = it
        info = -hess
        _cholesky_or_raise(info)
        delta = np.linalg.solve(info, grad)
        worst = float(np.max(np.abs(delta)))
        if worst > _STEP_CAP:
            delta *= _STEP_CAP / worst

        step = 1.0
        while True:
            cand = beta + step * delta
            ll_new, grad_new, hess_new = _evaluate(prep, cand)
            if ll_new >= ll - 1e-13 * (1.0 + abs(ll)):
                break
            step *= 0.5
            if step < _MIN_STEP:
                cand, ll_new, grad_new, hess_new = beta, ll, grad, hess
                break

        dstep = float(np.max(np.abs(cand - beta)))
        dll = abs(float(ll_new) - float(ll))
        beta, ll, grad, hess = cand, ll_new, grad_new, hess_new
        path.append(float(ll))
        if float(np.max(np.abs(beta))) > MAX_ABS_BETA:
            raise MonotoneLikelihood(
                "coefficients diverged; a covariate perfectly separates the "
                "event ordering")
        if dstep < tol_step or dll < tol_loglik:
            converged = True
            break

    info = -hess
    _cholesky_or_raise(info)
    cov = np.linalg.inv(info)
    se = np.sqrt(np.diag(cov))
    if np.any(se > _SE_DIVERGENCE_BOUND):
        # a flat likelihood direction: the score vanished while the step drifted
        # outward, so the optimum is at infinity even though |beta| stayed small
        raise MonotoneLikelihood(
            "a covariate perfectly separates the event ordering "
            f"(Wald se exceeds {_SE_DIVERGENCE_BOUND:g})")
    z = beta / se
    pvals = np.array([wald_pvalue(v) for v in z])
    return CoxFitResult(beta=beta, se=se, hr=np.exp(beta),
                        ci_low=np.exp(beta - ci_z * se),
                        ci_high=np.exp(beta + ci_z * se),
                        z=z, p_value=pvals, log_likelihood=float(ll),
                        iterations=iterations, converged=converged,
                        loglik_path=tuple(path))


def wald_pvalue(z: float) -> float:
    """Two-sided normal tail probability, p = 2 (1 - Phi(|z|))."""
    if not math.isfinite(z):
        raise NonFiniteZ(f"z must be finite, got {z}")
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return max(p, 5e-324)
