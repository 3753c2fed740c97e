"""Strictness classification and martingale-defect estimation.

A driftless diffusion ``dX = sigma(X) dB, X_0 = x0 > 0`` stays strictly
positive iff ``integral_0^eps x/sigma(x)^2 dx`` diverges, and is then a strict
local martingale iff ``integral_eps^inf x/sigma(x)^2 dx`` converges.  The
power family ``sigma = c x^p`` is decided in closed form (divergent at 0 iff
p >= 1, convergent at infinity iff p > 1); tabulated coefficients go through
adaptive quadrature with endpoint-refinement divergence detection.

The empirical side estimates the martingale defect ``x0 - E[X_t]`` (positive
defect certifies strictness for nonnegative local martingales) and the 1-norm
``sup_n E|X_{T_n}|`` along a reducing sequence of stopping times.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError, InsufficientDataError
from .stochastics import SdeModel, adaptive_simpson

__all__ = [
    "StrictnessVerdict",
    "DefectEstimate",
    "KrickebergEstimate",
    "strictness_classify",
    "defect_estimate",
    "krickeberg_norm",
]

HOLDS = "holds"
FAILS = "fails"
UNDETERMINED = "numeric-undetermined"

STRICT = "strict_local_martingale"
TRUE_MG = "true_martingale_candidate"
POSITIVITY_FAILS = "positivity_fails"
VERDICT_UNDETERMINED = "undetermined"

_DIVERGENCE_CAP = 1e6
_RATIO_DIVERGENT = 0.999
_RATIO_CONVERGENT = 0.99
_MAX_DOUBLINGS = 48


@dataclass(frozen=True)
class StrictnessVerdict:
    """Outcome of the two integral conditions and the combined verdict.

    ``condition_lower`` refers to divergence of the integral near 0 (strict
    positivity of the solution); ``condition_upper`` to convergence of the
    integral at infinity (strict local martingale).  Integral values are
    reported with their estimated absolute error; infinite values signal
    detected divergence.
    """

    condition_lower: str
    condition_upper: str
    verdict: str
    lower_integral: float
    lower_error: float
    upper_integral: float
    upper_error: float
    epsilon: float
    method: str

    def to_json(self) -> str:
        data = {
            k: ("inf" if isinstance(v, float) and not math.isfinite(v) else v)
            for k, v in asdict(self).items()
        }
        return json.dumps(data, indent=2, sort_keys=True)


def _combine(lower: str, upper: str) -> str:
    if lower == FAILS:
        return POSITIVITY_FAILS
    if lower == UNDETERMINED or upper == UNDETERMINED:
        return VERDICT_UNDETERMINED
    return STRICT if upper == HOLDS else TRUE_MG


def _closed_form_power(model: SdeModel, eps: float) -> StrictnessVerdict:
    # integrand x/sigma^2 = x^(1-2p)/c^2: diverges at 0 iff p >= 1,
    # converges at infinity iff p > 1
    p, c = model.p, model.c
    q = 1.0 - 2.0 * p
    if p >= 1.0:
        lower, lo_val, lo_err = HOLDS, math.inf, 0.0
    else:
        lower, lo_val, lo_err = FAILS, eps ** (q + 1.0) / ((q + 1.0) * c * c), 0.0
    if p > 1.0:
        upper, up_val, up_err = HOLDS, -(eps ** (q + 1.0)) / ((q + 1.0) * c * c), 0.0
    else:
        upper, up_val, up_err = FAILS, math.inf, 0.0
    return StrictnessVerdict(
        lower, upper, _combine(lower, upper), lo_val, lo_err, up_val, up_err, eps, "closed_form"
    )


def _refinement_probe(integrand, eps: float, side: str, domain_lo: float, domain_hi: float):
    """Classify the improper integral toward 0 (side='lower') or infinity.

    Integrates over a ladder of doubling subintervals and inspects the
    increment ratios: geometric decay means a convergent tail, flat or growing
    increments mean divergence.  Partial mass beyond the hard cap declares
    divergence outright; an exhausted domain or a ratio stuck near 1 stays
    undetermined.
    """
    total = 0.0
    prev_inc = None
    ratios = []
    for k in range(_MAX_DOUBLINGS):
        if side == "lower":
            hi = eps * 2.0**-k
            lo = eps * 2.0 ** -(k + 1)
            lo = max(lo, domain_lo)
            if lo >= hi:
                return UNDETERMINED, total, math.inf
        else:
            lo = eps * 2.0**k
            hi = eps * 2.0 ** (k + 1)
            hi = min(hi, domain_hi)
            if hi <= lo:
                return UNDETERMINED, total, math.inf
        inc = adaptive_simpson(integrand, lo, hi, tol=1e-10)
        total += inc
        if total > _DIVERGENCE_CAP:
            return HOLDS, math.inf, 0.0  # divergent
        if prev_inc is not None and prev_inc > 0:
            ratios.append(inc / prev_inc)
            if len(ratios) >= 3:
                r = max(ratios[-3:])
                if r >= _RATIO_DIVERGENT:
                    return HOLDS, math.inf, 0.0
                if r <= _RATIO_CONVERGENT:
                    tail = inc * r / (1.0 - r)
                    return "finite", total + tail, tail
        prev_inc = inc
    return UNDETERMINED, total, math.inf


def strictness_classify(model: SdeModel, eps: float = 1.0, method: str = "auto") -> StrictnessVerdict:
    """Decide strict-local-martingale status from the two integral conditions.

    ``method="auto"`` uses the closed form for the power family and quadrature
    for tabulated coefficients; ``method="quadrature"`` forces the numeric
    route (used to cross-check the closed form).
    """
    if eps <= 0:
        raise DomainError(f"eps must be positive, got {eps}")
    model.require_positive_sigma()
    if model.kind == "power" and method in ("auto", "closed_form"):
        return _closed_form_power(model, eps)
    if method not in ("auto", "quadrature", "closed_form"):
        raise DomainError(f"unknown classification method {method!r}")

    def integrand(x):
        s = model.sigma(x)
        if s <= 0:
            raise DomainError(f"sigma must be positive on the state space, got sigma({x}) = {s}")
        return x / (s * s)

    if model.kind == "power":
        domain_lo, domain_hi = 0.0, math.inf
    else:
        domain_lo, domain_hi = float(model.table_x[0]), float(model.table_x[-1])
        if eps <= domain_lo or eps >= domain_hi:
            raise DomainError(
                f"eps={eps} must lie inside the tabulated domain ({domain_lo}, {domain_hi})"
            )

    lo_status, lo_val, lo_err = _refinement_probe(integrand, eps, "lower", domain_lo, domain_hi)
    hi_status, hi_val, hi_err = _refinement_probe(integrand, eps, "upper", domain_lo, domain_hi)
    # near 0 the condition *wants* divergence; at infinity it wants convergence
    lower = HOLDS if lo_status == HOLDS else (FAILS if lo_status == "finite" else UNDETERMINED)
    upper = FAILS if hi_status == HOLDS else (HOLDS if hi_status == "finite" else UNDETERMINED)
    lo_report = math.inf if lower == HOLDS else lo_val
    hi_report = math.inf if upper == FAILS else hi_val
    return StrictnessVerdict(
        lower, upper, _combine(lower, upper), lo_report, lo_err, hi_report, hi_err, eps, "quadrature"
    )


# ---------------------------------------------------------------------------
# Ensemble estimators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DefectEstimate:
    """Martingale defect ``x0 - mean(X_t)`` with its standard error.

    ``significant`` is the 3-sigma verdict: the defect certifies strictness
    only when it exceeds three standard errors.
    """

    t: float | None
    defect: float
    stderr: float
    significant: bool
    n: int


def defect_estimate(values, x0: float, t: float | None = None, se_values=None) -> DefectEstimate:
    """Defect of an ensemble of terminal values against the initial value.

    ``se_values`` optionally supplies the sample used for the standard error
    (e.g. the raw state values when ``values`` are per-group conditional means
    whose spread understates the estimator noise of the ensemble mean).
    """
    values = np.asarray(values, dtype=float)
    if values.size < 1000:
        raise InsufficientDataError(f"defect_estimate needs >= 1000 values, got {values.size}")
    base = values if se_values is None else np.asarray(se_values, dtype=float)
    defect = float(x0 - values.mean())
    stderr = float(base.std(ddof=1) / math.sqrt(base.size))
    return DefectEstimate(t, defect, stderr, bool(defect > 3.0 * stderr), int(values.size))


@dataclass(frozen=True)
class KrickebergEstimate:
    """Monte Carlo estimates of E|X_{T_n}| along the reducing times.

    The supremum over the computed n is a lower bound for the 1-norm
    ``sup_T E|X_T|`` (the true supremum runs over all a.s. finite stopping
    times).  ``monotone`` diagnoses whether the sequence is non-decreasing
    within 3 combined SEs.
    """

    means: np.ndarray
    stderrs: np.ndarray
    supremum: float
    monotone: bool
    n_used: np.ndarray


def krickeberg_norm(stopped_abs_values, censored=None) -> KrickebergEstimate:
    """1-norm estimate from |X| sampled at each reducing time.

    ``stopped_abs_values`` has shape (paths, n_times); entries where the
    reducing time was censored at the horizon may be masked via ``censored``
    (stopped values at the capped time remain valid martingale samples, so
    they are kept; the mask only guards the all-censored degenerate case).
    """
    v = np.abs(np.asarray(stopped_abs_values, dtype=float))
    if v.ndim != 2 or v.size == 0:
        raise DomainError("stopped values must form a (paths, n_times) matrix")
    if censored is not None:
        censored = np.asarray(censored, dtype=bool)
        if censored.shape != v.shape:
            raise DomainError("censored mask must match the stopped-value matrix")
        if bool(np.all(censored)):
            raise InsufficientDataError("all reducing times censored at the horizon")
    means = v.mean(axis=0)
    stderrs = v.std(axis=0, ddof=1) / math.sqrt(v.shape[0])
    combined = 3.0 * np.sqrt(stderrs[1:] ** 2 + stderrs[:-1] ** 2)
    monotone = bool(np.all(np.diff(means) >= -combined)) if means.size > 1 else True
    return KrickebergEstimate(
        means, stderrs, float(means.max()), monotone, np.full(means.size, v.shape[0])
    )
