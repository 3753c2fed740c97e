"""First-passage densities, hazard curves and counting-process diagnostics.

The analytic side implements the Brownian level-crossing law for a gap
``gamma = beta - alpha``: its density, distribution function, and the hazard
``lambda_t = f(t - T_alpha) / (1 - F(t - T_alpha))`` that acts as the jump
intensity on the interval between the predecessor passage and the passage of
the isolated level.  The empirical side provides a Nelson-Aalen cumulative
hazard estimator, a compensated-counting-process martingale check, and a
one-sample Kolmogorov-Smirnov test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, kolmogi
from scipy.stats import kstest

from .errors import AlignmentError, DomainError, InsufficientDataError

__all__ = [
    "IntensityCurve",
    "CountingEnsemble",
    "HazardCurve",
    "CompensatedCheck",
    "KsResult",
    "fp_density",
    "fp_cdf",
    "fp_survival",
    "fp_cumulative_hazard",
    "intensity",
    "intensity_curve",
    "min_intensity",
    "nelson_aalen",
    "compensated_check",
    "ks_test",
]


# ---------------------------------------------------------------------------
# Analytic first-passage law for a Brownian gap
# ---------------------------------------------------------------------------

def fp_density(gap: float, u):
    """Density of the first-passage time over a Brownian gap.

    ``f(u) = gap * (2*pi*u**3)**(-1/2) * exp(-gap**2 / (2u))`` for u > 0 and 0
    otherwise (the density extends continuously to 0 at the origin).
    """
    if gap <= 0:
        raise DomainError(f"gap must be positive, got {gap}")
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    pos = u > 0
    up = u[pos]
    # log-space evaluation: stable at both tails (u -> 0 gives exactly 0)
    with np.errstate(divide="ignore"):
        logf = (
            math.log(gap)
            - 0.5 * math.log(2.0 * math.pi)
            - 1.5 * np.log(up)
            - gap * gap / (2.0 * up)
        )
    out[pos] = np.exp(logf)
    return out if out.ndim else float(out)


def fp_cdf(gap: float, u):
    """Distribution function of the first-passage time, ``2*(1 - Phi(gap/sqrt(u)))``.

    The closed form follows from the reflection principle; the build-time test
    suite cross-checks it against quadrature of :func:`fp_density` to 1e-8.
    """
    if gap <= 0:
        raise DomainError(f"gap must be positive, got {gap}")
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    pos = u > 0
    # 2*(1 - Phi(g/sqrt(u))) = erfc(g/sqrt(2u)) = 1 - erf(g/sqrt(2u))
    out[pos] = 1.0 - erf(gap / np.sqrt(2.0 * u[pos]))
    return out if out.ndim else float(out)


def fp_survival(gap: float, u):
    """Exact complement ``1 - F`` computed as erf(gap/sqrt(2u)) (no cancellation)."""
    if gap <= 0:
        raise DomainError(f"gap must be positive, got {gap}")
    u = np.asarray(u, dtype=float)
    out = np.ones_like(u)
    pos = u > 0
    out[pos] = erf(gap / np.sqrt(2.0 * u[pos]))
    return out if out.ndim else float(out)


def fp_cumulative_hazard(gap: float, u):
    """Integrated hazard ``-log(1 - F(u))`` of the first-passage law."""
    u = np.asarray(u, dtype=float)
    out = -np.log(fp_survival(gap, np.maximum(u, 0.0)))
    return out if out.ndim else float(out)


def intensity(gap: float, t_alpha: float, t):
    """Jump intensity on [T_alpha, T_beta): ``f(t - T_alpha) / (1 - F(t - T_alpha))``.

    Zero for t < T_alpha and at t = T_alpha itself (the density vanishes at the
    origin).  The survival denominator is evaluated through erf, so it stays
    far above the 1e-300 overflow guard for any sane horizon.
    """
    t = np.asarray(t, dtype=float)
    u = t - t_alpha
    surv = np.asarray(fp_survival(gap, np.maximum(u, 0.0)), dtype=float)
    if np.any(surv < 1e-300):
        raise DomainError("survival probability underflowed the 1e-300 guard")
    out = np.where(u > 0, fp_density(gap, np.maximum(u, np.finfo(float).tiny)) / surv, 0.0)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Intensity curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IntensityCurve:
    """Hazard values on an evaluation grid starting at the entry time T_alpha.

    ``t_event`` is the realized passage time (the curve is only meaningful on
    [t_alpha, t_event)); ``None`` leaves the window open.
    """

    t_alpha: float
    gap: float
    times: np.ndarray
    values: np.ndarray
    t_event: float | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if self.gap <= 0:
            raise DomainError(f"gap must be positive, got {self.gap}")
        if times.shape != values.shape:
            raise AlignmentError("times and values must have equal shape")
        if np.any(np.diff(times) <= 0):
            raise AlignmentError("evaluation times must be strictly increasing")
        if np.any(times < self.t_alpha):
            raise DomainError("evaluation times must not precede t_alpha")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise DomainError("intensity values must be finite and non-negative")


def intensity_curve(gap: float, t_alpha: float, times, t_event: float | None = None) -> IntensityCurve:
    """Analytic intensity curve of :func:`intensity` on the given grid."""
    times = np.asarray(times, dtype=float)
    return IntensityCurve(t_alpha, gap, times, intensity(gap, t_alpha, times), t_event)


def min_intensity(curve_a: IntensityCurve, curve_b: IntensityCurve) -> IntensityCurve:
    """Intensity of the minimum of two stopping times: the pointwise sum.

    Valid when the caller can assert P(T = R) = 0 and both intensities live in
    a common filtration.  The result is truncated at the earlier event time.
    """
    if curve_a.times.shape != curve_b.times.shape or np.any(curve_a.times != curve_b.times):
        raise AlignmentError("min_intensity requires a common evaluation grid")
    events = [t for t in (curve_a.t_event, curve_b.t_event) if t is not None]
    t_event = min(events) if events else None
    times = curve_a.times
    values = curve_a.values + curve_b.values
    if t_event is not None:
        keep = times < t_event
        times, values = times[keep], values[keep]
    return IntensityCurve(
        min(curve_a.t_alpha, curve_b.t_alpha),
        min(curve_a.gap, curve_b.gap),
        times,
        values,
        t_event,
    )


# ---------------------------------------------------------------------------
# Counting-process ensembles and estimators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CountingEnsemble:
    """Entry/event data for a batch of counting processes N_t = 1{t >= T}.

    ``entry`` is the at-risk start (T_alpha), ``time`` the event or censoring
    time, ``observed`` False for censored samples.
    """

    entry: np.ndarray
    time: np.ndarray
    observed: np.ndarray

    def __post_init__(self):
        entry = np.asarray(self.entry, dtype=float)
        time = np.asarray(self.time, dtype=float)
        observed = np.asarray(self.observed, dtype=bool)
        object.__setattr__(self, "entry", entry)
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "observed", observed)
        if not entry.shape == time.shape == observed.shape:
            raise AlignmentError("entry, time and observed must have equal shape")
        if np.any(time <= entry):
            raise DomainError("event/censoring times must exceed entry times")

    @classmethod
    def from_events(cls, times, entry=0.0) -> "CountingEnsemble":
        times = np.asarray(times, dtype=float)
        entries = np.broadcast_to(np.asarray(entry, dtype=float), times.shape).copy()
        return cls(entries, times, np.ones(times.shape, dtype=bool))

    @property
    def n(self) -> int:
        return self.time.size


@dataclass(frozen=True)
class HazardCurve:
    """Cumulative hazard estimate with a pointwise normal CI band."""

    times: np.ndarray
    values: np.ndarray
    variance: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    truncated_at: float | None = None


def nelson_aalen(ensemble: CountingEnsemble, eval_times, conf_level: float = 0.95) -> HazardCurve:
    """Nelson-Aalen cumulative hazard on an evaluation grid.

    Events are processed in succession, each contributing ``1/Y`` with the
    at-risk count decremented within ties, so a batch of d simultaneous events
    at t* with everyone at risk steps by ``sum_k 1/(N-k)``.  Variance follows
    the same successive convention.  The curve is truncated (and flagged) once
    the at-risk set empties while censored mass remains.
    """
    eval_times = np.asarray(eval_times, dtype=float)
    n_events = int(ensemble.observed.sum())
    if n_events < 100:
        raise InsufficientDataError(
            f"nelson_aalen needs >= 100 uncensored events, got {n_events}"
        )
    order = np.argsort(ensemble.time, kind="stable")
    t_sorted = ensemble.time[order]
    obs_sorted = ensemble.observed[order]

    event_t = t_sorted[obs_sorted]
    # at-risk just before each sorted event: entered strictly before, not yet left
    entries = np.sort(ensemble.entry)
    at_risk = (
        np.searchsorted(entries, event_t, side="left")
        - np.searchsorted(t_sorted, event_t, side="left")
    ).astype(float)
    # successive tie handling: decrement within equal event times
    if event_t.size:
        idx = np.arange(event_t.size)
        new_value = np.concatenate(([True], np.diff(event_t) != 0))
        first_of_run = np.maximum.accumulate(np.where(new_value, idx, 0))
        denom = at_risk - (idx - first_of_run)
    else:
        denom = at_risk

    truncated_at = None
    valid = denom > 0
    if not np.all(valid):
        truncated_at = float(event_t[~valid][0])
        event_t, denom = event_t[valid], denom[valid]
    increments = 1.0 / denom
    var_increments = 1.0 / denom**2
    cum = np.cumsum(increments)
    cum_var = np.cumsum(var_increments)

    idx = np.searchsorted(event_t, eval_times, side="right")
    values = np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)
    variance = np.where(idx > 0, cum_var[np.maximum(idx - 1, 0)], 0.0)
    z = abs(_normal_quantile((1.0 - conf_level) / 2.0))
    half = z * np.sqrt(variance)
    if truncated_at is not None:
        beyond = eval_times >= truncated_at
        values = np.where(beyond, np.nan, values)
        variance = np.where(beyond, np.nan, variance)
        half = np.where(beyond, np.nan, half)
    return HazardCurve(
        eval_times, values, variance, np.maximum(values - half, 0.0), values + half, truncated_at
    )


def _normal_quantile(q: float) -> float:
    from scipy.special import ndtri

    return float(ndtri(q))


@dataclass(frozen=True)
class CompensatedCheck:
    """Per-time mean and 3-SE band of ``N_t - integral of lambda up to t ^ T``."""

    times: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    contains_zero: np.ndarray
    passed: bool


def compensated_check(
    ensemble: CountingEnsemble, eval_times, cumulative_hazard, n_se: float = 3.0
) -> CompensatedCheck:
    """Martingale check of the compensated counting process.

    ``cumulative_hazard(entry, t)`` must return the integrated intensity
    ``integral_0^t lambda_s ds`` for a sample entering at ``entry`` (zero before
    entry).  Passes when 0 lies inside every ``n_se``-SE band.
    """
    eval_times = np.asarray(eval_times, dtype=float)
    t = ensemble.time
    mean = np.empty(eval_times.size)
    se = np.empty(eval_times.size)
    for j, tj in enumerate(eval_times):
        n_t = (ensemble.observed & (t <= tj)).astype(float)
        comp = cumulative_hazard(ensemble.entry, np.minimum(t, tj))
        resid = n_t - comp
        mean[j] = resid.mean()
        se[j] = resid.std(ddof=1) / math.sqrt(resid.size)
    contains = np.abs(mean) <= n_se * se
    return CompensatedCheck(eval_times, mean, se, contains, bool(np.all(contains)))


@dataclass(frozen=True)
class KsResult:
    statistic: float
    critical: float
    n: int
    level: float
    passed: bool


def ks_test(samples, cdf, level: float = 0.01) -> KsResult:
    """One-sample Kolmogorov-Smirnov test against a callable CDF.

    Uses the asymptotic critical value ``kolmogi(level)/sqrt(n)`` (about
    1.63/sqrt(n) at the 1% level).
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size < 50:
        raise InsufficientDataError(f"ks_test needs >= 50 samples, got {samples.size}")
    stat = float(kstest(samples, cdf).statistic)
    critical = float(kolmogi(level)) / math.sqrt(samples.size)
    return KsResult(stat, critical, int(samples.size), level, stat < critical)
