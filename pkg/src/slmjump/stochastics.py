"""Exact and discretized samplers for the driving processes.

Covers standard Brownian motion, the Bessel(3) process and its reciprocal,
driftless diffusions ``dX = sigma(X) dB`` (plus their drift-corrected form
``dY = 0.5*sigma*sigma' dt + sigma dB``), the pathwise solve of the drifted
equation through the integrated-reciprocal-diffusion map ``h``, and exact
first-passage-time draws for Brownian levels.

All samplers are pure functions of ``(RngSpec, inputs)`` and are safe to call
concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import erfc

from .errors import DomainError, GridError, RangeError
from .rng import RngSpec

__all__ = [
    "TimeGrid",
    "SamplePath",
    "SdeModel",
    "normal_cdf",
    "adaptive_simpson",
    "sample_brownian",
    "sample_bessel3",
    "inverse_path",
    "euler_maruyama",
    "doss_h",
    "doss_h_inverse",
    "doss_solve",
    "sample_first_passage_exact",
    "resolve_coupling",
    "coupled_values",
    "simulate_coupled",
]


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid ``t_start + k*dt, k = 0..steps``."""

    horizon: float
    steps: int
    t_start: float = 0.0

    def __post_init__(self):
        if self.t_start < 0:
            raise GridError(f"t_start must be >= 0, got {self.t_start}")
        if self.steps < 1:
            raise GridError(f"steps must be >= 1, got {self.steps}")
        if not self.horizon > self.t_start:
            raise GridError(
                f"horizon must exceed t_start, got horizon={self.horizon} t_start={self.t_start}"
            )

    @property
    def dt(self) -> float:
        return (self.horizon - self.t_start) / self.steps

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.steps + 1)


@dataclass(frozen=True)
class SamplePath:
    """A discretely sampled path on a uniform grid.

    ``floored`` marks paths whose Euler iteration had to be reflected off the
    positivity floor; such paths are excluded from ensemble statistics.
    """

    grid: TimeGrid
    values: np.ndarray
    floored: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.shape != (self.grid.steps + 1,):
            raise GridError(
                f"values length {values.shape} does not match grid with {self.grid.steps} steps"
            )
        if not np.all(np.isfinite(values)):
            raise DomainError("path values must be finite")

    def increments(self) -> np.ndarray:
        return np.diff(self.values)


_POWER = "power"
_TABLE = "table"


@dataclass(frozen=True)
class SdeModel:
    """Diffusion coefficient of ``dX = sigma(X) dB``.

    Either the built-in power family ``sigma(x) = c * x**p`` or a tabulated
    positive function with monotone cubic interpolation (no extrapolation).
    With ``drift=True`` the model is the drift-corrected form
    ``dY = 0.5*sigma(Y)*sigma'(Y) dt + sigma(Y) dB``.
    """

    x0: float
    kind: str = _POWER
    c: float = 1.0
    p: float = 2.0
    table_x: np.ndarray | None = None
    table_sigma: np.ndarray | None = None
    drift: bool = False
    _interp: object = field(default=None, repr=False, compare=False)
    _dinterp: object = field(default=None, repr=False, compare=False)

    @classmethod
    def power(cls, c: float, p: float, x0: float = 1.0, drift: bool = False) -> "SdeModel":
        if c < 0:
            raise DomainError(f"power-family coefficient c must be >= 0, got {c}")
        return cls(x0=x0, kind=_POWER, c=float(c), p=float(p), drift=drift)

    @classmethod
    def table(cls, x, sigma, x0: float = 1.0, drift: bool = False) -> "SdeModel":
        x = np.asarray(x, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        if x.ndim != 1 or x.size < 2 or np.any(np.diff(x) <= 0):
            raise DomainError("table_x must be a strictly increasing 1-d array of length >= 2")
        if sigma.shape != x.shape or np.any(sigma <= 0):
            raise DomainError("table_sigma must be positive and match table_x")
        interp = PchipInterpolator(x, sigma, extrapolate=False)
        model = cls(x0=x0, kind=_TABLE, table_x=x, table_sigma=sigma, drift=drift)
        object.__setattr__(model, "_interp", interp)
        object.__setattr__(model, "_dinterp", interp.derivative())
        return model

    def __post_init__(self):
        if self.kind not in (_POWER, _TABLE):
            raise DomainError(f"unknown sigma kind {self.kind!r}")
        if self.kind == _TABLE and self._interp is None and self.table_x is not None:
            interp = PchipInterpolator(self.table_x, self.table_sigma, extrapolate=False)
            object.__setattr__(self, "_interp", interp)
            object.__setattr__(self, "_dinterp", interp.derivative())

    # -- sigma and its derivative -------------------------------------------------

    def sigma(self, x):
        """Evaluate sigma(x); raises DomainError outside the valid domain."""
        x = np.asarray(x, dtype=float)
        if self.kind == _POWER:
            if self.p == 0.0:
                out = np.full_like(x, self.c)
            else:
                if np.any(x < 0) and self.p != int(self.p):
                    raise DomainError("power-family sigma undefined for negative state")
                with np.errstate(divide="ignore"):
                    out = self.c * np.power(x, self.p)
            if np.any(~np.isfinite(out)):
                raise DomainError("sigma evaluation produced a non-finite value")
            return out if out.ndim else float(out)
        out = self._interp(x)
        if np.any(np.isnan(out)):
            raise DomainError(
                f"tabulated sigma evaluated outside its table "
                f"[{self.table_x[0]}, {self.table_x[-1]}]; extrapolation is disabled"
            )
        return out if np.ndim(out) else float(out)

    def dsigma(self, x):
        """Evaluate sigma'(x)."""
        x = np.asarray(x, dtype=float)
        if self.kind == _POWER:
            if self.p == 0.0:
                out = np.zeros_like(x)
            else:
                if np.any(x < 0) and (self.p - 1.0) != int(self.p - 1.0):
                    raise DomainError("power-family sigma' undefined for negative state")
                with np.errstate(divide="ignore"):
                    out = self.c * self.p * np.power(x, self.p - 1.0)
            if np.any(~np.isfinite(out)):
                raise DomainError("sigma' evaluation produced a non-finite value")
            return out if out.ndim else float(out)
        out = self._dinterp(x)
        if np.any(np.isnan(out)):
            raise DomainError("tabulated sigma' evaluated outside its table")
        return out if np.ndim(out) else float(out)

    # -- structure ----------------------------------------------------------------

    @property
    def positive_state(self) -> bool:
        """True when the exact solution stays strictly positive (power family, p>0)."""
        return self.kind == _POWER and self.p > 0 and self.x0 > 0 and self.c > 0

    @property
    def is_inverse_bessel(self) -> bool:
        """True for the reciprocal-Bessel(3) member sigma(x) = x**2 (driftless)."""
        return (
            self.kind == _POWER
            and self.c == 1.0
            and self.p == 2.0
            and self.x0 > 0
            and not self.drift
        )

    def require_positive_sigma(self):
        if self.kind == _POWER and self.c <= 0:
            raise DomainError("sigma must be strictly positive (power family needs c > 0)")


# ---------------------------------------------------------------------------
# Scalar numerics
# ---------------------------------------------------------------------------

def normal_cdf(x):
    """Standard normal CDF via the complementary error function (|err| < 1e-12)."""
    x = np.asarray(x, dtype=float)
    out = 0.5 * erfc(-x / math.sqrt(2.0))
    return out if out.ndim else float(out)


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-10, max_depth: int = 60) -> float:
    """Adaptive Simpson quadrature of ``f`` on [a, b] to absolute tolerance ``tol``."""
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b = b, a
        sign = -1.0

    def simpson(lo, mid, hi, flo, fmid, fhi):
        return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    def recurse(lo, hi, flo, fmid, fhi, whole, eps, depth):
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        left = simpson(lo, lm, mid, flo, flm, fmid)
        right = simpson(mid, rm, hi, fmid, frm, fhi)
        if depth >= max_depth or abs(left + right - whole) < 15.0 * eps:
            return left + right + (left + right - whole) / 15.0
        return recurse(lo, mid, flo, flm, fmid, left, eps / 2.0, depth + 1) + recurse(
            mid, hi, fmid, frm, fhi, right, eps / 2.0, depth + 1
        )

    mid = 0.5 * (a + b)
    fa, fm, fb = f(a), f(mid), f(b)
    for v in (fa, fm, fb):
        if not math.isfinite(v):
            raise DomainError("integrand is not finite on the requested interval")
    whole = simpson(a, mid, b, fa, fm, fb)
    return sign * recurse(a, b, fa, fm, fb, whole, tol, 0)


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------

def sample_brownian(grid: TimeGrid, rng: RngSpec) -> SamplePath:
    """Standard Brownian path: value 0 at t_start, independent N(0, dt) increments."""
    g = rng.generator()
    db = g.standard_normal(grid.steps) * math.sqrt(grid.dt)
    values = np.empty(grid.steps + 1)
    values[0] = 0.0
    np.cumsum(db, out=values[1:])
    return SamplePath(grid, values)


def sample_bessel3(grid: TimeGrid, r0: float, rng: RngSpec) -> SamplePath:
    """Bessel(3) path |W_t| with W a 3-d Brownian motion started at (r0, 0, 0).

    Exact Gaussian increments per coordinate, so the grid marginals are exact.
    """
    if r0 <= 0:
        raise DomainError(f"r0 must be positive, got {r0}")
    g = rng.generator()
    dw = g.standard_normal((grid.steps, 3)) * math.sqrt(grid.dt)
    w = np.empty((grid.steps + 1, 3))
    w[0] = (r0, 0.0, 0.0)
    np.cumsum(dw, axis=0, out=w[1:])
    w[1:] += w[0]
    values = np.linalg.norm(w, axis=1)
    return SamplePath(grid, values)


def inverse_path(path: SamplePath) -> SamplePath:
    """Pointwise reciprocal of a strictly positive path."""
    if np.any(path.values <= 0):
        raise DomainError("inverse_path requires strictly positive values")
    return SamplePath(path.grid, 1.0 / path.values, floored=path.floored)


def _euler_values(model: SdeModel, dt: float, db: np.ndarray, x0):
    """Euler iteration shared by the scalar and blocked drivers.

    ``db`` has shape (steps,) or (n, steps); ``x0`` is a scalar or per-row
    array.  Returns (values, flagged).  Two guards mark a path as flagged
    (excluded from statistics downstream): reflection off the positivity
    floor ``eps = 1e-12*x0`` on positive-state models, and a blow-up clamp at
    ``1e9 * max(1, |x0|)`` -- both are discretization artifacts, the exact
    solutions neither touch 0 nor explode.
    """
    db = np.atleast_2d(db)
    n, steps = db.shape
    values = np.empty((n, steps + 1))
    values[:, 0] = x0
    flagged = np.zeros(n, dtype=bool)
    use_floor = model.positive_state
    eps = 1e-12 * abs(model.x0)
    cap = 1e9 * max(1.0, abs(model.x0))
    drift = model.drift
    x = values[:, 0].copy()
    for k in range(steps):
        s = model.sigma(x)
        xn = x + s * db[:, k]
        if drift:
            xn += 0.5 * s * model.dsigma(x) * dt
        if use_floor:
            low = xn < eps
            if np.any(low):
                xn = np.where(low, 2.0 * eps - xn, xn)
                flagged |= low
        blown = ~np.isfinite(xn) | (np.abs(xn) > cap)
        if np.any(blown):
            xn = np.where(blown, np.sign(np.nan_to_num(xn, nan=1.0, posinf=1.0, neginf=-1.0)) * cap, xn)
            flagged |= blown
        values[:, k + 1] = xn
        x = xn
    return values, flagged


def euler_maruyama(model: SdeModel, grid: TimeGrid, driver) -> SamplePath:
    """Euler scheme ``X_{k+1} = X_k + sigma(X_k) dB_k`` (+ 0.5*sigma*sigma' dt if drifted).

    ``driver`` is either a Brownian :class:`SamplePath` on the same grid or an
    :class:`RngSpec` from which one is drawn.  On positive-state models the
    iterate is reflected off ``eps = 1e-12*x0`` and the path flagged
    ``floored`` -- floor events are discretization artifacts, the exact
    solution is strictly positive.
    """
    if isinstance(driver, RngSpec):
        driver = sample_brownian(grid, driver)
    if driver.grid != grid:
        raise GridError("driver grid does not match the requested grid")
    values, floored = _euler_values(model, grid.dt, driver.increments(), model.x0)
    return SamplePath(grid, values[0], floored=bool(floored[0]))


# ---------------------------------------------------------------------------
# The integrated-reciprocal-diffusion map h and the pathwise solve
# ---------------------------------------------------------------------------

_H_TOL = 1e-10


def doss_h(model: SdeModel, y: float, tol: float = _H_TOL) -> float:
    """h(y) = integral of 1/sigma from x0 to y (strictly increasing since sigma > 0)."""
    model.require_positive_sigma()

    def integrand(u):
        s = model.sigma(u)
        if s <= 0:
            raise DomainError(f"sigma must stay positive, got sigma({u}) = {s}")
        return 1.0 / s

    return adaptive_simpson(integrand, model.x0, float(y), tol=tol)


def doss_h_inverse(model: SdeModel, u: float, tol: float = _H_TOL) -> float:
    """Solve h(y) = u by bracketing bisection followed by Newton polish.

    Raises :class:`RangeError` when ``u`` lies beyond the computable range of
    ``h`` (the map can be bounded, e.g. sup h = 1/x0 for sigma(x) = x**2).
    """
    model.require_positive_sigma()
    if u == 0.0:
        return float(model.x0)

    def h(y):
        return doss_h(model, y, tol=tol)

    # Bracket by doubling steps away from x0 in the direction of u.
    step = max(abs(model.x0), 1.0)
    lo, hi = model.x0, model.x0
    h_lo = h_hi = 0.0
    try:
        if u > 0:
            prev = 0.0
            for _ in range(200):
                hi = model.x0 + step
                h_hi = h(hi)
                if h_hi >= u:
                    break
                if h_hi - prev < tol and h_hi < u:
                    raise RangeError(
                        f"h^-1 target {u} outside computed range: h appears bounded "
                        f"above by ~{h_hi:.6g} (reached y = {hi:.6g})"
                    )
                prev = h_hi
                lo, h_lo, step = hi, h_hi, step * 2.0
            else:
                raise RangeError(f"h^-1 target {u} not bracketed after expansion (h({hi}) = {h_hi})")
        else:
            prev = 0.0
            for _ in range(200):
                lo = model.x0 - step
                h_lo = h(lo)
                if h_lo <= u:
                    break
                if prev - h_lo < tol and h_lo > u:
                    raise RangeError(
                        f"h^-1 target {u} outside computed range: h appears bounded "
                        f"below by ~{h_lo:.6g} (reached y = {lo:.6g})"
                    )
                prev = h_lo
                hi, h_hi, step = lo, h_lo, step * 2.0
            else:
                raise RangeError(f"h^-1 target {u} not bracketed after expansion (h({lo}) = {h_lo})")
    except DomainError as exc:
        raise RangeError(f"h^-1 target {u} outside computed range: {exc}") from exc

    # Bisection to a coarse root, then Newton with h'(y) = 1/sigma(y).
    # Convergence asks both the h-residual and its y-scale image (residual
    # times sigma, the Newton step) to drop below tol.
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        h_mid = h(mid)
        if h_mid < u:
            lo, h_lo = mid, h_mid
        else:
            hi, h_hi = mid, h_mid
        if hi - lo < 1e-9 * max(1.0, abs(mid)):
            break
    y = 0.5 * (lo + hi)
    for _ in range(60):
        r = h(y) - u
        step = r * model.sigma(y)
        if abs(r) < tol and abs(step) < tol:
            return y
        y_new = y - step
        if not (lo <= y_new <= hi):
            y_new = 0.5 * (lo + hi)
        if y_new == y:
            return y
        y = y_new
    return y


def doss_solve(model: SdeModel, grid: TimeGrid, driver: SamplePath) -> SamplePath:
    """Exact pathwise solution ``Y_t = h^{-1}(B_t + h(Y_0))`` of the drifted SDE.

    Requires ``model.drift`` (the representation solves
    ``dY = 0.5*sigma*sigma' dt + sigma dB``), sigma > 0.  Inversion walks the
    grid incrementally: each target differs from its predecessor by one
    Brownian increment, so Newton from the previous state converges in a few
    steps; a bracketed bisection fallback guards wild increments.
    """
    if not model.drift:
        raise DomainError("doss_solve requires the drift-corrected model (drift=True)")
    model.require_positive_sigma()
    if driver.grid != grid:
        raise GridError("driver grid does not match the requested grid")

    targets = driver.values - driver.values[0]  # B_t + h(Y_0) with h(Y_0) = 0
    values = np.empty(grid.steps + 1)
    values[0] = model.x0
    y = float(model.x0)
    h_y = 0.0  # running value of h at y, refreshed by local quadrature

    def h_from(y_ref, h_ref, y_new):
        return h_ref + adaptive_simpson(
            lambda v: 1.0 / model.sigma(v), y_ref, y_new, tol=_H_TOL
        )

    for k in range(1, grid.steps + 1):
        u = targets[k]
        converged = False
        y_try, h_try = y, h_y
        for _ in range(60):
            r = h_try - u
            if abs(r) < _H_TOL:
                converged = True
                break
            s = model.sigma(y_try)
            if s <= 0:
                raise DomainError(f"sigma must stay positive, got sigma({y_try}) = {s}")
            y_next = y_try - r * s
            try:
                h_try = h_from(y_try, h_try, y_next)
            except DomainError as exc:
                raise RangeError(
                    f"h^-1 target {u} outside computed range at grid index {k}: {exc}"
                ) from exc
            y_try = y_next
        if not converged:
            y_try = doss_h_inverse(model, u)
            h_try = u
        values[k] = y_try
        y, h_y = y_try, h_try
    return SamplePath(grid, values)


# ---------------------------------------------------------------------------
# Exact first-passage sampling
# ---------------------------------------------------------------------------

def sample_first_passage_exact(gap: float, rng: RngSpec, n: int | None = None):
    """Exact draws of ``T = inf{t : B_t >= gap}`` via ``T = gap**2 / Z**2``.

    Returns a scalar when ``n`` is None, else an array of ``n`` samples.
    Zero normal draws (numerically impossible in practice) are redrawn.
    """
    if gap <= 0:
        raise DomainError(f"gap must be positive, got {gap}")
    g = rng.generator()
    size = 1 if n is None else int(n)
    z = g.standard_normal(size)
    bad = z == 0.0
    while np.any(bad):
        z[bad] = g.standard_normal(int(bad.sum()))
        bad = z == 0.0
    t = (gap / z) ** 2
    return float(t[0]) if n is None else t


# ---------------------------------------------------------------------------
# Coupled (driver, state) simulation used by the projection machinery
# ---------------------------------------------------------------------------

def _bessel_coupled_values(r0: float, dt: float, dw: np.ndarray):
    """Exact Bessel(3) norms plus the recovered Brownian driver of 1/R.

    ``dw`` has shape (steps, 3).  The driver increment over one step is
    ``-(W_k . dW_k)/|W_k|`` which is exactly N(0, dt) for every step, so the
    recovered driver is an exact Brownian motion strongly coupled to X = 1/R.
    """
    steps = dw.shape[0]
    w = np.empty((steps + 1, 3))
    w[0] = (r0, 0.0, 0.0)
    np.cumsum(dw, axis=0, out=w[1:])
    w[1:] += w[0]
    r = np.linalg.norm(w, axis=1)
    driver = np.empty(steps + 1)
    driver[0] = 0.0
    np.cumsum(-(w[:-1] * dw).sum(axis=1) / r[:-1], out=driver[1:])
    return driver, 1.0 / r


def resolve_coupling(model: SdeModel, method: str = "auto") -> str:
    """Resolve the coupling method name, validating availability."""
    if method == "auto":
        return "bessel_exact" if model.is_inverse_bessel else "euler"
    if method == "bessel_exact" and not model.is_inverse_bessel:
        raise DomainError("bessel_exact coupling requires the sigma(x) = x**2 model")
    if method not in ("euler", "bessel_exact"):
        raise DomainError(f"unknown coupling method {method!r}")
    return method


def coupled_values(model: SdeModel, grid: TimeGrid, g: np.random.Generator, method: str):
    """Generator-level core of :func:`simulate_coupled`.

    Returns ``(driver_values, state_values, floored)``.  Draw order per stream
    is fixed: all path normals first (ensemble engines then draw any
    bridge-correction uniforms from the same generator).
    """
    method = resolve_coupling(model, method)
    if method == "bessel_exact":
        dw = g.standard_normal((grid.steps, 3)) * math.sqrt(grid.dt)
        driver, x = _bessel_coupled_values(1.0 / model.x0, grid.dt, dw)
        return driver, x, False
    db = g.standard_normal(grid.steps) * math.sqrt(grid.dt)
    driver = np.empty(grid.steps + 1)
    driver[0] = 0.0
    np.cumsum(db, out=driver[1:])
    values, floored = _euler_values(model, grid.dt, db, model.x0)
    return driver, values[0], bool(floored[0])


def simulate_coupled(model: SdeModel, grid: TimeGrid, rng: RngSpec, method: str = "auto"):
    """Simulate one coupled (Brownian driver, state) pair.

    ``method``:
      * ``"euler"`` -- driver drawn exactly, state by the Euler scheme.
      * ``"bessel_exact"`` -- exact reciprocal-Bessel(3) state with an exactly
        Brownian driver recovered from the same 3-d increments; only valid for
        the sigma(x) = x**2 member.  Preferred for that model because the raw
        Euler scheme is unstable in its far upper tail.
      * ``"auto"`` -- ``bessel_exact`` when available, else ``euler``.

    Returns ``(driver, state)`` as :class:`SamplePath` objects.
    """
    driver, x, floored = coupled_values(model, grid, rng.generator(), method)
    return SamplePath(grid, driver), SamplePath(grid, x, floored=floored)
