"""Price-grid observation and transaction-time masking pipelines.

Two market-flavoured shrinkage mechanisms: observing a continuous price only
when it crosses a penny grid (every crossing, both directions), and observing
only the masked stochastic integral ``Y = int H J dB`` where J switches the
observation window on and off at renewal times.  Because Y is accumulated
with literal zero increments during blackouts, its constancy intervals are
bit-exact and identify the blackout structure, which in turn localizes the
projection's jumps at blackout-ending renewal times.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, GridError, InsufficientDataError
from .filtration import DOWN, UP, ObservationRecord, PassageEvent
from .rng import RngSpec
from .stochastics import SamplePath, SdeModel, TimeGrid, _euler_values, coupled_values, resolve_coupling

__all__ = [
    "TickGrid",
    "RenewalSpec",
    "MaskedObservation",
    "MarketJump",
    "MarketProjection",
    "tick_observe",
    "mask_transactions",
    "family_project",
    "quadratic_variation_error",
]


# ---------------------------------------------------------------------------
# Tick grid observation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TickGrid:
    """Price lattice ``anchor + k*tick``."""

    tick: float
    anchor: float = 0.0

    def __post_init__(self):
        if self.tick <= 0:
            raise DomainError(f"tick must be positive, got {self.tick}")

    def levels_between(self, lo: float, hi: float) -> np.ndarray:
        """Lattice points within [lo, hi]."""
        k_lo = math.ceil((lo - self.anchor) / self.tick - 1e-12)
        k_hi = math.floor((hi - self.anchor) / self.tick + 1e-12)
        if k_hi < k_lo:
            return np.empty(0)
        return self.anchor + self.tick * np.arange(k_lo, k_hi + 1)


def tick_observe(path: SamplePath, grid: TickGrid) -> ObservationRecord:
    """Every crossing of every tick level in the path's range, with direction.

    A level is crossed upward at a step whose endpoints straddle it from
    below (``x_i < a <= x_{i+1}``) and downward in the reverse case, so events
    for one level strictly alternate.  Crossing times sit at the within-step
    linear-interpolation point.
    """
    v = path.values
    levels = grid.levels_between(float(v.min()), float(v.max()))
    times = path.grid.times
    events = []
    for a in levels:
        state = v >= a
        flips = np.nonzero(state[1:] != state[:-1])[0]
        for i in flips:
            frac = (a - v[i]) / (v[i + 1] - v[i])
            t = times[i] + frac * path.grid.dt
            events.append(PassageEvent(float(a), float(t), UP if state[i + 1] else DOWN))
    events.sort(key=lambda e: (e.time, e.level))
    for i in range(1, len(events)):
        if events[i].time <= events[i - 1].time:
            events[i] = PassageEvent(
                events[i].level, float(np.nextafter(events[i - 1].time, np.inf)), events[i].direction
            )
    return ObservationRecord(tuple(events), horizon=path.grid.horizon, t_start=path.grid.t_start)


# ---------------------------------------------------------------------------
# Transaction-time masking
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RenewalSpec:
    """Inter-arrival law of the transaction clock.

    ``exponential`` draws i.i.d. exponential(rate) gaps (a Poisson stream,
    satisfying the continuous-distribution hypothesis); ``fixed`` replays a
    given gap table deterministically -- a test hook, whose first gap may be 0
    to start the observation window at the origin.
    """

    kind: str
    rate: float = 1.0
    table: tuple = ()

    def __post_init__(self):
        if self.kind not in ("exponential", "fixed"):
            raise DomainError(f"renewal kind must be 'exponential' or 'fixed', got {self.kind!r}")
        if self.kind == "exponential" and self.rate <= 0:
            raise DomainError(f"exponential renewal needs rate > 0, got {self.rate}")
        if self.kind == "fixed":
            gaps = tuple(float(g) for g in self.table)
            if any(g < 0 for g in gaps) or any(g <= 0 for g in gaps[1:]):
                raise DomainError("fixed renewal gaps must be positive (first may be 0)")
            object.__setattr__(self, "table", gaps)

    def sample_arrivals(self, g: np.random.Generator, horizon: float) -> np.ndarray:
        """Strictly increasing arrival times up to the horizon."""
        if self.kind == "fixed":
            arr = np.cumsum(self.table)
            return arr[arr <= horizon]
        out = []
        t = 0.0
        while True:
            t += g.exponential(1.0 / self.rate)
            if t > horizon:
                return np.array(out)
            out.append(t)


@dataclass(frozen=True)
class MaskedObservation:
    """The observable integral Y = int H J dB plus its masking data.

    ``j`` and ``hj`` hold the indicator and weighted indicator at step left
    endpoints (predictable evaluation); ``y`` is accumulated stepwise, so it
    is exactly constant (bit-exact) wherever J = 0.
    """

    driver: SamplePath
    y: np.ndarray
    j: np.ndarray
    hj: np.ndarray
    arrivals: np.ndarray

    def __post_init__(self):
        if self.y.shape != (self.driver.grid.steps + 1,):
            raise GridError("y must live on the driver grid")
        if self.j.shape != (self.driver.grid.steps,) or self.hj.shape != self.j.shape:
            raise GridError("j and hj must have one value per step")

    def discrete_quadratic_variation(self) -> float:
        return float(np.sum(np.diff(self.y) ** 2))

    def qv_target(self) -> float:
        """int (H J)^2 ds on the same grid."""
        return float(np.sum(self.hj**2) * self.driver.grid.dt)

    @property
    def blackout_ends(self) -> np.ndarray:
        """Arrival times at which an observation window opens: tau_1, tau_3, ..."""
        return self.arrivals[0::2]


def _indicator_on_grid(arrivals: np.ndarray, times: np.ndarray) -> np.ndarray:
    """J per step, evaluated at the step midpoint (parity of arrivals before it).

    Midpoint evaluation keeps boundary coincidences out: a window opening
    exactly at a grid time (e.g. the degenerate full-information table with
    tau_1 = 0) switches the step it starts in.
    """
    dt = times[1] - times[0]
    return (np.searchsorted(arrivals, times[:-1] + 0.5 * dt, side="left") % 2).astype(float)


def mask_transactions(driver: SamplePath, h, renewal: RenewalSpec, rng: RngSpec) -> MaskedObservation:
    """Build the masked observation of a driver path.

    ``h`` is the predictable weight: a scalar or a callable of the step left
    endpoint times (default 1).  Increments are accumulated step by step, and
    blackout steps add a literal 0.0, keeping Y bit-exact constant there.
    """
    g = rng.generator()
    arrivals = renewal.sample_arrivals(g, driver.grid.horizon)
    times = driver.grid.times
    j = _indicator_on_grid(arrivals, times)
    h_vals = h(times[:-1]) if callable(h) else np.full(driver.grid.steps, float(h))
    hj = np.asarray(h_vals, dtype=float) * j
    y = np.empty(driver.grid.steps + 1)
    y[0] = 0.0
    db = driver.increments()
    for k in range(driver.grid.steps):
        y[k + 1] = y[k] + (hj[k] * db[k] if j[k] else 0.0)
    return MaskedObservation(driver, y, j, hj, arrivals)


def quadratic_variation_error(masked) -> float:
    """Pooled relative error of the discrete quadratic variation of Y.

    Sums the per-path discrete quadratic variations over the ensemble and
    compares against the summed targets int (H J)^2 ds.
    """
    masked = list(masked)
    qv = sum(m.discrete_quadratic_variation() for m in masked)
    target = sum(m.qv_target() for m in masked)
    if target == 0:
        return 0.0 if qv == 0 else math.inf
    return abs(qv - target) / target


# ---------------------------------------------------------------------------
# Theorem-8-family projection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MarketJump:
    path: int
    time: float
    delta: float
    delta_from_freeze: float
    renewal_index: int | None
    distance: float


@dataclass
class MarketProjection:
    """Ensemble projection keyed on the discretized observed Y-prefix.

    The jump detector is interval-based: Y's bit-exact constancy intervals
    define the filtration's frozen stretches, and each detected jump is the
    change of M across one such interval, attributed at the evaluation point
    where Y resumes.  ``delta`` is measured against the last frozen value
    (numerical left limit), ``delta_from_freeze`` against M at the freeze
    onset; both are reported.
    """

    grid: TimeGrid
    t_eval: np.ndarray
    x: np.ndarray
    m: np.ndarray
    low_occupancy: np.ndarray
    y_eval: np.ndarray
    floored: np.ndarray
    blackout_ends: list
    jumps: list = field(default_factory=list)

    @property
    def included(self) -> np.ndarray:
        return ~self.floored

    def eval_index(self, t: float) -> int:
        j = int(np.argmin(np.abs(self.t_eval - t)))
        if abs(self.t_eval[j] - t) > 1e-9 + 1e-9 * abs(t):
            raise GridError(f"evaluation time {t} is not on the evaluation grid")
        return j

    def means_at(self, t: float):
        """Means over included paths; see the projection counterpart for why
        occupancy flags are ignored for partition means."""
        j = self.eval_index(t)
        ok = self.included
        x = self.x[ok, j].astype(float)
        m = self.m[ok, j].astype(float)
        n = x.size
        se = math.sqrt(x.var(ddof=1) / n + m.var(ddof=1) / n)
        return float(x.mean()), float(m.mean()), se

    def jump_mass_localization(self, noise_threshold: float):
        """Mass-weighted fraction of above-threshold jumps within one
        evaluation step of a blackout-ending renewal time.

        The indicator J switches at fine-step resolution, so the attainable
        localization is one evaluation step plus one fine step.
        """
        step = float(self.t_eval[1] - self.t_eval[0]) + self.grid.dt
        total = 0.0
        near = 0.0
        for jmp in self.jumps:
            if abs(jmp.delta) <= noise_threshold:
                continue
            total += abs(jmp.delta)
            if jmp.distance <= step + 1e-12:
                near += abs(jmp.delta)
        return (near / total if total else 1.0), near, total


def _market_chunk(payload):
    (model, grid, renewal, h_scalar, master_seed, lo, hi, method, eval_idx) = payload
    n = hi - lo
    steps = grid.steps
    times = grid.times
    x_eval = np.empty((n, eval_idx.size), dtype=np.float32)
    y_eval = np.empty((n, eval_idx.size))
    floored = np.zeros(n, dtype=bool)
    arrivals_list = []
    euler_db = np.empty((n, steps)) if method == "euler" else None
    y_all = np.empty((n, steps + 1))
    y_all[:, 0] = 0.0
    jmat = np.empty((n, steps))
    for i in range(n):
        g = RngSpec(master_seed, lo + i).generator()
        if method == "euler":
            db = g.standard_normal(steps) * math.sqrt(grid.dt)
            euler_db[i] = db
        else:
            driver, state, fl = coupled_values(model, grid, g, method)
            db = np.diff(driver)
            x_eval[i] = state[eval_idx]
            floored[i] = fl
        arrivals = renewal.sample_arrivals(g, grid.horizon)
        arrivals_list.append(arrivals)
        jmat[i] = _indicator_on_grid(arrivals, times)
        np.cumsum(np.where(jmat[i] > 0, h_scalar * db, 0.0), out=y_all[i, 1:])
    if method == "euler":
        states, floored = _euler_values(model, grid.dt, euler_db, model.x0)
        x_eval[:] = states[:, eval_idx].astype(np.float32)
    y_eval[:] = y_all[:, eval_idx]
    return lo, x_eval, y_eval, floored, arrivals_list


def family_project(
    model: SdeModel,
    grid: TimeGrid,
    n_paths: int,
    renewal: RenewalSpec,
    rng: RngSpec,
    *,
    h: float = 1.0,
    eval_steps: int = 8,
    bucket_steps: int = 16,
    y_bin: float = 0.25,
    min_occupancy: int = 100,
    method: str = "auto",
    workers: int = 1,
    block: int = 1024,
) -> MarketProjection:
    """Project the state onto the masked-integral filtration, ensemble-style.

    The conditioning key at each evaluation time is F_t-measurable: the count
    of observed activity onsets, the bucketed time of the last onset, and the
    current Y value quantized to ``y_bin``.  M is the within-key ensemble mean
    of X.  Jumps are measured across Y's bit-exact constancy intervals and
    matched to the blackout-ending renewal times.
    """
    if n_paths < 1000:
        raise InsufficientDataError(f"family_project needs n_paths >= 1000, got {n_paths}")
    if eval_steps < 1 or grid.steps % eval_steps:
        raise GridError("eval_steps must divide the number of grid steps")
    method = resolve_coupling(model, method)
    eval_idx = np.arange(0, grid.steps + 1, eval_steps)
    payloads = [
        (model, grid, renewal, float(h), rng.master_seed, lo, min(lo + block, n_paths), method, eval_idx)
        for lo in range(0, n_paths, block)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_market_chunk, payloads))
    else:
        results = [_market_chunk(p) for p in payloads]
    results.sort(key=lambda r: r[0])
    x = np.concatenate([r[1] for r in results], axis=0)
    y_eval = np.concatenate([r[2] for r in results], axis=0)
    floored = np.concatenate([r[3] for r in results], axis=0)
    arrivals_list = [a for r in results for a in r[4]]

    t_eval = grid.times[eval_idx]
    n, n_eval = y_eval.shape
    # activity: Y moved over the previous evaluation interval
    act = np.zeros((n, n_eval), dtype=bool)
    act[:, 1:] = y_eval[:, 1:] != y_eval[:, :-1]
    onset = act & ~np.concatenate([np.zeros((n, 1), bool), act[:, :-1]], axis=1)
    onset_count = np.minimum(np.cumsum(onset, axis=1), 8)
    onset_idx = np.where(onset, np.arange(n_eval)[None, :], 0)
    last_onset = np.maximum.accumulate(onset_idx, axis=1)
    # staleness: evaluation intervals since information last resumed flowing,
    # coarsened to the key bucket and capped -- recency matters, absolute
    # onset times fragment the groups without adding much
    bucket = max(int(bucket_steps // eval_steps), 1)
    staleness = np.minimum((np.arange(n_eval)[None, :] - last_onset) // bucket, 8)
    staleness[onset_count == 0] = 9  # nothing observed yet

    y_q = np.round(y_eval / y_bin).astype(np.int64)
    y_q -= y_q.min()
    base_stale = 11
    base_y = int(y_q.max()) + 2

    m = np.full(x.shape, np.nan, dtype=np.float32)
    low = np.ones(x.shape, dtype=bool)
    inc = np.nonzero(~floored)[0]
    xi = x[inc].astype(np.float64)
    for j in range(n_eval):
        code = (
            onset_count[inc, j].astype(np.int64) * base_stale + staleness[inc, j]
        ) * base_y + y_q[inc, j]
        _, invmap, counts = np.unique(code, return_inverse=True, return_counts=True)
        sums = np.bincount(invmap, weights=xi[:, j])
        m[inc, j] = (sums / counts)[invmap]
        low[inc, j] = counts[invmap] < min_occupancy

    # interval-based jumps: change of M across each bit-exact constancy run
    jumps = []
    ends = [np.asarray(a)[0::2] for a in arrivals_list]
    mf = m.astype(float)
    for i in range(n):
        if floored[i]:
            continue
        frozen = ~act[i]
        j = 1
        while j < n_eval:
            if frozen[j]:
                a = j - 1
                while j < n_eval and frozen[j]:
                    j += 1
                if j >= n_eval:
                    break  # trailing blackout, no resume before the horizon
                b = j - 1  # last frozen evaluation index
                if low[i, b] or low[i, b + 1] or low[i, a]:
                    continue
                t_jump = float(t_eval[b + 1])
                be = ends[i]
                if be.size:
                    k = int(np.argmin(np.abs(be - t_jump)))
                    dist = float(abs(be[k] - t_jump))
                    ridx = 2 * k + 1  # odd renewal index tau_{2k+1}
                else:
                    dist, ridx = math.inf, None
                jumps.append(
                    MarketJump(
                        i,
                        t_jump,
                        float(mf[i, b + 1] - mf[i, b]),
                        float(mf[i, b + 1] - mf[i, a]),
                        ridx,
                        dist,
                    )
                )
            else:
                j += 1

    return MarketProjection(grid, t_eval, x, m, low, y_eval, floored, ends, jumps)
