"""Optional projection of the state onto the first-passage filtration.

``project_ensemble`` simulates N coupled (driver, state) paths, detects the
driver's passage events, and estimates ``M_t = E[X_t | F_t]`` by conditioning
on the discretized event prefix: paths sharing a prefix key at t are averaged.
The estimator is unbiased given exact keys and needs no bridge mathematics;
``project_conditional_exact`` is the nested-Monte-Carlo precision tool for a
single conditioning state, reconstructing the driver segment before the last
passage as a first-passage bridge (time-reversed Bessel(3) bridge) and
rejecting continuations that cross a neighbouring level.

Jump extraction compares M across consecutive evaluation points; the left
limit at an event is measured numerically (last evaluation before the event)
rather than assumed equal to the value at the start of the frozen interval,
and both differences are reported.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, GridError, InsufficientDataError, RejectionInefficiencyError
from .filtration import LevelSet, ObservationRecord, _first_passage_matrix, left_isolated
from .rng import RngSpec
from .stochastics import (
    SdeModel,
    TimeGrid,
    _euler_values,
    coupled_values,
    resolve_coupling,
)

__all__ = [
    "ConditioningKey",
    "CadlagProjection",
    "Jump",
    "EnsembleProjection",
    "NestedEstimate",
    "ReducingTimes",
    "project_ensemble",
    "project_conditional_exact",
    "extract_jumps",
    "reducing_times",
]


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConditioningKey:
    """Discretized prefix of an observation record up to an evaluation time.

    ``events`` is a time-ordered tuple of ``(level, time)`` pairs; times are
    understood to be discretized to buckets of width ``bucket_width``.
    """

    events: tuple
    bucket_width: float

    def __post_init__(self):
        if self.bucket_width <= 0:
            raise DomainError("bucket_width must be positive")
        times = [t for _, t in self.events]
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise DomainError("key events must be strictly time-ordered")

    @classmethod
    def from_record(cls, record: ObservationRecord, t: float, bucket_width: float):
        events = tuple((e.level, e.time) for e in record.events if e.time <= t)
        return cls(events, bucket_width)

    @property
    def last(self):
        return self.events[-1] if self.events else None


@dataclass(frozen=True)
class Jump:
    """One detected jump of the projection."""

    time: float
    delta: float
    left_value: float
    right_value: float
    alpha: float | None = None
    beta: float | None = None
    event_time: float | None = None
    delta_from_interval_start: float | None = None


@dataclass(frozen=True)
class CadlagProjection:
    """Piecewise view of one path's projection M with explicit jump marks.

    ``times``/``values`` carry the interior evaluation grid; at each event
    time the left and right values bracket the jump, and ``jumps`` records
    ``right - left`` for each event (the invariant ``right - left == delta``
    holds by construction).  Between recorded events there are no jump marks.
    """

    times: np.ndarray
    values: np.ndarray
    event_times: np.ndarray
    left_values: np.ndarray
    right_values: np.ndarray
    event_levels: np.ndarray
    event_predecessors: np.ndarray
    low_confidence: np.ndarray

    def __post_init__(self):
        for name in ("times", "values", "event_times", "left_values", "right_values"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.times.shape != self.values.shape:
            raise GridError("projection times and values must align")
        if not (
            self.event_times.shape
            == self.left_values.shape
            == self.right_values.shape
        ):
            raise GridError("event arrays must align")

    @property
    def jumps(self):
        return [
            Jump(float(t), float(r - l), float(l), float(r), beta=float(b), alpha=float(a), event_time=float(t))
            for t, l, r, b, a in zip(
                self.event_times,
                self.left_values,
                self.right_values,
                self.event_levels,
                self.event_predecessors,
            )
            if not (math.isnan(l) or math.isnan(r))
        ]


def extract_jumps(proj: CadlagProjection, noise_threshold: float):
    """Above-threshold moves of M between consecutive evaluation points.

    Each move is tagged with the recorded passage event lying within one
    evaluation step, when there is one; untagged moves are off-event and feed
    the localization diagnostic.  ``noise_threshold = inf`` returns nothing.
    """
    if noise_threshold < 0:
        raise DomainError("noise_threshold must be non-negative")
    t, v = proj.times, proj.values
    out = []
    diffs = np.diff(v)
    with np.errstate(invalid="ignore"):
        big = np.abs(diffs) > noise_threshold
    lows = proj.low_confidence
    step = t[1] - t[0] if t.size > 1 else 0.0
    for j in np.nonzero(big)[0]:
        if lows.size and (lows[j] or lows[j + 1]):
            continue
        if math.isnan(diffs[j]):
            continue
        tag = None
        for k, te in enumerate(proj.event_times):
            if t[j] - step <= te <= t[j + 1] + step:
                tag = k
                break
        out.append(
            Jump(
                float(t[j + 1]),
                float(diffs[j]),
                float(v[j]),
                float(v[j + 1]),
                alpha=float(proj.event_predecessors[tag]) if tag is not None else None,
                beta=float(proj.event_levels[tag]) if tag is not None else None,
                event_time=float(proj.event_times[tag]) if tag is not None else None,
            )
        )
    return out


# ---------------------------------------------------------------------------
# Ensemble engine
# ---------------------------------------------------------------------------

def _project_chunk(payload):
    """Simulate one contiguous block of streams; top-level for pickling.

    Draws come stream by stream (the reproducibility contract) but the Euler
    iteration runs blocked across the chunk.
    """
    (model, grid, level_values, master_seed, lo, hi, method, bridge, two_sided, eval_idx) = payload
    n = hi - lo
    n_eval = eval_idx.size
    n_lev = level_values.size
    x_eval = np.empty((n, n_eval), dtype=np.float32)
    up_times = np.full((n, n_lev), np.nan)
    down_times = np.full((n, n_lev), np.nan) if two_sided else None
    floored = np.zeros(n, dtype=bool)
    steps = grid.steps
    drivers = np.empty((n, steps + 1))
    states = np.empty((n, steps + 1))
    log_u_up = np.empty((n, steps)) if bridge else None
    log_u_down = np.empty((n, steps)) if (bridge and two_sided) else None
    euler_db = np.empty((n, steps)) if method == "euler" else None
    for i in range(n):
        g = RngSpec(master_seed, lo + i).generator()
        if method == "euler":
            euler_db[i] = g.standard_normal(steps) * math.sqrt(grid.dt)
        else:
            driver, state, fl = coupled_values(model, grid, g, method)
            drivers[i] = driver
            states[i] = state
            floored[i] = fl
        if bridge:
            with np.errstate(divide="ignore"):
                log_u_up[i] = np.log(g.random(steps))
                if two_sided:
                    log_u_down[i] = np.log(g.random(steps))
    if method == "euler":
        drivers[:, 0] = 0.0
        np.cumsum(euler_db, axis=1, out=drivers[:, 1:])
        states, floored = _euler_values(model, grid.dt, euler_db, model.x0)
    step_up, frac_up = _first_passage_matrix(drivers, level_values, grid.dt, log_u_up)
    hit = step_up >= 0
    up_times[hit] = grid.t_start + (step_up[hit] + frac_up[hit]) * grid.dt
    if two_sided:
        step_dn, frac_dn = _first_passage_matrix(-drivers, level_values, grid.dt, log_u_down)
        hit = step_dn >= 0
        down_times[hit] = grid.t_start + (step_dn[hit] + frac_dn[hit]) * grid.dt
    x_eval[:] = states[:, eval_idx]
    return lo, x_eval, up_times, down_times, floored


def _encode_keys(event_times, t, bucket_dt, t_start, n_buckets):
    """Integer key per path: bucketed passage times of levels reached by t.

    ``event_times`` is (paths, n_channels) with NaN for unreached levels.  The
    running code is re-densified whenever it risks overflowing int64, so any
    number of channels is safe.
    """
    n, n_chan = event_times.shape
    with np.errstate(invalid="ignore"):
        buckets = np.where(
            np.isnan(event_times) | (event_times > t),
            0,
            1
            + np.floor(
                (np.nan_to_num(event_times, nan=0.0) - t_start) / bucket_dt
            ).astype(np.int64),
        )
    base = np.int64(n_buckets + 2)
    code = np.zeros(n, dtype=np.int64)
    for l in range(n_chan):
        code = code * base + buckets[:, l]
        if l + 1 < n_chan and code.size and code.max() > (1 << 46):
            _, code = np.unique(code, return_inverse=True)
            code = code.astype(np.int64)
    return code


@dataclass
class EnsembleProjection:
    """Projection of a whole ensemble on a common evaluation grid.

    Matrices are (paths, eval points); ``m`` is the ensemble-conditioning
    estimate of E[X_t | F_t] per path, ``low_occupancy`` flags entries whose
    conditioning group fell below the occupancy minimum (excluded from
    acceptance statistics), and ``up_times`` the recorded passage times per
    level (NaN when unreached before the horizon).
    """

    grid: TimeGrid
    levels: LevelSet
    t_eval: np.ndarray
    x: np.ndarray
    m: np.ndarray
    low_occupancy: np.ndarray
    up_times: np.ndarray
    down_times: np.ndarray | None
    floored: np.ndarray
    bucket_steps: int
    min_occupancy: int
    method: str
    isolated: list = field(default_factory=list)

    # -- views ------------------------------------------------------------

    @property
    def n_paths(self) -> int:
        return self.x.shape[0]

    @property
    def included(self) -> np.ndarray:
        return ~self.floored

    def eval_index(self, t: float) -> int:
        j = int(np.argmin(np.abs(self.t_eval - t)))
        if abs(self.t_eval[j] - t) > 1e-9 + 1e-9 * abs(t):
            raise GridError(f"evaluation time {t} is not on the evaluation grid")
        return j

    def means_at(self, t: float):
        """(mean X, mean M, pooled SE) over included paths at t.

        Low-occupancy flags are deliberately ignored here: conditioning groups
        partition the ensemble, so the mean of M over complete groups equals
        the mean of X exactly, while dropping flagged groups would bias both
        means (the small groups hold the rare, large excursions).  The flags
        protect per-path values and jump statistics, not partition means.
        """
        j = self.eval_index(t)
        ok = self.included
        x = self.x[ok, j].astype(float)
        m = self.m[ok, j].astype(float)
        n = x.size
        se = math.sqrt(x.var(ddof=1) / n + m.var(ddof=1) / n)
        return float(x.mean()), float(m.mean()), se

    def path_projection(self, i: int) -> CadlagProjection:
        """Per-path cadlag view with left/right values at its recorded events."""
        ev_t, ev_beta, ev_alpha, lefts, rights = [], [], [], [], []
        for beta, alpha in self.isolated:
            l_idx = list(self.levels.values).index(beta)
            te = self.up_times[i, l_idx]
            if math.isnan(te):
                continue
            j = int(np.searchsorted(self.t_eval, te))
            if j == 0 or j >= self.t_eval.size:
                continue
            ev_t.append(te)
            ev_beta.append(beta)
            ev_alpha.append(alpha)
            lefts.append(float(self.m[i, j - 1]))
            rights.append(float(self.m[i, j]))
        return CadlagProjection(
            self.t_eval,
            self.m[i].astype(float),
            np.array(ev_t),
            np.array(lefts),
            np.array(rights),
            np.array(ev_beta),
            np.array(ev_alpha),
            self.low_occupancy[i],
        )

    # -- jump statistics ----------------------------------------------------

    def jump_table(self, noise_threshold: float):
        """Above-threshold jumps at recorded isolated-level events.

        Returns arrays (path, event_time, alpha, beta, delta, delta_from_s)
        where ``delta`` is measured against the numerical left limit and
        ``delta_from_s`` against M at the start of the frozen interval.
        """
        rows = []
        lev_list = list(self.levels.values)
        for beta, alpha in self.isolated:
            l_idx = lev_list.index(beta)
            te = self.up_times[:, l_idx]
            have = ~np.isnan(te) & self.included
            j = np.searchsorted(self.t_eval, np.nan_to_num(te, nan=np.inf))
            ok = have & (j > 0) & (j < self.t_eval.size)
            idx = np.nonzero(ok)[0]
            jj = j[idx]
            left = self.m[idx, jj - 1].astype(float)
            right = self.m[idx, jj].astype(float)
            bad = self.low_occupancy[idx, jj - 1] | self.low_occupancy[idx, jj]
            if alpha == 0.0:
                s_idx = np.zeros(idx.size, dtype=int)
            else:
                a_idx = lev_list.index(alpha)
                ta = self.up_times[idx, a_idx]
                s_idx = np.maximum(
                    np.searchsorted(self.t_eval, np.nan_to_num(ta, nan=0.0)) - 0, 0
                )
                s_idx = np.minimum(s_idx, jj - 1)
            m_s = self.m[idx, s_idx].astype(float)
            delta = right - left
            for k in range(idx.size):
                if bad[k] or abs(delta[k]) <= noise_threshold:
                    continue
                rows.append(
                    (
                        int(idx[k]),
                        float(te[idx[k]]),
                        float(alpha),
                        float(beta),
                        float(delta[k]),
                        float(right[k] - m_s[k]),
                    )
                )
        rows.sort()
        return rows

    def jump_localization(self, noise_threshold: float):
        """Fraction of above-threshold M moves lying within one evaluation
        step of a recorded isolated-level passage, plus the raw counts."""
        diffs = np.abs(np.diff(self.m.astype(float), axis=1))
        ok = self.included[:, None] & ~(self.low_occupancy[:, 1:] | self.low_occupancy[:, :-1])
        big = (diffs > noise_threshold) & ok
        near = np.zeros_like(big)
        lev_list = list(self.levels.values)
        for beta, _ in self.isolated:
            l_idx = lev_list.index(beta)
            te = self.up_times[:, l_idx]
            have = ~np.isnan(te)
            j = np.searchsorted(self.t_eval, np.nan_to_num(te, nan=np.inf)) - 1
            rows = np.nonzero(have & (j >= 0) & (j < near.shape[1]))[0]
            cols = j[rows]
            for off in (-1, 0, 1):
                c = np.clip(cols + off, 0, near.shape[1] - 1)
                near[rows, c] = True
        n_big = int(big.sum())
        n_near = int((big & near).sum())
        fraction = n_near / n_big if n_big else 1.0
        return fraction, n_near, n_big


def project_ensemble(
    model: SdeModel,
    levels: LevelSet,
    grid: TimeGrid,
    n_paths: int,
    rng: RngSpec,
    *,
    bucket_steps: int = 8,
    eval_steps: int | None = None,
    min_occupancy: int = 30,
    bridge_correction: bool = True,
    method: str = "auto",
    workers: int = 1,
    block: int = 1024,
    strictness_override: bool = False,
) -> EnsembleProjection:
    """Ensemble-conditioning estimate of the optional projection M = E[X|F].

    Simulates ``n_paths`` coupled (driver, state) pairs with per-stream
    counter-based randomness (stream ids ``0..n_paths-1``), detects driver
    passages over ``levels``, and averages X within groups sharing the same
    discretized event prefix (passage times bucketed to ``bucket_steps`` grid
    steps) at every point of the evaluation grid (every ``eval_steps``-th grid
    time, default ``bucket_steps``).  Groups below ``min_occupancy`` are
    flagged and excluded from acceptance statistics; floored Euler paths are
    excluded and counted.  Results are independent of ``workers``.
    """
    if n_paths < 1000:
        raise InsufficientDataError(f"project_ensemble needs n_paths >= 1000, got {n_paths}")
    if eval_steps is None:
        eval_steps = bucket_steps
    if bucket_steps < 1 or grid.steps % bucket_steps:
        raise GridError("bucket_steps must divide the number of grid steps")
    if eval_steps < 1 or grid.steps % eval_steps:
        raise GridError("eval_steps must divide the number of grid steps")
    if not strictness_override:
        from .classify import STRICT, strictness_classify

        verdict = strictness_classify(model) if model.kind == "power" else None
        if verdict is not None and verdict.verdict not in (STRICT,):
            import warnings

            warnings.warn(
                f"model verdict is {verdict.verdict}; projecting anyway "
                "(pass strictness_override=True to silence)",
                stacklevel=2,
            )
    method = resolve_coupling(model, method)
    eval_idx = np.arange(0, grid.steps + 1, eval_steps)
    two_sided = levels.two_sided

    payloads = [
        (
            model,
            grid,
            levels.values,
            rng.master_seed,
            lo,
            min(lo + block, n_paths),
            method,
            bridge_correction,
            two_sided,
            eval_idx,
        )
        for lo in range(0, n_paths, block)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_project_chunk, payloads))
    else:
        results = [_project_chunk(p) for p in payloads]
    results.sort(key=lambda r: r[0])

    x = np.concatenate([r[1] for r in results], axis=0)
    up_times = np.concatenate([r[2] for r in results], axis=0)
    down_times = np.concatenate([r[3] for r in results], axis=0) if two_sided else None
    floored = np.concatenate([r[4] for r in results], axis=0)

    t_eval = grid.times[eval_idx]
    bucket_dt = bucket_steps * grid.dt
    n_buckets = int(grid.steps // bucket_steps) + 1
    m = np.full_like(x, np.nan)
    low = np.ones(x.shape, dtype=bool)
    included = np.nonzero(~floored)[0]
    x_inc = x[included].astype(np.float64)
    key_times = up_times if down_times is None else np.concatenate([up_times, down_times], axis=1)
    key_inc = key_times[included]
    for j, t in enumerate(t_eval):
        code = _encode_keys(key_inc, t, bucket_dt, grid.t_start, n_buckets)
        _, inv, counts = np.unique(code, return_inverse=True, return_counts=True)
        sums = np.bincount(inv, weights=x_inc[:, j])
        m[included, j] = (sums / counts)[inv]
        low[included, j] = counts[inv] < min_occupancy

    return EnsembleProjection(
        grid,
        levels,
        t_eval,
        x,
        m.astype(np.float32),
        low,
        up_times,
        down_times,
        floored,
        bucket_steps,
        min_occupancy,
        method,
        isolated=left_isolated(levels),
    )


# ---------------------------------------------------------------------------
# Nested conditional estimator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NestedEstimate:
    value: float
    stderr: float
    n_accepted: int
    n_inner: int

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / self.n_inner if self.n_inner else 0.0

    def __float__(self):
        return self.value


def _fp_bridge_drivers(g, alpha: float, t_alpha: float, n_steps: int, m: int):
    """m Brownian segments on [0, t_alpha] with first passage of alpha at t_alpha.

    Time reversal of the first-passage path: ``alpha - B_{T-s}`` is a
    Bessel(3) bridge from 0 to alpha, realized as the norm of a 3-d Brownian
    bridge from the origin to (alpha, 0, 0).
    """
    dt = t_alpha / n_steps
    dw = g.standard_normal((m, n_steps, 3)) * math.sqrt(dt)
    w = np.cumsum(dw, axis=1)
    w = np.concatenate([np.zeros((m, 1, 3)), w], axis=1)
    s = np.linspace(0.0, 1.0, n_steps + 1)
    target = np.array([alpha, 0.0, 0.0])
    bb = w - s[None, :, None] * (w[:, -1:, :] - target[None, None, :])
    rho = np.linalg.norm(bb, axis=2)
    return alpha - rho[:, ::-1]


def project_conditional_exact(
    model: SdeModel,
    levels: LevelSet,
    key: ConditioningKey,
    t: float,
    m_inner: int,
    rng: RngSpec,
    *,
    grid_dt: float = 2.0**-10,
    levels_on: str = "driver",
    min_acceptance: float = 1e-3,
) -> NestedEstimate:
    """Nested Monte Carlo estimate of E[X_t | F_S] for one conditioning state.

    The key must end with the passage of a level ``alpha`` at ``T_alpha`` and
    contain no later event; on the frozen interval the filtration's
    information equals its value at S, so conditioning reduces to the state at
    (T_alpha, alpha) plus survival of the neighbouring level.

    * ``levels_on="driver"``: the driver segment before T_alpha is
      reconstructed as an exact first-passage bridge, the state is evolved
      along it, and driver continuations that cross the next unpassed level
      before ``t`` (grid crossing or bridge-declared) are rejected.
    * ``levels_on="state"``: the state itself carries the levels; by the
      Markov property the estimate starts from X = alpha exactly.  At
      ``t == T_alpha`` this returns alpha (the passage value) exactly.
    """
    if key.last is None:
        raise DomainError("key must contain at least one passage event")
    alpha_level, t_alpha = key.last
    if t < t_alpha:
        raise DomainError(f"evaluation time {t} precedes the key's last event {t_alpha}")
    above = levels.values[levels.values > alpha_level]
    barrier = float(above[0]) if above.size else None

    g = rng.generator()
    if levels_on == "state" and t == t_alpha:
        return NestedEstimate(float(alpha_level), 0.0, m_inner, m_inner)

    n_pre = max(int(round(t_alpha / grid_dt)), 1)
    n_post = max(int(round((t - t_alpha) / grid_dt)), 0)

    if levels_on == "driver":
        pre = _fp_bridge_drivers(g, alpha_level, t_alpha, n_pre, m_inner)
        x_pre, floored = _euler_values(model, t_alpha / n_pre, np.diff(pre, axis=1), model.x0)
        x_state = x_pre[:, -1]
        drv = np.full(m_inner, alpha_level)
    elif levels_on == "state":
        x_state = np.full(m_inner, float(alpha_level))
        floored = np.zeros(m_inner, dtype=bool)
        drv = None
    else:
        raise DomainError(f"levels_on must be 'driver' or 'state', got {levels_on!r}")

    accepted = ~floored
    if n_post:
        db = g.standard_normal((m_inner, n_post)) * math.sqrt(grid_dt)
        with np.errstate(divide="ignore"):
            log_u = np.log(g.random((m_inner, n_post)))
        x_post, fl_post = _euler_values(model, grid_dt, db, x_state)
        accepted &= ~fl_post
        if levels_on == "driver":
            cont = drv[:, None] + np.concatenate(
                [np.zeros((m_inner, 1)), np.cumsum(db, axis=1)], axis=1
            )
            watch = cont
        else:
            watch = x_post
        if barrier is not None:
            crossed = np.any(watch[:, 1:] >= barrier, axis=1)
            left, right = watch[:, :-1], watch[:, 1:]
            below = (left < barrier) & (right < barrier)
            with np.errstate(invalid="ignore"):
                logp = -2.0 * (barrier - left) * (barrier - right) / grid_dt
            declared = np.any(below & (log_u < logp), axis=1)
            accepted &= ~(crossed | declared)
        x_final = x_post[:, -1]
    else:
        x_final = x_state

    n_acc = int(accepted.sum())
    if n_acc < max(1, min_acceptance * m_inner):
        raise RejectionInefficiencyError(
            f"acceptance rate {n_acc / m_inner:.2e} below {min_acceptance:.0e}; "
            "use finer level spacing or the ensemble estimator"
        )
    vals = x_final[accepted]
    return NestedEstimate(
        float(vals.mean()),
        float(vals.std(ddof=1) / math.sqrt(n_acc)) if n_acc > 1 else math.inf,
        n_acc,
        m_inner,
    )


# ---------------------------------------------------------------------------
# Reducing times
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReducingTimes:
    """Stopping times T_n = first time |driver| >= alpha_n, censored at the horizon."""

    alphas: np.ndarray
    times: np.ndarray
    censored: np.ndarray


def reducing_times(record: ObservationRecord, alphas) -> ReducingTimes:
    """Read T_n = inf{t : |driver| >= alpha_n} off a two-sided record.

    For each alpha the time is the earlier of the up-passage of ``alpha`` and
    the down-passage of ``-alpha``; if neither occurred the time is the
    horizon, flagged censored.
    """
    alphas = np.asarray(alphas, dtype=float)
    if np.any(alphas <= 0) or np.any(np.diff(alphas) <= 0):
        raise DomainError("alphas must be positive and strictly increasing")
    times = np.empty(alphas.size)
    censored = np.zeros(alphas.size, dtype=bool)
    for i, a in enumerate(alphas):
        t_up = record.time_of(float(a), "up")
        t_dn = record.time_of(float(-a), "down")
        cands = [v for v in (t_up, t_dn) if v is not None]
        if cands:
            times[i] = min(cands)
        else:
            times[i] = record.horizon
            censored[i] = True
    return ReducingTimes(alphas, times, censored)
