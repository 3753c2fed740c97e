"""Level sets, first-passage detection, and the shrunken filtration's structure.

The information flow studied by this package is the one generated by the
first-passage events of a continuous path over a level set.  This module
detects those events on sampled paths (optionally with a Brownian-bridge
correction for crossings hidden between grid points), identifies which levels
are isolated from below, and derives the jump intervals ``(S, T_beta]`` over
which the filtration is frozen before jumping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, IntegrityError
from .rng import RngSpec
from .stochastics import SamplePath

__all__ = [
    "LevelSet",
    "PassageEvent",
    "ObservationRecord",
    "JumpInterval",
    "InaccessibilityVerdict",
    "detect_passages",
    "left_isolated",
    "filtration_jump_intervals",
    "classify_inaccessible",
]

UP = "up"
DOWN = "down"


@dataclass(frozen=True)
class LevelSet:
    """Finite, strictly increasing set of positive levels.

    ``accumulation`` declares levels that are limits from below of the ideal
    (infinite) set being represented; this metadata cannot be inferred from a
    finite truncation, so the caller states it.  ``two_sided`` adds the
    mirrored negative levels (down-passages detected on the reflected path).
    """

    values: np.ndarray
    accumulation: frozenset = field(default_factory=frozenset)
    two_sided: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "accumulation", frozenset(float(a) for a in self.accumulation))
        if values.ndim != 1:
            raise DomainError("levels must form a 1-d sequence (may be empty: trivial filtration)")
        if np.any(values <= 0):
            raise DomainError("levels must be strictly positive")
        if np.any(np.diff(values) <= 0):
            raise DomainError("levels must be strictly increasing")
        unknown = self.accumulation - set(values.tolist())
        if unknown:
            raise DomainError(f"accumulation metadata names unknown levels: {sorted(unknown)}")

    @property
    def mirrored(self) -> np.ndarray:
        """The declared negative side, strictly decreasing: -values."""
        return -self.values

    def __len__(self):
        return self.values.size

    def __contains__(self, level) -> bool:
        return bool(np.any(self.values == float(level)))


@dataclass(frozen=True)
class PassageEvent:
    level: float
    time: float
    direction: str

    def __post_init__(self):
        if self.direction not in (UP, DOWN):
            raise DomainError(f"direction must be 'up' or 'down', got {self.direction!r}")
        if self.time < 0:
            raise DomainError("event times must be non-negative")


@dataclass(frozen=True)
class ObservationRecord:
    """Time-ordered first-passage events of one path: the shrunken information.

    Event times are strictly increasing (passage times of a continuous path
    over a totally ordered family never tie) and bounded by the horizon.
    """

    events: tuple
    horizon: float
    t_start: float = 0.0

    def __post_init__(self):
        events = tuple(self.events)
        object.__setattr__(self, "events", events)
        times = [e.time for e in events]
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise IntegrityError("event times must be strictly increasing")
        if any(t > self.horizon for t in times):
            raise IntegrityError("event times must not exceed the horizon")

    def time_of(self, level: float, direction: str = UP) -> float | None:
        for e in self.events:
            if e.direction == direction and e.level == level:
                return e.time
        return None

    def up_times(self) -> dict:
        return {e.level: e.time for e in self.events if e.direction == UP}


@dataclass(frozen=True)
class JumpInterval:
    """The filtration is frozen on (S, T_beta) and jumps at T_beta."""

    s: float
    t_beta: float
    alpha: float
    beta: float

    def __post_init__(self):
        if not self.s < self.t_beta:
            raise IntegrityError(f"S must precede T_beta, got S={self.s} T_beta={self.t_beta}")
        if not self.alpha < self.beta:
            raise IntegrityError(f"alpha must lie below beta, got {self.alpha} >= {self.beta}")


# ---------------------------------------------------------------------------
# Detection
# ---------------------------------------------------------------------------

def _first_passage_matrix(values: np.ndarray, levels: np.ndarray, dt: float, log_u):
    """First-passage steps of each row of ``values`` over each level.

    Returns ``(step, frac)`` arrays of shape (n, len(levels)): ``step`` is the
    index of the bracketing step (-1 when never passed, -2 when already at or
    above the level at the start) and ``frac`` the within-step position.

    Actual crossings sit at the linear-interpolation fraction -- a level is
    passed inside the step it is bracketed by, and distinct levels crossed in
    one step keep distinct, order-consistent times, which keeps records
    strictly ordered and detection monotone under level-set enlargement.
    Bridge-declared crossings (both endpoints below the level, declared with
    probability exp(-2(a-x_i)(a-x_{i+1})/dt) against per-step uniforms) sit at
    the step midpoint plus a level-proportional sub-nudge.
    """
    values = np.atleast_2d(values)
    n, _ = values.shape
    steps = values.shape[1] - 1
    left = values[:, :-1]
    right = values[:, 1:]
    out_step = np.full((n, levels.size), -1, dtype=np.int64)
    out_frac = np.zeros((n, levels.size))
    col = np.arange(steps)
    for j, a in enumerate(levels):
        at_start = values[:, 0] >= a
        reached = right >= a
        any_reach = reached.any(axis=1)
        first = np.argmax(reached, axis=1)  # only meaningful where any_reach
        grid_step = np.where(any_reach, first, steps)
        if log_u is not None:
            below = (left < a) & (right < a)
            candidate = below & (col[None, :] < grid_step[:, None])
            with np.errstate(invalid="ignore"):
                logp = -2.0 * (a - left) * (a - right) / dt
            declared = candidate & (log_u < logp)
            any_decl = declared.any(axis=1)
            first_decl = np.argmax(declared, axis=1)
            use_bridge = any_decl & (first_decl < grid_step)
        else:
            use_bridge = np.zeros(n, dtype=bool)
            first_decl = np.zeros(n, dtype=np.int64)

        step_j = np.where(use_bridge, first_decl, np.where(any_reach, grid_step, -1))
        denom = right[np.arange(n), np.minimum(first, steps - 1)] - left[
            np.arange(n), np.minimum(first, steps - 1)
        ]
        with np.errstate(divide="ignore", invalid="ignore"):
            frac_actual = (a - left[np.arange(n), np.minimum(first, steps - 1)]) / denom
        frac_actual = np.clip(np.nan_to_num(frac_actual, nan=0.5), 0.0, 1.0)
        frac_j = np.where(use_bridge, 0.5 + 1e-9 * a, frac_actual)
        out_step[:, j] = np.where(at_start, -2, step_j)
        out_frac[:, j] = np.where(at_start, 0.0, frac_j)
    return out_step, out_frac


def _passage_times(path_values, grid, levels, log_u):
    """Per-level passage times (nan when unreached) for a single path."""
    step, frac = _first_passage_matrix(path_values, levels, grid.dt, log_u)
    step, frac = step[0], frac[0]
    times = np.full(levels.size, np.nan)
    hit = step >= 0
    times[hit] = grid.t_start + (step[hit] + frac[hit]) * grid.dt
    start = step == -2
    times[start] = grid.t_start + grid.dt * 1e-9 * levels[start]
    return times


def detect_passages(
    path: SamplePath,
    levels: LevelSet,
    bridge_correction: bool = False,
    rng: RngSpec | None = None,
    transform=None,
) -> ObservationRecord:
    """First-passage events of a path over a level set.

    With ``bridge_correction`` on, crossings hidden between grid points are
    declared with the Brownian two-point excursion probability against one
    uniform draw per step and level side; the draws are indexed by step, not
    by level, so enlarging the level set never moves existing events.  For
    diffusion paths pass ``transform`` (e.g. the Doss map h) to apply the
    correction to the transformed increments; without it the correction is the
    stated Brownian approximation.

    Levels never reached are simply absent from the record.
    """
    if bridge_correction and rng is None:
        raise DomainError("bridge_correction requires an RngSpec")
    if levels.two_sided and transform is not None:
        raise DomainError("two-sided detection does not support a transform")

    grid = path.grid
    values = path.values
    lv = levels.values
    if transform is not None:
        values = np.asarray(transform(values), dtype=float)
        lv = np.asarray(transform(levels.values), dtype=float)

    log_u_up = log_u_down = None
    if bridge_correction:
        g = rng.generator()
        with np.errstate(divide="ignore"):
            log_u_up = np.log(g.random(grid.steps))
            if levels.two_sided:
                log_u_down = np.log(g.random(grid.steps))

    events = []
    up_times = _passage_times(values, grid, lv, log_u_up)
    for level, t in zip(levels.values, up_times):
        if not math.isnan(t):
            events.append(PassageEvent(float(level), float(t), UP))
    if levels.two_sided:
        down_times = _passage_times(-values, grid, lv, log_u_down)
        for level, t in zip(levels.mirrored, down_times):
            if not math.isnan(t):
                events.append(PassageEvent(float(level), float(t), DOWN))

    events.sort(key=lambda e: (e.time, abs(e.level)))
    times = np.array([e.time for e in events])
    for i in range(1, len(events)):
        if events[i].time <= events[i - 1].time:
            bumped = np.nextafter(events[i - 1].time, np.inf)
            events[i] = PassageEvent(events[i].level, float(bumped), events[i].direction)
    del times
    return ObservationRecord(tuple(events), horizon=grid.horizon, t_start=grid.t_start)


# ---------------------------------------------------------------------------
# Structure of the level set and of the filtration
# ---------------------------------------------------------------------------

def left_isolated(levels: LevelSet):
    """Levels isolated from below, paired with their predecessor (0 if none).

    A level carrying the declared limit-from-below flag is not isolated; every
    other stored level is, with predecessor ``sup{x in levels : x < beta}``
    under the convention ``sup {} = 0``.
    """
    out = []
    vals = levels.values
    for i, beta in enumerate(vals):
        if float(beta) in levels.accumulation:
            continue
        alpha = float(vals[i - 1]) if i > 0 else 0.0
        out.append((float(beta), alpha))
    return out


def filtration_jump_intervals(record: ObservationRecord, levels: LevelSet):
    """Jump intervals (S, T_beta] for every left-isolated level reached.

    ``S`` is the passage time of the predecessor, or the record's start time
    when the predecessor is the empty-sup convention 0.
    """
    up = record.up_times()
    intervals = []
    for beta, alpha in left_isolated(levels):
        if beta not in up:
            continue
        t_beta = up[beta]
        if alpha == 0.0:
            s = record.t_start
        else:
            if alpha not in up:
                raise IntegrityError(
                    f"record reached beta={beta} without its predecessor alpha={alpha}"
                )
            s = up[alpha]
        if s >= t_beta:
            raise IntegrityError(
                f"predecessor passage at {s} does not precede T_beta={t_beta} for beta={beta}"
            )
        intervals.append(JumpInterval(s, t_beta, alpha, beta))
    return intervals


@dataclass(frozen=True)
class InaccessibilityVerdict:
    status: str  # totally_inaccessible | predictable | undetermined
    reason: str


def classify_inaccessible(
    beta: float, levels: LevelSet, driver: str = "brownian", continuity_certified: bool = False
) -> InaccessibilityVerdict:
    """Accessibility status of the passage time of ``beta`` in the shrunken filtration.

    Totally inaccessible iff the level is isolated from below and the
    conditional passage law is continuous -- automatic for Brownian drivers,
    whose gap-passage density is continuous.  A declared accumulation point is
    announced by its lower neighbours, hence predictable.  Other drivers
    without a continuity certificate stay undetermined.
    """
    if float(beta) not in levels:
        raise DomainError(f"beta={beta} is not a level of the set")
    if float(beta) in levels.accumulation:
        return InaccessibilityVerdict(
            "predictable", "declared limit from below: announced by a sequence of lower passages"
        )
    if driver == "brownian" or continuity_certified:
        return InaccessibilityVerdict(
            "totally_inaccessible",
            "isolated from below and the conditional passage law is continuous",
        )
    return InaccessibilityVerdict(
        "undetermined", f"no continuity certificate for driver {driver!r}"
    )
