import math
from collections import defaultdict

import numpy as np
import pytest

from slmjump.classify import defect_estimate
from slmjump.errors import DomainError
from slmjump.market import (
    RenewalSpec,
    TickGrid,
    family_project,
    mask_transactions,
    quadratic_variation_error,
    tick_observe,
)
from slmjump.rng import RngSpec
from slmjump.stochastics import SamplePath, SdeModel, TimeGrid, sample_brownian


def test_tick_grid_validation():
    with pytest.raises(DomainError):
        TickGrid(0.0)
    assert np.allclose(TickGrid(0.01).levels_between(1.0, 1.025), [1.0, 1.01, 1.02])


def test_tick_observe_path_inside_one_cell():
    grid = TimeGrid(horizon=1.0, steps=100)
    path = SamplePath(grid, 1.001 + 0.001 * np.sin(np.linspace(0, 6, 101)))
    assert tick_observe(path, TickGrid(0.01)).events == ()


def test_tick_observe_ramp():
    grid = TimeGrid(horizon=1.0, steps=100)
    ramp = SamplePath(grid, np.linspace(1.0, 1.025, 101))
    rec = tick_observe(ramp, TickGrid(0.01))
    assert [(e.level, e.direction) for e in rec.events] == [(1.01, "up"), (1.02, "up")]


def test_tick_observe_brownian_structure():
    grid = TimeGrid(horizon=4.0, steps=4096)
    path = sample_brownian(grid, RngSpec(601, 0))
    rec = tick_observe(path, TickGrid(0.05))
    times = [e.time for e in rec.events]
    assert len(times) > 50
    assert all(t2 > t1 for t1, t2 in zip(times, times[1:]))
    per_level = defaultdict(list)
    for e in rec.events:
        per_level[e.level].append(e.direction)
    for dirs in per_level.values():
        assert all(a != b for a, b in zip(dirs, dirs[1:]))
    # longer horizons cross more distinct levels
    short = tick_observe(SamplePath(TimeGrid(horizon=1.0, steps=1024),
                                    path.values[:1025]), TickGrid(0.05))
    assert len({e.level for e in rec.events}) >= len({e.level for e in short.events})


def test_tick_refinement_recovers_passage_time_from_above():
    grid = TimeGrid(horizon=4.0, steps=4096)
    path = sample_brownian(grid, RngSpec(607, 1))
    level = 0.8
    hit = np.nonzero(path.values >= level)[0]
    assert hit.size, "pick a seed whose path crosses the level"
    tau = grid.times[hit[0]]
    detected = []
    for tick in (0.16, 0.08, 0.04, 0.02, 0.01):
        rec = tick_observe(path, TickGrid(tick))
        lattice_level = tick * math.ceil(level / tick)
        t = rec.time_of(lattice_level)
        assert t is not None
        detected.append(t)
    assert all(b <= a + 1e-12 for a, b in zip(detected, detected[1:]))
    assert all(t >= tau - grid.dt for t in detected)
    assert abs(detected[-1] - tau) < 0.05


def test_renewal_validation():
    with pytest.raises(DomainError):
        RenewalSpec("exponential", rate=0.0)
    with pytest.raises(DomainError):
        RenewalSpec("fixed", table=(1.0, 0.0))
    with pytest.raises(DomainError):
        RenewalSpec("poisson")
    spec = RenewalSpec("fixed", table=(0.0, 2.0, 1.0))
    assert np.allclose(spec.sample_arrivals(None, 10.0), [0.0, 2.0, 3.0])


def test_mask_no_information():
    grid = TimeGrid(horizon=1.0, steps=512)
    driver = sample_brownian(grid, RngSpec(613, 0))
    masked = mask_transactions(driver, 1.0, RenewalSpec("fixed", table=(5.0,)), RngSpec(613, 1))
    assert np.all(masked.y == 0.0)
    assert masked.arrivals.size == 0


def test_mask_degenerate_full_window():
    grid = TimeGrid(horizon=1.0, steps=512)
    driver = sample_brownian(grid, RngSpec(617, 0))
    masked = mask_transactions(driver, 1.0, RenewalSpec("fixed", table=(0.0, 9.0)), RngSpec(617, 1))
    assert np.allclose(masked.y, driver.values - driver.values[0])


def test_mask_bit_exact_constancy_on_blackouts():
    grid = TimeGrid(horizon=2.0, steps=2048)
    driver = sample_brownian(grid, RngSpec(619, 0))
    masked = mask_transactions(driver, 1.0, RenewalSpec("exponential", rate=2.0), RngSpec(619, 1))
    frozen = masked.j == 0.0
    dy = np.diff(masked.y)
    assert np.all(dy[frozen] == 0.0)
    assert masked.y[0] == 0.0


def test_mask_weight_callable():
    grid = TimeGrid(horizon=1.0, steps=256)
    driver = sample_brownian(grid, RngSpec(621, 0))
    masked = mask_transactions(
        driver, lambda t: 2.0 + 0.0 * t, RenewalSpec("fixed", table=(0.0, 9.0)), RngSpec(621, 1)
    )
    assert np.allclose(masked.y, 2.0 * (driver.values - driver.values[0]))


def test_quadratic_variation_pooled_error():
    grid = TimeGrid(horizon=1.0, steps=4096)
    masked = [
        mask_transactions(
            sample_brownian(grid, RngSpec(631, i)), 1.0,
            RenewalSpec("exponential", rate=2.0), RngSpec(631, 10_000 + i),
        )
        for i in range(64)
    ]
    assert quadratic_variation_error(masked) < 0.02


def test_family_project_no_information_is_unconditional_mean():
    model = SdeModel.power(1.0, 2.0, x0=1.0)
    grid = TimeGrid(horizon=1.0, steps=512)
    proj = family_project(
        model, grid, 2000, RenewalSpec("fixed", table=(9.0,)), RngSpec(641, 0),
        eval_steps=8, bucket_steps=16, min_occupancy=50,
    )
    j = proj.eval_index(1.0)
    col = proj.m[:, j]
    assert np.allclose(col, col[0])
    assert abs(float(col[0]) - proj.x[:, j].astype(float).mean()) < 1e-5
    assert len(proj.jumps) == 0  # Y never moves, one trailing frozen run


@pytest.fixture(scope="module")
def masked_projection():
    model = SdeModel.power(1.0, 2.0, x0=1.0)
    grid = TimeGrid(horizon=2.0, steps=2048)
    return family_project(
        model, grid, 10_000, RenewalSpec("exponential", rate=2.0), RngSpec(643, 0),
        eval_steps=8, bucket_steps=16, y_bin=0.25, min_occupancy=100,
    )


def test_family_jump_mass_at_blackout_ends(masked_projection):
    frac, near, total = masked_projection.jump_mass_localization(0.1)
    assert total > 0
    assert frac >= 0.95


def test_family_tower_and_defect(masked_projection):
    proj = masked_projection
    mx, mm, se = proj.means_at(2.0)
    assert abs(mx - mm) < 3.0 * se
    j = proj.eval_index(2.0)
    ok = proj.included
    est = defect_estimate(
        proj.m[ok, j].astype(float), 1.0, t=2.0, se_values=proj.x[ok, j].astype(float)
    )
    assert est.significant


def test_family_jumps_report_both_deltas(masked_projection):
    jumps = [j for j in masked_projection.jumps if abs(j.delta) > 0.1]
    assert jumps
    for j in jumps[:50]:
        assert j.renewal_index is not None and j.renewal_index % 2 == 1
        assert math.isfinite(j.delta_from_freeze)
