import math

import numpy as np
import pytest
from scipy.stats import ks_2samp

from slmjump.classify import krickeberg_norm
from slmjump.errors import DomainError, GridError, RejectionInefficiencyError
from slmjump.filtration import LevelSet, detect_passages
from slmjump.projection import (
    CadlagProjection,
    ConditioningKey,
    _fp_bridge_drivers,
    extract_jumps,
    project_conditional_exact,
    project_ensemble,
    reducing_times,
)
from slmjump.rng import RngSpec
from slmjump.stochastics import (
    SdeModel,
    TimeGrid,
    doss_h,
    doss_h_inverse,
    sample_brownian,
    simulate_coupled,
)

MODEL = SdeModel.power(1.0, 2.0, x0=1.0)
GRID = TimeGrid(horizon=2.5, steps=2560)
LEVELS = LevelSet(np.array([1.0, 2.0]))


@pytest.fixture(scope="module")
def small_reference():
    return project_ensemble(
        MODEL, LEVELS, GRID, 30_000, RngSpec(501, 0),
        bucket_steps=16, eval_steps=8, min_occupancy=50,
    )


def test_empty_level_set_projects_to_ensemble_mean():
    ens = project_ensemble(
        MODEL, LevelSet(np.array([])), TimeGrid(horizon=1.0, steps=256), 2000, RngSpec(503, 0),
        bucket_steps=8,
    )
    j = ens.eval_index(1.0)
    col = ens.m[:, j]
    assert np.allclose(col, col[0])
    assert abs(float(col[0]) - ens.x[:, j].astype(float).mean()) < 1e-5


def test_constant_state_projects_to_itself():
    model = SdeModel.power(0.0, 2.0, x0=2.0)
    ens = project_ensemble(
        model, LevelSet(np.array([1.0])), TimeGrid(horizon=1.0, steps=256),
        2000, RngSpec(509, 0), bucket_steps=8, strictness_override=True,
    )
    assert np.allclose(ens.m[ens.included], 2.0)
    frac, n_near, n_big = ens.jump_localization(1e-9)
    assert n_big == 0


def test_tower_property_small_ensemble(small_reference):
    for t in (0.5, 1.0, 2.0):
        mx, mm, se = small_reference.means_at(t)
        assert abs(mx - mm) < 3.0 * se


def test_projection_mean_decreases(small_reference):
    means = [small_reference.means_at(t)[1] for t in (0.5, 1.0, 2.0)]
    assert means[0] > means[1] > means[2]


def test_interior_drift_nonpositive_for_strict_model(small_reference):
    # fixed key frozen at s = 0.5 (an F_s event); X means decay afterwards
    ens = small_reference
    lev0 = ens.up_times[:, 0]
    fixed = (np.isnan(lev0) | (lev0 > 0.5)) & ens.included
    cols = [ens.eval_index(t) for t in (0.5, 1.0, 1.5)]
    x = ens.x[fixed][:, cols].astype(float)
    d = x[:, 2] - x[:, 0]
    se = d.std(ddof=1) / math.sqrt(d.size)
    assert d.mean() < 0 and abs(d.mean()) > 3.0 * se


def test_interior_drift_zero_for_true_martingale():
    # same fixed-key construction on sigma(x) = x: the mean must not move
    model = SdeModel.power(1.0, 1.0, x0=1.0)
    grid = TimeGrid(horizon=1.5, steps=1536)
    ens = project_ensemble(
        model, LevelSet(np.array([1.0])), grid, 20_000, RngSpec(521, 0),
        bucket_steps=16, eval_steps=8, min_occupancy=50, strictness_override=True,
    )
    lev0 = ens.up_times[:, 0]
    fixed = (np.isnan(lev0) | (lev0 > 0.5)) & ens.included
    cols = [ens.eval_index(t) for t in (0.5, 1.0, 1.5)]
    x = ens.x[fixed][:, cols].astype(float)
    d = x[:, 2] - x[:, 0]
    se = d.std(ddof=1) / math.sqrt(d.size)
    assert abs(d.mean()) < 3.0 * se


def test_monotone_information_variance():
    # conditioning on a superset of levels shrinks var(X - M)
    grid = TimeGrid(horizon=2.0, steps=2048)
    kwargs = dict(bucket_steps=16, eval_steps=8, min_occupancy=50)
    coarse = project_ensemble(MODEL, LevelSet(np.array([1.0])), grid, 20_000, RngSpec(523, 0), **kwargs)
    fine = project_ensemble(MODEL, LevelSet(np.array([1.0, 2.0])), grid, 20_000, RngSpec(523, 0), **kwargs)
    j = coarse.eval_index(1.5)
    ok = (
        coarse.included & fine.included
        & ~coarse.low_occupancy[:, j] & ~fine.low_occupancy[:, j]
    )
    d_coarse = (coarse.x[ok, j] - coarse.m[ok, j]).astype(float)
    d_fine = (fine.x[ok, j] - fine.m[ok, j]).astype(float)
    gap = d_coarse**2 - d_fine**2
    se = gap.std(ddof=1) / math.sqrt(gap.size)
    assert gap.mean() > -3.0 * se


def test_paths_identical_across_level_sets():
    # the per-stream draw contract: levels do not perturb the simulated paths
    grid = TimeGrid(horizon=1.0, steps=512)
    a = project_ensemble(MODEL, LevelSet(np.array([1.0])), grid, 2000, RngSpec(527, 0), bucket_steps=8)
    b = project_ensemble(MODEL, LevelSet(np.array([0.5, 1.0, 2.0])), grid, 2000, RngSpec(527, 0), bucket_steps=8)
    assert np.array_equal(a.x, b.x)


def test_jump_table_and_cadlag_view(small_reference):
    ens = small_reference
    rows = ens.jump_table(0.5)
    assert rows, "expected above-threshold jumps at recorded passages"
    path_ids = {r[0] for r in rows}
    i = sorted(path_ids)[0]
    proj = ens.path_projection(i)
    assert isinstance(proj, CadlagProjection)
    for jump in proj.jumps:
        assert jump.delta == jump.right_value - jump.left_value
    jumps = extract_jumps(proj, 0.5)
    assert any(j.event_time is not None for j in jumps)


def test_extract_jumps_trivial_cases():
    t = np.linspace(0.0, 1.0, 11)
    proj = CadlagProjection(
        t, np.ones_like(t), np.array([]), np.array([]), np.array([]),
        np.array([]), np.array([]), np.zeros(11, dtype=bool),
    )
    assert extract_jumps(proj, 0.01) == []
    wobbly = CadlagProjection(
        t, np.cumsum(np.ones(11)), np.array([]), np.array([]), np.array([]),
        np.array([]), np.array([]), np.zeros(11, dtype=bool),
    )
    assert extract_jumps(wobbly, math.inf) == []
    with pytest.raises(DomainError):
        extract_jumps(proj, -1.0)


def test_fp_bridge_endpoint_and_interior_law():
    g = RngSpec(541, 0).generator()
    t_alpha, n_steps, m = 1.0, 256, 4000
    pre = _fp_bridge_drivers(g, 1.0, t_alpha, n_steps, m)
    assert np.allclose(pre[:, 0], 0.0)
    assert np.allclose(pre[:, -1], 1.0)
    assert np.all(pre[:, :-1].max(axis=1) < 1.0)
    # oracle: rejection-sample true first-passage paths with tau ~ t_alpha
    grid = TimeGrid(horizon=1.1, steps=282)
    keep = []
    for k in range(60_000):
        b = sample_brownian(grid, RngSpec(547, k))
        hit = np.nonzero(b.values >= 1.0)[0]
        if hit.size and abs(grid.times[hit[0]] - t_alpha) < 0.05:
            idx = int(round((t_alpha / 2) / grid.dt))
            keep.append(b.values[idx])
        if len(keep) >= 1500:
            break
    assert len(keep) >= 800, "rejection oracle starved"
    mid = pre[:, n_steps // 2]
    res = ks_2samp(np.array(keep), mid)
    assert res.pvalue > 0.01, f"bridge midpoint law mismatch p={res.pvalue:.4f}"


def test_conditional_exact_state_levels_passage_value():
    # levels on the state itself: at the passage time the estimate is the level
    key = ConditioningKey(((2.0, 0.7),), bucket_width=0.01)
    est = project_conditional_exact(
        MODEL, LevelSet(np.array([1.0, 2.0])), key, 0.7, 500, RngSpec(557, 0), levels_on="state"
    )
    assert est.value == 2.0 and est.stderr == 0.0


def test_conditional_exact_agrees_with_ensemble_group(small_reference):
    ens = small_reference
    bucket_dt = ens.bucket_steps * ens.grid.dt
    t1 = ens.up_times[:, 0]
    t2 = ens.up_times[:, 1]
    # modal bucket of the first passage of level 1
    buckets = np.floor(t1[~np.isnan(t1)] / bucket_dt).astype(int)
    b = np.bincount(buckets).argmax()
    t_alpha = (b + 0.5) * bucket_dt
    t = t_alpha + 0.5
    j = ens.eval_index(ens.t_eval[np.argmin(np.abs(ens.t_eval - t))])
    t = float(ens.t_eval[j])
    t1_bucket = np.floor(np.nan_to_num(t1, nan=-1.0) / bucket_dt).astype(int)
    in_group = (~np.isnan(t1)) & (t1_bucket == b) & (np.isnan(t2) | (t2 > t)) & ens.included
    group_vals = ens.x[in_group, j].astype(float)
    assert group_vals.size > 100
    mean_g = group_vals.mean()
    se_g = group_vals.std(ddof=1) / math.sqrt(group_vals.size)
    key = ConditioningKey(((1.0, t_alpha),), bucket_width=bucket_dt)
    est = project_conditional_exact(
        MODEL, LEVELS, key, t, 6000, RngSpec(563, 0), grid_dt=ens.grid.dt
    )
    gap = abs(est.value - mean_g)
    tol = 3.0 * math.hypot(se_g, est.stderr)
    assert gap < tol, f"nested {est.value:.4f} vs group {mean_g:.4f}, gap {gap:.4f} tol {tol:.4f}"


def test_conditional_exact_rejection_inefficiency():
    key = ConditioningKey(((1.0, 0.5),), bucket_width=0.01)
    tight = LevelSet(np.array([1.0, 1.0 + 1e-4]))
    with pytest.raises(RejectionInefficiencyError):
        project_conditional_exact(MODEL, tight, key, 1.5, 2000, RngSpec(569, 0))


def test_reducing_times_min_and_censoring():
    from slmjump.filtration import ObservationRecord, PassageEvent

    rec = ObservationRecord(
        (PassageEvent(1.0, 0.8, "up"), PassageEvent(-1.0, 1.3, "down")), horizon=2.0
    )
    rt = reducing_times(rec, [1.0])
    assert rt.times[0] == 0.8 and not rt.censored[0]
    empty = ObservationRecord((), horizon=2.0)
    rt2 = reducing_times(empty, [1.0, 2.0])
    assert np.all(rt2.times == 2.0) and np.all(rt2.censored)
    with pytest.raises(DomainError):
        reducing_times(empty, [2.0, 1.0])


def test_reducing_times_doss_bound_pathwise():
    # sup_{s <= T_n} X_s <= h^{-1}(alpha_n + h(x0)) on every path
    grid = TimeGrid(horizon=2.0, steps=1024)
    alphas = np.array([0.25, 0.5, 0.75])
    levels = LevelSet(alphas, two_sided=True)
    hmodel = SdeModel.power(1.0, 2.0, x0=1.0, drift=True)
    bounds = np.array([doss_h_inverse(hmodel, a + doss_h(hmodel, 1.0)) for a in alphas])
    assert np.allclose(bounds, 1.0 / (1.0 - alphas), atol=1e-8)
    stopped = np.empty((10_000, alphas.size))
    censored = np.zeros_like(stopped, dtype=bool)
    for k in range(stopped.shape[0]):
        driver, state = simulate_coupled(MODEL, grid, RngSpec(571, k))
        rec = detect_passages(driver, levels)
        rt = reducing_times(rec, alphas)
        for i, (t_n, cens) in enumerate(zip(rt.times, rt.censored)):
            # grid points strictly before the passage obey the pathwise bound
            pre = min(int((t_n - grid.t_start) / grid.dt), grid.steps)
            assert state.values[: pre + 1].max() <= bounds[i] + 1e-9
            # the stopping index is the one completing the crossing
            idx = min(int(math.ceil((t_n - grid.t_start) / grid.dt)), grid.steps)
            stopped[k, i] = state.values[idx]
            censored[k, i] = cens
    est = krickeberg_norm(stopped, censored=censored)
    # stopped bounded local martingale: every mean equals x0 = 1
    assert np.all(np.abs(est.means - 1.0) < 3.0 * est.stderrs)


def test_project_ensemble_validation():
    with pytest.raises(GridError):
        project_ensemble(MODEL, LEVELS, GRID, 2000, RngSpec(1, 0), bucket_steps=7)
    from slmjump.errors import InsufficientDataError

    with pytest.raises(InsufficientDataError):
        project_ensemble(MODEL, LEVELS, GRID, 10, RngSpec(1, 0))
