import math

import numpy as np
import pytest
from scipy.integrate import dblquad, quad
from scipy.stats import kurtosis, ks_2samp

from slmjump.errors import DomainError, GridError, RangeError
from slmjump.rng import RngSpec
from slmjump.stochastics import (
    SamplePath,
    SdeModel,
    TimeGrid,
    doss_h,
    doss_h_inverse,
    doss_solve,
    euler_maruyama,
    inverse_path,
    normal_cdf,
    sample_bessel3,
    sample_brownian,
    sample_first_passage_exact,
    simulate_coupled,
)

PHI_1 = 0.8413447460685429  # standard normal CDF at 1


def test_grid_rejects_degenerate():
    with pytest.raises(GridError):
        TimeGrid(horizon=1.0, steps=0)
    with pytest.raises(GridError):
        TimeGrid(horizon=0.0, steps=10)


def test_rng_streams_deterministic_and_distinct():
    a = RngSpec(123, 4).generator().standard_normal(8)
    b = RngSpec(123, 4).generator().standard_normal(8)
    c = RngSpec(123, 5).generator().standard_normal(8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_brownian_deterministic_and_starts_at_zero():
    grid = TimeGrid(horizon=1.0, steps=256)
    p1 = sample_brownian(grid, RngSpec(7, 0))
    p2 = sample_brownian(grid, RngSpec(7, 0))
    assert np.array_equal(p1.values, p2.values)
    assert p1.values[0] == 0.0


def test_brownian_terminal_moments():
    n = 100_000
    grid = TimeGrid(horizon=1.0, steps=8)
    g = RngSpec(11, 0).generator()
    terminal = g.standard_normal((n, grid.steps)).sum(axis=1) * math.sqrt(grid.dt)
    assert abs(terminal.mean()) < 3.0 / math.sqrt(n)
    var_se = math.sqrt(2.0 / (n - 1))
    assert abs(terminal.var(ddof=1) - 1.0) < 3.0 * var_se


def test_brownian_increment_kurtosis():
    grid = TimeGrid(horizon=1.0, steps=10_000)
    incs = np.concatenate(
        [sample_brownian(grid, RngSpec(13, k)).increments() for k in range(100)]
    )
    z = incs / math.sqrt(grid.dt)
    k = kurtosis(z, fisher=False)
    assert abs(k - 3.0) < 3.0 * math.sqrt(24.0 / z.size)


def test_bessel3_initial_value_and_positivity():
    grid = TimeGrid(horizon=1.0, steps=512)
    for k in range(10):
        path = sample_bessel3(grid, 1.0, RngSpec(17, k))
        assert path.values[0] == 1.0
        assert np.all(path.values > 0)


def _bessel3_radial_density(r, r0, t):
    # from the 3-d Gaussian in spherical coordinates, angular part integrated
    return (
        r
        / (r0 * math.sqrt(2.0 * math.pi * t))
        * (math.exp(-((r - r0) ** 2) / (2 * t)) - math.exp(-((r + r0) ** 2) / (2 * t)))
    )


def test_bessel3_second_moment_matches_quadrature_oracle():
    oracle, _ = quad(lambda r: r * r * _bessel3_radial_density(r, 1.0, 1.0), 0, 40, limit=200)
    assert abs(oracle - 4.0) < 1e-10  # r0^2 + 3t
    n = 100_000
    g = RngSpec(19, 0).generator()
    w = g.standard_normal((n, 3))
    w[:, 0] += 1.0
    r2 = (w**2).sum(axis=1)
    se = r2.std(ddof=1) / math.sqrt(n)
    assert abs(r2.mean() - oracle) < 3.0 * se


def test_inverse_path_basics():
    grid = TimeGrid(horizon=1.0, steps=4)
    const = SamplePath(grid, np.full(5, 2.0))
    assert np.allclose(inverse_path(const).values, 0.5)
    path = sample_bessel3(grid, 1.0, RngSpec(23, 0))
    again = inverse_path(inverse_path(path))
    assert np.allclose(again.values, path.values, rtol=0, atol=1e-15)
    with pytest.raises(DomainError):
        inverse_path(SamplePath(grid, np.array([1.0, -1.0, 2.0, 3.0, 4.0])))


def test_inverse_bessel_mean_vs_quadrature_oracle():
    # brute-force 3-d Gaussian quadrature validates the closed form first
    r0, t = 1.0, 1.0
    norm = (2.0 * math.pi * t) ** -1.5

    def integrand(r, theta):
        expo = -(r * r - 2.0 * r * r0 * math.cos(theta) + r0 * r0) / (2.0 * t)
        return norm * 2.0 * math.pi * r * math.sin(theta) * math.exp(expo)

    oracle, _ = dblquad(integrand, 0.0, math.pi, 0.0, 16.0, epsabs=1e-12)
    closed = (2.0 * normal_cdf(r0 / math.sqrt(t)) - 1.0) / r0
    assert abs(closed - (2 * PHI_1 - 1)) < 1e-12
    assert abs(oracle - closed) < 1e-8

    n = 100_000
    g = RngSpec(29, 0).generator()
    w = g.standard_normal((n, 3))
    w[:, 0] += r0
    x = 1.0 / np.linalg.norm(w, axis=1)
    se = x.std(ddof=1) / math.sqrt(n)
    assert abs(x.mean() - closed) < 3.0 * se


def test_euler_zero_sigma_constant():
    grid = TimeGrid(horizon=1.0, steps=64)
    path = euler_maruyama(SdeModel.power(0.0, 2.0, x0=3.0), grid, RngSpec(31, 0))
    assert np.all(path.values == 3.0)
    assert not path.floored


def test_euler_driver_grid_mismatch():
    driver = sample_brownian(TimeGrid(horizon=1.0, steps=64), RngSpec(31, 1))
    with pytest.raises(GridError):
        euler_maruyama(SdeModel.power(1.0, 1.0), TimeGrid(horizon=1.0, steps=128), driver)


def test_euler_sigma_x_is_true_martingale():
    # oracle: exact solution exp(B_t - t/2) on the same driver
    from slmjump.stochastics import _euler_values

    grid = TimeGrid(horizon=1.0, steps=256)
    model = SdeModel.power(1.0, 1.0, x0=1.0)
    n = 10_000
    db = np.empty((n, grid.steps))
    for k in range(n):
        db[k] = RngSpec(37, k).generator().standard_normal(grid.steps) * math.sqrt(grid.dt)
    values, flagged = _euler_values(model, grid.dt, db, model.x0)
    assert not flagged.any()
    terminals = values[:, -1]
    se = terminals.std(ddof=1) / math.sqrt(n)
    assert abs(terminals.mean() - 1.0) < 3.0 * se
    # pathwise agreement with the exact solution through the public op
    exact_gap = 0.0
    for k in range(50):
        driver = sample_brownian(grid, RngSpec(37, k))
        path = euler_maruyama(model, grid, driver)
        exact = float(np.exp(driver.values[-1] - 0.5 * grid.horizon))
        exact_gap = max(exact_gap, abs(path.values[-1] - exact) / exact)
    assert exact_gap < 0.15  # relative strong error at dt = 2^-8


def test_euler_inverse_bessel_step_refinement():
    # scheme self-consistency: mean at dt vs 4x finer within 3 pooled SE, and < 1
    from slmjump.stochastics import _euler_values

    n = 20_000
    model = SdeModel.power(1.0, 2.0, x0=1.0)
    means, ses = [], []
    for steps, seed in ((1024, 41), (4096, 43)):
        dt = 1.0 / steps
        db = np.empty((n, steps))
        for k in range(n):
            db[k] = RngSpec(seed, k).generator().standard_normal(steps) * math.sqrt(dt)
        values, flagged = _euler_values(model, dt, db, model.x0)
        v = values[~flagged, -1]
        means.append(v.mean())
        ses.append(v.std(ddof=1) / math.sqrt(v.size))
    pooled = math.hypot(*ses)
    assert abs(means[0] - means[1]) < 3.0 * pooled
    assert means[0] < 1.0 and means[1] < 1.0


def test_doss_identity_sigma_one():
    grid = TimeGrid(horizon=1.0, steps=128)
    driver = sample_brownian(grid, RngSpec(47, 0))
    model = SdeModel.power(1.0, 0.0, x0=0.5, drift=True)  # sigma = 1, drift term 0
    path = doss_solve(model, grid, driver)
    assert np.allclose(path.values, driver.values + 0.5, atol=1e-9)


def test_doss_h_roundtrip_exponential_sigma():
    xs = np.linspace(-3.0, 6.0, 400)
    model = SdeModel.table(xs, np.exp(xs), x0=0.0, drift=True)
    for y in (-1.5, -0.3, 0.7, 2.4):
        h = doss_h(model, y)
        expected = math.exp(-0.0) - math.exp(-y)
        assert abs(h - expected) < 1e-8
        assert abs(doss_h_inverse(model, h) - y) < 1e-10


def test_doss_h_inverse_range_error():
    model = SdeModel.power(1.0, 2.0, x0=1.0, drift=True)  # h(y) = 1 - 1/y, sup = 1
    assert abs(doss_h_inverse(model, 0.5) - 2.0) < 1e-9
    with pytest.raises(RangeError):
        doss_h_inverse(model, 1.5)


def test_doss_euler_step_refinement_agreement():
    # sigma = 2 + sin(x): smooth, bounded, positive; strong order 1/2 halving
    xs = np.linspace(-40.0, 40.0, 2000)
    fine = TimeGrid(horizon=1.0, steps=2**12)
    driver_fine = sample_brownian(fine, RngSpec(53, 0))
    model = SdeModel.table(xs, 2.0 + np.sin(xs), x0=0.0, drift=True)
    sups = []
    for level in (0, 1, 2):
        steps = 2 ** (12 - level)
        stride = fine.steps // steps
        grid = TimeGrid(horizon=1.0, steps=steps)
        driver = SamplePath(grid, driver_fine.values[::stride])
        e = euler_maruyama(model, grid, driver)
        d = doss_solve(model, grid, driver)
        sups.append(float(np.max(np.abs(e.values - d.values))))
    # halving dt shrinks the gap by about sqrt(2); allow slack on one path
    assert sups[1] / sups[0] > 1.2 and sups[2] / sups[1] > 1.2


def test_first_passage_matches_quadrature_cdf():
    # oracle CDF: numeric integral of the density, independent of the sampler
    def density(u, gap=1.0):
        return gap / math.sqrt(2 * math.pi * u**3) * math.exp(-gap * gap / (2 * u))

    n = 100_000
    samples = sample_first_passage_exact(1.0, RngSpec(59, 0), n=n)
    grid = np.quantile(samples, np.linspace(0.02, 0.98, 49))
    cdf_vals = np.array([quad(density, 0, u, limit=200)[0] for u in grid])
    emp = np.searchsorted(np.sort(samples), grid, side="right") / n
    d = np.max(np.abs(emp - cdf_vals))
    assert d < 1.63 / math.sqrt(n)


def test_first_passage_median():
    n = 100_000
    samples = sample_first_passage_exact(1.0, RngSpec(61, 0), n=n)
    med = np.median(samples)
    target = 2.198109  # 1 / Phi^{-1}(0.75)^2
    assert abs(med - target) < 0.05


def test_first_passage_gap_scaling():
    n = 50_000
    t1 = sample_first_passage_exact(1.0, RngSpec(67, 0), n=n)
    t2 = sample_first_passage_exact(2.0, RngSpec(67, 1), n=n)
    assert ks_2samp(4.0 * t1, t2).pvalue > 0.01


def test_first_passage_gap_validation():
    with pytest.raises(DomainError):
        sample_first_passage_exact(0.0, RngSpec(1, 0))


def test_simulate_coupled_bessel_exact_driver_is_brownian():
    grid = TimeGrid(horizon=1.0, steps=256)
    model = SdeModel.power(1.0, 2.0, x0=1.0)
    terminals = np.empty(5000)
    for k in range(terminals.size):
        driver, state = simulate_coupled(model, grid, RngSpec(71, k))
        terminals[k] = driver.values[-1]
        if k == 0:
            assert state.values[0] == 1.0 and driver.values[0] == 0.0
    se = terminals.std(ddof=1) / math.sqrt(terminals.size)
    assert abs(terminals.mean()) < 3.0 * se
    assert abs(terminals.var(ddof=1) - 1.0) < 3.0 * math.sqrt(2.0 / terminals.size)


def test_tabulated_sigma_no_extrapolation():
    model = SdeModel.table([0.5, 1.0, 2.0], [1.0, 1.5, 2.0])
    assert abs(model.sigma(1.0) - 1.5) < 1e-12
    with pytest.raises(DomainError):
        model.sigma(3.0)
    with pytest.raises(DomainError):
        model.sigma(0.1)
    with pytest.raises(DomainError):
        SdeModel.table([1.0, 2.0], [1.0, -1.0])
