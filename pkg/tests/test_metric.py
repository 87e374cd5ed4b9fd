import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anisovoro.errors import ConvergenceFailure, InvalidArgument, MetricError, NotPositiveDefinite
from anisovoro.metric import (
    MetricField,
    SpdMatrix,
    batch_singular_extremes,
    brute_force_sigma,
    estimate_sigma,
    metric_from_spec,
    series_coefficient,
    spd_sqrt,
    spd_sqrt_series,
    spectral_min,
    spectral_norm,
)

from oracles import random_spd, sigma_all_pairs


def test_sqrt_identity_and_diagonal():
    assert np.array_equal(spd_sqrt(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(spd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-15)


def test_sqrt_rejects_bad_input():
    with pytest.raises(NotPositiveDefinite):
        spd_sqrt([[1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(NotPositiveDefinite):
        spd_sqrt([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(InvalidArgument):
        spd_sqrt([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(InvalidArgument):
        spd_sqrt(np.ones((2, 3)))


def test_series_coefficients_match_binomial():
    # sqrt(1 + x) = 1 + x/2 - x^2/8 + x^3/16 - 5x^4/128
    expected = [1.0, 0.5, -0.125, 0.0625, -5 / 128]
    assert [series_coefficient(i) for i in range(5)] == pytest.approx(expected, abs=1e-15)


def test_series_recurrence():
    c = [series_coefficient(i) for i in range(30)]
    for i in range(1, 30):
        assert c[i] / c[i - 1] == pytest.approx((3 - 2 * i) / (2 * i), rel=1e-12)


def test_series_scaling_needed():
    # spectral radius 3: the unscaled series in Q - I diverges
    q = np.diag([3.0, 0.5])
    np.testing.assert_allclose(spd_sqrt_series(q), spd_sqrt(q), atol=1e-9)
    m = np.eye(2)
    x = q - np.eye(2)
    power = np.eye(2)
    for i in range(1, 60):
        power = power @ x
        m = m + series_coefficient(i) * power
    assert not np.all(np.isfinite(m @ m)) or not np.allclose(m @ m, q, atol=1e-3)


def test_series_trivial_cases():
    assert np.array_equal(spd_sqrt_series(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(spd_sqrt_series(np.diag([0.25, 1.0])), np.diag([0.5, 1.0]), atol=1e-11)
    # rotated 2x2 with rho(Q/rho(Q) - I) = 0.5
    r = np.array([[np.cos(0.7), -np.sin(0.7)], [np.sin(0.7), np.cos(0.7)]])
    q = r @ np.diag([1.0, 2.0]) @ r.T
    np.testing.assert_allclose(spd_sqrt_series(q, max_terms=200), spd_sqrt(q), atol=1e-6)


def test_series_convergence_failure():
    q = np.diag([1.0, 1e-6])
    with pytest.raises(ConvergenceFailure) as info:
        spd_sqrt_series(q, max_terms=20)
    assert info.value.residual > 0


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**31 - 1))
def test_sqrt_property(n, seed):
    q = random_spd(np.random.default_rng(seed), n)
    m = spd_sqrt(q)
    assert np.abs(m - m.T).max() <= 1e-12 * max(1.0, np.abs(m).max())
    assert np.linalg.eigvalsh(m)[0] > 0
    assert np.linalg.norm(m.T @ m - q) <= 1e-9 * np.linalg.norm(q)


def test_spd_matrix_wrapper():
    a = SpdMatrix(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert a.dim == 2
    assert a.condition_number() == pytest.approx(3.0)
    np.testing.assert_allclose(a.sqrt @ a.sqrt, a.entries, atol=1e-14)
    with pytest.raises(NotPositiveDefinite):
        SpdMatrix(-np.eye(2))


def test_spectral_extremes():
    a = np.array([[3.0, 0.0], [0.0, 0.5]])
    assert spectral_norm(a) == 3.0
    assert spectral_min(a) == 0.5
    rng = np.random.default_rng(1)
    for n in (1, 2, 3, 4):
        stack = rng.standard_normal((200, n, n))
        smax, smin = batch_singular_extremes(stack)
        sv = np.linalg.svd(stack, compute_uv=False)
        np.testing.assert_allclose(smax, sv[:, 0], rtol=1e-12)
        np.testing.assert_allclose(smin, sv[:, -1], rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("factory", [
    lambda: MetricField.identity(2),
    lambda: MetricField.constant([[2.0, 0.3], [0.3, 1.0]]),
    lambda: MetricField.axis_scaling(0.5),
    lambda: MetricField.swirl(),
    lambda: MetricField.radial_bump(),
    lambda: MetricField.shear_bump(-0.5, 0.1),
    lambda: MetricField.swirl(dim=3),
    lambda: MetricField.radial_bump(dim=3),
])
def test_preset_roots_are_spd_roots(factory):
    f = factory()
    pts = np.random.default_rng(2).random((64, f.dim))
    m = f.root(pts)
    np.testing.assert_allclose(m, np.swapaxes(m, 1, 2), atol=1e-15)
    q = f.tensor(pts)
    for mi, qi in zip(m, q):
        np.testing.assert_allclose(mi, spd_sqrt(qi), atol=1e-12)
    # single-point and batched evaluation agree bitwise
    assert np.array_equal(f.root(pts[3]), m[3])


def test_radial_bump_closed_form():
    f = MetricField.radial_bump(amplitude=2.0, radius=0.25)
    p = np.array([0.7, 0.4])
    u = (p - 0.5) / 0.25
    q = np.eye(2) + 2.0 * np.exp(-u @ u) * np.outer(u, u)
    np.testing.assert_allclose(f.tensor(p), q, atol=1e-14)


def test_condition_cap_and_domain():
    with pytest.raises(MetricError):
        MetricField.constant(np.diag([1.0, 1e5]))
    f = MetricField.axis_scaling(s=-2.0)
    with pytest.raises(MetricError):
        f.root([0.9, 0.1])
    with pytest.raises(InvalidArgument):
        MetricField.shear_bump(amplitude=1.0)
    with pytest.raises(InvalidArgument):
        MetricField(2, "unknown")


def test_pl_grid_interpolates_and_round_trips(tmp_path):
    vals = np.stack([np.eye(2) * (1 + i) for i in range(4)])
    f = MetricField.pl_grid([0, 0], [1, 1], [2, 2], vals)
    # node order is C order: (0,0), (0,1), (1,0), (1,1)
    np.testing.assert_allclose(f.tensor([0.0, 0.0]), np.eye(2))
    np.testing.assert_allclose(f.tensor([1.0, 1.0]), 4 * np.eye(2))
    np.testing.assert_allclose(f.tensor([0.5, 0.5]), 2.5 * np.eye(2))
    path = tmp_path / "m.json"
    f.save_pl_grid(path)
    g = MetricField.load_pl_grid(path)
    pts = np.random.default_rng(0).random((20, 2))
    assert np.array_equal(f.root(pts), g.root(pts))
    bad = vals.copy()
    bad[0] = np.diag([1.0, -1.0])
    with pytest.raises(NotPositiveDefinite):
        MetricField.pl_grid([0, 0], [1, 1], [2, 2], bad)


def test_metric_from_spec():
    f = metric_from_spec({"preset": "swirl", "params": {"twist": 1.0}}, 2)
    assert f.params["twist"] == 1.0
    with pytest.raises(InvalidArgument):
        metric_from_spec({"preset": "nope"}, 2)


def test_sigma_zero_for_constant_metrics():
    for f in (MetricField.identity(2), MetricField.constant([[3.0, 1.0], [1.0, 2.0]])):
        s = estimate_sigma(f, [0, 0], [1, 1], 9)
        assert s.sigma_hat == pytest.approx(0.0, abs=1e-12)


def test_sigma_axis_scaling_exact():
    # rho(M_b M_a^-1 - I) / |M_a(a-b)| peaks at s when x_a = 0 and a, b differ along x0 only
    f = MetricField.axis_scaling(0.5)
    s = estimate_sigma(f, [0, 0], [1, 1], 17)
    assert s.sigma_hat == pytest.approx(0.5, rel=1e-12)
    b = brute_force_sigma(f, [0, 0], [1, 1], 17)
    assert b.sigma_hat == pytest.approx(0.5, rel=1e-12)


@pytest.mark.parametrize("factory", [lambda: MetricField.swirl(), lambda: MetricField.radial_bump()])
def test_brute_force_matches_naive_oracle(factory):
    f = factory()
    axes = np.linspace(0, 1, 7)
    pts = np.stack(np.meshgrid(axes, axes, indexing="ij"), -1).reshape(-1, 2)
    b = brute_force_sigma(f, [0, 0], [1, 1], 7)
    assert b.sigma_hat == pytest.approx(sigma_all_pairs(f, pts), rel=1e-10)


def test_sigma_refinement_nests_and_is_monotone():
    f = MetricField.swirl()
    coarse = estimate_sigma(f, [0, 0], [1, 1], 9, refine_rounds=0)
    fine = estimate_sigma(f, [0, 0], [1, 1], 9, refine_rounds=4)
    assert fine.sigma_hat >= coarse.sigma_hat
    assert fine.refinement_rounds == 4
    # refinement is a lower bound on the brute force over the nested lattice
    brute = brute_force_sigma(f, [0, 0], [1, 1], 17)
    lattice = estimate_sigma(f, [0, 0], [1, 1], 17, refine_rounds=0)
    assert lattice.sigma_hat == pytest.approx(brute.sigma_hat, rel=1e-12)


def test_sigma_budget_and_determinism():
    f = MetricField.swirl()
    a = estimate_sigma(f, [0, 0], [1, 1], 33, pair_budget=50_000, seed=3)
    b = estimate_sigma(f, [0, 0], [1, 1], 33, pair_budget=50_000, seed=3)
    assert a.budget_exhausted
    assert a.sigma_hat == b.sigma_hat
    assert a.pairs_sampled <= 50_000 + 4 * 18 * 17
    c = estimate_sigma(f, [0, 0], [1, 1], 33, pair_budget=50_000, seed=3, threads=3)
    assert c.sigma_hat == a.sigma_hat


def test_sigma_3d_has_no_duplicate_pairs():
    f = MetricField.swirl(twist=0.6, dim=3)
    s = estimate_sigma(f, [0, 0, 0], [1, 1, 1], 11)
    a, b = s.attaining_pair
    assert np.linalg.norm(a - b) > 1e-6
    assert s.sigma_hat < 1.0
