import numpy as np
import pytest

from nfnoma.channels import (build_channel_set, far_field_channel,
                             near_field_channel, path_loss, perturb_csi)
from nfnoma.geometry import UlaGeometry, rayleigh_distance

FC = 28e9
LAM = 299792458.0 / FC
D = LAM / 2.0


def test_path_loss_reference_values():
    center = np.zeros(2)
    # Frozen from c/(4*pi*f_c*r) with the exact speed of light.
    assert path_loss(np.array([10.0, 0.0]), center, FC) == pytest.approx(
        8.520259212923112e-05, rel=1e-12)
    assert path_loss(np.array([21.24779046075, 0.0]), center, FC) == pytest.approx(
        4.009950695185068e-05, rel=1e-12)


def test_path_loss_inverse_distance():
    center = np.zeros(2)
    a1 = path_loss(np.array([7.0, 3.0]), center, FC)
    a2 = path_loss(2 * np.array([7.0, 3.0]), center, FC)
    assert a2 == pytest.approx(a1 / 2)


def test_path_loss_rejects_zero_distance():
    with pytest.raises(ValueError):
        path_loss(np.zeros(2), np.zeros(2), FC)


def test_near_field_constant_modulus():
    ula = UlaGeometry(32, D)
    user = np.array([3.0, -1.2])   # inside the 32-element Rayleigh distance
    h = near_field_channel(user, ula, LAM)
    alpha = path_loss(user, ula.center, FC)
    assert np.abs(h) == pytest.approx(np.full(32, alpha), rel=1e-12)


def test_near_field_single_element():
    # A single element has zero Rayleigh distance, so the out-of-region
    # warning necessarily fires; the formula itself stays exact.
    ula = UlaGeometry(1, D)
    user = np.array([4.0, 1.0])
    with pytest.warns(UserWarning):
        h = near_field_channel(user, ula, LAM)
    r = np.linalg.norm(user - ula.element_positions[0])
    expect = path_loss(user, ula.center, FC) * np.exp(-2j * np.pi * r / LAM)
    assert h[0] == pytest.approx(expect)


def test_near_field_warns_beyond_rayleigh():
    ula = UlaGeometry(32, D)
    with pytest.warns(UserWarning):
        near_field_channel(np.array([500.0, 0.0]), ula, LAM)


def test_far_field_broadside_entries_equal():
    ula = UlaGeometry(16, D)
    g = far_field_channel(np.array([500.0, 0.0]), ula, LAM)
    assert g == pytest.approx(np.full(16, g[0]))


def test_far_field_constant_modulus_and_phase_step():
    ula = UlaGeometry(16, D)
    r = 800.0
    theta = np.pi / 6
    user = r * np.array([np.cos(theta), np.sin(theta)])
    g = far_field_channel(user, ula, LAM)
    alpha = path_loss(user, ula.center, FC)
    assert np.abs(g) == pytest.approx(np.full(16, alpha), rel=1e-12)
    # d = lambda/2 and sin(pi/6) = 1/2 give a -pi/2 step between elements.
    steps = np.angle(g[1:] / g[:-1])
    assert steps == pytest.approx(np.full(15, -np.pi / 2), abs=1e-12)


def test_near_field_converges_to_far_field():
    # At 100x the Rayleigh distance the spherical model's phases collapse
    # onto the plane-wave ramp, element by element.
    import warnings

    n = 32
    ula = UlaGeometry(n, D)
    d_r = rayleigh_distance(n, D, LAM)
    for theta in (0.0, 0.3, -0.7):
        user = 100 * d_r * np.array([np.cos(theta), np.sin(theta)])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            h = near_field_channel(user, ula, LAM)
        g = far_field_channel(user, ula, LAM)
        gap = np.abs(np.angle(h / g))
        assert gap.max() < 0.1


def test_perturb_csi_rho_one_is_exact():
    rng = np.random.default_rng(1)
    g = np.exp(1j * rng.uniform(0, 2 * np.pi, 16)) * 3e-5
    out = perturb_csi(rng, g, 1.0, 3e-5)
    assert np.array_equal(out, g)


def test_perturb_csi_zero_rho_moments():
    rng = np.random.default_rng(5)
    alpha = 2e-5
    g = np.full(4, alpha + 0j)
    draws = np.stack([perturb_csi(rng, g, 0.0, alpha) for _ in range(100_000)])
    var = draws.var(axis=0)
    assert var == pytest.approx(np.full(4, alpha**2), rel=0.02)
    # Mean of rho*g + sqrt(1-rho)*e is rho*g = 0 here; allow 4 sigma.
    tol = 4 * alpha / np.sqrt(100_000)
    assert np.abs(draws.mean(axis=0)).max() < tol


def test_perturb_csi_mean_tracks_rho():
    rng = np.random.default_rng(9)
    alpha = 1e-5
    g = alpha * np.exp(1j * np.linspace(0, 3, 8))
    rho = 0.6
    draws = np.stack([perturb_csi(rng, g, rho, alpha) for _ in range(100_000)])
    tol = 4 * np.sqrt(1 - rho) * alpha / np.sqrt(100_000)
    assert np.abs(draws.mean(axis=0) - rho * g).max() < tol


def test_perturb_csi_deterministic_given_seed():
    g = 1e-5 * np.exp(1j * np.linspace(0, 2, 8))
    a = perturb_csi(np.random.default_rng(123), g, 0.4, 1e-5)
    b = perturb_csi(np.random.default_rng(123), g, 0.4, 1e-5)
    assert np.array_equal(a, b)


def test_perturb_csi_rejects_bad_rho():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        perturb_csi(rng, np.ones(4, dtype=complex), 1.2, 1.0)


def test_build_channel_set_shapes_and_perfect_csi():
    rng = np.random.default_rng(11)
    ula = UlaGeometry(32, D)
    near = np.array([[3.0, 1.0], [4.0, -1.5]])
    far = np.array([[400.0, 10.0]])
    chs = build_channel_set(near, far, ula, LAM, 1.0, rng)
    assert chs.near.shape == (32, 2)
    assert chs.far_true.shape == (32, 1)
    assert np.array_equal(chs.far_true, chs.far_estimated)
    chs2 = build_channel_set(near, far, ula, LAM, 0.5, np.random.default_rng(3))
    assert not np.array_equal(chs2.far_true, chs2.far_estimated)
