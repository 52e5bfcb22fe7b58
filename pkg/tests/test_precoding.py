import numpy as np
import pytest

from nfnoma.channels import near_field_channel
from nfnoma.geometry import UlaGeometry, drop_half_ring, rayleigh_distance
from nfnoma.precoding import (IllConditionedChannels, build_precoder,
                              effective_channels)

FC = 28e9
LAM = 299792458.0 / FC
D = LAM / 2.0


def _random_h(rng, n, m, scale=1.0):
    return scale * (rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m)))


def test_single_column_is_matched_filter(rng):
    h = _random_h(rng, 8, 1)
    pre = build_precoder(h)
    assert pre.beams[:, 0] == pytest.approx((h / np.linalg.norm(h))[:, 0])


def test_orthogonal_columns_reduce_to_normalization(rng):
    h = np.zeros((6, 2), dtype=complex)
    h[0, 0] = 2.0 - 1j
    h[3, 1] = 0.5 + 0.5j
    pre = build_precoder(h)
    for m in range(2):
        assert pre.beams[:, m] == pytest.approx(h[:, m] / np.linalg.norm(h[:, m]))


def test_zero_forcing_invariants_random_instance(rng):
    h = _random_h(rng, 16, 4)
    pre = build_precoder(h)
    assert np.abs(np.linalg.norm(pre.beams, axis=0) - 1).max() < 1e-10
    cross = h.conj().T @ pre.beams
    off = np.abs(cross - np.diag(np.diag(cross)))
    assert (off / np.linalg.norm(h, axis=0)[:, None]).max() < 1e-8


def test_nf_gain_identities(rng):
    # h_m = |h_m^H p_m|^2 equals both Q_mm^2 and 1/[(H^H H)^{-1}]_mm.
    h = _random_h(rng, 24, 6)
    pre = build_precoder(h)
    eff = effective_channels(pre, h, np.zeros((24, 1), dtype=complex))
    gram_inv = np.linalg.inv(h.conj().T @ h)
    assert eff.nf_gain == pytest.approx(pre.normalization**2, rel=1e-8)
    assert eff.nf_gain == pytest.approx(1.0 / np.real(np.diag(gram_inv)), rel=1e-8)


def test_scaling_property(rng):
    h = _random_h(rng, 12, 3)
    c = 0.37 * np.exp(1j * 1.1)
    eff1 = effective_channels(build_precoder(h), h, np.zeros((12, 1), complex))
    eff2 = effective_channels(build_precoder(c * h), c * h, np.zeros((12, 1), complex))
    assert eff2.nf_gain == pytest.approx(abs(c) ** 2 * eff1.nf_gain, rel=1e-8)


def test_ill_conditioned_rejected(rng):
    h = _random_h(rng, 10, 2)
    h[:, 1] = h[:, 0] * (1 + 1e-9)  # nearly coincident users
    with pytest.raises(IllConditionedChannels) as exc:
        build_precoder(h)
    assert exc.value.cond > 1e12


def test_effective_channels_beam_as_far_channel(rng):
    h = _random_h(rng, 16, 3)
    pre = build_precoder(h)
    g = pre.beams[:, [0]]  # far channel aligned with beam 0
    eff = effective_channels(pre, h, g)
    assert eff.ff_gain[0, 0] == pytest.approx(1.0, rel=1e-10)
    assert eff.ff_gain[1, 0] == pytest.approx(
        np.abs(np.vdot(pre.beams[:, 1], pre.beams[:, 0])) ** 2, rel=1e-9)


def test_effective_channels_zero_far_channel(rng):
    h = _random_h(rng, 16, 3)
    pre = build_precoder(h)
    eff = effective_channels(pre, h, np.zeros((16, 2), dtype=complex))
    assert np.all(eff.ff_gain == 0)


def test_effective_channels_internal_consistency(rng):
    h = _random_h(rng, 16, 4)
    pre = build_precoder(h)
    g = _random_h(rng, 16, 2)
    eff = effective_channels(pre, h, g)
    # g_{m,k} must equal |[gt_k]_m|^2 and both equal |g_k^H p_m|^2.
    direct = np.abs(g.conj().T @ pre.beams).T ** 2
    assert eff.ff_gain == pytest.approx(np.abs(eff.ff_effective) ** 2, rel=1e-10)
    assert eff.ff_gain == pytest.approx(direct, rel=1e-10)


def test_invariants_on_physical_drop():
    lam, d = LAM, D
    rng = np.random.default_rng(17)
    ula = UlaGeometry(64, d)
    near = drop_half_ring(rng, 36, 5.0, rayleigh_distance(64, d, lam))
    h = np.column_stack([near_field_channel(p, ula, lam) for p in near])
    try:
        pre = build_precoder(h)
    except IllConditionedChannels:
        pytest.skip("degenerate drop for this seed")
    cross = h.conj().T @ pre.beams
    off = np.abs(cross - np.diag(np.diag(cross)))
    assert (off / np.linalg.norm(h, axis=0)[:, None]).max() < 1e-8
    assert np.abs(np.linalg.norm(pre.beams, axis=0) - 1).max() < 1e-10
