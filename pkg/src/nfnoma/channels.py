"""Line-of-sight channel vectors for users on either side of the Rayleigh distance.

Near-field users get the spherical-wave model (per-element exact distances),
far-field users the plane-wave beamsteering model. Both are phase-only times
a free-space amplitude taken at the array center.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import SPEED_OF_LIGHT, UlaGeometry, rayleigh_distance


def path_loss(user: np.ndarray, center: np.ndarray, carrier_hz: float) -> float:
    """Free-space amplitude c / (4*pi*f_c*r) at distance r from the array center."""
    r = float(np.linalg.norm(np.asarray(user) - np.asarray(center)))
    if r <= 0.0:
        raise ValueError("user position coincides with the array center")
    return SPEED_OF_LIGHT / (4.0 * np.pi * carrier_hz * r)


def near_field_channel(user: np.ndarray, array: UlaGeometry,
                       wavelength: float) -> np.ndarray:
    """Spherical-wave channel: entry n is alpha * exp(-j*2*pi*|psi - psi_n|/lambda).

    The amplitude alpha uses the center distance; per-element amplitude
    variation is neglected. Positions beyond the Rayleigh distance are
    accepted with a warning (the formula stays well defined).
    """
    user = np.asarray(user, dtype=float)
    r = np.linalg.norm(user - array.center)
    d_r = rayleigh_distance(array.n_elements, array.spacing, wavelength)
    if r >= d_r:
        warnings.warn(
            f"near-field model used at {r:.2f} m, beyond the Rayleigh distance {d_r:.2f} m",
            stacklevel=2)
    alpha = path_loss(user, array.center, SPEED_OF_LIGHT / wavelength)
    dists = np.linalg.norm(user[None, :] - array.element_positions, axis=1)
    return alpha * np.exp(-2j * np.pi * dists / wavelength)


def far_field_channel(user: np.ndarray, array: UlaGeometry,
                      wavelength: float) -> np.ndarray:
    """Beamsteering channel: common phase at element 1, then a linear ramp.

    The departure angle is atan2(y, x) of the user relative to the array
    center, so broadside is the positive x axis.
    """
    user = np.asarray(user, dtype=float)
    rel = user - array.center
    alpha = path_loss(user, array.center, SPEED_OF_LIGHT / wavelength)
    sin_theta = rel[1] / np.linalg.norm(rel)
    r1 = np.linalg.norm(user - array.element_positions[0])
    n = np.arange(array.n_elements)
    ramp = np.exp(-2j * np.pi * array.spacing * n * sin_theta / wavelength)
    return alpha * np.exp(-2j * np.pi * r1 / wavelength) * ramp


def perturb_csi(rng: np.random.Generator, g: np.ndarray, rho: float,
                alpha: float) -> np.ndarray:
    """Mix the true channel with circular Gaussian error: rho*g + sqrt(1-rho)*e.

    Error entries are i.i.d. complex Gaussian with zero mean and per-entry
    variance alpha^2.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    n = g.shape[0]
    e = alpha * (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)
    return rho * g + np.sqrt(1.0 - rho) * e


@dataclass(frozen=True)
class ChannelSet:
    """All channel vectors of one scenario instance.

    near holds the (N, M) matrix whose columns are the near-field channels;
    far_true and far_estimated are (N, K). With csi_quality 1 the two far
    matrices are identical.
    """

    near: np.ndarray
    far_true: np.ndarray
    far_estimated: np.ndarray
    near_positions: np.ndarray
    far_positions: np.ndarray


def build_channel_set(near_positions: np.ndarray, far_positions: np.ndarray,
                      array: UlaGeometry, wavelength: float, rho: float = 1.0,
                      rng: np.random.Generator | None = None) -> ChannelSet:
    """Assemble near/far channel matrices, optionally with imperfect far CSI."""
    near = np.column_stack(
        [near_field_channel(p, array, wavelength) for p in np.atleast_2d(near_positions)])
    fc = SPEED_OF_LIGHT / wavelength
    far_cols = []
    est_cols = []
    for p in np.atleast_2d(far_positions):
        g = far_field_channel(p, array, wavelength)
        far_cols.append(g)
        if rho < 1.0:
            if rng is None:
                raise ValueError("imperfect CSI (rho < 1) needs an rng")
            est_cols.append(perturb_csi(rng, g, rho, path_loss(p, array.center, fc)))
        else:
            est_cols.append(g)
    far_true = np.column_stack(far_cols)
    far_est = np.column_stack(est_cols)
    return ChannelSet(near, far_true, far_est,
                      np.atleast_2d(near_positions), np.atleast_2d(far_positions))
