"""Array geometry, the near/far field boundary, and user placement generators.

Positions are 2-D and stored as float arrays of shape (2,) or (n, 2).
The base station is a uniform linear array on the vertical (y) axis,
centered at the origin; the service area is the half-plane x > 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s, exact


def rayleigh_distance(n_elements: int, spacing: float, wavelength: float) -> float:
    """Boundary between spherical-wave and plane-wave propagation regimes.

    Computed as 2*((N-1)*d)^2 / lambda for an N-element array with element
    spacing d.
    """
    if n_elements < 1:
        raise ValueError(f"n_elements must be >= 1, got {n_elements}")
    if spacing <= 0 or wavelength <= 0:
        raise ValueError("spacing and wavelength must be positive")
    aperture = (n_elements - 1) * spacing
    return 2.0 * aperture * aperture / wavelength


@dataclass(frozen=True)
class UlaGeometry:
    """Uniform linear array on the y axis, element 1 at the top."""

    n_elements: int
    spacing: float
    center: np.ndarray = field(default_factory=lambda: np.zeros(2))

    @property
    def element_positions(self) -> np.ndarray:
        """(N, 2) element coordinates, consecutive elements `spacing` apart."""
        n = self.n_elements
        # Descending y so that a user at positive elevation sees the phase
        # ramp exp(-j*2*pi*d*(n-1)*sin(theta)/lambda) across elements.
        y = ((n + 1) / 2.0 - np.arange(1, n + 1)) * self.spacing
        pos = np.zeros((n, 2))
        pos[:, 0] = self.center[0]
        pos[:, 1] = self.center[1] + y
        return pos


@dataclass(frozen=True)
class SystemConfig:
    """Scenario-wide parameters shared by channels, precoding and optimizers.

    Powers are in watts, the target rate in bits per channel use, and
    csi_quality is the far-field estimate mixing weight in [0, 1].
    """

    n_antennas: int
    n_near: int
    n_far: int
    beams_per_far: int
    carrier_hz: float = 28e9
    spacing: float | None = None
    noise_power: float = 1e-11
    beam_power_budget: float = 1.0
    target_rate: float = 0.1
    csi_quality: float = 1.0

    def __post_init__(self):
        if self.spacing is None:
            object.__setattr__(self, "spacing", self.wavelength / 2.0)
        if self.n_near > self.n_antennas:
            raise ValueError("need n_near <= n_antennas for zero-forcing")
        if self.n_far * self.beams_per_far > self.n_near:
            raise ValueError("need n_far * beams_per_far <= n_near")
        if min(self.noise_power, self.beam_power_budget) <= 0:
            raise ValueError("powers must be positive")
        if not 0.0 <= self.csi_quality <= 1.0:
            raise ValueError("csi_quality must lie in [0, 1]")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def ula(self) -> UlaGeometry:
        return UlaGeometry(self.n_antennas, self.spacing)

    @property
    def rayleigh(self) -> float:
        return rayleigh_distance(self.n_antennas, self.spacing, self.wavelength)


def drop_half_ring(rng: np.random.Generator, count: int, r_inner: float,
                   r_outer: float) -> np.ndarray:
    """Sample `count` positions uniformly over the half-annulus with x > 0.

    Area-uniform: radius drawn via r = sqrt(u*(ro^2 - ri^2) + ri^2), angle
    uniform on (-pi/2, pi/2). Returns an (count, 2) array.
    """
    if not 0 < r_inner < r_outer:
        raise ValueError(f"need 0 < r_inner < r_outer, got ({r_inner}, {r_outer})")
    u = rng.random(count)
    r = np.sqrt(u * (r_outer**2 - r_inner**2) + r_inner**2)
    ang = rng.uniform(-np.pi / 2, np.pi / 2, count)
    return np.column_stack((r * np.cos(ang), r * np.sin(ang)))


def deterministic_scenario(n_near: int, n_far: int) -> tuple[np.ndarray, np.ndarray]:
    """Fixed benchmark layout: a square grid of near users, far users on an arc.

    Near users sit on a sqrt(M) x sqrt(M) grid with spacing 10/sqrt(M) m,
    centered 9 m from the array on its broadside. Far users sit on the
    half-circle of radius 90 m at angles -pi/2 + pi*k/(K+1), k = 1..K,
    which excludes the endfire directions.

    The grid center must be broadside, not on the array axis: a linear
    array cannot tell mirror positions apart, so an axis-centered grid
    would contain pairwise identical channel vectors and no zero-forcing
    precoder would exist.
    """
    side = round(np.sqrt(n_near))
    if side * side != n_near:
        raise ValueError(f"n_near must be a perfect square, got {n_near}")
    step = 10.0 / side
    offsets = (np.arange(side) - (side - 1) / 2.0) * step
    gx, gy = np.meshgrid(offsets, offsets, indexing="ij")
    near = np.column_stack((gx.ravel() + 9.0, gy.ravel()))

    k = np.arange(1, n_far + 1)
    ang = -np.pi / 2 + np.pi * k / (n_far + 1)
    far = 90.0 * np.column_stack((np.cos(ang), np.sin(ang)))
    return near, far


def check_field_regions(near: np.ndarray, far: np.ndarray, n_antennas: int,
                        spacing: float, wavelength: float) -> None:
    """Raise if any near user is beyond, or far user within, the Rayleigh distance."""
    d_r = rayleigh_distance(n_antennas, spacing, wavelength)
    near_r = np.linalg.norm(np.atleast_2d(near), axis=1)
    far_r = np.linalg.norm(np.atleast_2d(far), axis=1)
    if near_r.size and near_r.max() >= d_r:
        raise ValueError(
            f"near-field user at {near_r.max():.3f} m exceeds Rayleigh distance {d_r:.3f} m")
    if far_r.size and far_r.min() <= d_r:
        raise ValueError(
            f"far-field user at {far_r.min():.3f} m is within Rayleigh distance {d_r:.3f} m")
