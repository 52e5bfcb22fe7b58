"""Zero-forcing beams for the near-field users and the derived scalar gains.

The precoder is P = H (H^H H)^{-1} Q with Q diagonal chosen so every beam
has unit norm; beam m then reaches only near-field user m. Everything the
optimizers consume (per-beam near gains, far-field leakage gains, and the
far users' beam-space channels) is collected in EffectiveChannels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

COND_LIMIT = 1e12


class IllConditionedChannels(ValueError):
    """Raised when the near-field Gram matrix is numerically rank deficient."""

    def __init__(self, cond: float):
        self.cond = cond
        super().__init__(
            f"near-field Gram matrix condition number {cond:.3e} exceeds {COND_LIMIT:.0e}; "
            "two users may (nearly) coincide")


@dataclass(frozen=True)
class Precoder:
    """Unit-norm zero-forcing beams (N, M) and the Q normalization diagonal."""

    beams: np.ndarray
    normalization: np.ndarray


@dataclass(frozen=True)
class EffectiveChannels:
    """Scalar channels seen through the precoder.

    nf_gain[m]       |h_m^H p_m|^2, the near user's own-beam power gain.
    ff_gain[m, k]    |g_k^H p_m|^2, far user k's power gain on beam m.
    ff_effective     (M, K), column k is the beam-space channel P^H g_k.
    """

    nf_gain: np.ndarray
    ff_gain: np.ndarray
    ff_effective: np.ndarray


def build_precoder(near_channels: np.ndarray) -> Precoder:
    """Zero-forcing beams from the (N, M) near-field channel matrix.

    The Hermitian positive-definite Gram matrix is Cholesky-factorized; its
    inverse diagonal gives the normalization. Raises IllConditionedChannels
    instead of letting a near-singular solve poison downstream math.
    """
    h = np.asarray(near_channels)
    if h.ndim == 1:
        h = h[:, None]
    gram = h.conj().T @ h
    gram = 0.5 * (gram + gram.conj().T)  # enforce exact Hermitian symmetry
    eig = np.linalg.eigvalsh(gram)
    if eig[0] <= 0 or eig[-1] / eig[0] > COND_LIMIT:
        raise IllConditionedChannels(np.inf if eig[0] <= 0 else eig[-1] / eig[0])
    chol = np.linalg.cholesky(gram)
    m = gram.shape[0]
    # inv(gram) via two triangular solves against the identity; the full
    # inverse is needed anyway to form H (H^H H)^{-1}. Building it as
    # L^{-H} L^{-1} keeps it Hermitian PSD by construction, which bounds
    # the leakage error by roughly sqrt(cond)*eps, comfortably inside the
    # guard threshold.
    inv_l = np.linalg.solve(chol, np.eye(m, dtype=complex))
    gram_inv = inv_l.conj().T @ inv_l
    q = 1.0 / np.sqrt(np.real(np.diag(gram_inv)))
    beams = (h @ gram_inv) * q[None, :]
    # The Q scaling leaves an O(sqrt(cond)*eps) norm error; normalize away.
    beams /= np.linalg.norm(beams, axis=0)[None, :]
    return Precoder(beams=beams, normalization=q)


def effective_channels(precoder: Precoder, near_channels: np.ndarray,
                       far_channels: np.ndarray) -> EffectiveChannels:
    """All scalar gains for one precoder and one set of far-field channels."""
    p = precoder.beams
    nf_gain = np.abs(np.einsum("nm,nm->m", near_channels.conj(), p)) ** 2
    g = np.asarray(far_channels)
    if g.ndim == 1:
        g = g[:, None]
    ff_effective = p.conj().T @ g
    ff_gain = np.abs(ff_effective) ** 2
    return EffectiveChannels(nf_gain=nf_gain, ff_gain=ff_gain,
                             ff_effective=ff_effective)
