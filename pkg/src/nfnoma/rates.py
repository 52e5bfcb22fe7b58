"""Analytic NOMA rates, the near-field QoS power, and allocation scoring.

All rates are log base 2 (bits per channel use). An allocation is scored by
the sum over far-field users of the smallest of their direct rate and the
rates at which their signal is decoded (for interference cancellation) by
the near-field users sharing their beams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .precoding import EffectiveChannels
from .scheduling import Assignment

QOS_RATE_TOL = 1e-9


class QosInfeasibleError(ValueError):
    """A beam cannot meet the near-field target rate within the power budget."""


@dataclass(frozen=True)
class Allocation:
    """Near-field powers (M,), far-field coefficients (M, K), and the beam map."""

    nf_power: np.ndarray
    ff_coeff: np.ndarray
    assignment: Assignment


@dataclass(frozen=True)
class RateReport:
    ff_rate: np.ndarray          # (K,) far users' direct rates
    ff_at_nf_rate: np.ndarray    # (K, D_x) decode rate of user k's signal on its beams
    nf_rate: np.ndarray          # (M,) near users' own rates after cancellation
    qos_ok: np.ndarray           # (M,) bool, near rate meets the target
    objective: float             # sum_k min(ff_rate_k, min_m ff_at_nf_rate[k, :])

    @property
    def per_user(self) -> np.ndarray:
        """Each far user's effective rate, the smaller of direct and decode."""
        return np.minimum(self.ff_rate, self.ff_at_nf_rate.min(axis=1))


def qos_power(nf_gain: float, noise_power: float, target_rate: float,
              budget: float) -> float:
    """Smallest near-field power meeting the target rate, sigma^2*(2^R - 1)/h.

    Raises QosInfeasibleError when even the full beam budget cannot reach
    the target.
    """
    if nf_gain <= 0:
        raise ValueError("nf_gain must be positive")
    eps = 2.0 ** target_rate - 1.0
    p = noise_power * eps / nf_gain
    if p > budget:
        raise QosInfeasibleError(
            f"QoS needs {p:.3e} W, budget is {budget:.3e} W")
    return p


def qos_power_vector(eff: EffectiveChannels, noise_power: float,
                     target_rate: float, budget: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-beam QoS powers and a feasibility mask.

    Infeasible beams carry the full budget (best effort for the near user)
    and must not be assigned any far-field coefficient.
    """
    eps = 2.0 ** target_rate - 1.0
    want = noise_power * eps / eff.nf_gain
    feasible = want <= budget
    return np.where(feasible, want, budget), feasible


def rate_ff_nf(coeff: complex, nf_gain: float, nf_power: float,
               noise_power: float) -> float:
    """Rate at which a near user decodes the sharing far user's signal."""
    sinr = abs(coeff) ** 2 * nf_gain / (noise_power + nf_power * nf_gain)
    return float(np.log2(1.0 + sinr))


def rate_nf(nf_power: float, nf_gain: float, noise_power: float) -> float:
    """Near user's own rate after cancelling the far user's signal."""
    return float(np.log2(1.0 + nf_power * nf_gain / noise_power))


def rate_ff(k: int, alloc: Allocation, eff: EffectiveChannels,
            noise_power: float) -> float:
    """Far user k's direct rate, treating all other transmissions as noise."""
    gt_k = eff.ff_effective[:, k]
    signal = abs(np.vdot(gt_k, alloc.ff_coeff[:, k])) ** 2
    noise = noise_power + float(alloc.nf_power @ eff.ff_gain[:, k])
    for i in range(alloc.ff_coeff.shape[1]):
        if i != k:
            noise += abs(np.vdot(gt_k, alloc.ff_coeff[:, i])) ** 2
    return float(np.log2(1.0 + signal / noise))


def validate_allocation(alloc: Allocation, eff: EffectiveChannels,
                        noise_power: float, budget: float, target_rate: float,
                        tol: float = 1e-9) -> None:
    """Raise unless the allocation obeys the problem's structural constraints.

    Checks the per-beam power budget, coefficient support (far-field power
    only on assigned beams, one user per beam), and the near-field rate
    target wherever it is attainable within the budget.
    """
    ff_power = np.abs(alloc.ff_coeff) ** 2
    total = alloc.nf_power + ff_power.sum(axis=1)
    if np.any(total > budget * (1 + tol) + tol):
        raise ValueError(f"per-beam budget exceeded by {float((total - budget).max()):.3e}")
    if np.any(alloc.nf_power < -tol):
        raise ValueError("negative near-field power")
    owner = alloc.assignment.owner
    for m in range(ff_power.shape[0]):
        active = np.flatnonzero(ff_power[m] > tol)
        if active.size > 1:
            raise ValueError(f"beam {m} carries more than one far-field user")
        if active.size == 1 and owner[m] != active[0]:
            raise ValueError(f"beam {m} carries power for a user it is not assigned to")
    eps = 2.0 ** target_rate - 1.0
    attainable = noise_power * eps / eff.nf_gain <= budget
    nf_rate = np.log2(1.0 + alloc.nf_power * eff.nf_gain / noise_power)
    if np.any(attainable & (nf_rate < target_rate - QOS_RATE_TOL)):
        raise ValueError("near-field rate target missed on an attainable beam")


def evaluate(alloc: Allocation, eff: EffectiveChannels, noise_power: float,
             target_rate: float) -> RateReport:
    """Score an allocation against a set of effective channels.

    Passing channels other than the ones the allocation was optimized for
    (true instead of estimated) evaluates the achieved performance under
    CSI mismatch.
    """
    n_beams, n_far = alloc.ff_coeff.shape
    sets = alloc.assignment.beam_sets
    d_x = alloc.assignment.beams_per_user

    nf_rate = np.array([rate_nf(alloc.nf_power[m], eff.nf_gain[m], noise_power)
                        for m in range(n_beams)])
    qos_ok = nf_rate >= target_rate - QOS_RATE_TOL

    ff = np.array([rate_ff(k, alloc, eff, noise_power) for k in range(n_far)])
    ff_at_nf = np.zeros((n_far, d_x))
    for k in range(n_far):
        for j, m in enumerate(sets[k]):
            ff_at_nf[k, j] = rate_ff_nf(alloc.ff_coeff[m, k], eff.nf_gain[m],
                                        alloc.nf_power[m], noise_power)
    per_user = np.minimum(ff, ff_at_nf.min(axis=1) if d_x else ff)
    return RateReport(ff_rate=ff, ff_at_nf_rate=ff_at_nf, nf_rate=nf_rate,
                      qos_ok=qos_ok, objective=float(per_user.sum()))
