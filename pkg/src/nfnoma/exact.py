"""Globally optimal solvers for the two tractable special cases.

With a single far-field user the problem collapses to a one-dimensional
search whose optimum has a closed form: pour the full residual power into
every assigned beam, phase-align the beams, and the achievable SINR is the
smaller of the per-beam decode bounds and the coherent-combining bound.

With one beam per far-field user the problem is power allocation over an
interference channel, solved to a prescribed gap by branch and bound over
boxes of SINR targets, with a monotone fixed-point feasibility test.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field

import numpy as np

from .precoding import EffectiveChannels
from .rates import Allocation, QosInfeasibleError, qos_power_vector
from .scheduling import Assignment

log = logging.getLogger(__name__)

FEASIBILITY_REL_TOL = 1e-12
FEASIBILITY_MAX_ITER = 10_000
BUDGET_SLACK = 1e-9  # relative headroom before a power is declared over budget


@dataclass(frozen=True)
class SingleUserSolution:
    sinr: float
    beam_power: np.ndarray   # (M,) |f_m|^2, zero off the assigned set
    coeff: np.ndarray        # (M,) complex coefficients with recovered phases
    rate: float


@dataclass
class Box:
    x_min: np.ndarray
    x_max: np.ndarray
    ub: float = 0.0
    lb: float = 0.0
    feasible: bool = False
    q: np.ndarray | None = None
    split: bool = False

    def longest_edge(self) -> int:
        return int(np.argmax(self.x_max - self.x_min))


@dataclass(frozen=True)
class BBResult:
    allocation: Allocation
    rate: float
    trace: list[tuple[float, float]]   # (upper, lower) global bounds per iteration
    iterations: int
    gap: float
    converged: bool


def _problem_gains(eff: EffectiveChannels, assignment: Assignment,
                   noise_power: float, budget: float, target_rate: float):
    """Shared pre-processing: QoS powers, residual budgets, floors per user."""
    nf_power, feasible = qos_power_vector(eff, noise_power, target_rate, budget)
    for k, beams in enumerate(assignment.beam_sets):
        for m in beams:
            if not feasible[m]:
                raise QosInfeasibleError(
                    f"beam {m} assigned to far user {k} cannot meet the near-field QoS")
    residual = budget - nf_power
    eta = noise_power + eff.ff_gain.T @ nf_power          # (K,)
    mu = (noise_power + nf_power * eff.nf_gain) / eff.nf_gain  # (M,)
    return nf_power, residual, eta, mu


def solve_single_ff(eff: EffectiveChannels, beams: tuple[int, ...],
                    noise_power: float, budget: float,
                    target_rate: float) -> SingleUserSolution:
    """Closed-form optimum for a single far-field user on the given beams."""
    if not beams:
        raise ValueError("empty beam set")
    assignment = Assignment(beam_sets=(tuple(beams),),
                            owner=_owner_map(eff.nf_gain.shape[0], (tuple(beams),)))
    nf_power, residual, eta, mu = _problem_gains(
        eff, assignment, noise_power, budget, target_rate)
    g = eff.ff_gain[:, 0]
    s = np.asarray(beams)
    eta0 = float(eta[0])
    per_beam = eff.nf_gain[s] * residual[s] / (noise_power + nf_power[s] * eff.nf_gain[s])
    coherent = float(np.sum(np.sqrt(g[s] * residual[s]))) ** 2 / eta0
    y = float(min(per_beam.min(), coherent))

    z = np.zeros_like(g)
    z[s] = residual[s]
    # Phase recovery: align each coefficient against the beam's far-field
    # response so the contributions add coherently.
    phase = np.angle(eff.ff_effective[:, 0].conj())
    coeff = np.sqrt(z) * np.exp(-1j * phase)
    return SingleUserSolution(sinr=y, beam_power=z, coeff=coeff,
                              rate=float(np.log2(1.0 + y)))


def solve_single_ff_bisection(eff: EffectiveChannels, beams: tuple[int, ...],
                              noise_power: float, budget: float,
                              target_rate: float, tol: float = 1e-12) -> float:
    """Independent route to the same optimum: bisection on the SINR target.

    For a fixed target y, feasibility only requires checking the full-power
    point, since every constraint is monotone in the beam powers.
    """
    assignment = Assignment(beam_sets=(tuple(beams),),
                            owner=_owner_map(eff.nf_gain.shape[0], (tuple(beams),)))
    nf_power, residual, eta, mu = _problem_gains(
        eff, assignment, noise_power, budget, target_rate)
    g = eff.ff_gain[:, 0]
    s = np.asarray(beams)
    eta0 = float(eta[0])
    coherent_full = float(np.sum(np.sqrt(g[s] * residual[s]))) ** 2

    def ok(y: float) -> bool:
        if np.any(mu[s] * y > residual[s] * (1 + 1e-15)):
            return False
        return coherent_full >= eta0 * y

    lo, hi = 0.0, 1.0
    while ok(hi):
        hi *= 2.0
        if hi > 1e30:
            break
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, lo):
            break
    return float(np.log2(1.0 + lo))


def check_feasible(x: np.ndarray, own_gain: np.ndarray, cross_gain: np.ndarray,
                   eta: np.ndarray, mu: np.ndarray,
                   budgets: np.ndarray) -> tuple[bool, np.ndarray]:
    """Can per-user powers q support SINR targets x on single-beam links?

    Runs the monotone fixed-point iteration
        q_k <- max(x_k*mu_k, x_k*(eta_k + sum_{i!=k} cross[k,i]*q_i)/own[k])
    from its lower bound. Iterates only grow, so the first budget breach
    proves infeasibility; convergence below every budget proves feasibility.
    Hitting the iteration cap is reported as infeasible (conservative).
    """
    x = np.asarray(x, dtype=float)
    sinr_active = x > 0.0
    q = x * mu
    if np.any(q > budgets * (1 + BUDGET_SLACK)):
        return False, q
    if np.any(sinr_active & (own_gain <= 0.0)):
        return False, q  # a positive target on a dead link needs infinite power
    safe_own = np.where(own_gain > 0, own_gain, 1.0)
    coupling = cross_gain * x[:, None] / safe_own[:, None]
    base = x * eta / safe_own
    for _ in range(FEASIBILITY_MAX_ITER):
        q_new = np.maximum(x * mu, np.where(sinr_active, base + coupling @ q, 0.0))
        if np.any(q_new > budgets * (1 + BUDGET_SLACK)):
            return False, q_new
        if np.all(np.abs(q_new - q) <= FEASIBILITY_REL_TOL * np.maximum(q, 1e-300)):
            return True, q_new
        q = q_new
    log.warning("feasibility fixed point hit the iteration cap; treating as infeasible")
    return False, q


def _owner_map(n_beams: int, beam_sets: tuple[tuple[int, ...], ...]) -> np.ndarray:
    owner = np.full(n_beams, -1, dtype=int)
    for k, beams in enumerate(beam_sets):
        for m in beams:
            owner[m] = k
    return owner


def _single_beam_gains(eff: EffectiveChannels, assignment: Assignment):
    """Per-user own/cross gains a[k, i] = |gt_k at user i's beam|^2 for D_x = 1."""
    beams = [bs[0] for bs in assignment.beam_sets]
    k = len(beams)
    a = np.empty((k, k))
    for kk in range(k):
        a[kk, :] = np.abs(eff.ff_effective[beams, kk]) ** 2
    return np.asarray(beams), a


def initial_box(eff: EffectiveChannels, assignment: Assignment,
                noise_power: float, budget: float, target_rate: float) -> Box:
    """Smallest axis-aligned box certain to contain every feasible SINR vector."""
    if assignment.beams_per_user != 1:
        raise ValueError("branch and bound covers the one-beam-per-user case only")
    nf_power, residual, eta, mu = _problem_gains(
        eff, assignment, noise_power, budget, target_rate)
    beams, a = _single_beam_gains(eff, assignment)
    res = residual[beams]
    x_max = np.minimum(np.diag(a) * res / eta, res / mu[beams])
    return Box(x_min=np.zeros_like(x_max), x_max=x_max)


def bb_solve(eff: EffectiveChannels, assignment: Assignment, noise_power: float,
             budget: float, target_rate: float, tol: float = 1e-3,
             max_boxes: int = 1_000_000, selection: str = "max-upper") -> BBResult:
    """Branch and bound over SINR boxes, one beam per far-field user.

    Box bounds come from the corner objectives when the lower corner passes
    the feasibility test, zero otherwise. The box with the largest upper
    bound is split at the midpoint of its longest edge ("min-lower" selects
    by smallest lower bound instead). Stops when the global bound gap drops
    below tol or the box budget runs out.
    """
    if selection not in ("max-upper", "min-lower"):
        raise ValueError(f"unknown selection rule {selection!r}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    nf_power, residual, eta, mu = _problem_gains(
        eff, assignment, noise_power, budget, target_rate)
    beams, a = _single_beam_gains(eff, assignment)
    own = np.diag(a).copy()
    cross = a.copy()
    np.fill_diagonal(cross, 0.0)
    buds = residual[beams]
    mub = mu[beams]

    def bound(box: Box) -> None:
        feas, q = check_feasible(box.x_min, own, cross, eta, mub, buds)
        box.feasible = feas
        if feas:
            box.ub = float(np.log2(1.0 + box.x_max).sum())
            box.lb = float(np.log2(1.0 + box.x_min).sum())
            box.q = q
        else:
            box.ub = box.lb = 0.0

    root = initial_box(eff, assignment, noise_power, budget, target_rate)
    bound(root)
    best = root
    lower = root.lb
    counter = 0

    def select_key(box: Box):
        return -box.ub if selection == "max-upper" else box.lb

    # Selection heap per the configured rule, plus a max-ub heap so the
    # global upper bound is available in O(log n) under either rule.
    # Split or pruned boxes are skipped lazily when they surface.
    select_heap: list[tuple[float, int, Box]] = [(select_key(root), 0, root)]
    upper_heap: list[tuple[float, int, Box]] = [(-root.ub, 0, root)]

    def current_upper() -> float:
        while upper_heap and (upper_heap[0][2].split or upper_heap[0][2].ub < lower):
            heapq.heappop(upper_heap)
        return upper_heap[0][2].ub if upper_heap else lower

    upper = current_upper()
    trace = [(upper, lower)]
    iterations = 0
    while upper - lower >= tol and iterations < max_boxes:
        box = None
        while select_heap:
            cand = heapq.heappop(select_heap)[2]
            if not cand.split and cand.ub >= lower:
                box = cand
                break
        if box is None:
            break
        iterations += 1
        box.split = True
        edge = box.longest_edge()
        mid = 0.5 * (box.x_min[edge] + box.x_max[edge])
        lo_max = box.x_max.copy()
        lo_max[edge] = mid
        hi_min = box.x_min.copy()
        hi_min[edge] = mid
        low_child = Box(x_min=box.x_min.copy(), x_max=lo_max)
        # The lower child keeps the parent's corner; reuse its bound check.
        low_child.feasible = box.feasible
        low_child.q = box.q
        if box.feasible:
            low_child.ub = float(np.log2(1.0 + low_child.x_max).sum())
            low_child.lb = box.lb
        high_child = Box(x_min=hi_min, x_max=box.x_max.copy())
        bound(high_child)
        for child in (low_child, high_child):
            if child.lb > lower:
                lower = child.lb
                best = child
            counter += 1
            if child.ub >= lower:  # prune boxes that cannot beat the incumbent
                heapq.heappush(select_heap, (select_key(child), counter, child))
                heapq.heappush(upper_heap, (-child.ub, counter, child))
        upper = current_upper()
        trace.append((upper, lower))

    converged = upper - lower < tol
    if not converged:
        log.warning("branch and bound stopped at gap %.3e after %d boxes",
                    upper - lower, iterations)

    q = best.q if best.q is not None else np.zeros_like(buds)
    n_beams = eff.nf_gain.shape[0]
    coeff = np.zeros((n_beams, len(beams)), dtype=complex)
    for k, m in enumerate(beams):
        coeff[m, k] = np.sqrt(q[k])
    alloc = Allocation(nf_power=nf_power, ff_coeff=coeff, assignment=assignment)
    return BBResult(allocation=alloc, rate=lower, trace=trace,
                    iterations=iterations, gap=upper - lower, converged=converged)
