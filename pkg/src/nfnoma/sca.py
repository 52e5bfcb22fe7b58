"""Successive convex approximation for the far-field coefficient design.

The nonconvex coupling (a quadratic-over-linear SINR certificate per user)
is replaced by its first-order Taylor expansion around the current iterate,
which under-estimates it globally, so every subproblem solution stays
feasible for the original problem and the objective can only improve. The
convex subproblem is solved with a log-barrier interior scheme over the
stacked real/imaginary coefficient variables.

Complex coefficients f of user k live on its assigned beams only and are
stacked as fbar_k = [Re f; Im f]; squared channel projections become
quadratic forms fbar^T (ghat ghat^T + gcheck gcheck^T) fbar.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .precoding import EffectiveChannels
from .rates import Allocation, QosInfeasibleError, qos_power_vector
from .scheduling import Assignment

log = logging.getLogger(__name__)

X_FLOOR = 1e-12
X_FREEZE = 10 * X_FLOOR   # below this an auxiliary SINR is treated as off
LN2 = float(np.log(2.0))
BARRIER_TARGET = 1e-8      # stop once n_constraints / t drops below this
BARRIER_GROWTH = 10.0
NEWTON_TOL = 1e-11         # half squared Newton decrement
MAX_NEWTON = 200


class DegenerateExpansionError(ValueError):
    """Taylor expansion requested at x = 0 for a user with active coefficients."""


@dataclass(frozen=True)
class StackedGains:
    """Everything the optimizers need, in stacked real form.

    beams[k] lists user k's beams; fbar slot j is Re f on beams[k, j] and
    slot d_x + j the matching Im part. quad[k, i] is the PSD form giving
    |gt_k^H f_i|^2 from fbar_i.
    """

    beams: np.ndarray        # (K, D_x) beam indices
    nf_power: np.ndarray     # (M,) near-field powers (QoS-minimal)
    eta: np.ndarray          # (K,) noise plus near-field leakage at each far user
    mu: np.ndarray           # (K, D_x) per-beam decode thresholds
    bud: np.ndarray          # (K, D_x) residual per-beam power budgets
    ghat: np.ndarray         # (K, 2 D_x) Re/Im stack of own-beam channels
    gcheck: np.ndarray       # (K, 2 D_x) quadrature stack
    quad: np.ndarray         # (K, K, 2 D_x, 2 D_x)
    n_beams: int

    @property
    def n_users(self) -> int:
        return self.beams.shape[0]

    @property
    def d_x(self) -> int:
        return self.beams.shape[1]


def stack_gains(eff: EffectiveChannels, assignment: Assignment,
                noise_power: float, budget: float,
                target_rate: float) -> StackedGains:
    """Precompute the stacked quadratic forms for one problem instance."""
    nf_power, feasible = qos_power_vector(eff, noise_power, target_rate, budget)
    for k, beams in enumerate(assignment.beam_sets):
        for m in beams:
            if not feasible[m]:
                raise QosInfeasibleError(
                    f"beam {m} assigned to far user {k} cannot meet the near-field QoS")
    beams = np.asarray(assignment.beam_sets, dtype=int)
    k_users, d_x = beams.shape
    eta = noise_power + eff.ff_gain.T @ nf_power
    mu = (noise_power + nf_power[beams] * eff.nf_gain[beams]) / eff.nf_gain[beams]
    bud = budget - nf_power[beams]

    ghat = np.empty((k_users, 2 * d_x))
    gcheck = np.empty((k_users, 2 * d_x))
    quad = np.empty((k_users, k_users, 2 * d_x, 2 * d_x))
    for k in range(k_users):
        gt_k = eff.ff_effective[:, k]
        for i in range(k_users):
            seg = gt_k[beams[i]]
            gh = np.concatenate((seg.real, seg.imag))
            gc = np.concatenate((-seg.imag, seg.real))
            quad[k, i] = np.outer(gh, gh) + np.outer(gc, gc)
            if i == k:
                ghat[k] = gh
                gcheck[k] = gc
    return StackedGains(beams=beams, nf_power=nf_power, eta=eta, mu=mu, bud=bud,
                        ghat=ghat, gcheck=gcheck, quad=quad,
                        n_beams=eff.nf_gain.shape[0])


@dataclass(frozen=True)
class ScaPoint:
    x: np.ndarray      # (K,) auxiliary SINR values
    fbar: np.ndarray   # (K, 2 D_x) stacked coefficients
    iteration: int = 0


def point_objective(point: ScaPoint) -> float:
    return float(np.log2(1.0 + point.x).sum())


def point_to_allocation(point: ScaPoint, gains: StackedGains) -> Allocation:
    d_x = gains.d_x
    coeff = np.zeros((gains.n_beams, gains.n_users), dtype=complex)
    for k in range(gains.n_users):
        coeff[gains.beams[k], k] = point.fbar[k, :d_x] + 1j * point.fbar[k, d_x:]
    sets = tuple(tuple(row) for row in gains.beams)
    owner = np.full(gains.n_beams, -1, dtype=int)
    for k, row in enumerate(gains.beams):
        owner[row] = k
    return Allocation(nf_power=gains.nf_power, ff_coeff=coeff,
                      assignment=Assignment(beam_sets=sets, owner=owner))


def _own_signal(point: ScaPoint, gains: StackedGains) -> np.ndarray:
    """(K,) values of |gt_k^H f_k|^2 at the point."""
    return np.einsum("ki,kij,kj->k", point.fbar, gains.quad[np.arange(gains.n_users),
                                                            np.arange(gains.n_users)],
                     point.fbar)


def _interference(point: ScaPoint, gains: StackedGains) -> np.ndarray:
    """(K,) values of sum_{i != k} |gt_k^H f_i|^2 at the point."""
    k_users = gains.n_users
    out = np.zeros(k_users)
    for k in range(k_users):
        for i in range(k_users):
            if i != k:
                out[k] += point.fbar[i] @ gains.quad[k, i] @ point.fbar[i]
    return out


def initial_point(gains: StackedGains) -> ScaPoint:
    """Feasible starting point: every assigned beam at full residual power.

    The coefficients are real square roots of the residual budgets and the
    auxiliary SINR is the largest value the original constraints allow
    there. A beam with no residual power pins its user's SINR to zero.
    """
    d_x = gains.d_x
    fbar = np.zeros((gains.n_users, 2 * d_x))
    fbar[:, :d_x] = np.sqrt(np.maximum(gains.bud, 0.0))
    point = ScaPoint(x=np.zeros(gains.n_users), fbar=fbar)
    own = _own_signal(point, gains)
    interf = _interference(point, gains)
    sic = np.min(np.maximum(gains.bud, 0.0) / gains.mu, axis=1)
    x = np.minimum(own / (gains.eta + interf), sic)
    return ScaPoint(x=x, fbar=fbar, iteration=0)


def refit_point(point: ScaPoint, gains: StackedGains) -> ScaPoint:
    """Recompute each auxiliary SINR as the largest value the coefficients allow.

    Used to carry coefficients over to a related instance (say, a larger
    power budget, which can also raise the leakage floor eta when capped
    beams exist): the result is feasible by construction as long as the
    coefficients respect the new budgets.
    """
    own = _own_signal(point, gains)
    interf = _interference(point, gains)
    d_x = gains.d_x
    sq = point.fbar[:, :d_x] ** 2 + point.fbar[:, d_x:] ** 2
    sic = np.min(sq / gains.mu, axis=1)
    x = np.minimum(own / (gains.eta + interf), sic)
    return ScaPoint(x=x, fbar=point.fbar.copy(), iteration=point.iteration)


def p4_violation(point: ScaPoint, gains: StackedGains) -> float:
    """Largest normalized violation of the original (non-linearized) constraints.

    Nonpositive means feasible. The SINR certificate is checked in its
    product form x*(eta + interference) <= |gt^H f|^2, which also covers
    x = 0 cleanly.
    """
    d_x = gains.d_x
    own = _own_signal(point, gains)
    interf = _interference(point, gains)
    v_sinr = (point.x * (gains.eta + interf) - own) / (gains.eta + interf)
    sq = point.fbar[:, :d_x] ** 2 + point.fbar[:, d_x:] ** 2
    v_sic = (point.x[:, None] * gains.mu - sq) / np.maximum(gains.bud, 1e-300)
    v_bud = (sq - gains.bud) / np.maximum(gains.bud, 1e-300)
    v_x = -point.x / max(point.x.max(), 1.0)
    return float(max(v_sinr.max(), v_sic.max(), v_bud.max(), v_x.max()))


@dataclass(frozen=True)
class LinearBounds:
    """Affine under-estimators anchored at one expansion point.

    sinr_bound(k, .) under-estimates |gt_k^H f_k|^2 / x_k; sic_bound(k, j, .)
    under-estimates |f_{m,k}|^2 on beam slot j.
    """

    expansion: ScaPoint
    active: np.ndarray        # (K,) bool, users with x > 0 at the expansion
    sinr_const: np.ndarray    # (K,)
    sinr_grad_f: np.ndarray   # (K, 2 D_x)
    sinr_grad_x: np.ndarray   # (K,)
    sic_const: np.ndarray     # (K, D_x)
    sic_grad: np.ndarray      # (K, D_x, 2) gradients over (Re, Im)

    def sinr_bound(self, k: int, fbar_k: np.ndarray, x_k: float) -> float:
        return float(self.sinr_const[k] + self.sinr_grad_f[k] @ fbar_k
                     + self.sinr_grad_x[k] * x_k)

    def sic_bound(self, k: int, j: int, re: float, im: float) -> float:
        return float(self.sic_const[k, j] + self.sic_grad[k, j, 0] * re
                     + self.sic_grad[k, j, 1] * im)


def linearize(point: ScaPoint, gains: StackedGains) -> LinearBounds:
    """First-order expansion of the two nonconvex constraint sides."""
    k_users, d_x = gains.n_users, gains.d_x
    active = point.x > 0.0
    own = _own_signal(point, gains)
    if np.any((~active) & (np.abs(point.fbar).max(axis=1) > 0)):
        raise DegenerateExpansionError(
            "expansion at x = 0 with nonzero coefficients is undefined")

    sinr_const = np.zeros(k_users)
    sinr_grad_f = np.zeros((k_users, 2 * d_x))
    sinr_grad_x = np.zeros(k_users)
    for k in range(k_users):
        if not active[k]:
            continue
        x0 = point.x[k]
        f0 = point.fbar[k]
        q0 = own[k]
        grad_f = 2.0 * (gains.quad[k, k] @ f0) / x0
        grad_x = -q0 / (x0 * x0)
        sinr_grad_f[k] = grad_f
        sinr_grad_x[k] = grad_x
        sinr_const[k] = q0 / x0 - grad_f @ f0 - grad_x * x0

    re0 = point.fbar[:, :d_x]
    im0 = point.fbar[:, d_x:]
    sq0 = re0 ** 2 + im0 ** 2
    sic_const = -sq0
    sic_grad = np.stack((2.0 * re0, 2.0 * im0), axis=2)
    return LinearBounds(expansion=point, active=active, sinr_const=sinr_const,
                        sinr_grad_f=sinr_grad_f, sinr_grad_x=sinr_grad_x,
                        sic_const=sic_const, sic_grad=sic_grad)


def _assemble_subproblem(bounds: LinearBounds, gains: StackedGains,
                         act: np.ndarray):
    """Quadratic-constraint data (Q, b, c per row) in scaled variables.

    Active user k contributes a block u_k = fbar_k / sqrt(bud) (per slot)
    and w_k = x_k / x0_k; every constraint is normalized to be O(1) near
    the start so the Newton systems stay well conditioned.
    """
    n_act = act.size
    d_x = gains.d_x
    width = 2 * d_x
    n = n_act * width + n_act
    f_scale = np.sqrt(np.maximum(gains.bud[act], 1e-300))
    f_scale = np.concatenate((f_scale, f_scale), axis=1)   # (n_act, 2 D_x)
    x_scale = bounds.expansion.x[act]

    def u_slice(a):  # noqa: E306
        return slice(a * width, (a + 1) * width)

    w_index = n_act * width + np.arange(n_act)

    qs, bs, cs = [], [], []
    # SINR certificates: eta + interference - linearized bound <= 0, / eta.
    for a, k in enumerate(act):
        q = np.zeros((n, n))
        b = np.zeros(n)
        for a2, i in enumerate(act):
            if i == k:
                continue
            s = f_scale[a2]
            q[u_slice(a2), u_slice(a2)] = (s[:, None] * gains.quad[k, i] * s[None, :]
                                           / gains.eta[k])
        b[u_slice(a)] = -bounds.sinr_grad_f[k] * f_scale[a] / gains.eta[k]
        b[w_index[a]] = -bounds.sinr_grad_x[k] * x_scale[a] / gains.eta[k]
        qs.append(q)
        bs.append(b)
        cs.append(1.0 - bounds.sinr_const[k] / gains.eta[k])
    # Decode thresholds: x*mu - linearized |f|^2 <= 0, / bud.
    for a, k in enumerate(act):
        for j in range(d_x):
            b = np.zeros(n)
            b[w_index[a]] = x_scale[a] * gains.mu[k, j] / gains.bud[k, j]
            b[a * width + j] = -bounds.sic_grad[k, j, 0] * f_scale[a, j] / gains.bud[k, j]
            b[a * width + d_x + j] = (-bounds.sic_grad[k, j, 1] * f_scale[a, d_x + j]
                                      / gains.bud[k, j])
            qs.append(np.zeros((n, n)))
            bs.append(b)
            cs.append(-bounds.sic_const[k, j] / gains.bud[k, j])
    # Per-beam budgets: |f|^2 <= bud becomes u_re^2 + u_im^2 <= 1.
    for a, k in enumerate(act):
        for j in range(d_x):
            q = np.zeros((n, n))
            q[a * width + j, a * width + j] = 1.0
            q[a * width + d_x + j, a * width + d_x + j] = 1.0
            qs.append(q)
            bs.append(np.zeros(n))
            cs.append(-1.0)
    # Floor on the auxiliary variables: w >= X_FLOOR / x0.
    for a in range(n_act):
        b = np.zeros(n)
        b[w_index[a]] = -1.0
        qs.append(np.zeros((n, n)))
        bs.append(b)
        cs.append(X_FLOOR / x_scale[a])
    return (act, f_scale, x_scale, w_index, np.array(qs), np.array(bs),
            np.array(cs))


def _strictly_feasible_start(bounds: LinearBounds, gains: StackedGains, act,
                             f_scale, x_scale, w_index, qs, bs, cs, n):
    """Shrink the expansion point until every constraint holds strictly."""
    width = 2 * gains.d_x
    exp = bounds.expansion
    for shrink in (0.97, 0.9, 0.7, 0.5, 0.2):
        v = np.zeros(n)
        for a, k in enumerate(act):
            v[a * width:(a + 1) * width] = shrink * exp.fbar[k] / f_scale[a]
        # Pick each w as a fraction of the largest value the (affine in w)
        # constraints allow at the shrunk coefficients. Each constraint row
        # involves at most one w, so the caps are independent.
        room = True
        for a in range(len(act)):
            w_cap = np.inf
            for row in range(len(cs)):
                coef = bs[row][w_index[a]]
                if coef <= 0:
                    continue
                rest = v @ qs[row] @ v + bs[row] @ v + cs[row] - coef * v[w_index[a]]
                w_cap = min(w_cap, -rest / coef)
            if not np.isfinite(w_cap) or w_cap <= 2 * X_FLOOR / x_scale[a]:
                room = False
                break
            v[w_index[a]] = 0.9 * w_cap
        if not room:
            continue
        vals = np.einsum("mij,i,j->m", qs, v, v) + bs @ v + cs
        if np.all(vals < 0):
            return v
    raise RuntimeError("could not construct a strictly feasible interior start")


def solve_subproblem(bounds: LinearBounds, gains: StackedGains,
                     x_floor: float = X_FLOOR) -> ScaPoint:
    """Maximize sum log2(1 + x) under the linearized constraints.

    Log-barrier interior scheme with damped Newton steps and backtracking
    line search; the barrier parameter grows by 10x per stage until the
    bound n_constraints / t certifies the target gap. The returned point
    never scores below the expansion point (which is always feasible here).
    """
    exp = bounds.expansion
    # Users already at (or numerically below) the floor cannot be expanded
    # meaningfully; they are frozen to zero for this solve.
    act_mask = bounds.active & (exp.x > X_FREEZE)
    if not np.any(act_mask):
        solved = ScaPoint(x=np.zeros_like(exp.x), fbar=np.zeros_like(exp.fbar),
                          iteration=exp.iteration + 1)
        if point_objective(solved) < point_objective(exp):
            return ScaPoint(x=exp.x.copy(), fbar=exp.fbar.copy(),
                            iteration=exp.iteration + 1)
        return solved

    act = np.flatnonzero(act_mask)
    act, f_scale, x_scale, w_index, qs, bs, cs = _assemble_subproblem(
        bounds, gains, act)
    n = bs.shape[1]
    m = bs.shape[0]
    v = _strictly_feasible_start(bounds, gains, act, f_scale, x_scale, w_index,
                                 qs, bs, cs, n)

    def constraint_vals(vv):
        return np.einsum("mij,i,j->m", qs, vv, vv) + bs @ vv + cs

    def barrier_obj(vv, t):
        g = constraint_vals(vv)
        if np.any(g >= 0):
            return np.inf
        w = vv[w_index]
        return -t * np.log1p(x_scale * w).sum() / LN2 - np.log(-g).sum()

    t = 1.0
    while True:
        for _ in range(MAX_NEWTON):
            g = constraint_vals(v)
            lin = 2.0 * np.einsum("mij,j->mi", qs, v) + bs   # (m, n) gradients
            inv_neg = 1.0 / (-g)
            grad = lin.T @ inv_neg
            w = v[w_index]
            grad[w_index] += -t * x_scale / ((1.0 + x_scale * w) * LN2)
            hess = (np.einsum("mi,mj,m->ij", lin, lin, inv_neg ** 2)
                    + 2.0 * np.einsum("mij,m->ij", qs, inv_neg))
            hess[w_index, w_index] += t * x_scale ** 2 / ((1.0 + x_scale * w) ** 2 * LN2)
            hess = 0.5 * (hess + hess.T)
            ridge = 0.0
            while True:
                try:
                    step = np.linalg.solve(
                        hess + ridge * np.eye(n) if ridge else hess, -grad)
                    break
                except np.linalg.LinAlgError:
                    ridge = max(ridge * 10.0, 1e-12 * max(np.trace(hess), 1.0))
            decrement = float(-grad @ step)
            if decrement <= 2.0 * NEWTON_TOL:
                break
            base = barrier_obj(v, t)
            alpha = 1.0
            ok = False
            for _ in range(60):
                cand = v + alpha * step
                val = barrier_obj(cand, t)
                if val < base - 1e-4 * alpha * decrement:
                    v = cand
                    ok = True
                    break
                alpha *= 0.5
            if not ok:
                break  # no further progress at this barrier stage
        if m / t < BARRIER_TARGET:
            break
        t *= BARRIER_GROWTH

    width = 2 * gains.d_x
    fbar = np.zeros_like(exp.fbar)
    x = np.zeros_like(exp.x)
    for a, k in enumerate(act):
        fbar[k] = v[a * width:(a + 1) * width] * f_scale[a]
        x[k] = v[w_index[a]] * x_scale[a]
        # A rate squeezed onto the floor means the solver shut this user
        # off; make that exact so the next expansion stays well posed.
        if x[k] <= X_FREEZE:
            x[k] = 0.0
            fbar[k] = 0.0
    solved = ScaPoint(x=x, fbar=fbar, iteration=exp.iteration + 1)
    if point_objective(solved) < point_objective(exp):
        log.debug("subproblem made no progress; keeping the expansion point")
        return ScaPoint(x=exp.x.copy(), fbar=exp.fbar.copy(),
                        iteration=exp.iteration + 1)
    return solved


@dataclass(frozen=True)
class ScaResult:
    allocation: Allocation
    point: ScaPoint
    trace: list[float]
    points: list[ScaPoint]   # accepted iterates, initial point first
    iterations: int
    converged: bool


def sca_loop(eff: EffectiveChannels, assignment: Assignment, noise_power: float,
             budget: float, target_rate: float, init: ScaPoint | None = None,
             rate_tol: float = 1e-4, max_iter: int = 50) -> ScaResult:
    """Iterate linearization and subproblem solves from a feasible point.

    Stops once an iteration improves the objective by less than rate_tol
    bits. The trace holds the objective at the initial point and after
    every accepted iterate, and is nondecreasing by construction.
    """
    gains = stack_gains(eff, assignment, noise_power, budget, target_rate)
    point = initial_point(gains) if init is None else init
    if np.any(point.x <= X_FREEZE):
        # A user pinned to (numerically) zero rate may as well not
        # transmit; this keeps the expansion well defined and only helps
        # the other users.
        keep = point.x > X_FREEZE
        point = ScaPoint(x=np.where(keep, point.x, 0.0),
                         fbar=np.where(keep[:, None], point.fbar, 0.0),
                         iteration=point.iteration)
    trace = [point_objective(point)]
    points = [point]
    converged = False
    for _ in range(max_iter):
        if not np.any(point.x > 0):
            converged = True
            break
        bounds = linearize(point, gains)
        new_point = solve_subproblem(bounds, gains)
        trace.append(point_objective(new_point))
        points.append(new_point)
        gain = trace[-1] - trace[-2]
        point = new_point
        if gain < rate_tol:
            converged = True
            break
    if not converged:
        log.warning("SCA stopped at the iteration cap (%d)", max_iter)
    return ScaResult(allocation=point_to_allocation(point, gains), point=point,
                     trace=trace, points=points, iterations=point.iteration,
                     converged=converged)
