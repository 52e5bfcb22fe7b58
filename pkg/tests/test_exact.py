import numpy as np
import pytest

from nfnoma.exact import (bb_solve, check_feasible, initial_box, solve_single_ff,
                          solve_single_ff_bisection)
from nfnoma.precoding import EffectiveChannels
from nfnoma.rates import QosInfeasibleError, evaluate, qos_power_vector
from nfnoma.scheduling import Assignment
from conftest import random_instance

LOG2_1P5 = 0.5849625007211562  # log2(1.5), frozen


def two_beam_eff(h=(1.0, 1.0), g=(1.0, 1.0)):
    gt = np.sqrt(np.asarray(g, dtype=float)).astype(complex)[:, None]
    return EffectiveChannels(nf_gain=np.asarray(h, dtype=float),
                             ff_gain=np.abs(gt) ** 2, ff_effective=gt)


def grid_oracle_single(eff, beams, noise, budget, target, points=200):
    """Exhaustive search over per-beam powers z for the one-user problem."""
    nf_power, _ = qos_power_vector(eff, noise, target, budget)
    s = np.asarray(beams)
    g = eff.ff_gain[:, 0]
    h = eff.nf_gain
    eta0 = noise + float(nf_power @ g)
    eta_m = noise + nf_power[s] * h[s]
    res = budget - nf_power[s]
    axes = [np.linspace(0.0, r, points) for r in res]
    mesh = np.meshgrid(*axes, indexing="ij")
    coherent = sum(np.sqrt(g[m] * z) for m, z in zip(s, mesh)) ** 2 / eta0
    sic = np.minimum.reduce([h[m] * z / em for m, z, em in zip(s, mesh, eta_m)])
    y = float(np.minimum(coherent, sic).max())
    return np.log2(1.0 + y)


def test_single_ff_two_beam_hand_example():
    # g = h = (1, 1), sigma^2 = 1, P = 2, target 1 bit: P* = 1, eta_m = 2,
    # eta_0 = 3; candidates are 1/2 (per-beam decode) and 4/3 (coherent sum).
    eff = two_beam_eff()
    sol = solve_single_ff(eff, (0, 1), noise_power=1.0, budget=2.0, target_rate=1.0)
    assert sol.sinr == pytest.approx(0.5)
    assert sol.rate == pytest.approx(LOG2_1P5)
    assert sol.beam_power == pytest.approx(np.array([1.0, 1.0]))
    oracle = grid_oracle_single(eff, (0, 1), 1.0, 2.0, 1.0)
    assert sol.rate == pytest.approx(oracle, rel=1e-3)


def test_single_ff_one_beam_hand_example():
    eff = EffectiveChannels(nf_gain=np.array([1.0]), ff_gain=np.array([[1.0]]),
                            ff_effective=np.array([[1.0 + 0j]]))
    sol = solve_single_ff(eff, (0,), noise_power=1.0, budget=2.0, target_rate=1.0)
    assert sol.sinr == pytest.approx(0.5)
    assert sol.rate == pytest.approx(LOG2_1P5)


def test_single_ff_no_residual_power():
    # Budget exactly equals the QoS power: nothing left for the far user.
    eff = EffectiveChannels(nf_gain=np.array([1.0]), ff_gain=np.array([[1.0]]),
                            ff_effective=np.array([[1.0 + 0j]]))
    sol = solve_single_ff(eff, (0,), noise_power=1.0, budget=1.0, target_rate=1.0)
    assert sol.sinr == 0.0 and sol.rate == 0.0


def test_single_ff_rejects_empty_or_infeasible():
    eff = two_beam_eff()
    with pytest.raises(ValueError):
        solve_single_ff(eff, (), 1.0, 2.0, 1.0)
    with pytest.raises(QosInfeasibleError):
        solve_single_ff(eff, (0, 1), noise_power=1.0, budget=0.5, target_rate=1.0)


def test_single_ff_phase_recovery_coherent(rng):
    # Random complex beam-space channels: restored phases must combine
    # coherently, |gt^H f| = sum sqrt(g_m z_m).
    for trial in range(20):
        m = 4
        gt = (rng.standard_normal(m) + 1j * rng.standard_normal(m))[:, None]
        eff = EffectiveChannels(nf_gain=rng.uniform(0.5, 2.0, m),
                                ff_gain=np.abs(gt) ** 2, ff_effective=gt)
        sol = solve_single_ff(eff, (0, 1, 2), noise_power=0.1, budget=3.0,
                              target_rate=0.2)
        lhs = abs(np.vdot(gt[:, 0], sol.coeff))
        rhs = float(np.sqrt(eff.ff_gain[:3, 0] * sol.beam_power[:3]).sum())
        assert lhs == pytest.approx(rhs, rel=1e-10)


def test_single_ff_matches_bisection_and_grid(rng):
    for trial in range(10):
        m = 3
        gt = (rng.standard_normal(m) + 1j * rng.standard_normal(m))[:, None]
        eff = EffectiveChannels(nf_gain=rng.uniform(0.5, 2.0, m),
                                ff_gain=np.abs(gt) ** 2, ff_effective=gt)
        beams = (0, 1)
        args = (eff, beams, 0.3, 4.0, 0.5)
        sol = solve_single_ff(*args)
        assert solve_single_ff_bisection(*args) == pytest.approx(sol.rate, abs=1e-9)
        assert sol.rate == pytest.approx(grid_oracle_single(*args), rel=1e-3)


def test_single_ff_on_physical_instance():
    inst = random_instance(seed=21, k=1, dx=2)
    s = inst.system
    args = (inst.eff_est, inst.assignment.beam_sets[0], s.noise_power,
            s.beam_power_budget, s.target_rate)
    sol = solve_single_ff(*args)
    assert sol.rate == pytest.approx(grid_oracle_single(*args), rel=1e-3)
    assert sol.rate == pytest.approx(solve_single_ff_bisection(*args), abs=1e-9)


# --- feasibility fixed point ---------------------------------------------

SYM = dict(own_gain=np.array([1.0, 1.0]), cross_gain=np.array([[0.0, 0.2],
                                                               [0.2, 0.0]]),
           eta=np.array([1.0, 1.0]), mu=np.array([0.5, 0.5]),
           budgets=np.array([2.0, 2.0]))
X_STAR = 10.0 / 7.0  # symmetric boundary: q = x/(1 - 0.2 x) hits the budget


def test_check_feasible_zero_targets():
    ok, q = check_feasible(np.zeros(2), **SYM)
    assert ok and q == pytest.approx(np.zeros(2))


def test_check_feasible_decoupled():
    ok, q = check_feasible(np.array([1.0, 3.0]), own_gain=np.array([1.0, 1.0]),
                           cross_gain=np.zeros((2, 2)), eta=np.array([1.0, 1.0]),
                           mu=np.array([0.5, 0.5]), budgets=np.array([2.0, 4.0]))
    assert ok
    assert q == pytest.approx([1.0, 3.0])  # max(x*mu, x*eta/own) = x here
    ok2, _ = check_feasible(np.array([1.0, 5.0]), own_gain=np.array([1.0, 1.0]),
                            cross_gain=np.zeros((2, 2)), eta=np.array([1.0, 1.0]),
                            mu=np.array([0.5, 0.5]), budgets=np.array([2.0, 4.0]))
    assert not ok2


def test_check_feasible_symmetric_boundary():
    ok_in, q = check_feasible(np.full(2, X_STAR * (1 - 1e-6)), **SYM)
    assert ok_in
    assert q == pytest.approx(np.full(2, 2.0), rel=1e-4)
    ok_out, _ = check_feasible(np.full(2, X_STAR * (1 + 1e-6)), **SYM)
    assert not ok_out


def test_check_feasible_monotone(rng):
    for _ in range(50):
        own = rng.uniform(0.5, 2.0, 3)
        cross = rng.uniform(0.0, 0.3, (3, 3))
        np.fill_diagonal(cross, 0.0)
        kw = dict(own_gain=own, cross_gain=cross, eta=rng.uniform(0.5, 1.5, 3),
                  mu=rng.uniform(0.1, 0.5, 3), budgets=rng.uniform(1.0, 3.0, 3))
        x_hi = rng.uniform(0.0, 2.0, 3)
        x_lo = x_hi * rng.uniform(0.0, 1.0, 3)
        hi_ok, _ = check_feasible(x_hi, **kw)
        lo_ok, _ = check_feasible(x_lo, **kw)
        if hi_ok:
            assert lo_ok


# --- branch and bound ------------------------------------------------------

def synthetic_two_user():
    gt = np.array([[1.0, np.sqrt(0.2)], [np.sqrt(0.2), 1.0]], dtype=complex)
    eff = EffectiveChannels(nf_gain=np.array([2.0, 2.0]), ff_gain=np.abs(gt) ** 2,
                            ff_effective=gt)
    assignment = Assignment(beam_sets=((0,), (1,)), owner=np.array([0, 1]))
    # sigma^2 = 1, target 0 (so QoS power 0), budget 2: eta = 1, mu = 0.5.
    return eff, assignment, 1.0, 2.0, 0.0


def test_initial_box_decoupled_terms():
    eff, assignment, noise, budget, target = synthetic_two_user()
    box = initial_box(eff, assignment, noise, budget, target)
    assert box.x_min == pytest.approx(np.zeros(2))
    # min(a_kk * bud / eta, bud / mu) = min(2, 4) = 2 per user.
    assert box.x_max == pytest.approx(np.full(2, 2.0))


def test_initial_box_zero_residual():
    eff = EffectiveChannels(nf_gain=np.array([1.0]), ff_gain=np.array([[1.0]]),
                            ff_effective=np.array([[1.0 + 0j]]))
    assignment = Assignment(beam_sets=((0,),), owner=np.array([0]))
    box = initial_box(eff, assignment, noise_power=1.0, budget=1.0, target_rate=1.0)
    assert box.x_max == pytest.approx(np.zeros(1))


def test_initial_box_requires_single_beam():
    inst = random_instance(seed=23, k=1, dx=2)
    with pytest.raises(ValueError):
        initial_box(inst.eff_est, inst.assignment, inst.system.noise_power,
                    inst.system.beam_power_budget, inst.system.target_rate)


def grid_oracle_two_user(eff, assignment, noise, budget, target, points=1000):
    """Vectorized replica of the feasibility fixed point over an x grid."""
    from nfnoma.exact import _problem_gains, _single_beam_gains
    nf_power, residual, eta, mu = _problem_gains(eff, assignment, noise, budget,
                                                 target)
    beams, a = _single_beam_gains(eff, assignment)
    own = np.diag(a).copy()
    cross = a.copy()
    np.fill_diagonal(cross, 0.0)
    buds = residual[beams]
    mub = mu[beams]
    x_hi = np.minimum(own * buds / eta, buds / mub)
    ax = [np.linspace(0, v, points) for v in x_hi]
    mesh = np.meshgrid(*ax, indexing="ij")
    x = np.stack([m.ravel() for m in mesh], axis=1)
    q = x * mub[None, :]
    alive = np.ones(x.shape[0], dtype=bool)
    feasible = np.zeros(x.shape[0], dtype=bool)
    for _ in range(5000):
        if not alive.any():
            break
        qa = q[alive]
        xa = x[alive]
        q_new = np.maximum(xa * mub[None, :],
                           xa * (eta[None, :] + qa @ cross.T) / own[None, :])
        over = (q_new > buds[None, :] * (1 + 1e-9)).any(axis=1)
        conv = (np.abs(q_new - qa) <= 1e-12 * np.maximum(qa, 1e-300)).all(axis=1)
        idx = np.flatnonzero(alive)
        feasible[idx[conv & ~over]] = True
        q[alive] = q_new
        alive[idx[over | conv]] = False
    obj = np.where(feasible, np.log2(1 + x).sum(axis=1), -np.inf)
    best = int(np.argmax(obj))
    # one-step-per-axis objective drop at the reported argmax bounds the
    # discretization error
    steps = np.array([axis[1] - axis[0] if len(axis) > 1 else 0.0 for axis in ax])
    slack = (np.log2(1 + x[best]) - np.log2(1 + np.maximum(x[best] - steps, 0))).sum()
    return obj[best], slack, (x, feasible)


def test_bb_matches_closed_form_single_user():
    inst = random_instance(seed=29, k=1, dx=1)
    s = inst.system
    res = bb_solve(inst.eff_est, inst.assignment, s.noise_power,
                   s.beam_power_budget, s.target_rate, tol=1e-3)
    sol = solve_single_ff(inst.eff_est, inst.assignment.beam_sets[0],
                          s.noise_power, s.beam_power_budget, s.target_rate)
    assert res.converged
    assert abs(res.rate - sol.rate) <= 1e-3


def test_bb_two_user_grid_oracle():
    eff, assignment, noise, budget, target = synthetic_two_user()
    res = bb_solve(eff, assignment, noise, budget, target, tol=1e-4)
    oracle, slack, (xgrid, feas) = grid_oracle_two_user(
        eff, assignment, noise, budget, target, points=1000)
    assert res.converged
    assert -1e-4 - 1e-9 <= res.rate - oracle <= slack + 1e-9
    # analytic symmetric optimum: both budgets tight at x = 10/7
    assert res.rate == pytest.approx(2 * np.log2(1 + X_STAR), abs=2e-4)
    # grid spot-check: batch verdicts agree with check_feasible
    rng = np.random.default_rng(0)
    idx = rng.choice(len(xgrid), 100, replace=False)
    from nfnoma.exact import _problem_gains, _single_beam_gains
    nf_power, residual, eta, mu = _problem_gains(eff, assignment, noise, budget,
                                                 target)
    beams, a = _single_beam_gains(eff, assignment)
    own = np.diag(a).copy()
    cross = a.copy()
    np.fill_diagonal(cross, 0.0)
    for i in idx:
        ok, _ = check_feasible(xgrid[i], own, cross, eta, mu[beams],
                               residual[beams])
        assert ok == bool(feas[i])


def test_bb_bounds_sandwich_and_monotone():
    eff, assignment, noise, budget, target = synthetic_two_user()
    res = bb_solve(eff, assignment, noise, budget, target, tol=1e-3)
    uppers = [u for u, _ in res.trace]
    lowers = [l for _, l in res.trace]
    assert all(u >= l for u, l in res.trace)
    assert all(b <= a + 1e-12 for a, b in zip(uppers, uppers[1:]))
    assert all(b >= a - 1e-12 for a, b in zip(lowers, lowers[1:]))
    true_opt = 2 * np.log2(1 + X_STAR)
    assert all(u >= true_opt - 1e-9 for u in uppers)
    assert all(l <= true_opt + 1e-9 for l in lowers)


def test_bb_allocation_respects_constraints():
    inst = random_instance(seed=31, k=2, dx=1)
    s = inst.system
    res = bb_solve(inst.eff_est, inst.assignment, s.noise_power,
                   s.beam_power_budget, s.target_rate, tol=1e-3)
    alloc = res.allocation
    # per-beam budget
    total = alloc.nf_power + (np.abs(alloc.ff_coeff) ** 2).sum(axis=1)
    assert np.all(total <= s.beam_power_budget + 1e-9)
    rep = evaluate(alloc, inst.eff_est, s.noise_power, s.target_rate)
    # QoS holds wherever it is attainable; capped beams are flagged, carry
    # the full budget, and never host far-field traffic.
    _, feasible = qos_power_vector(inst.eff_est, s.noise_power, s.target_rate,
                                   s.beam_power_budget)
    assert rep.qos_ok[feasible].all()
    for k, beams in enumerate(alloc.assignment.beam_sets):
        for m in beams:
            assert feasible[m]
    assert rep.objective >= res.rate - 1e-9


def test_bb_selection_rules_agree():
    eff, assignment, noise, budget, target = synthetic_two_user()
    a = bb_solve(eff, assignment, noise, budget, target, tol=1e-3)
    b = bb_solve(eff, assignment, noise, budget, target, tol=1e-3,
                 selection="min-lower")
    assert abs(a.rate - b.rate) <= 2e-3
    with pytest.raises(ValueError):
        bb_solve(eff, assignment, noise, budget, target, selection="bogus")


def test_bb_box_cap_returns_best_so_far():
    eff, assignment, noise, budget, target = synthetic_two_user()
    res = bb_solve(eff, assignment, noise, budget, target, tol=1e-9, max_boxes=50)
    assert not res.converged
    assert res.gap > 0
    assert res.rate <= 2 * np.log2(1 + X_STAR) + 1e-9
