"""Experiment drivers, seeded Monte Carlo plumbing, and CSV emission.

Three studies are supported: random user drops swept over transmit power,
the deterministic grid/arc layout swept over the user or beam count with
exact-solver comparison, and a CSI-quality sweep that optimizes against
estimated channels and scores against the true ones.

Output is CSV with '#'-prefixed metadata lines. Every value written is a
pure function of (config, seed); wall-clock timings are collected in the
row objects but only written when explicitly requested, since they would
break byte-level reproducibility.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable

import numpy as np

from .channels import ChannelSet, build_channel_set, path_loss
from .exact import bb_solve, solve_single_ff
from .geometry import (SystemConfig, check_field_regions, deterministic_scenario,
                       drop_half_ring, rayleigh_distance)
from .precoding import (EffectiveChannels, IllConditionedChannels, Precoder,
                        build_precoder, effective_channels)
from .rates import (Allocation, QosInfeasibleError, evaluate, qos_power_vector,
                    validate_allocation)
from .scheduling import Assignment, greedy_assign
from .sca import (initial_point, point_objective, point_to_allocation,
                  refit_point, sca_loop, stack_gains)

log = logging.getLogger(__name__)

VERSION = "0.1.0"
SCENARIOS = ("random-drop", "deterministic", "csi-sweep")
METHODS = ("greedy", "sca", "closed-form", "bb")
MAX_REDRAWS = 100

CSV_FIELDS = ("trial", "seed", "scenario", "n", "m", "k", "dx", "p_dbm", "rho",
              "method", "sum_rate", "per_user_rates", "qos_violations",
              "solver_iterations", "wall_time_ms", "gap_to_exact")


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


def watt_to_dbm(watt: float) -> float:
    return 10.0 * np.log10(watt * 1000.0)


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment run. All powers at this boundary are in dBm."""

    scenario: str = "random-drop"
    n: int = 64
    m: int = 36
    k: int = 4
    dx: int = 2
    fc_hz: float = 28e9
    noise_dbm: float = -80.0
    target_rate: float = 0.1
    rho: float = 1.0
    p_dbm: tuple[float, ...] = (10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0)
    trials: int = 100
    seed: int = 1
    methods: tuple[str, ...] = ("greedy", "sca")
    rho_values: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9, 1.0)
    sweep: str = "dx"                    # deterministic scenario: "dx" or "k"
    sweep_values: tuple[int, ...] = (1, 2, 3, 4)
    bb_tol: float = 1e-3
    record_timing: bool = False

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.sweep not in ("k", "dx"):
            raise ValueError(f"sweep must be 'k' or 'dx', got {self.sweep!r}")
        if not self.p_dbm:
            raise ValueError("p_dbm must list at least one power")
        for meth in self.methods:
            if meth not in METHODS:
                raise ValueError(f"unknown method {meth!r}")
        if "closed-form" in self.methods and self.scenario == "random-drop" and self.k != 1:
            raise ValueError("closed-form needs k=1")
        if "bb" in self.methods and self.scenario == "random-drop" and self.dx != 1:
            raise ValueError("bb needs dx=1")

    def system(self, n: int | None = None, k: int | None = None,
               dx: int | None = None, budget_dbm: float | None = None,
               rho: float | None = None) -> SystemConfig:
        return SystemConfig(
            n_antennas=self.n if n is None else n,
            n_near=self.m,
            n_far=self.k if k is None else k,
            beams_per_far=self.dx if dx is None else dx,
            carrier_hz=self.fc_hz,
            noise_power=dbm_to_watt(self.noise_dbm),
            beam_power_budget=dbm_to_watt(self.p_dbm[0] if budget_dbm is None
                                          else budget_dbm),
            target_rate=self.target_rate,
            csi_quality=self.rho if rho is None else rho,
        )

    def digest(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True, default=list)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def config_from_dict(data: dict) -> ExperimentConfig:
    known = {f.name for f in ExperimentConfig.__dataclass_fields__.values()}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    data = dict(data)
    for key in ("p_dbm", "methods", "rho_values", "sweep_values"):
        if key in data:
            data[key] = tuple(data[key])
    return ExperimentConfig(**data)


@dataclass
class ResultRow:
    trial: int
    seed: int
    scenario: str
    n: int
    m: int
    k: int
    dx: int
    p_dbm: float
    rho: float
    method: str
    sum_rate: float
    per_user_rates: tuple[float, ...]
    qos_violations: int
    solver_iterations: int
    wall_time_ms: float | None = None
    gap_to_exact: float | None = None


@dataclass(frozen=True)
class Instance:
    """One fully prepared problem: channels, precoder, gains, beam map."""

    system: SystemConfig
    channels: ChannelSet
    precoder: Precoder
    eff_est: EffectiveChannels
    eff_true: EffectiveChannels
    assignment: Assignment


def _trial_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([seed, *key])


def build_instance(system: SystemConfig, near: np.ndarray, far: np.ndarray,
                   rng: np.random.Generator | None = None,
                   error_std: np.ndarray | None = None,
                   qos_budget: float | None = None) -> Instance:
    """Channels, ZF precoder, effective gains, and the greedy beam map.

    error_std, if given, is a pre-drawn standard complex Gaussian (N, K)
    matrix so that several CSI qualities can share one error realization.
    Beams whose near user cannot reach the target rate within qos_budget
    (default: the system budget) are kept away from the scheduler; if too
    few beams remain, QosInfeasibleError is raised.
    """
    lam = system.wavelength
    check_field_regions(near, far, system.n_antennas, system.spacing, lam)
    if error_std is None or system.csi_quality == 1.0:
        channels = build_channel_set(near, far, system.ula, lam,
                                     system.csi_quality, rng)
    else:
        base = build_channel_set(near, far, system.ula, lam, 1.0, None)
        rho = system.csi_quality
        alphas = np.array([path_loss(p, system.ula.center, system.carrier_hz)
                           for p in far])
        est = rho * base.far_true + np.sqrt(1.0 - rho) * error_std * alphas[None, :]
        channels = ChannelSet(base.near, base.far_true, est,
                              base.near_positions, base.far_positions)
    precoder = build_precoder(channels.near)
    eff_est = effective_channels(precoder, channels.near, channels.far_estimated)
    if system.csi_quality == 1.0:
        eff_true = eff_est
    else:
        eff_true = effective_channels(precoder, channels.near, channels.far_true)
    budget = system.beam_power_budget if qos_budget is None else qos_budget
    _, feasible = qos_power_vector(eff_est, system.noise_power,
                                   system.target_rate, budget)
    needed = system.n_far * system.beams_per_far
    if int(feasible.sum()) < needed:
        raise QosInfeasibleError(
            f"only {int(feasible.sum())} of {feasible.size} beams can meet the "
            f"near-field QoS, need {needed}")
    assignment = greedy_assign(eff_est, system.n_far, system.beams_per_far,
                               allowed=feasible)
    return Instance(system=system, channels=channels, precoder=precoder,
                    eff_est=eff_est, eff_true=eff_true, assignment=assignment)


def draw_random_instance(cfg: ExperimentConfig, trial: int, budget_dbm: float,
                         rho: float | None = None, n: int | None = None,
                         ) -> tuple[Instance, np.ndarray, int]:
    """Random half-ring drop with redraw on degenerate geometry.

    Near users fall between 5 m and the 64-element Rayleigh distance; far
    users in a 10 m band beyond the 128-element Rayleigh distance. Returns
    the instance, the shared CSI error draw, and the redraw count.
    """
    system = cfg.system(budget_dbm=budget_dbm, rho=rho, n=n)
    lam, d = system.wavelength, system.spacing
    near_outer = rayleigh_distance(64, d, lam)
    far_inner = rayleigh_distance(128, d, lam)
    redraws = 0
    for attempt in range(MAX_REDRAWS):
        rng = _trial_rng(cfg.seed, trial, attempt)
        near = drop_half_ring(rng, system.n_near, 5.0, near_outer)
        far = drop_half_ring(rng, system.n_far, far_inner, far_inner + 10.0)
        error_std = (rng.standard_normal((system.n_antennas, system.n_far))
                     + 1j * rng.standard_normal((system.n_antennas, system.n_far))
                     ) / np.sqrt(2.0)
        try:
            inst = build_instance(system, near, far, error_std=error_std)
            return inst, error_std, redraws
        except (IllConditionedChannels, QosInfeasibleError) as exc:
            redraws += 1
            log.warning("trial %d attempt %d redrawn: %s", trial, attempt, exc)
    raise RuntimeError(f"trial {trial}: no usable drop after {MAX_REDRAWS} attempts")


@dataclass
class MethodOutcome:
    allocation: Allocation
    iterations: int
    sca_point: object = None
    exact_rate: float | None = None


def run_method(method: str, inst: Instance, warm_point=None) -> MethodOutcome:
    sys_ = inst.system
    args = (inst.eff_est, inst.assignment, sys_.noise_power,
            sys_.beam_power_budget, sys_.target_rate)
    if method == "greedy":
        gains = stack_gains(*args)
        point = initial_point(gains)
        return MethodOutcome(point_to_allocation(point, gains), 0)
    if method == "sca":
        init = None
        if warm_point is not None:
            # Coefficients from a smaller budget stay inside the larger
            # one, but the auxiliary SINRs must be refit: capped beams
            # radiate the full budget, so the leakage floor moved too.
            gains = stack_gains(*args)
            warm = refit_point(warm_point, gains)
            greedy_pt = initial_point(gains)
            init = (warm if point_objective(warm) > point_objective(greedy_pt)
                    else greedy_pt)
        res = sca_loop(*args, init=init)
        return MethodOutcome(res.allocation, res.iterations, sca_point=res.point)
    if method == "closed-form":
        if sys_.n_far != 1:
            raise ValueError("closed-form solver needs exactly one far-field user")
        sol = solve_single_ff(inst.eff_est, inst.assignment.beam_sets[0],
                              sys_.noise_power, sys_.beam_power_budget,
                              sys_.target_rate)
        nf_power, _ = qos_power_vector(inst.eff_est, sys_.noise_power,
                                       sys_.target_rate, sys_.beam_power_budget)
        alloc = Allocation(nf_power=nf_power, ff_coeff=sol.coeff[:, None],
                           assignment=inst.assignment)
        return MethodOutcome(alloc, 0, exact_rate=sol.rate)
    if method == "bb":
        res = bb_solve(inst.eff_est, inst.assignment, sys_.noise_power,
                       sys_.beam_power_budget, sys_.target_rate)
        return MethodOutcome(res.allocation, res.iterations, exact_rate=res.rate)
    raise ValueError(f"unknown method {method!r}")


def _score_row(cfg: ExperimentConfig, inst: Instance, method: str, outcome,
               trial: int, p_dbm: float, rho: float, elapsed_ms: float,
               n: int | None = None, k: int | None = None,
               dx: int | None = None) -> ResultRow:
    sys_ = inst.system
    validate_allocation(outcome.allocation, inst.eff_true, sys_.noise_power,
                        sys_.beam_power_budget, sys_.target_rate)
    report = evaluate(outcome.allocation, inst.eff_true, sys_.noise_power,
                      sys_.target_rate)
    return ResultRow(
        trial=trial, seed=cfg.seed, scenario=cfg.scenario,
        n=sys_.n_antennas if n is None else n, m=sys_.n_near,
        k=sys_.n_far if k is None else k,
        dx=sys_.beams_per_far if dx is None else dx,
        p_dbm=p_dbm, rho=rho, method=method,
        sum_rate=report.objective,
        per_user_rates=tuple(float(r) for r in report.per_user),
        qos_violations=int((~report.qos_ok).sum()),
        solver_iterations=outcome.iterations,
        wall_time_ms=elapsed_ms,
    )


def run_random_drop(cfg: ExperimentConfig) -> tuple[list[ResultRow], int]:
    """Per trial and power point, run every requested method on one drop.

    One drop serves the whole power sweep (the budget touches neither the
    channels nor the beam map). The drop is validated at the smallest
    budget, which is the most restrictive for the near-field QoS. The SCA
    solver is warm-started along the sweep (in list order) with the
    previous solution, which can only help since a larger budget keeps
    earlier points feasible.
    """
    rows: list[ResultRow] = []
    total_redraws = 0
    for trial in range(cfg.trials):
        inst0, _, redraws = draw_random_instance(cfg, trial, min(cfg.p_dbm))
        total_redraws += redraws
        warm = None
        for p_dbm in cfg.p_dbm:
            inst = replace(inst0, system=cfg.system(budget_dbm=p_dbm))
            for method in cfg.methods:
                start = time.perf_counter()
                outcome = run_method(method, inst,
                                     warm_point=warm if method == "sca" else None)
                elapsed = (time.perf_counter() - start) * 1e3
                if method == "sca":
                    warm = outcome.sca_point
                rows.append(_score_row(cfg, inst, method, outcome, trial, p_dbm,
                                       cfg.rho, elapsed))
    return rows, total_redraws


def run_deterministic(cfg: ExperimentConfig) -> tuple[list[ResultRow], int]:
    """Grid/arc layout swept over k or dx, with the matching exact solver."""
    rows: list[ResultRow] = []
    p_dbm = cfg.p_dbm[0]
    for value in cfg.sweep_values:
        k = value if cfg.sweep == "k" else cfg.k
        dx = value if cfg.sweep == "dx" else cfg.dx
        system = cfg.system(k=k, dx=dx, budget_dbm=p_dbm, rho=1.0)
        near, far = deterministic_scenario(system.n_near, system.n_far)
        inst = build_instance(system, near, far)
        methods = list(cfg.methods)
        exact_rate = None
        sweep_rows = []
        for method in methods:
            start = time.perf_counter()
            outcome = run_method(method, inst)
            elapsed = (time.perf_counter() - start) * 1e3
            row = _score_row(cfg, inst, method, outcome, 0, p_dbm, 1.0,
                             elapsed, k=k, dx=dx)
            if method in ("closed-form", "bb"):
                exact_rate = row.sum_rate
            sweep_rows.append(row)
        if exact_rate is not None:
            for row in sweep_rows:
                if row.method not in ("closed-form", "bb"):
                    row.gap_to_exact = exact_rate - row.sum_rate
        rows.extend(sweep_rows)
    return rows, 0


def run_csi_sweep(cfg: ExperimentConfig) -> tuple[list[ResultRow], int]:
    """Optimize with estimated channels, score with the true ones.

    Each trial draws one geometry and one CSI error realization shared by
    all quality levels, so the sweep is a paired comparison.
    """
    rows: list[ResultRow] = []
    total_redraws = 0
    p_dbm = cfg.p_dbm[0]
    for trial in range(cfg.trials):
        # Draw geometry and the error at full quality first so all rho
        # values see the same realization. The QoS mask is rho-independent
        # (near-field CSI is perfect), so rebuilding per rho cannot fail.
        base_inst, error_std, redraws = draw_random_instance(
            cfg, trial, p_dbm, rho=1.0)
        total_redraws += redraws
        for rho in cfg.rho_values:
            if rho == 1.0:
                inst = base_inst
            else:
                system = cfg.system(budget_dbm=p_dbm, rho=rho)
                inst = build_instance(system, base_inst.channels.near_positions,
                                      base_inst.channels.far_positions,
                                      error_std=error_std)
            for method in cfg.methods:
                start = time.perf_counter()
                outcome = run_method(method, inst)
                elapsed = (time.perf_counter() - start) * 1e3
                rows.append(_score_row(cfg, inst, method, outcome, trial, p_dbm,
                                       rho, elapsed))
    return rows, total_redraws


def run_experiment(cfg: ExperimentConfig) -> tuple[list[ResultRow], int]:
    driver = {"random-drop": run_random_drop,
              "deterministic": run_deterministic,
              "csi-sweep": run_csi_sweep}[cfg.scenario]
    return driver(cfg)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def write_csv(out: io.TextIOBase, rows: Iterable[ResultRow],
              cfg: ExperimentConfig, redraws: int = 0) -> None:
    """Write rows with metadata comments; deterministic unless timing is on."""
    out.write(f"# nfnoma v{VERSION}\n")
    out.write(f"# generator=PCG64 substreams=[seed,trial,attempt] numpy={np.__version__}\n")
    out.write(f"# seed={cfg.seed}\n")
    out.write(f"# config_digest={cfg.digest()}\n")
    out.write(f"# config={json.dumps(asdict(cfg), sort_keys=True, default=list)}\n")
    out.write(f"# redraws={redraws}\n")
    out.write(",".join(CSV_FIELDS) + "\n")
    for row in rows:
        rec = []
        for name in CSV_FIELDS:
            value = getattr(row, name)
            if name == "per_user_rates":
                rec.append(";".join(f"{r:.9g}" for r in value))
            elif name == "wall_time_ms":
                rec.append(_fmt(value) if cfg.record_timing else "")
            else:
                rec.append(_fmt(value))
        out.write(",".join(rec) + "\n")


def run_to_csv(cfg: ExperimentConfig, path: str) -> list[ResultRow]:
    rows, redraws = run_experiment(cfg)
    with open(path, "w", newline="") as f:
        write_csv(f, rows, cfg, redraws)
    return rows


def solve_from_document(doc: dict) -> dict:
    """Single-instance solve for the CLI: explicit coordinates in, rates out."""
    sysd = dict(doc["system"])
    p_dbm = sysd.pop("p_dbm", 30.0)
    noise_dbm = sysd.pop("noise_dbm", -80.0)
    system = SystemConfig(
        n_antennas=sysd.pop("n"),
        n_near=len(doc["near_users"]),
        n_far=len(doc["far_users"]),
        beams_per_far=sysd.pop("dx", 1),
        carrier_hz=sysd.pop("fc_hz", 28e9),
        noise_power=dbm_to_watt(noise_dbm),
        beam_power_budget=dbm_to_watt(p_dbm),
        target_rate=sysd.pop("target_rate", 0.1),
        csi_quality=sysd.pop("rho", 1.0),
    )
    if sysd:
        raise ValueError(f"unknown system keys: {sorted(sysd)}")
    near = np.asarray(doc["near_users"], dtype=float)
    far = np.asarray(doc["far_users"], dtype=float)
    rng = _trial_rng(int(doc.get("seed", 0)), 0, 0) if system.csi_quality < 1 else None
    inst = build_instance(system, near, far, rng=rng)
    method = doc.get("method", "sca")
    outcome = run_method(method, inst)
    report = evaluate(outcome.allocation, inst.eff_true, system.noise_power,
                      system.target_rate)
    coeff = outcome.allocation.ff_coeff
    return {
        "method": method,
        "assignment": [list(b) for b in inst.assignment.beam_sets],
        "nf_power_w": outcome.allocation.nf_power.tolist(),
        "ff_coeff_re": coeff.real.tolist(),
        "ff_coeff_im": coeff.imag.tolist(),
        "rates": {
            "ff": report.ff_rate.tolist(),
            "ff_at_nf": report.ff_at_nf_rate.tolist(),
            "nf": report.nf_rate.tolist(),
            "per_user": report.per_user.tolist(),
            "objective": report.objective,
        },
        "qos_violations": int((~report.qos_ok).sum()),
        "solver_iterations": outcome.iterations,
    }
