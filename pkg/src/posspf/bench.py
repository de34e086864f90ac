"""Scenario generation, measurement synthesis, and Monte Carlo experiments.

A scenario fixes the observer trajectory, the target's initial state and
motion model, the true measurement-noise generator, and the noise model
the filters assume.  Runs are seeded end to end: a run's truth,
measurements, and filter randomness are pure functions of (scenario,
filter kind, particle count, seed), and batch aggregates are independent
of the parallelism degree.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .filters import (
    AllWeightsZero,
    LinearGaussianTransition,
    PossibilityPFOptions,
    peak_set_representative,
    possibility_pf_init,
    possibility_pf_step,
    standard_pf_init,
    standard_pf_step,
)
from .possq import GaussianPossibility
from .tma import (
    DynamicsConfig,
    ObserverTrajectory,
    bearing_log_likelihood,
    bearings_of,
    crlb_curve,
    init_prior,
    observer_input,
    process_noise_matrix,
    transition_matrix,
    wrap_angle,
)

DIVERGENCE_THRESHOLD_M = 1000.0

FILTER_POSSIBILITY = "possibility"
FILTER_STANDARD = "standard"


def is_divergent(final_error_m: float, threshold_m: float = DIVERGENCE_THRESHOLD_M) -> bool:
    """A run diverges when its final position error strictly exceeds the threshold."""
    return bool(final_error_m > threshold_m)


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson 95% score interval for a binomial proportion, as fractions."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    p = successes / trials
    denom = 1.0 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return lo, hi


@dataclass(frozen=True)
class NoiseModel:
    """Measurement noise generator: zero-mean Gaussian or Student-t.

    Student-t draws are Gaussian over the square root of a scaled
    chi-square; ``nu = inf`` takes the exact Gaussian code path.
    """

    kind: str
    sigma: float
    nu: float = math.inf

    def __post_init__(self):
        if self.kind not in ("gaussian", "student-t"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma <= 0:
            raise ValueError("noise sigma must be positive")
        if self.kind == "student-t" and not self.nu > 0:
            raise ValueError("student-t degrees of freedom must be positive")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        draws = self.sigma * rng.standard_normal(size)
        if self.kind == "student-t" and math.isfinite(self.nu):
            draws = draws / np.sqrt(rng.chisquare(self.nu, size) / self.nu)
        return draws


@dataclass(frozen=True)
class PriorConfig:
    """Parameters of the measurement-based initial prior."""

    range_mean: float = 10e3
    range_sigma: float = 3.5e3
    vel_sigma: tuple[float, float] = (2.6, 2.6)
    covariance_form: str = "consistent"


@dataclass(frozen=True)
class Scenario:
    """One simulated engagement: observer, target, dynamics, noise models."""

    scan_count: int
    T: float
    observer: ObserverTrajectory
    target_init: np.ndarray
    dynamics: DynamicsConfig
    true_noise: NoiseModel
    filter_sigma: float
    deterministic_target: bool = False

    def __post_init__(self):
        if self.scan_count < 2:
            raise ValueError("scenario needs at least 2 scans")
        if len(self.observer) != self.scan_count:
            raise ValueError("observer trajectory length must equal the scan count")
        if self.filter_sigma <= 0:
            raise ValueError("filter sigma must be positive")
        velocities = self.observer.states[:, [1, 3]]
        if np.allclose(velocities, velocities[0]):
            raise ValueError("observer must manoeuvre at least once (range observability)")


# Canonical defaults: target 10 km due north doing 4 m/s on heading 140,
# observer zigzagging at 7.5 m/s between headings 70 and 340 every 10 scans.
CANONICAL_DEFAULTS = dict(
    scan_count=40,
    T=40.0,
    initial_range_m=10e3,
    initial_bearing_deg=0.0,
    target_speed=4.0,
    target_heading_deg=140.0,
    observer_speed=7.5,
    observer_headings_deg=(70.0, 340.0, 70.0, 340.0),
    observer_leg_scans=10,
    q=1e-3,
    noise_kind="gaussian",
    noise_sigma_deg=1.0,
    noise_nu=math.inf,
    filter_sigma_deg=1.0,
    deterministic_target=False,
)


def _heading_velocity(speed: float, heading_deg: float) -> np.ndarray:
    h = np.deg2rad(heading_deg)
    return speed * np.array([np.sin(h), np.cos(h)])


def build_canonical_scenario(**overrides) -> Scenario:
    """Canonical bearings-only engagement; every default can be overridden."""
    params = dict(CANONICAL_DEFAULTS)
    unknown = set(overrides) - set(params)
    if unknown:
        raise ValueError(f"unknown scenario overrides: {sorted(unknown)}")
    params.update(overrides)

    scan_count = int(params["scan_count"])
    T = float(params["T"])
    if scan_count < 2:
        raise ValueError("scan_count must be at least 2")
    if T <= 0:
        raise ValueError("T must be positive")
    if params["observer_leg_scans"] < 1:
        raise ValueError("observer_leg_scans must be at least 1")
    if params["observer_speed"] < 0 or params["target_speed"] < 0:
        raise ValueError("speeds must be nonnegative")

    headings = tuple(float(h) for h in params["observer_headings_deg"])
    if len(headings) < 2:
        raise ValueError("observer needs at least two legs to manoeuvre")
    leg_scans = int(params["observer_leg_scans"])

    obs = np.zeros((scan_count, 4))
    pos = np.zeros(2)
    for k in range(scan_count):
        leg = min(k // leg_scans, len(headings) - 1)
        v = _heading_velocity(params["observer_speed"], headings[leg])
        obs[k] = [pos[0], v[0], pos[1], v[1]]
        pos = pos + T * v
    observer = ObserverTrajectory(obs, T)

    beta = np.deg2rad(params["initial_bearing_deg"])
    tgt_pos = params["initial_range_m"] * np.array([np.sin(beta), np.cos(beta)])
    tgt_vel = _heading_velocity(params["target_speed"], params["target_heading_deg"])
    target_init = np.array([tgt_pos[0], tgt_vel[0], tgt_pos[1], tgt_vel[1]])

    sigma_true = np.deg2rad(params["noise_sigma_deg"])
    nu = float(params["noise_nu"])
    noise = NoiseModel(kind=params["noise_kind"], sigma=sigma_true, nu=nu)

    return Scenario(
        scan_count=scan_count,
        T=T,
        observer=observer,
        target_init=target_init,
        dynamics=DynamicsConfig(T=T, q=float(params["q"])),
        true_noise=noise,
        filter_sigma=np.deg2rad(params["filter_sigma_deg"]),
        deterministic_target=bool(params["deterministic_target"]),
    )


def nominal_target_track(scenario: Scenario) -> np.ndarray:
    """Noise-free constant-velocity target trajectory, shape (scans, 4)."""
    F = transition_matrix(scenario.T)
    track = np.empty((scenario.scan_count, 4))
    track[0] = scenario.target_init
    for k in range(1, scenario.scan_count):
        track[k] = F @ track[k - 1]
    return track


def sample_target_track(scenario: Scenario, rng: np.random.Generator) -> np.ndarray:
    """Target trajectory realisation; adds process noise unless deterministic."""
    if scenario.deterministic_target or scenario.dynamics.q == 0:
        return nominal_target_track(scenario)
    F = transition_matrix(scenario.T)
    chol = np.linalg.cholesky(process_noise_matrix(scenario.T, scenario.dynamics.q))
    track = np.empty((scenario.scan_count, 4))
    track[0] = scenario.target_init
    for k in range(1, scenario.scan_count):
        track[k] = F @ track[k - 1] + chol @ rng.standard_normal(4)
    return track


def synthesize_measurements(
    scenario: Scenario,
    rng: np.random.Generator,
    target_track: np.ndarray | None = None,
) -> np.ndarray:
    """Noisy bearings of the (given or nominal) target track, wrapped to (-pi, pi]."""
    if target_track is None:
        target_track = nominal_target_track(scenario)
    rel = target_track - scenario.observer.states
    true_bearings = bearings_of(rel)
    noise = scenario.true_noise.sample(rng, scenario.scan_count)
    return wrap_angle(true_bearings + noise)


@dataclass
class RunReport:
    """Outcome of one seeded run of one filter."""

    seed: int
    filter_kind: str
    particles: int
    process_noise: float
    estimator: str
    estimate_track: np.ndarray  # (scans, 2) position estimates
    pos_errors: np.ndarray      # (scans,) metres
    divergent: bool
    collapsed: bool


def run_single(
    scenario: Scenario,
    filter_kind: str,
    n: int,
    seed: int,
    prior: PriorConfig = PriorConfig(),
    options: PossibilityPFOptions = PossibilityPFOptions(),
) -> RunReport:
    """Simulate one engagement and run one filter over it.

    The world (truth and measurements) is drawn from stream (seed, 0) and
    the filter from stream (seed, 1), so both filters see identical
    measurements at the same seed.
    """
    if filter_kind not in (FILTER_POSSIBILITY, FILTER_STANDARD):
        raise ValueError(f"unknown filter kind {filter_kind!r}")
    rng_world = np.random.default_rng((seed, 0))
    rng_filter = np.random.default_rng((seed, 1))

    target = sample_target_track(scenario, rng_world)
    rel = target - scenario.observer.states
    z = synthesize_measurements(scenario, rng_world, target)

    sigma = scenario.filter_sigma
    prior_poss = init_prior(
        z[0],
        scenario.observer.velocity(0),
        range_mean=prior.range_mean,
        range_sigma=prior.range_sigma,
        sigma=sigma,
        vel_sigma=prior.vel_sigma,
        covariance_form=prior.covariance_form,
    )

    F = transition_matrix(scenario.T)
    Q = process_noise_matrix(scenario.T, scenario.dynamics.q)
    base_transition = LinearGaussianTransition(F, Q)

    def log_lik(states, meas):
        return bearing_log_likelihood(states, meas, sigma)

    scans = scenario.scan_count
    track = np.full((scans, 2), np.nan)
    collapsed = False

    if filter_kind == FILTER_POSSIBILITY:
        estimator = "map-peak-set" if options.map_peak_cut > 0 else "map"
        ps = possibility_pf_init(prior_poss, n, rng_filter, options)
        with np.errstate(divide="ignore"):
            j0 = peak_set_representative(ps.states, np.log(ps.weights), options.map_peak_cut)
        track[0] = ps.states[j0][[0, 2]]
        for k in range(1, scans):
            U = observer_input(scenario.observer.states[k], scenario.observer.states[k - 1], scenario.T)
            transition = base_transition.with_offset(-U)
            try:
                ps, record = possibility_pf_step(ps, transition, log_lik, z[k], rng_filter, k, options)
            except AllWeightsZero:
                collapsed = True
                break
            track[k] = record.estimate[[0, 2]]
    else:
        estimator = "mmse-mean"
        ps = standard_pf_init(prior_poss, n, rng_filter)
        track[0] = ps.weights @ ps.states[:, [0, 2]]
        for k in range(1, scans):
            U = observer_input(scenario.observer.states[k], scenario.observer.states[k - 1], scenario.T)
            transition = base_transition.with_offset(-U)
            try:
                ps, record = standard_pf_step(ps, transition.sample_model, log_lik, z[k], rng_filter, k)
            except AllWeightsZero:
                collapsed = True
                break
            track[k] = record.estimate[[0, 2]]

    pos_errors = np.linalg.norm(track - rel[:, [0, 2]], axis=1)
    if collapsed:
        pos_errors = np.where(np.isnan(pos_errors), np.inf, pos_errors)
    divergent = collapsed or is_divergent(pos_errors[-1])
    return RunReport(
        seed=seed,
        filter_kind=filter_kind,
        particles=n,
        process_noise=scenario.dynamics.q,
        estimator=estimator,
        estimate_track=track,
        pos_errors=pos_errors,
        divergent=divergent,
        collapsed=collapsed,
    )


@dataclass
class BatchResult:
    """Aggregates over a batch of seeded runs of one filter."""

    reports: list[RunReport]
    rms_m: np.ndarray          # per-scan RMS position error over non-divergent runs
    n_runs: int
    n_divergent: int
    divergence_pct: float
    wilson_lo_pct: float
    wilson_hi_pct: float

    @property
    def n_alive(self) -> int:
        return self.n_runs - self.n_divergent


def _run_single_args(args) -> RunReport:
    return run_single(*args)


def run_batch(
    scenario: Scenario,
    filter_kind: str,
    n: int,
    runs: int,
    base_seed: int,
    parallelism: int = 1,
    prior: PriorConfig = PriorConfig(),
    options: PossibilityPFOptions = PossibilityPFOptions(),
) -> BatchResult:
    """Independent seeded runs (base_seed + index) and their aggregates.

    Divergent runs are excluded from the RMS curve; the divergence
    percentage carries a Wilson 95% interval.  Results do not depend on
    the parallelism degree.
    """
    if runs < 1:
        raise ValueError("need at least one run")
    arglist = [(scenario, filter_kind, n, base_seed + i, prior, options) for i in range(runs)]
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            reports = list(pool.map(_run_single_args, arglist, chunksize=max(1, runs // (4 * parallelism))))
    else:
        reports = [_run_single_args(a) for a in arglist]

    alive = [r.pos_errors for r in reports if not r.divergent]
    if alive:
        rms = np.sqrt(np.mean(np.square(np.array(alive)), axis=0))
    else:
        rms = np.full(scenario.scan_count, np.nan)
    n_div = sum(r.divergent for r in reports)
    lo, hi = wilson_interval(n_div, runs)
    return BatchResult(
        reports=reports,
        rms_m=rms,
        n_runs=runs,
        n_divergent=n_div,
        divergence_pct=100.0 * n_div / runs,
        wilson_lo_pct=100.0 * lo,
        wilson_hi_pct=100.0 * hi,
    )


@dataclass(frozen=True)
class Table1Cell:
    """Divergence percentage of one (filter, particle count, tail weight) cell."""

    filter_kind: str
    n: int
    nu: float
    runs: int
    divergent_pct: float
    wilson_lo_pct: float
    wilson_hi_pct: float


def table1_experiment(
    scenario: Scenario,
    n_grid,
    nu_grid,
    runs: int,
    base_seed: int,
    parallelism: int = 1,
    prior: PriorConfig = PriorConfig(),
    options: PossibilityPFOptions = PossibilityPFOptions(),
) -> list[Table1Cell]:
    """Divergence-percentage grid over particle counts and Student-t tails.

    Every cell reuses the same seed block, so all cells (and both filters)
    see identical measurement randomness per run index: cell differences
    are paired, not seed noise.
    """
    cells = []
    for filter_kind in (FILTER_STANDARD, FILTER_POSSIBILITY):
        for n in n_grid:
            for nu in nu_grid:
                nu = float(nu)
                noisy = dataclasses.replace(
                    scenario,
                    true_noise=NoiseModel(kind="student-t", sigma=scenario.true_noise.sigma, nu=nu),
                )
                batch = run_batch(noisy, filter_kind, int(n), runs, base_seed, parallelism, prior, options)
                cells.append(
                    Table1Cell(
                        filter_kind=filter_kind,
                        n=int(n),
                        nu=nu,
                        runs=runs,
                        divergent_pct=batch.divergence_pct,
                        wilson_lo_pct=batch.wilson_lo_pct,
                        wilson_hi_pct=batch.wilson_hi_pct,
                    )
                )
    return cells


def scenario_crlb(scenario: Scenario, prior: PriorConfig = PriorConfig()):
    """Position-bound curve along the nominal trajectory, from the prior spread."""
    nominal = nominal_target_track(scenario)
    rel = nominal - scenario.observer.states
    z1 = bearings_of(rel[:1])[0]
    prior_poss = init_prior(
        z1,
        scenario.observer.velocity(0),
        range_mean=prior.range_mean,
        range_sigma=prior.range_sigma,
        sigma=scenario.filter_sigma,
        vel_sigma=prior.vel_sigma,
        covariance_form=prior.covariance_form,
    )
    return crlb_curve(rel, scenario.T, scenario.dynamics.q, scenario.filter_sigma, prior_poss)
