"""Scenario configuration, closed-loop Monte Carlo runs, traces and summaries.

One simulated step wires the blocks together in channel order: plant
measurement, estimator time update, sensor innovation against the (possibly
attacked) feedback, whitening, forward attack, scheduler decision on the
received data, detector statistic on the received data, measurement update,
attack-effect bookkeeping. Trajectories are independent (seed, trajectory)
substreams aggregated in index order, so runs are deterministic.

Attack modes:
  off          - plain event-based loop.
  forward_only - innovation rescaled/biased on the forward channel; the
                 feedback channel is untouched, so the sensor-side
                 innovation drifts away from nominal (negative control).
  two_channel  - forward attack plus feedback cancellation; the sensor-side
                 innovation stays nominal.

The remote estimator receives the same attacked sequence in both attacked
modes (the attacker reconstructs the nominal innovation from its own effect
recursion), which is what makes the modes comparable stream-for-stream.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import analysis
from .attack import (
    AttackParams,
    AttackState,
    SuccessCriteria,
    alarm_probability,
    attack_effect_update,
    forward_attack,
    solve_optimal_params,
    trigger_probability,
)
from .detector import DetectorConfig, design_threshold, statistic, test
from .errors import ConfigError, DivergenceError, DomainError, ModelError, NumericError
from .estimator import (
    SteadyState,
    initial_filter_state,
    innovation,
    measurement_update,
    riccati_fixed_point,
    schedule,
    time_update,
    transform_innovation,
)
from .model import RandomSource, SystemModel, sample_initial_state, step

ATTACK_MODES = ("off", "forward_only", "two_channel")

_CONFIG_KEYS = {
    "model",
    "beta",
    "upsilon",
    "M",
    "sigma",
    "solver_dof",
    "steps",
    "trajectories",
    "burn_in",
    "attack_start",
    "seed",
    "attack_mode",
    "attack_params",
}

_MODEL_KEYS = {"A", "C", "Q", "R", "Xi0"}


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """Fully resolved simulation scenario.

    sigma and attack_params are always concrete here: load_config designs
    the threshold from (upsilon, solver_dof) and solves the attack
    parameters when the file omits them. Metrics cover k >= burn_in; the
    attack switches on at attack_start (default burn_in // 2) so both the
    filter and the attack bias are settled before the metrics window.
    """

    model: SystemModel
    beta: float
    upsilon: float
    M: float
    sigma: float
    solver_dof: int
    steps: int
    trajectories: int
    burn_in: int
    attack_start: int
    seed: int
    attack_mode: str
    attack_params: AttackParams
    detector: DetectorConfig
    criteria: SuccessCriteria


@dataclass
class SimulationSummary:
    """Post-burn-in aggregate of one scenario run.

    comm_rate and alarm_rate are fractions of step_count * trajectory_count
    decisions, where step_count counts post-burn-in steps per trajectory.
    theory_* values come from the bias law and the attacked-covariance
    fixed point at the scenario's attack parameters.
    """

    comm_rate: float
    alarm_rate: float
    emp_bias: np.ndarray
    emp_cov_trace: float
    theory_bias: np.ndarray
    theory_cov_trace: float
    analytic_trigger: float
    analytic_alarm: float
    step_count: int
    trajectory_count: int

    def to_dict(self) -> dict:
        return {
            "comm_rate": self.comm_rate,
            "alarm_rate": self.alarm_rate,
            "emp_bias": [float(v) for v in self.emp_bias],
            "emp_cov_trace": self.emp_cov_trace,
            "theory_bias": [float(v) for v in self.theory_bias],
            "theory_cov_trace": self.theory_cov_trace,
            "analytic_trigger": self.analytic_trigger,
            "analytic_alarm": self.analytic_alarm,
            "step_count": self.step_count,
            "trajectory_count": self.trajectory_count,
        }


@dataclass
class RunResult:
    """Summary plus per-run diagnostics used by tests and the analysis gate."""

    summary: SimulationSummary
    traj_bias_means: np.ndarray  # (trajectories, n) post-burn-in means of xhat_a - xhat
    sensor_innovation_mean: np.ndarray  # (m,) mean of the sensor-side innovation
    sensor_innovation_cov: np.ndarray  # (m, m) ... and its covariance about that mean
    eps_mean: np.ndarray  # (m,) sensor-side whitened innovation mean
    eps_var: np.ndarray  # (m,) ... and variance
    eps_lag1: np.ndarray  # (m,) lag-1 autocorrelation of the whitened innovation
    g_mean: float  # detector statistic mean
    cancellation_max: float  # max_i |z_sensor - z_nominal|_i / (1 + |z_nominal_i|)
    filter_prior_trace: float  # mean trace of the filter's internal prior covariance
    gamma_count: int
    alarm_count: int
    diverged: list = field(default_factory=list)


def _require(payload: dict, key: str):
    if key not in payload:
        raise ConfigError(f"missing required config field '{key}'", field=key)
    return payload[key]


def _positive_int(value, key: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise ConfigError(f"'{key}' must be a positive integer, got {value!r}", field=key)
    return value


def config_from_dict(payload: dict) -> ScenarioConfig:
    """Validate and resolve a raw configuration mapping into a ScenarioConfig."""
    unknown = set(payload) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}", field=sorted(unknown)[0])

    raw_model = _require(payload, "model")
    if not isinstance(raw_model, dict) or set(raw_model) != _MODEL_KEYS:
        raise ConfigError(
            f"'model' must be a mapping with keys {sorted(_MODEL_KEYS)}", field="model"
        )
    try:
        model = SystemModel(**{k: np.asarray(raw_model[k], dtype=float) for k in _MODEL_KEYS})
    except (ModelError, ValueError) as exc:
        raise ConfigError(f"invalid model: {exc}", field="model") from exc

    beta = float(_require(payload, "beta"))
    if not (beta >= 0.0 and math.isfinite(beta)):
        raise ConfigError(f"'beta' must be nonnegative, got {beta!r}", field="beta")
    upsilon = float(_require(payload, "upsilon"))
    if not (0.0 < upsilon < 1.0):
        raise ConfigError(f"'upsilon' must be in (0, 1), got {upsilon!r}", field="upsilon")
    target = float(_require(payload, "M"))
    if not (0.0 < target < 1.0):
        raise ConfigError(f"'M' must be in (0, 1), got {target!r}", field="M")

    steps = _positive_int(_require(payload, "steps"), "steps")
    trajectories = _positive_int(_require(payload, "trajectories"), "trajectories")
    burn_in = _require(payload, "burn_in")
    if not isinstance(burn_in, int) or isinstance(burn_in, bool) or burn_in < 0:
        raise ConfigError(f"'burn_in' must be a nonnegative integer, got {burn_in!r}", field="burn_in")
    if burn_in >= steps:
        raise ConfigError(
            f"'burn_in' must be smaller than 'steps' ({burn_in} >= {steps})", field="burn_in"
        )
    attack_start = payload.get("attack_start", burn_in // 2)
    if not isinstance(attack_start, int) or isinstance(attack_start, bool) or attack_start < 0:
        raise ConfigError(
            f"'attack_start' must be a nonnegative integer, got {attack_start!r}",
            field="attack_start",
        )
    if attack_start > burn_in:
        raise ConfigError(
            f"'attack_start' must not exceed 'burn_in' ({attack_start} > {burn_in}); "
            "the metrics window assumes a settled attack",
            field="attack_start",
        )
    seed = _require(payload, "seed")
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f"'seed' must be an integer, got {seed!r}", field="seed")

    attack_mode = _require(payload, "attack_mode")
    if attack_mode not in ATTACK_MODES:
        raise ConfigError(
            f"'attack_mode' must be one of {ATTACK_MODES}, got {attack_mode!r}",
            field="attack_mode",
        )

    solver_dof = payload.get("solver_dof", model.m)
    solver_dof = _positive_int(solver_dof, "solver_dof")

    if payload.get("sigma") is None:
        detector = design_threshold(upsilon, solver_dof, beta=beta)
        sigma = detector.sigma
    else:
        sigma = float(payload["sigma"])
        if not (sigma > 0.0 and math.isfinite(sigma)):
            raise ConfigError(f"'sigma' must be positive, got {sigma!r}", field="sigma")
        if beta >= math.sqrt(sigma):
            raise ConfigError(
                f"scheduler threshold must satisfy beta < sqrt(sigma): "
                f"beta={beta}, sqrt(sigma)={math.sqrt(sigma):.6f}",
                field="beta",
            )
        detector = DetectorConfig(sigma=sigma, upsilon=upsilon, dof=solver_dof)

    criteria = SuccessCriteria(M=target, Upsilon=upsilon)

    raw_attack = payload.get("attack_params")
    if attack_mode == "off":
        attack_params = AttackParams.off(model.m)
    elif raw_attack is not None:
        if not isinstance(raw_attack, dict) or set(raw_attack) != {"mu", "delta_bar"}:
            raise ConfigError(
                "'attack_params' must be a mapping with keys ['delta_bar', 'mu']",
                field="attack_params",
            )
        attack_params = AttackParams.scalar_bias(
            float(raw_attack["mu"]), float(raw_attack["delta_bar"]), model.m
        )
    else:
        attack_params = solve_optimal_params(beta, sigma, criteria, solver_dof, m=model.m)

    return ScenarioConfig(
        model=model,
        beta=beta,
        upsilon=upsilon,
        M=target,
        sigma=sigma,
        solver_dof=solver_dof,
        steps=steps,
        trajectories=trajectories,
        burn_in=burn_in,
        attack_start=attack_start,
        seed=seed,
        attack_mode=attack_mode,
        attack_params=attack_params,
        detector=detector,
        criteria=criteria,
    )


def load_config(path) -> ScenarioConfig:
    """Parse and resolve a JSON scenario file (see docs/config_schema.json)."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            payload = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError("config root must be a JSON object")
    return config_from_dict(payload)


def trace_header(n: int, m: int) -> str:
    cols = ["k", "traj", "gamma", "alarm", "g"]
    cols += [f"x_{i}" for i in range(1, n + 1)]
    cols += [f"xhat_{i}" for i in range(1, n + 1)]
    cols += [f"xhata_{i}" for i in range(1, n + 1)]
    cols += [f"z_{i}" for i in range(1, m + 1)]
    cols += [f"eps_{i}" for i in range(1, m + 1)]
    cols += [f"epstilde_{i}" for i in range(1, m + 1)]
    return ",".join(cols)


def _format_value(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_trace(records, path) -> None:
    """Write per-step records as CSV with 17-significant-digit floats.

    Each record is (k, traj, gamma, alarm, g, x, xhat, xhata, z, eps,
    epstilde) with the vectors as arrays; rows are written in the order
    given, so a fixed seed reproduces the file byte for byte.
    """
    records = iter(records)
    try:
        first = next(records)
    except StopIteration:
        raise NumericError("write_trace needs at least one record to size the header")
    n = len(first[5])
    m = len(first[8])

    def render(rec) -> str:
        k, traj, gamma, alarm, g, x, xhat, xhata, z, eps, epstilde = rec
        fields = [str(int(k)), str(int(traj)), str(int(gamma)), str(int(alarm)), _format_value(g)]
        for vec in (x, xhat, xhata, z, eps, epstilde):
            fields.extend(_format_value(v) for v in vec)
        return ",".join(fields)

    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(trace_header(n, m) + "\n")
        handle.write(render(first) + "\n")
        for rec in records:
            handle.write(render(rec) + "\n")


class _TrajectoryStats:
    """Post-burn-in aggregates for a single trajectory."""

    def __init__(self, n: int, m: int):
        self.count = 0
        self.gamma_count = 0
        self.alarm_count = 0
        self.bias_sum = np.zeros(n)
        self.err_sq_sum = 0.0
        self.z_sum = np.zeros(m)
        self.z_outer = np.zeros((m, m))
        self.eps_sum = np.zeros(m)
        self.eps_sq = np.zeros(m)
        self.eps_lag1 = np.zeros(m)
        self.g_sum = 0.0
        self.p_trace_sum = 0.0
        self.cancel_max = 0.0


def _simulate_trajectory(config: ScenarioConfig, traj: int, theory_bias: np.ndarray, rows):
    """Run one trajectory; returns its stats. Appends trace rows when `rows` is not None.

    Per-step quantities are recorded into preallocated arrays and reduced
    vectorized at the end of the trajectory.
    """
    model = config.model
    A, C = model.A, model.C
    params = config.attack_params
    attacked = config.attack_mode != "off"
    two_channel = config.attack_mode == "two_channel"
    beta = config.beta
    burn_in = config.burn_in
    attack_start = config.attack_start
    steps = config.steps
    n, m = model.n, model.m

    rng = RandomSource(config.seed, traj)
    plant = sample_initial_state(model, rng)
    filt = initial_filter_state(model)
    att = AttackState.zeros(n, m)
    xn_post = np.zeros(n)  # virtual nominal estimator (same trigger sequence)

    rec_gamma = np.empty(steps, dtype=np.int64)
    rec_alarm = np.empty(steps, dtype=np.int64)
    rec_g = np.empty(steps)
    rec_ptr = np.empty(steps)
    rec_x = np.empty((steps, n))
    rec_xn = np.empty((steps, n))
    rec_xa = np.empty((steps, n))
    rec_z = np.empty((steps, m))
    rec_zn = np.empty((steps, m))
    rec_eps = np.empty((steps, m))
    rec_epst = np.empty((steps, m)) if rows is not None else None

    for k in range(steps):
        if k > 0:
            filt = time_update(filt, model)
        xn_prior = A @ xn_post
        plant_next, y = step(model, plant, rng)

        active = attacked and k >= attack_start
        z_nominal = innovation(y, xn_prior, model)

        if active:
            x_tilde_prior = A @ att.x_tilde_post
            if two_channel:
                feedback = C @ filt.x_prior - C @ x_tilde_prior  # alpha = -C xtilde^-
            else:
                feedback = C @ filt.x_prior
            z_sensor = y - feedback
            eps_sensor = transform_innovation(z_sensor, filt.F)
            eps_received = forward_attack(transform_innovation(z_nominal, filt.F), params)
        else:
            z_sensor = z_nominal
            eps_sensor = transform_innovation(z_sensor, filt.F)
            eps_received = eps_sensor

        gamma = schedule(eps_received, beta)
        g = statistic(eps_received)
        alarm = test(g, config.detector)

        filt = measurement_update(filt, eps_received, gamma, beta, model)
        if active:
            xn_post = xn_prior + filt.K @ z_nominal if gamma else xn_prior
            bundle = SteadyState(P=filt.P_prior, K=filt.K, F=filt.F, S=filt.S, L=filt.L)
            att = attack_effect_update(att, gamma, z_nominal, bundle, params, model)
        else:
            xn_post = filt.x_post  # no attack yet: the filter is the nominal estimator

        rec_gamma[k] = gamma
        rec_alarm[k] = alarm
        rec_g[k] = g
        rec_ptr[k] = filt.P_prior.trace()
        rec_x[k] = plant.x
        rec_xn[k] = xn_post
        rec_xa[k] = filt.x_post
        rec_z[k] = z_sensor
        rec_zn[k] = z_nominal
        rec_eps[k] = eps_sensor
        if rec_epst is not None:
            rec_epst[k] = eps_received
        plant = plant_next

    if not math.isfinite(float(rec_xa.sum()) + float(rec_g.sum())):
        raise NumericError(f"estimator diverged in trajectory {traj}")

    stats = _TrajectoryStats(n, m)
    post = slice(burn_in, steps)
    stats.count = steps - burn_in
    stats.gamma_count = int(rec_gamma[post].sum())
    stats.alarm_count = int(rec_alarm[post].sum())
    stats.bias_sum = (rec_xa[post] - rec_xn[post]).sum(axis=0)
    err = rec_xa[post] - rec_x[post] - theory_bias
    stats.err_sq_sum = float((err * err).sum())
    z_post = rec_z[post]
    stats.z_sum = z_post.sum(axis=0)
    stats.z_outer = z_post.T @ z_post
    eps_post = rec_eps[post]
    stats.eps_sum = eps_post.sum(axis=0)
    stats.eps_sq = (eps_post * eps_post).sum(axis=0)
    stats.eps_lag1 = (eps_post[1:] * eps_post[:-1]).sum(axis=0)
    stats.g_sum = float(rec_g[post].sum())
    stats.p_trace_sum = float(rec_ptr[post].sum())
    if two_channel:
        win = slice(attack_start, steps)
        gap = np.abs(rec_z[win] - rec_zn[win]) / (1.0 + np.abs(rec_zn[win]))
        stats.cancel_max = float(gap.max()) if gap.size else 0.0

    if rows is not None:
        for k in range(steps):
            rows.append(
                (
                    k,
                    traj,
                    int(rec_gamma[k]),
                    int(rec_alarm[k]),
                    rec_g[k],
                    rec_x[k],
                    rec_xn[k],
                    rec_xa[k],
                    rec_z[k],
                    rec_eps[k],
                    rec_epst[k],
                )
            )
    return stats


def run_scenario(config: ScenarioConfig, trace_path=None) -> RunResult:
    """Simulate all trajectories and aggregate post-burn-in metrics.

    Deterministic for a fixed config and seed: each trajectory draws from
    its own (seed, index) substream and aggregation runs in index order.
    Writes the full per-step trace as CSV when trace_path is given. A
    trajectory that diverges numerically is recorded in RunResult.diverged
    and excluded from the aggregates (partial summary).
    """
    model = config.model
    steady = riccati_fixed_point(model)
    params = config.attack_params

    # theory references degrade to nan when A is unstable (bias and the
    # covariance fixed points only exist for stable dynamics)
    try:
        if config.attack_mode == "off" or params.is_off:
            theory_bias = np.zeros(model.n)
        else:
            theory_bias = analysis.steady_bias(params, steady, model).value
        theory_cov_trace = float(
            np.trace(analysis.attacked_covariance_fixed_point(params, steady, model))
        )
    except (DomainError, DivergenceError):
        theory_bias = np.full(model.n, np.nan)
        theory_cov_trace = float("nan")

    rows = [] if trace_path is not None else None
    per_traj: list[_TrajectoryStats] = []
    diverged: list[int] = []
    for traj in range(config.trajectories):
        traj_rows = [] if rows is not None else None
        try:
            per_traj.append(_simulate_trajectory(config, traj, theory_bias, traj_rows))
        except NumericError:
            diverged.append(traj)
        else:
            if rows is not None:
                rows.extend(traj_rows)

    if rows:
        write_trace(rows, trace_path)

    if not per_traj:
        raise NumericError("all trajectories diverged; no summary available")

    total = sum(s.count for s in per_traj)
    gamma_count = sum(s.gamma_count for s in per_traj)
    alarm_count = sum(s.alarm_count for s in per_traj)
    bias_means = np.vstack([s.bias_sum / s.count for s in per_traj])
    emp_bias = sum(s.bias_sum for s in per_traj) / total
    emp_cov_trace = sum(s.err_sq_sum for s in per_traj) / total
    z_mean = sum(s.z_sum for s in per_traj) / total
    z_cov = sum(s.z_outer for s in per_traj) / total - np.outer(z_mean, z_mean)
    eps_mean = sum(s.eps_sum for s in per_traj) / total
    eps_var = sum(s.eps_sq for s in per_traj) / total - eps_mean**2
    lag_total = total - len(per_traj)  # one fewer lagged pair per trajectory
    if lag_total > 0 and np.all(eps_var > 0):
        eps_lag1 = (sum(s.eps_lag1 for s in per_traj) / lag_total - eps_mean**2) / eps_var
    else:
        eps_lag1 = np.full(model.m, np.nan)

    summary = SimulationSummary(
        comm_rate=gamma_count / total,
        alarm_rate=alarm_count / total,
        emp_bias=emp_bias,
        emp_cov_trace=emp_cov_trace,
        theory_bias=theory_bias,
        theory_cov_trace=theory_cov_trace,
        analytic_trigger=trigger_probability(params, config.beta, model.m),
        analytic_alarm=alarm_probability(params, config.detector.sigma, model.m),
        step_count=config.steps - config.burn_in,
        trajectory_count=len(per_traj),
    )
    return RunResult(
        summary=summary,
        traj_bias_means=bias_means,
        sensor_innovation_mean=z_mean,
        sensor_innovation_cov=z_cov,
        eps_mean=eps_mean,
        eps_var=eps_var,
        eps_lag1=eps_lag1,
        g_mean=sum(s.g_sum for s in per_traj) / total,
        cancellation_max=max(s.cancel_max for s in per_traj),
        filter_prior_trace=sum(s.p_trace_sum for s in per_traj) / total,
        gamma_count=gamma_count,
        alarm_count=alarm_count,
        diverged=diverged,
    )


PAPER_A = [
    [0.5944, -0.1203, -0.4302],
    [0.0017, 0.7902, -0.0747],
    [0.0213, 0.8187, 0.1436],
]
PAPER_C = [
    [0.1365, 0.8939, 0.2987],
    [0.0118, 0.1991, 0.6614],
]


def paper_scenario(**overrides) -> dict:
    """The published experiment: beta 1.4, Upsilon 1%, 3-dof threshold 11.34.

    The attack target 99.87% is the rounded display of Phi(3) = 0.99865,
    which is the value consistent with the stated confidence level 3 and
    the solved pair (2.7705, 2.4828). The measurement channel is
    2-dimensional, so R is 0.1 I_2 while the detector threshold keeps the
    published 3-dof design.
    """
    payload = {
        "model": {
            "A": PAPER_A,
            "C": PAPER_C,
            "Q": [[0.01, 0.0, 0.0], [0.0, 0.01, 0.0], [0.0, 0.0, 0.01]],
            "R": [[0.1, 0.0], [0.0, 0.1]],
            "Xi0": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        },
        "beta": 1.4,
        "upsilon": 0.01,
        "M": 0.99865,
        "sigma": 11.34,
        "solver_dof": 3,
        "steps": 4200,
        "trajectories": 50,
        "burn_in": 200,
        "attack_start": 100,
        "seed": 20260810,
        "attack_mode": "two_channel",
    }
    payload.update(overrides)
    return payload
