"""Scenario configuration, trajectory generation, bound-calibrated
measurement sampling, Monte Carlo orchestration, and CSV emission.

Determinism: beams come from the signal seed, measurement noise from a
counter-based generator keyed by (scenario seed, run index), so runs are
order-independent and byte-identical output follows from identical
(config, seed).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np
import yaml

from .bounds import IcrbReport, measurement_covariance, pose_error_bounds
from .channel import (
    AnchorConfig,
    ArrayGeometry,
    BeamSet,
    SignalConfig,
    draw_beams,
    noise_free_signal,
)
from .errors import ConfigError, LengthMismatch, RadioPoseError, UnobservableState
from .lie import Pose, se3_exp, se3_log, so3_log
from .tracking import (
    FilterState,
    MotionCommand,
    PoseMeasurement,
    eskf_update,
    euler_ekf_update,
    euler_from_rotation,
    euler_predict,
    euler_state_from_pose,
    fusion_update,
    motion_matrix,
    pose_from_euler_state,
    predict,
    rotation_from_euler,
)

FILTER_NAMES = ("fusion", "eskf", "euler")


@dataclass(frozen=True)
class TrajectorySegment:
    """Constant-velocity trajectory piece."""

    v: np.ndarray  # m/s, local frame
    w: np.ndarray  # rad/s
    steps: int
    dt: float  # s

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float))


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to reproduce a bounds sweep or a tracking run."""

    anchors: tuple
    ue_array: ArrayGeometry
    signal: SignalConfig
    ue_start: Pose
    segments: tuple
    mc_runs: int = 100
    seed: int = 0
    filter_selection: str = "all"
    measurement_noise_scale: float = 1.0
    process_noise_rho_m: float = 0.01
    process_noise_rot_rad: float = 0.005

    def __post_init__(self):
        object.__setattr__(self, "anchors", tuple(self.anchors))
        object.__setattr__(self, "segments", tuple(self.segments))
        if len(self.anchors) < 2:
            raise ValueError("at least 2 anchors are required for observability")
        if self.mc_runs < 1:
            raise ValueError("mc_runs must be >= 1")
        if self.filter_selection not in FILTER_NAMES + ("all",):
            raise ValueError(f"filter_selection must be one of {FILTER_NAMES + ('all',)}")

    @property
    def selected_filters(self) -> tuple:
        if self.filter_selection == "all":
            return FILTER_NAMES
        return (self.filter_selection,)

    @property
    def process_noise(self) -> np.ndarray:
        q = np.zeros((6, 6))
        q[:3, :3] = self.process_noise_rho_m**2 * np.eye(3)
        q[3:, 3:] = self.process_noise_rot_rad**2 * np.eye(3)
        return q


def default_segments() -> tuple:
    """Six equal constant-velocity segments, 20 samples each at 0.5 s."""
    velocities = [
        [0.5, 0.0, 0.0],
        [0.0, 0.5, 0.0],
        [-0.5, 0.0, 0.5],
        [0.5, 0.5, 0.0],
        [0.0, -0.5, 0.0],
        [-0.5, 0.0, -0.5],
    ]
    turn = -np.pi / 4.0
    rates = [
        [0.0, 0.0, turn],
        [0.0, 0.0, 0.0],
        [0.0, 0.0, turn],
        [0.0, 0.0, 0.0],
        [0.0, 0.0, turn],
        [0.0, 0.0, turn],
    ]
    return tuple(
        TrajectorySegment(v=np.array(v), w=np.array(w), steps=20, dt=0.5)
        for v, w in zip(velocities, rates)
    )


def default_scenario() -> ScenarioConfig:
    """Default two-anchor 30 GHz scenario.

    8x8 anchor arrays and a 4x4 UE array at half-wavelength spacing,
    120 kHz subcarriers (100 of them) in a 100 MHz noise bandwidth,
    20 random beam pairs per snapshot, anchors at [5,0,0] / [0,5,0] with
    Z-Y-X orientations (0,15,0) and (-30,15,0) degrees, UE starting at
    [-5,-5,0] with orientation (20,-30,0) degrees.
    """
    carrier_hz = 30e9
    signal = SignalConfig(
        carrier_hz=carrier_hz,
        subcarrier_spacing_hz=120e3,
        num_subcarriers=100,
        num_transmissions=20,
        tx_power_dbm=20.0,
        noise_psd_dbm_hz=-173.855,
        bandwidth_hz=100e6,
        clock_bias_s=0.0,
        rng_seed=1,
    )
    bs_array = ArrayGeometry.half_wavelength_upa(8, 8, carrier_hz)
    ue_array = ArrayGeometry.half_wavelength_upa(4, 4, carrier_hz)
    anchors = (
        AnchorConfig(np.array([5.0, 0.0, 0.0]), rotation_from_euler(np.deg2rad([0.0, 15.0, 0.0])), bs_array),
        AnchorConfig(np.array([0.0, 5.0, 0.0]), rotation_from_euler(np.deg2rad([-30.0, 15.0, 0.0])), bs_array),
    )
    ue_start = Pose.from_rotation_position(
        rotation_from_euler(np.deg2rad([20.0, -30.0, 0.0])), np.array([-5.0, -5.0, 0.0])
    )
    return ScenarioConfig(
        anchors=anchors,
        ue_array=ue_array,
        signal=signal,
        ue_start=ue_start,
        segments=default_segments(),
        mc_runs=100,
        seed=3,
        filter_selection="all",
    )


def segment_commands(segments, process_noise: np.ndarray | None = None):
    """Flatten segments into one MotionCommand per step."""
    q = np.zeros((6, 6)) if process_noise is None else process_noise
    out = []
    for seg in segments:
        out.extend(MotionCommand(v=seg.v, w=seg.w, dt=seg.dt, process_noise=q) for _ in range(seg.steps))
    return out


def generate_trajectory(start: Pose, segments):
    """Poses visited after each motion step (the start pose is not included)."""
    poses = []
    pose = start
    for cmd in segment_commands(segments):
        pose = motion_matrix(cmd) @ pose
        poses.append(pose)
    return poses


def _psd_sqrt(cov: np.ndarray) -> np.ndarray:
    eig, vec = np.linalg.eigh((cov + cov.T) / 2.0)
    return vec * np.sqrt(np.clip(eig, 0.0, None))


def sample_measurement(truth: Pose, report: IcrbReport, rng, noise_scale: float = 1.0) -> PoseMeasurement:
    """Draw a pose measurement as a left tangent perturbation of the truth.

    The noise covariance is the bound covariance mapped into the [rho, r]
    tangent at the true rotation; the measurement keeps the raw
    state-domain bound so filters can apply their own transform at the
    measured rotation.
    """
    sigma = measurement_covariance(report.icrb, truth.rotation)
    noise = noise_scale * (_psd_sqrt(sigma) @ rng.standard_normal(6))
    return PoseMeasurement(pose=se3_exp(noise) @ truth, cov_state_icrb=report.icrb)


def run_rng(seed: int, run_index: int):
    """Counter-based per-run generator keyed by (seed, run index)."""
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(run_index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class RunResult:
    """Per-step series of one tracking run."""

    truths: list
    measurements: list
    estimates: dict  # filter name -> list of Pose
    tangent_errors: dict  # filter name -> (steps, 6) array, log(est truth^-1)
    failed: dict  # filter name -> error message or None


@dataclass
class FilterMetrics:
    """Aggregated error series of one estimator across Monte Carlo runs."""

    pos_rmse_m: np.ndarray  # per step
    rot_rmse_rad: np.ndarray  # per step
    per_run_pos_rmse_m: np.ndarray
    per_run_rot_rmse_rad: np.ndarray
    terminal_pos_err_m: np.ndarray
    terminal_rot_err_rad: np.ndarray

    def terminal_rotation_cdf(self):
        """Sorted terminal rotation errors with empirical CDF levels."""
        err = np.sort(self.terminal_rot_err_rad)
        return err, np.arange(1, err.size + 1) / err.size


@dataclass
class MetricSeries:
    """Monte Carlo aggregate: per-step RMSE per filter plus raw-measurement RMSE."""

    time_s: np.ndarray
    filters: dict
    measurement: FilterMetrics
    n_runs: int
    n_failed_runs: int


def scenario_reports(cfg: ScenarioConfig, beams: BeamSet | None = None):
    """Truth trajectory with the error-bound report at every true pose."""
    beams = beams if beams is not None else draw_beams(cfg.anchors, cfg.ue_array, cfg.signal)
    truths = generate_trajectory(cfg.ue_start, cfg.segments)
    reports = [
        pose_error_bounds(pose, cfg.anchors, cfg.ue_array, cfg.signal, beams) for pose in truths
    ]
    return truths, reports


def _pose_errors(est: Pose, truth: Pose):
    pos_err = est.position - truth.position
    rot_err = so3_log(est.rotation @ truth.rotation.T)
    return pos_err, rot_err


def run_single(cfg: ScenarioConfig, run_index: int, truths, reports, commands) -> RunResult:
    """Sample one measurement sequence and run the selected filters."""
    rng = run_rng(cfg.seed, run_index)
    measurements = [
        sample_measurement(t, r, rng, cfg.measurement_noise_scale) for t, r in zip(truths, reports)
    ]

    estimates = {name: [] for name in cfg.selected_filters}
    errors = {name: np.full((len(truths), 6), np.nan) for name in cfg.selected_filters}
    failed = {name: None for name in cfg.selected_filters}
    states: dict = {}

    for name in cfg.selected_filters:
        try:
            first = measurements[0]
            if name == "euler":
                states[name] = (euler_state_from_pose(first.pose), np.array(first.cov_state_icrb))
            else:
                cov0 = measurement_covariance(first.cov_state_icrb, first.pose.rotation)
                states[name] = FilterState(first.pose, cov0)
        except RadioPoseError as exc:
            failed[name] = str(exc)

    for k, meas in enumerate(measurements):
        for name in cfg.selected_filters:
            if failed[name] is not None:
                continue
            try:
                if k > 0:
                    cmd = commands[k]
                    if name == "euler":
                        state, cov = euler_predict(*states[name], cmd)
                        states[name] = euler_ekf_update(state, cov, meas)
                    elif name == "fusion":
                        states[name] = fusion_update(predict(states[name], cmd), meas)
                    else:
                        states[name] = eskf_update(predict(states[name], cmd), meas)
                est_pose = (
                    pose_from_euler_state(states[name][0]) if name == "euler" else states[name].pose
                )
                estimates[name].append(est_pose)
                errors[name][k] = se3_log(est_pose @ truths[k].inverse())
            except RadioPoseError as exc:
                failed[name] = str(exc)

    return RunResult(
        truths=truths,
        measurements=measurements,
        estimates=estimates,
        tangent_errors=errors,
        failed=failed,
    )


def _metrics_from_errors(pos_err: np.ndarray, rot_err: np.ndarray) -> FilterMetrics:
    """pos_err, rot_err have shape (runs, steps)."""
    return FilterMetrics(
        pos_rmse_m=np.sqrt(np.mean(pos_err**2, axis=0)),
        rot_rmse_rad=np.sqrt(np.mean(rot_err**2, axis=0)),
        per_run_pos_rmse_m=np.sqrt(np.mean(pos_err**2, axis=1)),
        per_run_rot_rmse_rad=np.sqrt(np.mean(rot_err**2, axis=1)),
        terminal_pos_err_m=pos_err[:, -1].copy(),
        terminal_rot_err_rad=rot_err[:, -1].copy(),
    )


def run_monte_carlo(cfg: ScenarioConfig) -> MetricSeries:
    """Independent tracking runs over the deterministic truth trajectory.

    The bound reports are computed once (the truth is shared by all runs);
    each run samples its own measurement noise from a per-run generator.
    Runs in which any filter fails are counted and dropped from the
    aggregates; the batch itself never aborts.
    """
    beams = draw_beams(cfg.anchors, cfg.ue_array, cfg.signal)
    truths, reports = scenario_reports(cfg, beams)
    commands = segment_commands(cfg.segments, cfg.process_noise)
    n_steps = len(truths)

    pos_err = {name: [] for name in cfg.selected_filters}
    rot_err = {name: [] for name in cfg.selected_filters}
    meas_pos_err = []
    meas_rot_err = []
    n_failed = 0

    for run in range(cfg.mc_runs):
        result = run_single(cfg, run, truths, reports, commands)
        if any(msg is not None for msg in result.failed.values()):
            n_failed += 1
            continue
        for name in cfg.selected_filters:
            perr = np.empty(n_steps)
            rerr = np.empty(n_steps)
            for k in range(n_steps):
                p, r = _pose_errors(result.estimates[name][k], truths[k])
                perr[k] = np.linalg.norm(p)
                rerr[k] = np.linalg.norm(r)
            pos_err[name].append(perr)
            rot_err[name].append(rerr)
        mp = np.empty(n_steps)
        mr = np.empty(n_steps)
        for k in range(n_steps):
            p, r = _pose_errors(result.measurements[k].pose, truths[k])
            mp[k] = np.linalg.norm(p)
            mr[k] = np.linalg.norm(r)
        meas_pos_err.append(mp)
        meas_rot_err.append(mr)

    if not meas_pos_err:
        raise RadioPoseError("all Monte Carlo runs failed")

    filters = {
        name: _metrics_from_errors(np.array(pos_err[name]), np.array(rot_err[name]))
        for name in cfg.selected_filters
    }
    time_s = np.cumsum([cmd.dt for cmd in commands])
    return MetricSeries(
        time_s=time_s,
        filters=filters,
        measurement=_metrics_from_errors(np.array(meas_pos_err), np.array(meas_rot_err)),
        n_runs=cfg.mc_runs,
        n_failed_runs=n_failed,
    )


def bounds_sweep(cfg: ScenarioConfig, powers_dbm) -> list:
    """PEB/RMEB at the start pose for each transmit power, identical beams.

    Unobservable rows carry NaN bounds and observable=False; the sweep
    continues past them.
    """
    powers = list(powers_dbm)
    if not powers:
        raise ValueError("powers_dbm must be nonempty")
    beams = draw_beams(cfg.anchors, cfg.ue_array, cfg.signal)
    rows = []
    for power in powers:
        sig = replace(cfg.signal, tx_power_dbm=float(power))
        try:
            report = pose_error_bounds(cfg.ue_start, cfg.anchors, cfg.ue_array, sig, beams)
            rows.append(
                {
                    "power_dbm": float(power),
                    "peb_m": report.peb_m,
                    "rmeb_rad": report.rmeb_rad,
                    "observable": True,
                }
            )
        except UnobservableState:
            rows.append(
                {"power_dbm": float(power), "peb_m": np.nan, "rmeb_rad": np.nan, "observable": False}
            )
    return rows


def mean_sample_snr_db(cfg: ScenarioConfig, pose: Pose | None = None, beams: BeamSet | None = None) -> float:
    """Mean post-beamforming per-sample SNR over anchors, beams, subcarriers."""
    pose = pose if pose is not None else cfg.ue_start
    beams = beams if beams is not None else draw_beams(cfg.anchors, cfg.ue_array, cfg.signal)
    mu = noise_free_signal(pose, cfg.anchors, cfg.ue_array, cfg.signal, beams)
    snr = float(np.mean(np.abs(mu) ** 2) / cfg.signal.noise_variance_w)
    return 10.0 * np.log10(snr)


def power_for_target_snr(cfg: ScenarioConfig, target_snr_db: float, pose: Pose | None = None) -> float:
    """Transmit power (dBm) at which the mean per-sample SNR hits the target."""
    baseline = mean_sample_snr_db(cfg, pose)
    return cfg.signal.tx_power_dbm + (target_snr_db - baseline)


def bootstrap_mean_diff(x, y, n_boot: int = 2000, seed: int = 0) -> np.ndarray:
    """Bootstrap samples of mean(x) - mean(y) under paired run resampling."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise LengthMismatch(f"shape {x.shape} vs {y.shape}")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, x.size, size=(n_boot, x.size))
    return x[idx].mean(axis=1) - y[idx].mean(axis=1)


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------


def _format_cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def emit_csv(table, path) -> None:
    """Write an RFC-4180 CSV (CRLF line endings, header row, shortest
    round-trip float formatting).

    ``table`` is a (header, rows) pair with ``header`` a list of column
    names and ``rows`` an iterable of records. OSError propagates to the
    caller (the CLI maps it to its I/O exit code).
    """
    header, rows = table
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(v) for v in row])


def bounds_table(rows) -> tuple:
    header = ["power_dbm", "peb_m", "rmeb_rad"]
    records = [(r["power_dbm"], r["peb_m"], r["rmeb_rad"]) for r in rows]
    return header, records


def metric_table(series: MetricSeries) -> tuple:
    """step,time_s plus suffixed RMSE columns per filter and the raw measurement."""
    names = list(series.filters)
    header = ["step", "time_s"]
    for name in names + ["meas"]:
        header += [f"pos_rmse_m_{name}", f"rot_rmse_rad_{name}"]
    records = []
    for k, t in enumerate(series.time_s):
        row = [k, t]
        for name in names:
            row += [series.filters[name].pos_rmse_m[k], series.filters[name].rot_rmse_rad[k]]
        row += [series.measurement.pos_rmse_m[k], series.measurement.rot_rmse_rad[k]]
        records.append(row)
    return header, records


def cdf_table(metrics: FilterMetrics) -> tuple:
    err, cdf = metrics.terminal_rotation_cdf()
    return ["error_rad", "cdf"], list(zip(err, cdf))


# ---------------------------------------------------------------------------
# Scenario file I/O (YAML, units spelled out in key names)
# ---------------------------------------------------------------------------


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    return {
        "seed": cfg.seed,
        "mc_runs": cfg.mc_runs,
        "filter_selection": cfg.filter_selection,
        "measurement_noise_scale": cfg.measurement_noise_scale,
        "process_noise_rho_m": cfg.process_noise_rho_m,
        "process_noise_rot_rad": cfg.process_noise_rot_rad,
        "signal": {
            "carrier_hz": cfg.signal.carrier_hz,
            "subcarrier_spacing_hz": cfg.signal.subcarrier_spacing_hz,
            "num_subcarriers": cfg.signal.num_subcarriers,
            "num_transmissions": cfg.signal.num_transmissions,
            "tx_power_dbm": cfg.signal.tx_power_dbm,
            "noise_psd_dbm_hz": cfg.signal.noise_psd_dbm_hz,
            "bandwidth_hz": cfg.signal.bandwidth_hz,
            "clock_bias_s": cfg.signal.clock_bias_s,
            "rng_seed": cfg.signal.rng_seed,
        },
        "anchors": [
            {
                "position_m": np.asarray(a.position).tolist(),
                "orientation_deg_zyx": np.rad2deg(
                    _euler_for_io(a.orientation)
                ).tolist(),
                "array_shape": _grid_shape(a.array),
            }
            for a in cfg.anchors
        ],
        "ue": {
            "start_position_m": np.asarray(cfg.ue_start.position).tolist(),
            "start_orientation_deg_zyx": np.rad2deg(_euler_for_io(cfg.ue_start.rotation)).tolist(),
            "array_shape": _grid_shape(cfg.ue_array),
        },
        "segments": [
            {
                "v_mps": np.asarray(s.v).tolist(),
                "w_radps": np.asarray(s.w).tolist(),
                "steps": s.steps,
                "dt_s": s.dt,
            }
            for s in cfg.segments
        ],
    }


def _euler_for_io(rotation: np.ndarray) -> np.ndarray:
    return euler_from_rotation(rotation)


def _grid_shape(array: ArrayGeometry) -> list:
    n = array.num_elements
    side = int(round(np.sqrt(n)))
    if side * side == n:
        return [side, side]
    return [n, 1]


def save_scenario(cfg: ScenarioConfig, path) -> None:
    with open(path, "w") as handle:
        yaml.safe_dump(scenario_to_dict(cfg), handle, sort_keys=False)


def load_scenario(path) -> ScenarioConfig:
    """Parse a YAML scenario file; raises ConfigError on any schema problem."""
    try:
        with open(path) as handle:
            raw = yaml.safe_load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("scenario file must contain a mapping")
    return scenario_from_dict(raw)


def scenario_from_dict(raw: dict) -> ScenarioConfig:
    try:
        sig_raw = dict(raw["signal"])
        signal = SignalConfig(
            carrier_hz=float(sig_raw["carrier_hz"]),
            subcarrier_spacing_hz=float(sig_raw["subcarrier_spacing_hz"]),
            num_subcarriers=int(sig_raw["num_subcarriers"]),
            num_transmissions=int(sig_raw["num_transmissions"]),
            tx_power_dbm=float(sig_raw["tx_power_dbm"]),
            noise_psd_dbm_hz=float(sig_raw["noise_psd_dbm_hz"]),
            bandwidth_hz=float(sig_raw["bandwidth_hz"]) if "bandwidth_hz" in sig_raw else None,
            clock_bias_s=float(sig_raw.get("clock_bias_s", 0.0)),
            rng_seed=int(sig_raw.get("rng_seed", 0)),
        )
        anchors = []
        for a in raw["anchors"]:
            nx, ny = (int(v) for v in a["array_shape"])
            anchors.append(
                AnchorConfig(
                    position=np.asarray(a["position_m"], dtype=float),
                    orientation=rotation_from_euler(np.deg2rad(np.asarray(a["orientation_deg_zyx"], dtype=float))),
                    array=ArrayGeometry.half_wavelength_upa(nx, ny, signal.carrier_hz),
                )
            )
        ue_raw = raw["ue"]
        nx, ny = (int(v) for v in ue_raw["array_shape"])
        ue_array = ArrayGeometry.half_wavelength_upa(nx, ny, signal.carrier_hz)
        ue_start = Pose.from_rotation_position(
            rotation_from_euler(np.deg2rad(np.asarray(ue_raw["start_orientation_deg_zyx"], dtype=float))),
            np.asarray(ue_raw["start_position_m"], dtype=float),
        )
        segments = [
            TrajectorySegment(
                v=np.asarray(s["v_mps"], dtype=float),
                w=np.asarray(s["w_radps"], dtype=float),
                steps=int(s["steps"]),
                dt=float(s["dt_s"]),
            )
            for s in raw["segments"]
        ]
        return ScenarioConfig(
            anchors=tuple(anchors),
            ue_array=ue_array,
            signal=signal,
            ue_start=ue_start,
            segments=tuple(segments),
            mc_runs=int(raw.get("mc_runs", 100)),
            seed=int(raw.get("seed", 0)),
            filter_selection=str(raw.get("filter_selection", "all")),
            measurement_noise_scale=float(raw.get("measurement_noise_scale", 1.0)),
            process_noise_rho_m=float(raw.get("process_noise_rho_m", 0.01)),
            process_noise_rot_rad=float(raw.get("process_noise_rot_rad", 0.005)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad scenario configuration: {exc}") from exc
