"""End-to-end runs: truth, sensors, filter, detection, metrics, CSV.

A run is fully determined by (ScenarioConfig, mode, filter kind): truth is
integrated on the fixed grid, sensors are sampled from per-role RNG streams
derived from the scenario seed, faults are injected, and the chosen filter
is stepped with the chosen FDIR policy. Nothing here keeps global state, so
runs with independent configs can execute concurrently (``compare_run``
does exactly that).
"""

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .attitude import align_hemisphere
from .dynamics import integrate
from .fdir import FdirSupervisor, chi2_quantile
from .filters import (
    FilterConfig,
    RigidBodyProcessModel,
    attitude_measurement,
    estimate_stats,
    make_filter,
)
from .scenario import ScenarioError
from .sensors import FaultInjector, derive_stream, make_layout, stack_measurements

__all__ = [
    "RunResult",
    "Metrics",
    "run_scenario",
    "build_filter_config",
    "compute_metrics",
    "write_csv",
    "compare_run",
    "MODES",
]

MODES = ("simulate", "estimate", "fdir")


@dataclass(frozen=True)
class RunResult:
    """One run's full time series.

    ``truth`` has n+1 rows (includes t0); every per-measurement series has
    n rows for steps k = 1..n at times t_k. ``measurements`` is the faulted
    stream the filter consumed; ``measurements_clean`` is the same stream
    before fault injection. Filter fields are None in simulate mode;
    ``reports`` is empty when no detection policy ran.
    """

    cfg: object
    mode: str
    filter_kind: str
    t: np.ndarray
    truth: np.ndarray
    measurements_clean: np.ndarray
    measurements: np.ndarray
    estimates: np.ndarray
    variances: np.ndarray
    nis: np.ndarray
    records: tuple
    reports: tuple

    @property
    def layout(self):
        return make_layout(self.cfg.parameterization)


@dataclass(frozen=True)
class Metrics:
    """Scalar summaries of one run.

    RMSE vectors are per state component over t >= settle. ``rmse_bias``
    compares the bias estimate against the true gyro bias and is None
    without augmentation. ``detection_latency`` is first in-window
    detection minus first fault onset (None when nothing was detected or
    no fault was injected); ``false_alarms`` counts detections outside
    fault windows. A sequence monitor's window keeps it flagged for up to
    ``window`` steps after a fault clears, so fault windows are extended
    by that much before counting false alarms.
    """

    settle: float
    rmse_attitude: np.ndarray
    rmse_rates: np.ndarray
    rmse_bias: np.ndarray
    detection_latency: float
    false_alarms: int
    missed_detection: bool
    nis_mean: float
    nis_exceedance: float


def simulate_truth(cfg):
    """Integrate the truth trajectory described by the scenario."""
    torque = "gravity_gradient" if cfg.gravity_gradient else "none"
    return integrate(
        cfg.initial_state, cfg.dt, cfg.n_steps, cfg.principal,
        torque_model=torque, elements=cfg.elements,
        parameterization=cfg.parameterization,
    )


def sample_measurements(cfg, traj, layout):
    """Sample the sensor suite along the trajectory and inject faults.

    Returns:
        (clean, faulted): arrays (n, layout.dim) for steps k = 1..n.
    """
    streams = {name: derive_stream(cfg.seed, name) for name in layout.sensors}
    att = slice(0, layout.attitude_len())
    rates = slice(layout.attitude_len(), layout.attitude_len() + 3)
    n = cfg.n_steps
    clean = np.empty((n, layout.dim))
    for k in range(1, n + 1):
        state = traj.states[k]
        parts = {
            "star_tracker": cfg.star_tracker.sample(state[att], streams["star_tracker"]),
            "magnetometer": cfg.magnetometer.sample(state[att], streams["magnetometer"]),
            "gyro": cfg.gyro.sample(state[rates], streams["gyro"]),
        }
        clean[k - 1] = stack_measurements(layout, parts)
    injector = FaultInjector(cfg.faults, layout)
    faulted = np.empty_like(clean)
    for k in range(1, n + 1):
        faulted[k - 1] = injector.apply(clean[k - 1], traj.t[k])
    return clean, faulted


def build_filter_config(cfg, layout):
    """Assemble the FilterConfig a scenario describes."""
    state_dim = 10 if cfg.bias_states else 7
    meas = attitude_measurement(layout, cfg.r_blocks, state_dim)
    proc = RigidBodyProcessModel(
        cfg.principal, cfg.dt, bias_states=cfg.bias_states,
        torque_model="gravity_gradient" if cfg.filter_gravity_gradient else "none",
        elements=cfg.elements,
    )
    q_diag = [cfg.q_attitude] * 4 + [cfg.q_rates] * 3
    if cfg.bias_states:
        q_diag += [cfg.q_bias] * 3
    return FilterConfig(
        process=proc, measurement=meas, Q=np.diag(q_diag),
        x0=cfg.x0, P0=cfg.p0_scale * np.eye(state_dim),
        fd_eps=cfg.fd_eps,
        ukf_alpha=cfg.ukf_alpha, ukf_beta=cfg.ukf_beta, ukf_kappa=cfg.ukf_kappa,
        ukf_detector_r=cfg.ukf_detector_r,
        pf_particles=cfg.pf_particles, pf_ess_threshold=cfg.pf_ess_threshold,
    )


def run_scenario(cfg, mode="fdir", filter_kind=None):
    """Execute one scenario.

    Args:
        cfg: validated ScenarioConfig.
        mode: "simulate" (truth + measurements), "estimate" (adds the
            filter, detection off), or "fdir" (adds the scenario's policy).
        filter_kind: override the scenario's filter selection.

    Returns:
        RunResult. Deterministic for fixed inputs.
    """
    if mode not in MODES:
        raise ValueError("mode must be one of %s" % (MODES,))
    layout = make_layout(cfg.parameterization)
    traj = simulate_truth(cfg)
    clean, faulted = sample_measurements(cfg, traj, layout)
    kind = filter_kind if filter_kind is not None else cfg.filter_kind

    if mode == "simulate":
        return RunResult(
            cfg=cfg, mode=mode, filter_kind="none", t=traj.t, truth=traj.states,
            measurements_clean=clean, measurements=faulted,
            estimates=None, variances=None, nis=None, records=None, reports=(),
        )
    if cfg.parameterization != "quaternion":
        raise ScenarioError(
            "parameterization: estimation runs need quaternion mode "
            "(euler scenarios are simulate-only)"
        )

    fcfg = build_filter_config(cfg, layout)
    rng = derive_stream(cfg.seed, "pf") if kind == "pf" else None
    filt = make_filter(kind, fcfg, rng=rng)
    policy = cfg.policy if mode == "fdir" else "none"
    supervisor = FdirSupervisor(policy, cfg.detector, layout.slices)

    n = cfg.n_steps
    state_dim = fcfg.process.dim
    estimates = np.empty((n, state_dim))
    variances = np.empty((n, state_dim))
    nis = np.empty(n)
    records = []
    belief = filt.initial_belief()
    for k in range(1, n + 1):
        try:
            belief, rec = filt.step(belief, faulted[k - 1], traj.t[k],
                                    decide=supervisor.decide)
        except Exception as exc:
            raise RuntimeError("filter step %d (t=%.3f) failed: %s" % (k, traj.t[k], exc)) from exc
        mu, var = estimate_stats(belief, fcfg.process)
        estimates[k - 1] = mu
        variances[k - 1] = var
        nis[k - 1] = rec.nis
        records.append(rec)

    return RunResult(
        cfg=cfg, mode=mode, filter_kind=kind, t=traj.t, truth=traj.states,
        measurements_clean=clean, measurements=faulted,
        estimates=estimates, variances=variances, nis=nis,
        records=tuple(records), reports=tuple(supervisor.reports),
    )


def _fault_windows(cfg, extend=0.0):
    out = []
    for f in cfg.faults:
        if f.t_start >= cfg.t_end:  # fault never onsets within the horizon
            continue
        end = float("inf") if f.kind == "constant_bias" else f.t_start + f.duration
        out.append((f.t_start, end + extend))
    return out


def _in_windows(t, windows):
    return any(lo <= t < hi for lo, hi in windows)


def compute_metrics(result, settle=20.0):
    """Summarize a run; see Metrics for the conventions.

    The quaternion estimate is sign-aligned to the truth row before
    differencing so the q/-q ambiguity never shows up as error.
    """
    if result.estimates is None:
        raise ValueError("metrics need a run with filter estimates")
    cfg = result.cfg
    t = result.t[1:]
    mask = t >= settle
    if not mask.any():
        mask = np.ones_like(t, dtype=bool)
    truth = result.truth[1:]
    est = result.estimates

    att_err = np.empty((mask.sum(), 4))
    idx = np.flatnonzero(mask)
    for row, k in enumerate(idx):
        q_est = align_hemisphere(est[k, :4], truth[k, :4])
        att_err[row] = q_est - truth[k, :4]
    rmse_att = np.sqrt(np.mean(att_err ** 2, axis=0))
    rate_err = est[mask, 4:7] - truth[mask, 4:7]
    rmse_rates = np.sqrt(np.mean(rate_err ** 2, axis=0))
    rmse_bias = None
    if est.shape[1] == 10:
        bias_err = est[mask, 7:10] - cfg.gyro.bias
        rmse_bias = np.sqrt(np.mean(bias_err ** 2, axis=0))

    extend = cfg.detector.window * cfg.dt if cfg.policy == "sequence" else 0.0
    windows = _fault_windows(cfg, extend)
    latency = None
    false_alarms = 0
    detected_in_window = False
    for rep in result.reports:
        if not rep.detected:
            continue
        if windows and _in_windows(rep.t, windows):
            detected_in_window = True
            if latency is None:
                onset = min(lo for lo, hi in windows if lo <= rep.t < hi)
                latency = rep.t - onset
        else:
            false_alarms += 1
    missed = bool(windows) and result.mode == "fdir" \
        and cfg.policy != "none" and not detected_in_window

    gamma = chi2_quantile(result.measurements.shape[1], cfg.detector.alpha)
    return Metrics(
        settle=settle,
        rmse_attitude=rmse_att,
        rmse_rates=rmse_rates,
        rmse_bias=rmse_bias,
        detection_latency=latency,
        false_alarms=false_alarms,
        missed_detection=missed,
        nis_mean=float(np.mean(result.nis)),
        nis_exceedance=float(np.mean(result.nis > gamma)),
    )


def _truth_names(mode):
    if mode == "quaternion":
        return ["true_q0", "true_q1", "true_q2", "true_q3",
                "true_wx", "true_wy", "true_wz"]
    return ["true_phi", "true_theta", "true_psi",
            "true_wx", "true_wy", "true_wz"]


def _meas_names(layout):
    names = []
    comp_att = ["q0", "q1", "q2", "q3"] if layout.mode == "quaternion" \
        else ["phi", "theta", "psi"]
    short = {"star_tracker": "st", "magnetometer": "mm", "gyro": "gyro"}
    for sensor in layout.sensors:
        comps = ["x", "y", "z"] if sensor == "gyro" else comp_att
        names += ["%s_%s" % (short[sensor], c) for c in comps]
    return names


def _state_names(prefix, dim):
    base = ["q0", "q1", "q2", "q3", "wx", "wy", "wz", "bx", "by", "bz"]
    return ["%s_%s" % (prefix, c) for c in base[:dim]]


def csv_header(result):
    """Column names for a run's CSV, in export order."""
    layout = result.layout
    names = ["t"] + _truth_names(layout.mode) + _meas_names(layout)
    if result.estimates is not None:
        dim = result.estimates.shape[1]
        names += _state_names("est", dim) + _state_names("sig3", dim)
        names += ["nis", "detected", "isolated"]
    return names


def _isolated_bits(report, layout):
    if report is None or not report.isolated:
        return 0
    bits = 0
    for i, name in enumerate(layout.sensors):
        if name in report.isolated:
            bits |= 1 << i
    return bits


def write_csv(result, path):
    """Export a run, one row per step k = 1..n, 9 significant digits.

    Fixed column order: t, truth, measurements (as the filter saw them),
    then for estimation runs: estimate, 3-sigma bounds, nis, detected flag,
    isolated-sensor bitmask (bit i = layout.sensors[i]).
    """
    layout = result.layout
    header = csv_header(result)
    with_filter = result.estimates is not None
    reports = result.reports if result.reports else None
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        n = result.measurements.shape[0]
        for k in range(n):
            row = [result.t[k + 1]]
            row += list(result.truth[k + 1])
            row += list(result.measurements[k])
            if with_filter:
                row += list(result.estimates[k])
                row += list(3.0 * np.sqrt(np.maximum(result.variances[k], 0.0)))
                rep = reports[k] if reports else None
                row += [result.nis[k],
                        1 if (rep is not None and rep.detected) else 0,
                        _isolated_bits(rep, layout)]
            writer.writerow(["%.9g" % v for v in row])


def compare_run(cfg, kinds, jobs=1):
    """Run several filters on one scenario, optionally in parallel.

    Each job derives its own RNG streams from the scenario seed, so the
    results are identical whatever the worker count.

    Returns:
        list of (kind, RunResult, Metrics) in the order of ``kinds``.
    """
    def one(kind):
        result = run_scenario(cfg, mode="fdir", filter_kind=kind)
        return kind, result, compute_metrics(result)

    if jobs <= 1 or len(kinds) <= 1:
        return [one(k) for k in kinds]
    with ThreadPoolExecutor(max_workers=min(jobs, len(kinds))) as pool:
        return list(pool.map(one, kinds))
