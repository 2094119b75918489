"""Scenario files: grammar, validation, and the bundled library.

A scenario is a YAML mapping describing one experiment end to end: truth
dynamics, sensor suite, fault list, filter setup, and detection policy.
Validation is strict — unknown keys are rejected and every error names the
offending key by its dotted path — so a typo fails at load time instead of
silently running a different experiment.

Grammar (all keys optional unless marked required; defaults in parens):

    schema_version: 1            # required, literal 1
    name: str                    # required
    description: str             # ("")
    seed: int                    # (0) master seed for all noise streams
    dt: number > 0               # (0.1) step, seconds
    t_end: number > 0            # (300.0) horizon, seconds
    parameterization: quaternion | euler    # (quaternion)
    gravity_gradient: bool       # (false) truth-side torque model
    initial:                     # required
      attitude_euler_deg: [a, b, c]   # 3-1-3 angles, degrees
      attitude_quat: [q0, q1, q2, q3] # exactly one attitude form
      rates_deg_s: [wx, wy, wz]       # exactly one rates form
      rates_rad_s: [wx, wy, wz]
    inertia: 3x3 nested list | [ixx, iyy, izz]   # required, kg m^2
    elements:                    # required
      a_km, e, i_deg, raan_deg, argp_deg, nu0_deg
    sensors:                     # (built-in defaults per mode)
      gyro: {sigma: number, bias: [bx, by, bz]}
      star_tracker: {variances: [...]}    # 4 entries (3 in euler mode)
      magnetometer: {variances: [...]}
    faults:                      # ([])
      - {kind, target, t_start, duration, magnitude, axis, hold}
    filter:
      kind: ekf | ukf | pf       # (ekf)
      gravity_gradient: bool     # (false) filter-side model
      bias_states: bool          # (false) augment with gyro bias
      q: {attitude: v, rates: v, bias: v}   # (1.0e-8, 1.0e-6, 1.0e-12)
      p0: number                 # (1.0e-2) initial covariance scale
      r: {gyro: [...], star_tracker: [...], magnetometer: [...]}
                                 # (true sensor noise) assumed variances
      x0: like `initial`, plus bias: [...]  # (truth initial state)
      fd_eps: number             # (1.0e-6) EKF Jacobian step
      ukf: {alpha, beta, kappa, detector_r}  # (0.1, 2.0, 0.0, 1.0)
      pf: {particles, ess_threshold}   # (1000, 0.5)
    detector:
      policy: none | innovation | sequence | isolation   # (none)
      alpha: number in (0, 1)    # (0.95)
      window: int >= 1           # (20)
      min_samples: int >= 1      # (5)

Note on YAML numbers: write exponents with a decimal point (``1.0e-8``).
The bare form ``1e-8`` parses as a string and is rejected with a hint.
"""

import importlib.resources
import math
from dataclasses import dataclass, replace

import numpy as np
import yaml

from .attitude import euler313_to_quat
from .dynamics import KeplerianElements, principal_moments
from .fdir import DetectorConfig
from .sensors import AttitudeSensorModel, FaultSpec, GyroModel, make_layout

__all__ = [
    "ScenarioError",
    "ScenarioConfig",
    "load_scenario",
    "load_bundled",
    "bundled_scenarios",
    "resolve_scenario",
    "with_overrides",
    "strip_faults",
]

FILTER_KINDS = ("ekf", "ukf", "pf")


class ScenarioError(ValueError):
    """Raised for any parse or validation failure; message names the key."""


def _fail(path, msg):
    raise ScenarioError("%s: %s" % (path, msg) if path else msg)


def _require_mapping(value, path):
    if not isinstance(value, dict):
        _fail(path, "expected a mapping, got %s" % type(value).__name__)
    return value


def _check_keys(mapping, allowed, path):
    for key in mapping:
        if key not in allowed:
            _fail(path, "unknown key %r (known: %s)" % (key, ", ".join(sorted(allowed))))


def _num(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        hint = ""
        if isinstance(value, str):
            try:
                float(value)
                hint = " (write the exponent with a decimal point, e.g. 1.0e-8)"
            except ValueError:
                pass
        _fail(path, "expected a number, got %r%s" % (value, hint))
    v = float(value)
    if not math.isfinite(v):
        _fail(path, "must be finite")
    return v


def _int(value, path):
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(path, "expected an integer, got %r" % (value,))
    return int(value)


def _bool(value, path):
    if not isinstance(value, bool):
        _fail(path, "expected true or false, got %r" % (value,))
    return bool(value)


def _str(value, path):
    if not isinstance(value, str):
        _fail(path, "expected a string, got %r" % (value,))
    return value


def _num_list(value, length, path):
    if not isinstance(value, list) or len(value) != length:
        _fail(path, "expected a list of %d numbers" % length)
    return np.array([_num(v, "%s[%d]" % (path, i)) for i, v in enumerate(value)])


@dataclass(frozen=True)
class ScenarioConfig:
    """A fully validated experiment description.

    ``initial_state`` is the truth start in the run's parameterization
    (length 7 quaternion mode, 6 euler mode). ``inertia`` is the full
    matrix; ``principal`` holds its body-frame principal moments, which is
    what the integrator consumes. ``r_blocks`` are the measurement noise
    variances the filter assumes, which may deliberately differ from the
    true sensor noise. ``x0`` of None means "start the filter at truth".
    """

    name: str
    description: str
    seed: int
    dt: float
    t_end: float
    parameterization: str
    gravity_gradient: bool
    initial_state: np.ndarray
    inertia: np.ndarray
    principal: tuple
    elements: KeplerianElements
    gyro: GyroModel
    star_tracker: AttitudeSensorModel
    magnetometer: AttitudeSensorModel
    faults: tuple
    filter_kind: str
    filter_gravity_gradient: bool
    bias_states: bool
    q_attitude: float
    q_rates: float
    q_bias: float
    p0_scale: float
    r_blocks: dict
    x0: np.ndarray
    fd_eps: float
    ukf_alpha: float
    ukf_beta: float
    ukf_kappa: float
    ukf_detector_r: float
    pf_particles: int
    pf_ess_threshold: float
    policy: str
    detector: DetectorConfig

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))


def _parse_attitude(mapping, path, mode):
    has_euler = "attitude_euler_deg" in mapping
    has_quat = "attitude_quat" in mapping
    if has_euler == has_quat:
        _fail(path, "give exactly one of attitude_euler_deg or attitude_quat")
    if has_quat and mode == "euler":
        _fail(path + ".attitude_quat", "euler runs take attitude_euler_deg")
    if has_euler:
        ang = np.radians(_num_list(mapping["attitude_euler_deg"], 3,
                                   path + ".attitude_euler_deg"))
        if mode == "euler":
            if abs(math.sin(ang[1])) < 1e-9:
                _fail(path + ".attitude_euler_deg",
                      "second angle too close to the coordinate singularity")
            return ang
        return euler313_to_quat(ang)
    q = _num_list(mapping["attitude_quat"], 4, path + ".attitude_quat")
    n = np.linalg.norm(q)
    if abs(n - 1.0) > 1e-6:
        _fail(path + ".attitude_quat", "must have unit norm (got %.6g)" % n)
    return q / n


def _parse_rates(mapping, path):
    has_deg = "rates_deg_s" in mapping
    has_rad = "rates_rad_s" in mapping
    if has_deg == has_rad:
        _fail(path, "give exactly one of rates_deg_s or rates_rad_s")
    if has_deg:
        return np.radians(_num_list(mapping["rates_deg_s"], 3, path + ".rates_deg_s"))
    return _num_list(mapping["rates_rad_s"], 3, path + ".rates_rad_s")


def _parse_inertia(value, path):
    if not isinstance(value, list) or len(value) != 3:
        _fail(path, "expected [ixx, iyy, izz] or a 3x3 nested list")
    if all(isinstance(row, list) for row in value):
        m = np.vstack([_num_list(row, 3, "%s[%d]" % (path, i))
                       for i, row in enumerate(value)])
    else:
        m = np.diag(_num_list(value, 3, path))
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-9 * abs(m).max()):
        _fail(path, "matrix must be symmetric")
    try:
        moments, _ = principal_moments(m)
    except ValueError as exc:
        _fail(path, str(exc))
    return m, moments


def _parse_elements(mapping, path):
    mapping = _require_mapping(mapping, path)
    keys = ("a_km", "e", "i_deg", "raan_deg", "argp_deg", "nu0_deg")
    _check_keys(mapping, keys, path)
    vals = {}
    for key in keys:
        if key not in mapping:
            _fail("%s.%s" % (path, key), "is required")
        vals[key] = _num(mapping[key], "%s.%s" % (path, key))
    if vals["a_km"] <= 0.0:
        _fail(path + ".a_km", "must be positive")
    if not 0.0 <= vals["e"] < 1.0:
        _fail(path + ".e", "must satisfy 0 <= e < 1 (got %g)" % vals["e"])
    return KeplerianElements.from_degrees(
        a=vals["a_km"], e=vals["e"], i=vals["i_deg"],
        raan=vals["raan_deg"], argp=vals["argp_deg"], nu0=vals["nu0_deg"],
    )


# default sensor noise, per attitude parameterization
_DEFAULT_SENSORS = {
    "quaternion": {
        "gyro": {"sigma": 0.005, "bias": [0.02, -0.015, 0.01]},
        "star_tracker": {"variances": [0.001, 0.001, 0.001, 0.001]},
        "magnetometer": {"variances": [0.01, 0.02, 0.05, 0.03]},
    },
    "euler": {
        "gyro": {"sigma": 0.005, "bias": [0.02, -0.015, 0.01]},
        "star_tracker": {"variances": [0.001, 0.001, 0.001]},
        "magnetometer": {"variances": [0.01, 0.02, 0.05]},
    },
}


def _parse_sensors(mapping, path, mode):
    att_len = 4 if mode == "quaternion" else 3
    merged = {k: dict(v) for k, v in _DEFAULT_SENSORS[mode].items()}
    if mapping is not None:
        mapping = _require_mapping(mapping, path)
        _check_keys(mapping, ("gyro", "star_tracker", "magnetometer"), path)
        for name, body in mapping.items():
            merged[name] = _require_mapping(body, "%s.%s" % (path, name))
    gy = merged["gyro"]
    _check_keys(gy, ("sigma", "bias"), path + ".gyro")
    sigma = _num(gy.get("sigma", 0.005), path + ".gyro.sigma")
    if sigma < 0.0:
        _fail(path + ".gyro.sigma", "must be nonnegative")
    bias = _num_list(gy.get("bias", [0.0, 0.0, 0.0]), 3, path + ".gyro.bias")
    out = {"gyro": GyroModel(sigma, bias)}
    for name in ("star_tracker", "magnetometer"):
        body = merged[name]
        _check_keys(body, ("variances",), "%s.%s" % (path, name))
        if "variances" not in body:
            _fail("%s.%s.variances" % (path, name), "is required")
        var = _num_list(body["variances"], att_len, "%s.%s.variances" % (path, name))
        if np.any(var < 0.0):
            _fail("%s.%s.variances" % (path, name), "must be nonnegative")
        out[name] = AttitudeSensorModel(name, var)
    return out


def _parse_faults(value, path, layout):
    if value is None:
        return ()
    if not isinstance(value, list):
        _fail(path, "expected a list of fault entries")
    out = []
    for i, body in enumerate(value):
        p = "%s[%d]" % (path, i)
        body = _require_mapping(body, p)
        _check_keys(body, ("kind", "target", "t_start", "duration",
                           "magnitude", "axis", "hold"), p)
        for req in ("kind", "target", "t_start"):
            if req not in body:
                _fail("%s.%s" % (p, req), "is required")
        kind = _str(body["kind"], p + ".kind")
        target = _str(body["target"], p + ".target")
        if target not in layout.slices:
            _fail(p + ".target", "unknown sensor %r" % target)
        axis = body.get("axis")
        if axis is not None:
            axis = _int(axis, p + ".axis")
            width = layout.slices[target].stop - layout.slices[target].start
            if not 0 <= axis < width:
                _fail(p + ".axis", "out of range for %s (width %d)" % (target, width))
        try:
            spec = FaultSpec(
                kind=kind,
                target=target,
                t_start=_num(body["t_start"], p + ".t_start"),
                duration=_num(body.get("duration", 0.0), p + ".duration"),
                magnitude=_num(body.get("magnitude", 0.0), p + ".magnitude"),
                axis=axis,
                hold=_bool(body.get("hold", False), p + ".hold"),
            )
        except ValueError as exc:
            _fail(p, str(exc))
        out.append(spec)
    return tuple(out)


def _parse_filter(mapping, path, mode, sensors, bias_default):
    mapping = _require_mapping(mapping, path) if mapping is not None else {}
    _check_keys(mapping, ("kind", "gravity_gradient", "bias_states", "q", "p0",
                          "r", "x0", "fd_eps", "ukf", "pf"), path)
    kind = _str(mapping.get("kind", "ekf"), path + ".kind")
    if kind not in FILTER_KINDS:
        _fail(path + ".kind", "must be one of %s" % (FILTER_KINDS,))
    q = mapping.get("q")
    q = _require_mapping(q, path + ".q") if q is not None else {}
    _check_keys(q, ("attitude", "rates", "bias"), path + ".q")
    q_att = _num(q.get("attitude", 1e-8), path + ".q.attitude")
    q_rat = _num(q.get("rates", 1e-6), path + ".q.rates")
    q_bia = _num(q.get("bias", 1e-12), path + ".q.bias")
    for label, v in (("attitude", q_att), ("rates", q_rat), ("bias", q_bia)):
        if v < 0.0:
            _fail("%s.q.%s" % (path, label), "must be nonnegative")
    p0 = _num(mapping.get("p0", 1e-2), path + ".p0")
    if p0 <= 0.0:
        _fail(path + ".p0", "must be positive")

    att_len = 4 if mode == "quaternion" else 3
    widths = {"gyro": 3, "star_tracker": att_len, "magnetometer": att_len}
    r_blocks = {
        "gyro": np.full(3, sensors["gyro"].sigma ** 2),
        "star_tracker": sensors["star_tracker"].variances.copy(),
        "magnetometer": sensors["magnetometer"].variances.copy(),
    }
    r = mapping.get("r")
    if r is not None:
        r = _require_mapping(r, path + ".r")
        _check_keys(r, tuple(widths), path + ".r")
        for name, vec in r.items():
            r_blocks[name] = _num_list(vec, widths[name], "%s.r.%s" % (path, name))
    for name, vec in r_blocks.items():
        if np.any(vec <= 0.0):
            _fail("%s.r.%s" % (path, name),
                  "assumed variances must be positive (override r for noiseless sensors)")

    bias_states = _bool(mapping.get("bias_states", bias_default), path + ".bias_states")
    x0 = None
    if "x0" in mapping:
        body = _require_mapping(mapping["x0"], path + ".x0")
        _check_keys(body, ("attitude_euler_deg", "attitude_quat", "rates_deg_s",
                           "rates_rad_s", "bias"), path + ".x0")
        att = _parse_attitude(body, path + ".x0", mode)
        rates = _parse_rates(body, path + ".x0")
        parts = [att, rates]
        if bias_states:
            parts.append(_num_list(body.get("bias", [0.0, 0.0, 0.0]), 3,
                                   path + ".x0.bias"))
        elif "bias" in body:
            _fail(path + ".x0.bias", "needs filter.bias_states: true")
        x0 = np.concatenate(parts)

    fd_eps = _num(mapping.get("fd_eps", 1e-6), path + ".fd_eps")
    if fd_eps <= 0.0:
        _fail(path + ".fd_eps", "must be positive")
    ukf = mapping.get("ukf")
    ukf = _require_mapping(ukf, path + ".ukf") if ukf is not None else {}
    _check_keys(ukf, ("alpha", "beta", "kappa", "detector_r"), path + ".ukf")
    alpha = _num(ukf.get("alpha", 0.1), path + ".ukf.alpha")
    beta = _num(ukf.get("beta", 2.0), path + ".ukf.beta")
    kappa = _num(ukf.get("kappa", 0.0), path + ".ukf.kappa")
    detector_r = _num(ukf.get("detector_r", 1.0), path + ".ukf.detector_r")
    if not 0.0 < alpha <= 1.0:
        _fail(path + ".ukf.alpha", "must be in (0, 1]")
    if kappa < 0.0:
        _fail(path + ".ukf.kappa", "must be >= 0")
    if detector_r < 0.0:
        _fail(path + ".ukf.detector_r", "must be >= 0")
    pf = mapping.get("pf")
    pf = _require_mapping(pf, path + ".pf") if pf is not None else {}
    _check_keys(pf, ("particles", "ess_threshold"), path + ".pf")
    particles = _int(pf.get("particles", 1000), path + ".pf.particles")
    ess = _num(pf.get("ess_threshold", 0.5), path + ".pf.ess_threshold")
    if particles < 10:
        _fail(path + ".pf.particles", "must be >= 10")
    if not 0.0 < ess <= 1.0:
        _fail(path + ".pf.ess_threshold", "must be in (0, 1]")

    return {
        "filter_kind": kind,
        "filter_gravity_gradient": _bool(mapping.get("gravity_gradient", False),
                                         path + ".gravity_gradient"),
        "bias_states": bias_states,
        "q_attitude": q_att, "q_rates": q_rat, "q_bias": q_bia,
        "p0_scale": p0, "r_blocks": r_blocks, "x0": x0, "fd_eps": fd_eps,
        "ukf_alpha": alpha, "ukf_beta": beta, "ukf_kappa": kappa,
        "ukf_detector_r": detector_r,
        "pf_particles": particles, "pf_ess_threshold": ess,
    }


def _parse_detector(mapping, path):
    mapping = _require_mapping(mapping, path) if mapping is not None else {}
    _check_keys(mapping, ("policy", "alpha", "window", "min_samples"), path)
    policy = _str(mapping.get("policy", "none"), path + ".policy")
    if policy not in ("none", "innovation", "sequence", "isolation"):
        _fail(path + ".policy", "must be none, innovation, sequence, or isolation")
    try:
        det = DetectorConfig(
            alpha=_num(mapping.get("alpha", 0.95), path + ".alpha"),
            window=_int(mapping.get("window", 20), path + ".window"),
            min_samples=_int(mapping.get("min_samples", 5), path + ".min_samples"),
        )
    except ValueError as exc:
        _fail(path, str(exc))
    return policy, det


_TOP_KEYS = ("schema_version", "name", "description", "seed", "dt", "t_end",
             "parameterization", "gravity_gradient", "initial", "inertia",
             "elements", "sensors", "faults", "filter", "detector")


def _from_mapping(doc):
    doc = _require_mapping(doc, "")
    _check_keys(doc, _TOP_KEYS, "")
    if "schema_version" not in doc:
        _fail("schema_version", "is required")
    if _int(doc["schema_version"], "schema_version") != 1:
        _fail("schema_version", "this build reads version 1")
    if "name" not in doc:
        _fail("name", "is required")
    name = _str(doc["name"], "name")
    description = _str(doc.get("description", ""), "description")
    seed = _int(doc.get("seed", 0), "seed")
    if seed < 0:
        _fail("seed", "must be nonnegative")
    dt = _num(doc.get("dt", 0.1), "dt")
    t_end = _num(doc.get("t_end", 300.0), "t_end")
    if dt <= 0.0:
        _fail("dt", "must be positive")
    if t_end <= 0.0:
        _fail("t_end", "must be positive")
    if t_end / dt < 1.0:
        _fail("t_end", "must cover at least one step")
    mode = _str(doc.get("parameterization", "quaternion"), "parameterization")
    if mode not in ("quaternion", "euler"):
        _fail("parameterization", "must be quaternion or euler")
    gg = _bool(doc.get("gravity_gradient", False), "gravity_gradient")

    if "initial" not in doc:
        _fail("initial", "is required")
    init = _require_mapping(doc["initial"], "initial")
    _check_keys(init, ("attitude_euler_deg", "attitude_quat", "rates_deg_s",
                       "rates_rad_s"), "initial")
    attitude = _parse_attitude(init, "initial", mode)
    rates = _parse_rates(init, "initial")
    initial_state = np.concatenate([attitude, rates])

    if "inertia" not in doc:
        _fail("inertia", "is required")
    inertia, principal = _parse_inertia(doc["inertia"], "inertia")
    if "elements" not in doc:
        _fail("elements", "is required")
    elements = _parse_elements(doc["elements"], "elements")
    sensors = _parse_sensors(doc.get("sensors"), "sensors", mode)
    layout = make_layout(mode)
    faults = _parse_faults(doc.get("faults"), "faults", layout)
    fconf = _parse_filter(doc.get("filter"), "filter", mode, sensors, False)
    policy, detector = _parse_detector(doc.get("detector"), "detector")

    x0 = fconf.pop("x0")
    if x0 is None:
        x0 = initial_state.copy()
        if fconf["bias_states"]:
            x0 = np.concatenate([x0, np.zeros(3)])
    return ScenarioConfig(
        name=name, description=description, seed=seed, dt=dt, t_end=t_end,
        parameterization=mode, gravity_gradient=gg,
        initial_state=initial_state, inertia=inertia, principal=tuple(principal),
        elements=elements, gyro=sensors["gyro"],
        star_tracker=sensors["star_tracker"], magnetometer=sensors["magnetometer"],
        faults=faults, policy=policy, detector=detector, x0=x0, **fconf,
    )


def load_scenario(path):
    """Load and validate a scenario file.

    Raises:
        ScenarioError: unreadable, empty, malformed, or invalid content.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError("cannot read %s: %s" % (path, exc))
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError("%s: parse error: %s" % (path, exc))
    if doc is None:
        raise ScenarioError("%s: file is empty" % path)
    try:
        return _from_mapping(doc)
    except ScenarioError as exc:
        raise ScenarioError("%s: %s" % (path, exc))


def bundled_scenarios():
    """Names of the scenarios shipped inside the package, sorted."""
    root = importlib.resources.files("attbench") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_bundled(name):
    """Load a bundled scenario by bare name (no path, no extension)."""
    root = importlib.resources.files("attbench") / "scenarios"
    res = root / (name + ".yaml")
    if not res.is_file():
        raise ScenarioError(
            "no bundled scenario %r (available: %s)" % (name, ", ".join(bundled_scenarios()))
        )
    doc = yaml.safe_load(res.read_text(encoding="utf-8"))
    try:
        return _from_mapping(doc)
    except ScenarioError as exc:
        raise ScenarioError("bundled scenario %s: %s" % (name, exc))


def resolve_scenario(ref):
    """Load a scenario from a filesystem path or a bundled name."""
    import os

    if os.path.exists(ref):
        return load_scenario(ref)
    if os.sep not in ref and not ref.endswith((".yaml", ".yml", ".cfg")):
        try:
            return load_bundled(ref)
        except ScenarioError:
            pass
    raise ScenarioError(
        "scenario %r is neither a readable file nor a bundled name (bundled: %s)"
        % (ref, ", ".join(bundled_scenarios()))
    )


def with_overrides(cfg, seed=None, dt=None, t_end=None, filter_kind=None):
    """Copy a config with command-line overrides applied and revalidated."""
    changes = {}
    if seed is not None:
        if seed < 0:
            raise ScenarioError("seed: must be nonnegative")
        changes["seed"] = int(seed)
    if dt is not None:
        if dt <= 0.0:
            raise ScenarioError("dt: must be positive")
        changes["dt"] = float(dt)
    if t_end is not None:
        if t_end <= 0.0:
            raise ScenarioError("t_end: must be positive")
        changes["t_end"] = float(t_end)
    if filter_kind is not None:
        if filter_kind not in FILTER_KINDS:
            raise ScenarioError("filter kind must be one of %s" % (FILTER_KINDS,))
        changes["filter_kind"] = filter_kind
    cfg = replace(cfg, **changes) if changes else cfg
    if cfg.t_end / cfg.dt < 1.0:
        raise ScenarioError("t_end: must cover at least one step")
    return cfg


def strip_faults(cfg):
    """The same scenario with an empty fault list (baseline twin)."""
    return replace(cfg, faults=())
