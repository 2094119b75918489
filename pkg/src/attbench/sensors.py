"""Sensor models, measurement stacking, fault injection, and RNG streams.

Attitude sensors report the raw quaternion (or 3-1-3 Euler angles) plus
additive per-component Gaussian noise; the noisy quaternion is deliberately
NOT renormalized, matching the additive measurement model the filters
assume. The gyro reports body rates plus a constant bias plus white noise.

Randomness is split per role from one master seed so that adding or removing
a sensor never perturbs the other streams: role ``name`` draws from
``SeedSequence(master_seed, spawn_key=(ROLE_KEYS[name],))``. New roles get
new keys; existing keys never move.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ROLE_KEYS",
    "derive_stream",
    "GyroModel",
    "AttitudeSensorModel",
    "MeasurementLayout",
    "make_layout",
    "stack_measurements",
    "FaultSpec",
    "FaultInjector",
]

ROLE_KEYS = {
    "gyro": 0,
    "star_tracker": 1,
    "magnetometer": 2,
    "pf": 3,
}

FAULT_KINDS = ("spike", "step", "dropout", "constant_bias", "saturation")

ATTITUDE_SENSORS = ("star_tracker", "magnetometer")


def derive_stream(master_seed, role):
    """Independent Generator for one named role, derived from the master seed."""
    try:
        key = ROLE_KEYS[role]
    except KeyError:
        raise ValueError("unknown RNG role %r (known: %s)" % (role, sorted(ROLE_KEYS)))
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(key,)))


@dataclass(frozen=True)
class GyroModel:
    """Rate gyro: y = omega + bias + sigma * N(0, I)."""

    sigma: float
    bias: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "bias", np.asarray(self.bias, dtype=float))
        if self.sigma < 0.0:
            raise ValueError("gyro sigma must be nonnegative, got %r" % (self.sigma,))
        if self.bias.shape != (3,):
            raise ValueError("gyro bias must have shape (3,)")

    def sample(self, omega_true, rng):
        return np.asarray(omega_true, dtype=float) + self.bias + self.sigma * rng.standard_normal(3)


@dataclass(frozen=True)
class AttitudeSensorModel:
    """Attitude sensor with per-component additive noise variances.

    ``variances`` has 4 entries in quaternion mode, 3 in Euler mode. Zero
    variance is allowed (noiseless sensor); the filter's measurement noise
    is configured separately.
    """

    name: str
    variances: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.variances, dtype=float)
        object.__setattr__(self, "variances", v)
        if v.ndim != 1 or v.shape[0] not in (3, 4):
            raise ValueError("variances must have shape (4,) or (3,), got %r" % (v.shape,))
        if np.any(v < 0.0):
            raise ValueError("%s variances must be nonnegative" % self.name)

    def sample(self, attitude_true, rng):
        att = np.asarray(attitude_true, dtype=float)
        if att.shape != self.variances.shape:
            raise ValueError(
                "%s: attitude has shape %r but variances %r"
                % (self.name, att.shape, self.variances.shape)
            )
        return att + np.sqrt(self.variances) * rng.standard_normal(att.shape[0])


@dataclass(frozen=True)
class MeasurementLayout:
    """Row layout of the stacked measurement vector.

    ``slices`` maps each sensor name to its row slice, in stacking order.
    """

    mode: str
    sensors: tuple
    slices: dict
    dim: int

    def attitude_len(self):
        return 4 if self.mode == "quaternion" else 3


def make_layout(mode="quaternion", sensors=("star_tracker", "magnetometer", "gyro")):
    """Build the stacked layout for the given sensor set, in the given order."""
    if mode not in ("quaternion", "euler"):
        raise ValueError("unknown measurement mode %r" % (mode,))
    att_len = 4 if mode == "quaternion" else 3
    slices = {}
    start = 0
    for name in sensors:
        if name == "gyro":
            k = 3
        elif name in ATTITUDE_SENSORS:
            k = att_len
        else:
            raise ValueError("unknown sensor %r" % (name,))
        slices[name] = slice(start, start + k)
        start += k
    return MeasurementLayout(mode=mode, sensors=tuple(sensors), slices=slices, dim=start)


def stack_measurements(layout, parts):
    """Stack per-sensor readings into one vector following the layout.

    Args:
        layout: MeasurementLayout.
        parts: dict mapping every layout sensor to its reading.

    Raises:
        ValueError: missing or extra sensors, or a reading of the wrong length.
    """
    extra = set(parts) - set(layout.sensors)
    if extra:
        raise ValueError("readings for sensors not in layout: %s" % sorted(extra))
    y = np.empty(layout.dim)
    for name in layout.sensors:
        if name not in parts:
            raise ValueError("missing reading for sensor %r" % name)
        sl = layout.slices[name]
        part = np.asarray(parts[name], dtype=float)
        if part.shape != (sl.stop - sl.start,):
            raise ValueError(
                "reading for %r has shape %r, layout expects (%d,)"
                % (name, part.shape, sl.stop - sl.start)
            )
        y[sl] = part
    return y


@dataclass(frozen=True)
class FaultSpec:
    """One injected sensor fault.

    kinds:
        spike / step: add ``magnitude`` to the target rows while active.
        dropout: zero the target rows (or hold the last clean value when
            ``hold`` is set) while active.
        constant_bias: add ``magnitude`` from t_start onward; ``duration``
            is ignored, the bias is permanent once it appears.
        saturation: clamp the target rows to [-magnitude, +magnitude]
            while active.

    ``axis`` narrows the fault to one row within the sensor block; None
    hits the whole block.
    """

    kind: str
    target: str
    t_start: float
    duration: float = 0.0
    magnitude: float = 0.0
    axis: int = None
    hold: bool = False

    def __post_init__(self):
        if self.kind not in FAULT_KINDS:
            raise ValueError("unknown fault kind %r (known: %s)" % (self.kind, FAULT_KINDS))
        if self.t_start < 0.0:
            raise ValueError("fault t_start must be nonnegative")
        if self.duration < 0.0:
            raise ValueError("fault duration must be nonnegative")
        if self.kind == "saturation" and self.magnitude <= 0.0:
            raise ValueError("saturation magnitude must be positive")

    def active(self, t):
        if self.kind == "constant_bias":
            return t >= self.t_start
        return self.t_start <= t < self.t_start + self.duration


class FaultInjector:
    """Applies a fault list to stacked measurements, step by step.

    Stateful only for hold-mode dropouts, which freeze the last value seen
    while the fault was inactive. Faults compose in list order. Call
    ``apply`` with nondecreasing times within one run.
    """

    def __init__(self, faults, layout):
        self.faults = tuple(faults)
        self.layout = layout
        for f in self.faults:
            if f.target not in layout.slices:
                raise ValueError("fault targets unknown sensor %r" % f.target)
            width = layout.slices[f.target].stop - layout.slices[f.target].start
            if f.axis is not None and not 0 <= f.axis < width:
                raise ValueError(
                    "fault axis %d out of range for %s (width %d)" % (f.axis, f.target, width)
                )
        self._held = {}

    def _rows(self, f):
        sl = self.layout.slices[f.target]
        if f.axis is None:
            return sl
        return slice(sl.start + f.axis, sl.start + f.axis + 1)

    def apply(self, y, t):
        """Return the faulted copy of y at time t (y itself is untouched)."""
        out = np.asarray(y, dtype=float).copy()
        for idx, f in enumerate(self.faults):
            rows = self._rows(f)
            if not f.active(t):
                if f.kind == "dropout" and f.hold:
                    self._held[idx] = out[rows].copy()
                continue
            if f.kind in ("spike", "step", "constant_bias"):
                out[rows] = out[rows] + f.magnitude
            elif f.kind == "dropout":
                if f.hold:
                    held = self._held.get(idx)
                    out[rows] = held if held is not None else 0.0
                else:
                    out[rows] = 0.0
            elif f.kind == "saturation":
                out[rows] = np.clip(out[rows], -f.magnitude, f.magnitude)
        return out
