"""Rigid-body attitude dynamics, orbit propagation, and fixed-step integration.

State conventions:
    quaternion mode: [q0, q1, q2, q3, wx, wy, wz]
    euler mode:      [phi, theta, psi, wx, wy, wz]   (3-1-3 sequence)

Body rates are rad/s about principal axes; the inertia is the principal-moment
triple (Ixx, Iyy, Izz) in kg m^2. A fully populated inertia matrix is reduced
to principal moments up front (``principal_moments``) and everything downstream
runs in the principal frame. No actuators are modeled, so the control term in
the rate equations is identically zero; the only external torque available is
the gravity-gradient model.

The integrator is classical fixed-step RK4. In quaternion mode the quaternion
is renormalized once per step, after the four stages are combined; the stages
themselves are left untouched so the combination stays a consistent
fourth-order scheme.
"""

from dataclasses import dataclass

import numpy as np

from . import core
from .attitude import quat_to_dcm

MU_EARTH = 398600.4418
"""Earth gravitational parameter, km^3/s^2."""

_KM_TO_M = 1.0e3

__all__ = [
    "MU_EARTH",
    "KeplerianElements",
    "Trajectory",
    "solve_kepler",
    "kepler_state",
    "body_rate_derivative",
    "quaternion_rates",
    "euler313_rates",
    "gravity_gradient_torque",
    "derivative",
    "rk4_step",
    "integrate",
    "principal_moments",
    "angular_momentum_eci",
    "kinetic_energy",
]


@dataclass(frozen=True)
class KeplerianElements:
    """Classical orbital elements. Angles in radians, lengths in km.

    ``argp`` is the argument of perigee and ``nu0`` the true anomaly at
    epoch (t = 0).
    """

    a: float
    e: float
    i: float
    raan: float
    argp: float
    nu0: float

    def __post_init__(self):
        if not self.a > 0.0:
            raise ValueError("semi-major axis must be positive, got %r" % (self.a,))
        if not 0.0 <= self.e < 1.0:
            raise ValueError("eccentricity must be in [0, 1), got %r" % (self.e,))

    @classmethod
    def from_degrees(cls, a, e, i, raan, argp, nu0):
        d = np.pi / 180.0
        return cls(a=a, e=e, i=i * d, raan=raan * d, argp=argp * d, nu0=nu0 * d)


@dataclass(frozen=True)
class Trajectory:
    """Fixed-step propagation output: times (n+1,) and states (n+1, d)."""

    t: np.ndarray
    states: np.ndarray
    parameterization: str


def solve_kepler(mean_anomaly, e, tol=1e-12, max_iter=50):
    """Solve Kepler's equation M = E - e sin E for E by Newton iteration.

    Raises:
        RuntimeError: no convergence within max_iter (does not happen for
            e < 1 with the M-seeded start, but guarded anyway).
    """
    m = float(mean_anomaly)
    ecc = float(e)
    big_e = m if ecc < 0.8 else np.pi
    for _ in range(max_iter):
        f = big_e - ecc * np.sin(big_e) - m
        step = f / (1.0 - ecc * np.cos(big_e))
        big_e -= step
        if abs(step) < tol:
            return big_e
    raise RuntimeError("Kepler solver did not converge (M=%r, e=%r)" % (m, ecc))


def _perifocal_to_eci(elements):
    co, so = np.cos(elements.raan), np.sin(elements.raan)
    ci, si = np.cos(elements.i), np.sin(elements.i)
    cw, sw = np.cos(elements.argp), np.sin(elements.argp)
    r3_raan = np.array([[co, -so, 0.0], [so, co, 0.0], [0.0, 0.0, 1.0]])
    r1_inc = np.array([[1.0, 0.0, 0.0], [0.0, ci, -si], [0.0, si, ci]])
    r3_argp = np.array([[cw, -sw, 0.0], [sw, cw, 0.0], [0.0, 0.0, 1.0]])
    return r3_raan @ r1_inc @ r3_argp


def kepler_state(elements, t, mu=MU_EARTH):
    """Two-body position and velocity at time t since epoch.

    Args:
        elements: KeplerianElements with nu0 defining the epoch anomaly.
        t: seconds past epoch.
        mu: gravitational parameter, km^3/s^2.

    Returns:
        (r, v): ECI position in km and velocity in km/s.
    """
    a, e = elements.a, elements.e
    # Epoch true anomaly -> eccentric -> mean, then advance at the mean motion.
    e0 = 2.0 * np.arctan2(
        np.sqrt(1.0 - e) * np.sin(0.5 * elements.nu0),
        np.sqrt(1.0 + e) * np.cos(0.5 * elements.nu0),
    )
    m0 = e0 - e * np.sin(e0)
    n = np.sqrt(mu / a**3)
    big_e = solve_kepler(m0 + n * t, e)
    ce, se = np.cos(big_e), np.sin(big_e)
    r_mag = a * (1.0 - e * ce)
    b = a * np.sqrt(1.0 - e * e)
    r_pf = np.array([a * (ce - e), b * se, 0.0])
    v_pf = (np.sqrt(mu * a) / r_mag) * np.array([-se, np.sqrt(1.0 - e * e) * ce, 0.0])
    rot = _perifocal_to_eci(elements)
    return rot @ r_pf, rot @ v_pf


def body_rate_derivative(omega, inertia, torque=None):
    """Euler's rotational equations for a principal-axis rigid body.

    Args:
        omega: body rates (3,), rad/s.
        inertia: principal moments (Ixx, Iyy, Izz), kg m^2.
        torque: external torque in body axes, N m; None means torque-free.

    Returns:
        Body-rate derivatives (3,), rad/s^2.
    """
    wx, wy, wz = omega
    ixx, iyy, izz = inertia
    tx, ty, tz = (0.0, 0.0, 0.0) if torque is None else torque
    return np.array(
        [
            (tx - (izz - iyy) * wy * wz) / ixx,
            (ty - (ixx - izz) * wz * wx) / iyy,
            (tz - (iyy - ixx) * wx * wy) / izz,
        ]
    )


def quaternion_rates(q, omega):
    """Quaternion kinematics qdot = 0.5 * Omega(omega) * q (scalar first).

    Exactly norm-preserving: dot(q, qdot) = 0 for any q and omega, so the
    continuous dynamics stay on the unit sphere and only integration error
    needs renormalizing.
    """
    q0, q1, q2, q3 = q
    wx, wy, wz = omega
    return np.array(
        [
            0.5 * (-q1 * wx - q2 * wy - q3 * wz),
            0.5 * (q0 * wx - q3 * wy + q2 * wz),
            0.5 * (q3 * wx + q0 * wy - q1 * wz),
            0.5 * (-q2 * wx + q1 * wy + q0 * wz),
        ]
    )


def euler313_rates(e, omega):
    """3-1-3 Euler angle rates from body rates.

    The mapping pairs with the ``attitude.euler313_to_dcm`` convention
    (phi = final body-z rotation, psi = initial inertial-z rotation):

        phi_dot   = wz - (sin(phi) wx + cos(phi) wy) cos(theta)/sin(theta)
        theta_dot = cos(phi) wx - sin(phi) wy
        psi_dot   = (sin(phi) wx + cos(phi) wy)/sin(theta)

    Raises:
        ValueError: within 1e-9 of the sin(theta) = 0 singularity.
    """
    phi, theta, _ = e
    wx, wy, wz = omega
    st = np.sin(theta)
    if abs(st) < 1e-9:
        raise ValueError("3-1-3 rates are singular at sin(theta)=0 (theta=%r)" % (theta,))
    ct = np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    u = sp * wx + cp * wy
    return np.array([wz - u * ct / st, cp * wx - sp * wy, u / st])


def gravity_gradient_torque(q, r_eci, inertia, mu=MU_EARTH):
    """Gravity-gradient torque on a principal-axis body, N m.

    The radial unit vector is rotated into body axes and the standard
    moment-difference products are scaled by 3 mu / R^3. Inputs are km-based;
    the ratio is formed in SI after converting (the ratio itself is
    unit-invariant, the conversion just keeps the intermediate values SI).

    Args:
        q: attitude quaternion (ECI to body).
        r_eci: spacecraft position in ECI, km.
        inertia: principal moments, kg m^2.
    """
    r = np.asarray(r_eci, dtype=float)
    r_mag = np.linalg.norm(r)
    if r_mag < 1e-9:
        raise ValueError("gravity gradient undefined at zero radius")
    c = quat_to_dcm(q) @ (r / r_mag)
    k = 3.0 * (mu * _KM_TO_M**3) / (r_mag * _KM_TO_M) ** 3
    ixx, iyy, izz = inertia
    return k * np.array(
        [
            (izz - iyy) * c[1] * c[2],
            (ixx - izz) * c[2] * c[0],
            (iyy - ixx) * c[0] * c[1],
        ]
    )


def derivative(state, t, inertia, torque_model="none", elements=None, mu=MU_EARTH,
               parameterization="quaternion"):
    """Full state derivative for truth propagation.

    Args:
        state: (7,) quaternion-mode or (6,) euler-mode state.
        t: time, s (enters only through the orbit when gravity gradient is on).
        inertia: principal moments.
        torque_model: "none" or "gravity_gradient".
        elements: KeplerianElements, required for gravity gradient.
        parameterization: "quaternion" or "euler".

    Returns:
        State derivative of the same shape.
    """
    state = np.asarray(state, dtype=float)
    if parameterization == "quaternion":
        att, omega = state[:4], state[4:7]
    elif parameterization == "euler":
        att, omega = state[:3], state[3:6]
    else:
        raise ValueError("unknown parameterization %r" % (parameterization,))

    if torque_model == "none":
        torque = None
    elif torque_model == "gravity_gradient":
        if elements is None:
            raise ValueError("gravity gradient requires orbital elements")
        r, _ = kepler_state(elements, t, mu)
        if parameterization == "quaternion":
            q = att
        else:
            from .attitude import euler313_to_quat

            q = euler313_to_quat(att)
        torque = gravity_gradient_torque(q, r, inertia, mu)
    else:
        raise ValueError("unknown torque model %r" % (torque_model,))

    omega_dot = body_rate_derivative(omega, inertia, torque)
    if parameterization == "quaternion":
        return np.concatenate([quaternion_rates(att, omega), omega_dot])
    return np.concatenate([euler313_rates(att, omega), omega_dot])


def rk4_step(x, t, dt, rhs):
    """One classical RK4 step of xdot = rhs(x, t). Works on batched x too."""
    k1 = rhs(x, t)
    k2 = rhs(x + (0.5 * dt) * k1, t + 0.5 * dt)
    k3 = rhs(x + (0.5 * dt) * k2, t + 0.5 * dt)
    k4 = rhs(x + dt * k3, t + dt)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _renormalize_quat_rows(states):
    q = states[..., :4]
    n = np.sqrt(q[..., 0] * q[..., 0] + q[..., 1] * q[..., 1]
                + q[..., 2] * q[..., 2] + q[..., 3] * q[..., 3])
    states[..., :4] = q / n[..., None]


def integrate(state0, dt, n_steps, inertia, torque_model="none", elements=None,
              parameterization="quaternion", mu=MU_EARTH):
    """Propagate the truth state on a fixed grid t_k = k dt.

    Torque-free quaternion propagation runs through the batched kernel in
    ``attbench.core``; everything else goes through the generic RK4 with the
    scalar right-hand side. Both paths renormalize the quaternion once per
    step.

    Returns:
        Trajectory with n_steps + 1 rows (the initial state included).
    """
    state0 = np.asarray(state0, dtype=float)
    dim = 7 if parameterization == "quaternion" else 6
    if state0.shape != (dim,):
        raise ValueError(
            "expected state of shape (%d,) for %s mode, got %r"
            % (dim, parameterization, state0.shape)
        )
    ixx, iyy, izz = (float(v) for v in inertia)
    out = np.empty((n_steps + 1, dim))
    out[0] = state0
    t_grid = dt * np.arange(n_steps + 1)

    if parameterization == "quaternion" and torque_model == "none":
        x = state0[None, :].copy()
        for k in range(n_steps):
            x = core.rk4_step_batch(x, dt, ixx, iyy, izz, 0.0, 0.0, 0.0)
            out[k + 1] = x[0]
        return Trajectory(t=t_grid, states=out, parameterization=parameterization)

    def rhs(x, t):
        return derivative(x, t, (ixx, iyy, izz), torque_model, elements, mu,
                          parameterization)

    x = state0.copy()
    for k in range(n_steps):
        x = rk4_step(x, t_grid[k], dt, rhs)
        if parameterization == "quaternion":
            x = x.copy()
            _renormalize_quat_rows(x[None, :])
        out[k + 1] = x
    return Trajectory(t=t_grid, states=out, parameterization=parameterization)


def principal_moments(inertia_matrix):
    """Principal moments and axes of a symmetric inertia matrix.

    Axes are matched to the nearest body axis (largest component) so a
    nearly diagonal matrix keeps its x/y/z labeling instead of being
    reordered by eigenvalue size, and signs are fixed for a proper rotation.

    Args:
        inertia_matrix: symmetric 3x3, kg m^2.

    Returns:
        (moments, axes): moments (3,) and the 3x3 matrix whose rows are the
        principal axes expressed in the input body frame.
    """
    full = np.asarray(inertia_matrix, dtype=float)
    if full.shape != (3, 3):
        raise ValueError("inertia matrix must be 3x3, got %r" % (full.shape,))
    if not np.allclose(full, full.T, rtol=0.0, atol=1e-6 * max(1.0, abs(full).max())):
        raise ValueError("inertia matrix must be symmetric")
    w, vecs = np.linalg.eigh(full)
    order = []
    used = set()
    for axis in range(3):
        best = max(
            (k for k in range(3) if k not in used),
            key=lambda k: abs(vecs[axis, k]),
        )
        order.append(best)
        used.add(best)
    w = w[order]
    vecs = vecs[:, order]
    for axis in range(3):
        if vecs[axis, axis] < 0.0:
            vecs[:, axis] = -vecs[:, axis]
    if np.linalg.det(vecs) < 0.0:
        vecs[:, 2] = -vecs[:, 2]
    if w.min() <= 0.0:
        raise ValueError("inertia matrix is not positive definite")
    return w, vecs.T


def angular_momentum_eci(q, omega, inertia):
    """Angular momentum vector in ECI axes; conserved when torque-free."""
    h_body = np.asarray(inertia, dtype=float) * np.asarray(omega, dtype=float)
    return quat_to_dcm(q).T @ h_body


def kinetic_energy(omega, inertia):
    """Rotational kinetic energy 0.5 w . (I w); conserved when torque-free."""
    omega = np.asarray(omega, dtype=float)
    return 0.5 * float(np.dot(omega, np.asarray(inertia, dtype=float) * omega))
