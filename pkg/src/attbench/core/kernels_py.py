"""Numpy fallback for the batched rigid-body RK4 kernel.

Operation order mirrors the compiled kernel expression for expression so
both backends produce bit-identical trajectories (the extension is built
with FP contraction disabled for the same reason).
"""

import numpy as np


def _rates(q0, q1, q2, q3, wx, wy, wz, ixx, iyy, izz, tx, ty, tz):
    return (
        0.5 * (-q1 * wx - q2 * wy - q3 * wz),
        0.5 * (q0 * wx - q3 * wy + q2 * wz),
        0.5 * (q3 * wx + q0 * wy - q1 * wz),
        0.5 * (-q2 * wx + q1 * wy + q0 * wz),
        (tx - (izz - iyy) * wy * wz) / ixx,
        (ty - (ixx - izz) * wz * wx) / iyy,
        (tz - (iyy - ixx) * wx * wy) / izz,
    )


def rk4_step_batch(states, dt, ixx, iyy, izz, tx, ty, tz):
    """Advance a batch of [q, w, ...] states by one RK4 step.

    Args:
        states: (M, n) array, n >= 7. Columns 0..3 quaternion, 4..6 body
            rates; any further columns (gyro bias states) pass through
            unchanged.
        dt: step, s.
        ixx, iyy, izz: principal moments, kg m^2.
        tx, ty, tz: constant body-frame torque over the step, N m.

    Returns:
        New (M, n) array; quaternions renormalized once, after the step.
    """
    x = np.asarray(states, dtype=float)
    out = x.copy()
    c = tuple(x[:, j] for j in range(7))

    k1 = _rates(*c, ixx, iyy, izz, tx, ty, tz)
    m1 = tuple(c[j] + (0.5 * dt) * k1[j] for j in range(7))
    k2 = _rates(*m1, ixx, iyy, izz, tx, ty, tz)
    m2 = tuple(c[j] + (0.5 * dt) * k2[j] for j in range(7))
    k3 = _rates(*m2, ixx, iyy, izz, tx, ty, tz)
    m3 = tuple(c[j] + dt * k3[j] for j in range(7))
    k4 = _rates(*m3, ixx, iyy, izz, tx, ty, tz)

    for j in range(7):
        out[:, j] = c[j] + (dt / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])

    q0, q1, q2, q3 = out[:, 0], out[:, 1], out[:, 2], out[:, 3]
    norm = np.sqrt(q0 * q0 + q1 * q1 + q2 * q2 + q3 * q3)
    out[:, 0] = q0 / norm
    out[:, 1] = q1 / norm
    out[:, 2] = q2 / norm
    out[:, 3] = q3 / norm
    return out
