# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled batched rigid-body RK4 kernel; see kernels_py for the contract.

Keep every arithmetic expression identical to the numpy fallback so the two
backends agree bit for bit (the build turns FP contraction off).
"""

import numpy as np

from libc.math cimport sqrt


cdef inline void _rates(double q0, double q1, double q2, double q3,
                        double wx, double wy, double wz,
                        double ixx, double iyy, double izz,
                        double tx, double ty, double tz,
                        double* k) noexcept nogil:
    k[0] = 0.5 * (-q1 * wx - q2 * wy - q3 * wz)
    k[1] = 0.5 * (q0 * wx - q3 * wy + q2 * wz)
    k[2] = 0.5 * (q3 * wx + q0 * wy - q1 * wz)
    k[3] = 0.5 * (-q2 * wx + q1 * wy + q0 * wz)
    k[4] = (tx - (izz - iyy) * wy * wz) / ixx
    k[5] = (ty - (ixx - izz) * wz * wx) / iyy
    k[6] = (tz - (iyy - ixx) * wx * wy) / izz


def rk4_step_batch(states, double dt, double ixx, double iyy, double izz,
                   double tx, double ty, double tz):
    """Advance a batch of [q, w, ...] states by one RK4 step (compiled)."""
    arr = np.array(states, dtype=np.float64, copy=True, order="C")
    if arr.ndim != 2 or arr.shape[1] < 7:
        raise ValueError("states must be (M, n) with n >= 7")
    cdef double[:, ::1] out = arr
    cdef Py_ssize_t m = out.shape[0]
    cdef Py_ssize_t i, j
    cdef double c[7]
    cdef double k1[7]
    cdef double k2[7]
    cdef double k3[7]
    cdef double k4[7]
    cdef double s[7]
    cdef double norm

    with nogil:
        for i in range(m):
            for j in range(7):
                c[j] = out[i, j]
            _rates(c[0], c[1], c[2], c[3], c[4], c[5], c[6],
                   ixx, iyy, izz, tx, ty, tz, k1)
            for j in range(7):
                s[j] = c[j] + (0.5 * dt) * k1[j]
            _rates(s[0], s[1], s[2], s[3], s[4], s[5], s[6],
                   ixx, iyy, izz, tx, ty, tz, k2)
            for j in range(7):
                s[j] = c[j] + (0.5 * dt) * k2[j]
            _rates(s[0], s[1], s[2], s[3], s[4], s[5], s[6],
                   ixx, iyy, izz, tx, ty, tz, k3)
            for j in range(7):
                s[j] = c[j] + dt * k3[j]
            _rates(s[0], s[1], s[2], s[3], s[4], s[5], s[6],
                   ixx, iyy, izz, tx, ty, tz, k4)
            for j in range(7):
                s[j] = c[j] + (dt / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            norm = sqrt(s[0] * s[0] + s[1] * s[1] + s[2] * s[2] + s[3] * s[3])
            out[i, 0] = s[0] / norm
            out[i, 1] = s[1] / norm
            out[i, 2] = s[2] / norm
            out[i, 3] = s[3] / norm
            for j in range(4, 7):
                out[i, j] = s[j]
    return arr
