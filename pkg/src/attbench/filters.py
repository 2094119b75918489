"""Extended Kalman, unscented Kalman, and particle filters.

All three filters run against the same two abstractions:

  * a process model exposing batched one-step propagation (the rigid-body
    model below routes through the compiled kernel), and
  * a linear stacked measurement y = H x + v with block-diagonal R.

Keeping the interface batched is what makes the finite-difference Jacobian,
the sigma-point cloud, and the particle population all cheap: each is a
single kernel call per step. A filter object is a stateless stepper (the
particle filter owns its RNG); beliefs are passed in and returned.

The ``decide`` hook on each ``step`` lets a detector inspect the innovation
record before the measurement update and either skip the update or restrict
it to a subset of healthy sensors. The record always reflects the full
measurement row set.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_triangular

from . import core
from .attitude import quat_to_dcm
from .dynamics import MU_EARTH, kepler_state
from .fdir import compute_nis, slice_valid

__all__ = [
    "GaussianBelief",
    "ParticleSet",
    "InnovationRecord",
    "RigidBodyProcessModel",
    "LinearProcessModel",
    "StackedMeasurement",
    "attitude_measurement",
    "FilterConfig",
    "augment_gyro_bias",
    "jacobian",
    "ukf_sigma_points",
    "systematic_resample",
    "EkfFilter",
    "UkfFilter",
    "PfFilter",
    "make_filter",
    "estimate_stats",
]


@dataclass(frozen=True)
class GaussianBelief:
    """Mean and covariance of a Gaussian state belief."""

    mu: np.ndarray
    sigma: np.ndarray


@dataclass(frozen=True)
class ParticleSet:
    """Weighted particle belief. ``resets`` counts degenerate-weight resets."""

    states: np.ndarray
    weights: np.ndarray
    resets: int = 0


@dataclass(frozen=True)
class InnovationRecord:
    """Pre-update innovation nu, its covariance S, and the NIS statistic."""

    t: float
    nu: np.ndarray
    S: np.ndarray
    nis: float
    source: str


def _symmetrize(m):
    return 0.5 * (m + m.T)


def _check_psd(name, m, dim):
    m = np.asarray(m, dtype=float)
    if m.shape != (dim, dim):
        raise ValueError("%s must be (%d, %d), got %r" % (name, dim, dim, m.shape))
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-9 * max(1.0, abs(m).max())):
        raise ValueError("%s must be symmetric" % name)
    if np.linalg.eigvalsh(m).min() < -1e-10 * max(1.0, abs(m).max()):
        raise ValueError("%s must be positive semi-definite" % name)
    return m


def _psd_sqrt(m):
    """Lower-triangular-ish L with L L' = m; eigendecomposition fallback
    clamps small negative eigenvalues so a barely indefinite covariance
    still yields usable sigma points."""
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(_symmetrize(m))
        return v * np.sqrt(np.clip(w, 0.0, None))


class RigidBodyProcessModel:
    """One fixed RK4 step of rigid-body attitude dynamics, batched.

    State is [q, w] (dim 7) or [q, w, b] (dim 10) where the trailing gyro
    bias states are constant. Torque-free propagation goes through the
    compiled kernel; the gravity-gradient variant evaluates the torque at
    every RK4 stage from the batch attitudes and the shared orbit position.
    """

    def __init__(self, inertia, dt, bias_states=False, torque_model="none",
                 elements=None, mu=MU_EARTH):
        self.inertia = tuple(float(v) for v in inertia)
        if any(v <= 0.0 for v in self.inertia):
            raise ValueError("principal moments must be positive")
        self.dt = float(dt)
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if torque_model not in ("none", "gravity_gradient"):
            raise ValueError("unknown torque model %r" % (torque_model,))
        if torque_model == "gravity_gradient" and elements is None:
            raise ValueError("gravity gradient requires orbital elements")
        self.torque_model = torque_model
        self.elements = elements
        self.mu = mu
        self.dim = 10 if bias_states else 7
        self.bias_states = bias_states

    def propagate(self, states, t):
        x = np.atleast_2d(np.asarray(states, dtype=float))
        ixx, iyy, izz = self.inertia
        if self.torque_model == "none":
            return core.rk4_step_batch(x, self.dt, ixx, iyy, izz, 0.0, 0.0, 0.0)
        out = _rk4_batch(x, t, self.dt, self._gg_rhs)
        return self.normalize_rows(out)

    def _gg_rhs(self, x, t):
        q = x[:, :4]
        w = x[:, 4:7]
        r, _ = kepler_state(self.elements, t, self.mu)
        r_mag = np.linalg.norm(r)
        r_hat = r / r_mag
        # radial unit vector in each batch member's body axes
        c = np.einsum("nij,j->ni", _dcm_batch(q), r_hat)
        k = 3.0 * (self.mu * 1.0e9) / (r_mag * 1.0e3) ** 3
        ixx, iyy, izz = self.inertia
        tau = k * np.stack(
            [
                (izz - iyy) * c[:, 1] * c[:, 2],
                (ixx - izz) * c[:, 2] * c[:, 0],
                (iyy - ixx) * c[:, 0] * c[:, 1],
            ],
            axis=1,
        )
        out = np.zeros_like(x)
        wx, wy, wz = w[:, 0], w[:, 1], w[:, 2]
        q0, q1, q2, q3 = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
        out[:, 0] = 0.5 * (-q1 * wx - q2 * wy - q3 * wz)
        out[:, 1] = 0.5 * (q0 * wx - q3 * wy + q2 * wz)
        out[:, 2] = 0.5 * (q3 * wx + q0 * wy - q1 * wz)
        out[:, 3] = 0.5 * (-q2 * wx + q1 * wy + q0 * wz)
        out[:, 4] = (tau[:, 0] - (izz - iyy) * wy * wz) / ixx
        out[:, 5] = (tau[:, 1] - (ixx - izz) * wz * wx) / iyy
        out[:, 6] = (tau[:, 2] - (iyy - ixx) * wx * wy) / izz
        return out

    def normalize(self, x):
        x = np.asarray(x, dtype=float).copy()
        q = x[:4]
        x[:4] = q / np.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
        return x

    def normalize_rows(self, states):
        states = np.asarray(states, dtype=float).copy()
        q = states[:, :4]
        n = np.sqrt(q[:, 0] * q[:, 0] + q[:, 1] * q[:, 1]
                    + q[:, 2] * q[:, 2] + q[:, 3] * q[:, 3])
        states[:, :4] = q / n[:, None]
        return states


def _rk4_batch(x, t, dt, rhs):
    k1 = rhs(x, t)
    k2 = rhs(x + (0.5 * dt) * k1, t + 0.5 * dt)
    k3 = rhs(x + (0.5 * dt) * k2, t + 0.5 * dt)
    k4 = rhs(x + dt * k3, t + dt)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _dcm_batch(q):
    q0, q1, q2, q3 = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    r = np.empty((q.shape[0], 3, 3))
    r[:, 0, 0] = 1.0 - 2.0 * (q2 * q2 + q3 * q3)
    r[:, 0, 1] = 2.0 * (q1 * q2 + q0 * q3)
    r[:, 0, 2] = 2.0 * (q1 * q3 - q0 * q2)
    r[:, 1, 0] = 2.0 * (q1 * q2 - q0 * q3)
    r[:, 1, 1] = 1.0 - 2.0 * (q1 * q1 + q3 * q3)
    r[:, 1, 2] = 2.0 * (q2 * q3 + q0 * q1)
    r[:, 2, 0] = 2.0 * (q1 * q3 + q0 * q2)
    r[:, 2, 1] = 2.0 * (q2 * q3 - q0 * q1)
    r[:, 2, 2] = 1.0 - 2.0 * (q1 * q1 + q2 * q2)
    return r


class LinearProcessModel:
    """x_{k+1} = F x_k. Used by the cross-filter equivalence checks."""

    def __init__(self, transition):
        self.F = np.asarray(transition, dtype=float)
        if self.F.ndim != 2 or self.F.shape[0] != self.F.shape[1]:
            raise ValueError("transition matrix must be square")
        self.dim = self.F.shape[0]
        self.dt = 0.0  # time-invariant map; filters subtract dt from the measurement time

    def propagate(self, states, t):
        return np.atleast_2d(np.asarray(states, dtype=float)) @ self.F.T

    def normalize(self, x):
        return np.asarray(x, dtype=float).copy()

    def normalize_rows(self, states):
        return np.asarray(states, dtype=float).copy()


class StackedMeasurement:
    """Linear stacked measurement y = H x + v with named row blocks.

    ``slices`` maps sensor names to row slices (insertion order is stacking
    order). ``hemisphere_blocks`` lists the row slices holding quaternion
    readings; ``align`` flips each of those blocks to the hemisphere of the
    predicted quaternion, resolving the q/-q sign ambiguity before the
    innovation is formed.
    """

    def __init__(self, H, R, slices, hemisphere_blocks=()):
        self.H = np.asarray(H, dtype=float)
        if self.H.ndim != 2:
            raise ValueError("H must be a matrix")
        self.R = _check_psd("R", R, self.H.shape[0])
        self.slices = dict(slices)
        self.hemisphere_blocks = tuple(hemisphere_blocks)
        self.dim = self.H.shape[0]
        self.state_dim = self.H.shape[1]

    def predict(self, states):
        return np.atleast_2d(np.asarray(states, dtype=float)) @ self.H.T

    def align(self, y, mu_pred):
        y = np.asarray(y, dtype=float).copy()
        q_pred = np.asarray(mu_pred, dtype=float)[:4]
        for sl in self.hemisphere_blocks:
            if float(np.dot(y[sl], q_pred)) < 0.0:
                y[sl] = -y[sl]
        return y


def attitude_measurement(layout, r_blocks, state_dim):
    """Stacked measurement model for the attitude sensor suite.

    Attitude sensors read the quaternion directly and the gyro reads the
    body rates (plus the bias states when the filter carries them), so H is
    a constant selection matrix.

    Args:
        layout: MeasurementLayout in quaternion mode.
        r_blocks: dict sensor name -> per-component noise variances the
            filter should assume (vector, or full block matrix).
        state_dim: 7 or 10.

    Returns:
        StackedMeasurement.
    """
    if layout.mode != "quaternion":
        raise ValueError("filtering runs in quaternion mode only")
    if state_dim not in (7, 10):
        raise ValueError("state_dim must be 7 or 10, got %r" % (state_dim,))
    h = np.zeros((layout.dim, state_dim))
    r = np.zeros((layout.dim, layout.dim))
    hemis = []
    for name in layout.sensors:
        sl = layout.slices[name]
        width = sl.stop - sl.start
        if name == "gyro":
            h[sl, 4:7] = np.eye(3)
            if state_dim == 10:
                h[sl, 7:10] = np.eye(3)
        else:
            h[sl, 0:4] = np.eye(4)
            hemis.append(sl)
        if name not in r_blocks:
            raise ValueError("missing measurement noise block for %r" % name)
        block = np.asarray(r_blocks[name], dtype=float)
        if block.ndim == 1:
            if block.shape != (width,):
                raise ValueError("noise vector for %r must have %d entries" % (name, width))
            r[sl, sl] = np.diag(block)
        else:
            if block.shape != (width, width):
                raise ValueError("noise block for %r must be (%d, %d)" % (name, width, width))
            r[sl, sl] = block
    return StackedMeasurement(h, r, layout.slices, hemis)


@dataclass
class FilterConfig:
    """Everything a filter needs: models, noise, initial belief, tunables."""

    process: object
    measurement: StackedMeasurement
    Q: np.ndarray
    x0: np.ndarray
    P0: np.ndarray
    fd_eps: float = 1e-6
    ukf_alpha: float = 0.1
    ukf_beta: float = 2.0
    ukf_kappa: float = 0.0
    ukf_detector_r: float = 1.0
    pf_particles: int = 1000
    pf_ess_threshold: float = 0.5
    pf_jitter: np.ndarray = None

    def __post_init__(self):
        n = self.process.dim
        self.Q = _check_psd("Q", self.Q, n)
        self.P0 = _check_psd("P0", self.P0, n)
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.x0.shape != (n,):
            raise ValueError("x0 must have shape (%d,)" % n)
        if self.measurement.state_dim != n:
            raise ValueError(
                "measurement expects state dim %d, process has %d"
                % (self.measurement.state_dim, n)
            )
        if not self.fd_eps > 0.0:
            raise ValueError("fd_eps must be positive")
        if not 0.0 < self.ukf_alpha <= 1.0:
            raise ValueError("ukf_alpha must be in (0, 1]")
        if self.ukf_kappa < 0.0:
            raise ValueError("ukf_kappa must be >= 0")
        if self.ukf_detector_r < 0.0:
            raise ValueError("ukf_detector_r must be >= 0")
        if self.pf_particles < 10:
            raise ValueError("pf_particles must be >= 10")
        if not 0.0 < self.pf_ess_threshold <= 1.0:
            raise ValueError("pf_ess_threshold must be in (0, 1]")
        if self.pf_jitter is not None:
            self.pf_jitter = _check_psd("pf_jitter", self.pf_jitter, n)


def augment_gyro_bias(cfg, q_bias=1e-12, p0_bias=1e-2, b0=None):
    """Extend a 7-state attitude FilterConfig with three gyro-bias states.

    The bias is constant in the process model (random walk strength
    ``q_bias`` in Q) and enters the measurement through the gyro rows, so
    the filter can separate rate from bias using the attitude history.
    """
    proc = cfg.process
    if not isinstance(proc, RigidBodyProcessModel) or proc.bias_states:
        raise ValueError("augmentation applies to a 7-state rigid-body config")
    new_proc = RigidBodyProcessModel(
        proc.inertia, proc.dt, bias_states=True,
        torque_model=proc.torque_model, elements=proc.elements, mu=proc.mu,
    )
    meas = cfg.measurement
    h = np.zeros((meas.dim, 10))
    h[:, :7] = meas.H
    if "gyro" in meas.slices:
        h[meas.slices["gyro"], 7:10] = np.eye(3)
    new_meas = StackedMeasurement(h, meas.R, meas.slices, meas.hemisphere_blocks)
    pad = np.zeros((10, 10))
    pad[:7, :7] = cfg.Q
    pad[7:, 7:] = q_bias * np.eye(3)
    p0 = np.zeros((10, 10))
    p0[:7, :7] = cfg.P0
    p0[7:, 7:] = p0_bias * np.eye(3)
    x0 = np.concatenate([cfg.x0, np.zeros(3) if b0 is None else np.asarray(b0, float)])
    return replace(cfg, process=new_proc, measurement=new_meas, Q=pad, x0=x0, P0=p0)


def jacobian(f, x, eps=1e-6):
    """Central-difference Jacobian of f at x: J[:, j] = (f(x+e_j eps) - f(x-e_j eps)) / (2 eps)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    f0 = np.asarray(f(x), dtype=float)
    out = np.empty((f0.size, n))
    for j in range(n):
        dx = np.zeros(n)
        dx[j] = eps
        out[:, j] = (np.asarray(f(x + dx), dtype=float) - np.asarray(f(x - dx), dtype=float)) / (2.0 * eps)
    return out


class EkfFilter:
    """Extended Kalman filter with a finite-difference state Jacobian."""

    source = "ekf"

    def __init__(self, cfg):
        self.cfg = cfg
        self.model = cfg.process
        self.meas = cfg.measurement

    def initial_belief(self):
        return GaussianBelief(self.cfg.x0.copy(), self.cfg.P0.copy())

    def predict(self, belief, t):
        """Propagate mean and covariance across [t, t + dt]. The Jacobian
        columns come from one batched kernel call over 2n+1 perturbed states."""
        n = self.model.dim
        eps = self.cfg.fd_eps
        batch = np.tile(belief.mu, (2 * n + 1, 1))
        for j in range(n):
            batch[1 + j, j] += eps
            batch[1 + n + j, j] -= eps
        prop = self.model.propagate(batch, t)
        mu_pred = prop[0]
        a = (prop[1:1 + n] - prop[1 + n:]).T / (2.0 * eps)
        sigma_pred = _symmetrize(a @ belief.sigma @ a.T + self.cfg.Q)
        return GaussianBelief(mu_pred, sigma_pred)

    def step(self, belief, y, t, decide=None):
        """One predict/assess/update cycle.

        ``t`` is the measurement time; the prediction covers [t - dt, t].

        Returns:
            (belief', record): the record always covers the full row set;
            the update may be skipped or row-restricted by ``decide``.
        """
        pred = self.predict(belief, t - self.model.dt)
        h, r = self.meas.H, self.meas.R
        y_al = self.meas.align(y, pred.mu)
        nu = y_al - h @ pred.mu
        s = _symmetrize(h @ pred.sigma @ h.T + r)
        record = InnovationRecord(t=t, nu=nu, S=s, nis=compute_nis(nu, s), source=self.source)

        skip, healthy = decide(record) if decide is not None else (False, None)
        if skip:
            return GaussianBelief(self.model.normalize(pred.mu), pred.sigma), record
        if healthy is not None:
            sliced = slice_valid(y_al, h, r, healthy, self.meas.slices)
            if sliced is None:
                return GaussianBelief(self.model.normalize(pred.mu), pred.sigma), record
            y_u, h_u, r_u = sliced
        else:
            y_u, h_u, r_u = y_al, h, r

        s_u = h_u @ pred.sigma @ h_u.T + r_u
        gain = np.linalg.solve(s_u, h_u @ pred.sigma).T
        mu_new = pred.mu + gain @ (y_u - h_u @ pred.mu)
        sigma_new = _symmetrize((np.eye(self.model.dim) - gain @ h_u) @ pred.sigma)
        return GaussianBelief(self.model.normalize(mu_new), sigma_new), record


def ukf_sigma_points(mu, sigma, alpha, beta, kappa):
    """Scaled sigma points and their mean/covariance weights.

    lambda = alpha^2 (n + kappa) - n; offsets are columns of the matrix
    square root of (n + lambda) Sigma (Cholesky, eigendecomposition with
    clamped negatives as fallback).

    Returns:
        (points (2n+1, n), wm (2n+1,), wc (2n+1,)).
    """
    mu = np.asarray(mu, dtype=float)
    n = mu.size
    lam = alpha * alpha * (n + kappa) - n
    scale = n + lam
    root = _psd_sqrt(scale * np.asarray(sigma, dtype=float))
    points = np.empty((2 * n + 1, n))
    points[0] = mu
    points[1:n + 1] = mu + root.T
    points[n + 1:] = mu - root.T
    wm = np.full(2 * n + 1, 0.5 / scale)
    wc = np.full(2 * n + 1, 0.5 / scale)
    wm[0] = lam / scale
    wc[0] = lam / scale + (1.0 - alpha * alpha + beta)
    return points, wm, wc


class UkfFilter:
    """Unscented Kalman filter, sigma points regenerated after prediction.

    The state update is the standard unscented update and matches the
    extended filter exactly on linear systems. The consistency statistic
    reported for fault monitoring is built the way the measurement-space
    cloud is usually assembled in practice, with each point carrying the
    assumed sensor noise, and the noise covariance then added on top:

        S_det = S_update + ukf_detector_r * R

    With the default ukf_detector_r = 1.0 the statistic counts sensor
    noise twice, so it is conservative by roughly a factor of two
    wherever R dominates: small measurement transients that trip the
    extended filter's detector pass quietly here, while large ones still
    fire. Setting ukf_detector_r = 0.0 removes the extra share and
    restores parity with the extended filter's statistic.
    """

    source = "ukf"

    def __init__(self, cfg):
        self.cfg = cfg
        self.model = cfg.process
        self.meas = cfg.measurement

    def initial_belief(self):
        return GaussianBelief(self.cfg.x0.copy(), self.cfg.P0.copy())

    def _sigma(self, mu, sigma):
        return ukf_sigma_points(mu, sigma, self.cfg.ukf_alpha, self.cfg.ukf_beta,
                                self.cfg.ukf_kappa)

    def predict(self, belief, t):
        pts, wm, wc = self._sigma(belief.mu, belief.sigma)
        prop = self.model.propagate(pts, t)
        mu_pred = wm @ prop
        d = prop - mu_pred
        sigma_pred = _symmetrize((wc[:, None] * d).T @ d + self.cfg.Q)
        return GaussianBelief(mu_pred, sigma_pred)

    def step(self, belief, y, t, decide=None):
        pred = self.predict(belief, t - self.model.dt)
        pts, wm, wc = self._sigma(pred.mu, pred.sigma)
        z = self.meas.predict(pts)
        y_hat = wm @ z
        dz = z - y_hat
        dx = pts - pred.mu
        s = _symmetrize((wc[:, None] * dz).T @ dz + self.meas.R)
        cross = (wc[:, None] * dx).T @ dz
        y_al = self.meas.align(y, pred.mu)
        nu = y_al - y_hat
        s_det = _symmetrize(s + self.cfg.ukf_detector_r * self.meas.R)
        record = InnovationRecord(t=t, nu=nu, S=s_det, nis=compute_nis(nu, s_det),
                                  source=self.source)

        skip, healthy = decide(record) if decide is not None else (False, None)
        if skip:
            return GaussianBelief(self.model.normalize(pred.mu), pred.sigma), record
        if healthy is not None:
            rows = [i for name, sl in self.meas.slices.items() if name in set(healthy)
                    for i in range(sl.start, sl.stop)]
            if not rows:
                return GaussianBelief(self.model.normalize(pred.mu), pred.sigma), record
            rows = np.asarray(rows, dtype=int)
            s_u = s[np.ix_(rows, rows)]
            cross_u = cross[:, rows]
            nu_u = nu[rows]
        else:
            s_u, cross_u, nu_u = s, cross, nu

        gain = np.linalg.solve(s_u, cross_u.T).T
        mu_new = pred.mu + gain @ nu_u
        sigma_new = _symmetrize(pred.sigma - gain @ s_u @ gain.T)
        return GaussianBelief(self.model.normalize(mu_new), sigma_new), record


def systematic_resample(weights, u):
    """Systematic resampling: one uniform offset, a comb of N positions.

    With uniform weights every particle is selected exactly once; a
    degenerate weight vector concentrates all picks on its support.

    Args:
        weights: normalized weights (N,).
        u: offset in [0, 1).

    Returns:
        Index array (N,) into the particle set.
    """
    w = np.asarray(weights, dtype=float)
    n = w.size
    positions = (np.arange(n) + float(u)) / n
    cum = np.cumsum(w)
    cum[-1] = max(cum[-1], 1.0)  # guard against cumulative rounding < 1
    return np.minimum(np.searchsorted(cum, positions, side="right"), n - 1)


class PfFilter:
    """Bootstrap particle filter with Gaussian jitter and systematic resampling.

    The innovation record is built from the propagated cloud under the
    pre-update weights: predicted measurement mean and covariance (plus R),
    so the same chi-square machinery monitors all three filters.
    """

    source = "pf"

    def __init__(self, cfg, rng):
        self.cfg = cfg
        self.model = cfg.process
        self.meas = cfg.measurement
        self.rng = rng
        self.n = cfg.pf_particles
        jitter = cfg.pf_jitter if cfg.pf_jitter is not None else cfg.Q
        self._jitter_root = _psd_sqrt(jitter)
        try:
            self._r_chol = np.linalg.cholesky(self.meas.R)
        except np.linalg.LinAlgError:
            raise ValueError("particle filter requires positive-definite R")
        self._r_chol_cache = {}

    def initial_belief(self):
        root = _psd_sqrt(self.cfg.P0)
        states = self.cfg.x0 + self.rng.standard_normal((self.n, self.model.dim)) @ root.T
        states = self.model.normalize_rows(states)
        weights = np.full(self.n, 1.0 / self.n)
        return ParticleSet(states, weights)

    def _loglik(self, resid, rows=None):
        if rows is None:
            chol = self._r_chol
        else:
            key = tuple(rows.tolist())
            chol = self._r_chol_cache.get(key)
            if chol is None:
                chol = np.linalg.cholesky(self.meas.R[np.ix_(rows, rows)])
                self._r_chol_cache[key] = chol
        # non-finite residuals must reach the degenerate-weight reset, not raise
        z = solve_triangular(chol, resid.T, lower=True, check_finite=False)
        return -0.5 * np.sum(z * z, axis=0)

    def step(self, pset, y, t, decide=None):
        x = self.model.propagate(pset.states, t - self.model.dt)
        x = x + self.rng.standard_normal((self.n, self.model.dim)) @ self._jitter_root.T
        x = self.model.normalize_rows(x)
        w = pset.weights
        z = self.meas.predict(x)
        mu_prior = w @ x
        y_al = self.meas.align(y, mu_prior)
        y_hat = w @ z
        dz = z - y_hat
        s = _symmetrize((w[:, None] * dz).T @ dz + self.meas.R)
        nu = y_al - y_hat
        record = InnovationRecord(t=t, nu=nu, S=s, nis=compute_nis(nu, s), source=self.source)

        skip, healthy = decide(record) if decide is not None else (False, None)
        resets = pset.resets
        if skip:
            new_w = w.copy()
        else:
            if healthy is not None:
                rows = [i for name, sl in self.meas.slices.items() if name in set(healthy)
                        for i in range(sl.start, sl.stop)]
                if not rows:
                    rows = None
            else:
                rows = None
            if healthy is not None and rows is None:
                new_w = w.copy()
            else:
                idx = np.asarray(rows, dtype=int) if rows is not None else None
                resid = (y_al - z) if idx is None else (y_al[idx] - z[:, idx])
                loglik = self._loglik(resid, idx)
                scaled = loglik - loglik.max()
                new_w = w * np.exp(scaled)
                total = new_w.sum()
                if not np.isfinite(total) or total <= 0.0:
                    new_w = np.full(self.n, 1.0 / self.n)
                    resets += 1
                else:
                    new_w = new_w / total

        ess = 1.0 / float(new_w @ new_w)
        if ess < self.cfg.pf_ess_threshold * self.n:
            idx = systematic_resample(new_w, self.rng.random())
            x = x[idx]
            new_w = np.full(self.n, 1.0 / self.n)
        return ParticleSet(x, new_w, resets), record


def make_filter(kind, cfg, rng=None):
    """Filter factory: kind in {ekf, ukf, pf}; pf needs its RNG stream."""
    if kind == "ekf":
        return EkfFilter(cfg)
    if kind == "ukf":
        return UkfFilter(cfg)
    if kind == "pf":
        if rng is None:
            raise ValueError("particle filter requires an RNG stream")
        return PfFilter(cfg, rng)
    raise ValueError("unknown filter kind %r" % (kind,))


def estimate_stats(belief, model):
    """Point estimate and marginal variances of a belief.

    Gaussian beliefs return (mu, diag Sigma); particle sets return the
    weighted mean and weighted marginal variance. Attitude models get the
    quaternion part of the point estimate renormalized.
    """
    if isinstance(belief, GaussianBelief):
        mu = belief.mu.copy()
        var = np.diag(belief.sigma).copy()
    else:
        w = belief.weights
        mu = w @ belief.states
        d = belief.states - mu
        var = w @ (d * d)
    if isinstance(model, RigidBodyProcessModel):
        mu = model.normalize(mu)
    return mu, var
