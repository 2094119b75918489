import numpy as np
import numpy.testing as npt
import pytest

from attbench import filters as flt
from attbench.sensors import make_layout

from conftest import make_linear_problem

R_BLOCKS = {"star_tracker": (0.001,) * 4, "magnetometer": (0.01,) * 4,
            "gyro": (2.5e-5,) * 3}


def rigid_config(bias=False):
    layout = make_layout()
    meas = flt.attitude_measurement(layout, R_BLOCKS, 10 if bias else 7)
    proc = flt.RigidBodyProcessModel((2.0, 3.0, 4.0), 0.1, bias_states=bias)
    n = proc.dim
    x0 = np.r_[1.0, 0.0, 0.0, 0.0, 0.05, -0.02, 0.03, np.zeros(n - 7)]
    return flt.FilterConfig(process=proc, measurement=meas,
                            Q=1e-8 * np.eye(n), x0=x0, P0=1e-2 * np.eye(n))


def test_filter_config_validation():
    cfg, _ = make_linear_problem()
    bad_q = np.eye(4)
    bad_q[0, 1] = 0.5
    with pytest.raises(ValueError):
        flt.FilterConfig(process=cfg.process, measurement=cfg.measurement,
                         Q=bad_q, x0=cfg.x0, P0=cfg.P0)
    with pytest.raises(ValueError):
        flt.FilterConfig(process=cfg.process, measurement=cfg.measurement,
                         Q=cfg.Q, x0=np.zeros(5), P0=cfg.P0)
    for field, value in [("ukf_alpha", 0.0), ("ukf_kappa", -1.0),
                         ("ukf_detector_r", -0.5), ("pf_particles", 5),
                         ("pf_ess_threshold", 0.0), ("fd_eps", 0.0)]:
        with pytest.raises(ValueError):
            flt.FilterConfig(process=cfg.process, measurement=cfg.measurement,
                             Q=cfg.Q, x0=cfg.x0, P0=cfg.P0, **{field: value})


def test_attitude_measurement_selection_rows():
    layout = make_layout()
    meas = flt.attitude_measurement(layout, R_BLOCKS, 7)
    assert meas.H.shape == (11, 7)
    npt.assert_array_equal(meas.H[0:4, 0:4], np.eye(4))
    npt.assert_array_equal(meas.H[4:8, 0:4], np.eye(4))
    npt.assert_array_equal(meas.H[8:11, 4:7], np.eye(3))
    assert not meas.H[0:8, 4:7].any()
    npt.assert_array_equal(np.diag(meas.R),
                           np.r_[np.full(4, 0.001), np.full(4, 0.01),
                                 np.full(3, 2.5e-5)])
    assert meas.hemisphere_blocks == (slice(0, 4), slice(4, 8))


def test_augment_gyro_bias_extends_the_model():
    cfg = rigid_config()
    out = flt.augment_gyro_bias(cfg, q_bias=1e-12, p0_bias=1e-2)
    assert out.process.dim == 10
    assert out.measurement.H.shape == (11, 10)
    npt.assert_array_equal(out.measurement.H[8:11, 7:10], np.eye(3))
    npt.assert_array_equal(out.measurement.H[:, :7], cfg.measurement.H)
    npt.assert_array_equal(out.x0, np.r_[cfg.x0, np.zeros(3)])
    npt.assert_array_equal(out.Q[7:10, 7:10], 1e-12 * np.eye(3))
    with pytest.raises(ValueError):
        flt.augment_gyro_bias(out)  # already augmented


def test_augment_rejects_non_rigid_process():
    cfg, _ = make_linear_problem()
    with pytest.raises(ValueError):
        flt.augment_gyro_bias(cfg)


def test_jacobian_matches_analytic():
    def f(x):
        return np.array([x[0] ** 2, x[0] * x[1], np.sin(x[1])])

    x = np.array([1.3, -0.4])
    expected = np.array([[2.6, 0.0], [-0.4, 1.3], [0.0, np.cos(-0.4)]])
    npt.assert_allclose(flt.jacobian(f, x), expected, rtol=0.0, atol=1e-8)


def test_sigma_points_hand_case():
    """n=1, alpha=1, kappa=0: lambda=0, symmetric unit-weight spread."""
    points, wm, wc = flt.ukf_sigma_points(np.array([2.0]), np.array([[4.0]]),
                                          alpha=1.0, beta=0.0, kappa=0.0)
    npt.assert_allclose(points, [[2.0], [4.0], [0.0]], atol=1e-12)
    npt.assert_allclose(wm, [0.0, 0.5, 0.5], atol=1e-15)
    npt.assert_allclose(wc, [0.0, 0.5, 0.5], atol=1e-15)


def test_sigma_points_reconstruct_moments():
    rng = np.random.default_rng(8)
    mu = rng.standard_normal(4)
    a = rng.standard_normal((4, 4))
    sigma = a @ a.T + 0.5 * np.eye(4)
    points, wm, wc = flt.ukf_sigma_points(mu, sigma, alpha=0.1, beta=2.0, kappa=0.0)
    assert points.shape == (9, 4)
    npt.assert_allclose(wm.sum(), 1.0, atol=1e-12)
    npt.assert_allclose(wm @ points, mu, atol=1e-12)
    d = points - mu
    npt.assert_allclose((wc[:, None] * d).T @ d, sigma, rtol=1e-9, atol=1e-12)


def test_ekf_matches_dense_kalman_oracle(linear_problem):
    """Textbook covariance recursion with explicit inverses."""
    cfg, ys = linear_problem
    ekf = flt.EkfFilter(cfg)
    belief = ekf.initial_belief()
    f, h, q, r = cfg.process.F, cfg.measurement.H, cfg.Q, cfg.measurement.R
    mu, p = cfg.x0.copy(), cfg.P0.copy()
    eye = np.eye(cfg.process.dim)
    worst = 0.0
    for k, y in enumerate(ys):
        belief, _ = ekf.step(belief, y, float(k + 1))
        mu = f @ mu
        p = f @ p @ f.T + q
        s = h @ p @ h.T + r
        gain = p @ h.T @ np.linalg.inv(s)
        mu = mu + gain @ (y - h @ mu)
        p = (eye - gain @ h) @ p
        worst = max(worst, np.abs(belief.mu - mu).max(),
                    np.abs(belief.sigma - p).max())
    assert worst < 1e-8, "EKF drifted from the closed-form recursion: %.3e" % worst


def _run_ukf(detector_r):
    cfg, ys = make_linear_problem()
    cfg.ukf_detector_r = detector_r
    ukf = flt.UkfFilter(cfg)
    belief = ukf.initial_belief()
    mus, dets = [], []
    for k, y in enumerate(ys):
        belief, rec = ukf.step(belief, y, float(k + 1))
        mus.append(belief.mu.copy())
        dets.append(rec.S.copy())
    return np.array(mus), np.array(dets), cfg.measurement.R


def test_ukf_detector_r_shifts_records_not_updates():
    mu0, det0, r = _run_ukf(0.0)
    mu1, det1, _ = _run_ukf(1.0)
    assert np.array_equal(mu0, mu1)  # the state update must not move at all
    npt.assert_allclose(det1 - det0, np.broadcast_to(r, det0.shape),
                        rtol=0.0, atol=1e-12)


def test_ekf_skip_keeps_prediction_only(linear_problem):
    cfg, ys = linear_problem
    ekf = flt.EkfFilter(cfg)
    updated, _ = ekf.step(ekf.initial_belief(), ys[0], 1.0)
    skipped, rec = ekf.step(ekf.initial_belief(), ys[0], 1.0,
                            decide=lambda record: (True, None))
    f = cfg.process.F
    npt.assert_allclose(skipped.mu, f @ cfg.x0, atol=1e-12)
    npt.assert_allclose(skipped.sigma, f @ cfg.P0 @ f.T + cfg.Q, atol=1e-12)
    assert not np.allclose(skipped.mu, updated.mu)
    assert rec.nis > 0.0  # the record still carries the full-row statistic


def test_systematic_resample_hand_positions():
    idx = flt.systematic_resample(np.array([0.5, 0.5]), 0.1)
    npt.assert_array_equal(idx, [0, 1])
    idx = flt.systematic_resample(np.array([1.0, 0.0, 0.0, 0.0]), 0.9)
    npt.assert_array_equal(idx, [0, 0, 0, 0])


def test_systematic_resample_counts_track_weights():
    w = np.array([0.1, 0.2, 0.3, 0.4])
    idx = flt.systematic_resample(np.repeat(w, 25) / 25.0, 0.37)
    counts = np.bincount(idx, minlength=100).reshape(4, 25).sum(axis=1)
    npt.assert_allclose(counts / 100.0, w, atol=0.01)


def test_pf_requires_positive_definite_r():
    cfg, _ = make_linear_problem()
    singular = flt.StackedMeasurement(cfg.measurement.H, np.diag([1.0, 1.0, 0.0]),
                                      cfg.measurement.slices)
    cfg.measurement = singular
    with pytest.raises(ValueError):
        flt.PfFilter(cfg, np.random.default_rng(0))


def test_pf_skip_propagates_without_weighting():
    cfg, ys = make_linear_problem()
    cfg.pf_particles = 50
    pf = flt.PfFilter(cfg, np.random.default_rng(3))
    pset = pf.initial_belief()
    out, rec = pf.step(pset, ys[0], 1.0, decide=lambda record: (True, None))
    npt.assert_array_equal(out.weights, pset.weights)
    assert out.resets == 0
    assert rec.nis > 0.0


def test_pf_resamples_when_ess_collapses():
    cfg, _ = make_linear_problem()
    cfg.pf_particles = 200
    cfg.pf_ess_threshold = 0.9
    tight = flt.StackedMeasurement(cfg.measurement.H, 1e-6 * np.eye(3),
                                   cfg.measurement.slices)
    cfg.measurement = tight
    pf = flt.PfFilter(cfg, np.random.default_rng(4))
    pset = pf.initial_belief()
    y = cfg.measurement.H @ cfg.x0
    out, _ = pf.step(pset, y, 1.0)
    npt.assert_array_equal(out.weights, np.full(200, 1.0 / 200.0))
    assert len(np.unique(out.states, axis=0)) < 200  # duplicates after resampling


def test_pf_degenerate_weights_reset_uniform():
    cfg, _ = make_linear_problem()
    cfg.pf_particles = 50
    pf = flt.PfFilter(cfg, np.random.default_rng(5))
    pset = pf.initial_belief()
    out, _ = pf.step(pset, np.full(3, np.inf), 1.0)
    npt.assert_array_equal(out.weights, np.full(50, 0.02))
    assert out.resets == 1


def test_make_filter_factory():
    cfg, _ = make_linear_problem()
    assert isinstance(flt.make_filter("ekf", cfg), flt.EkfFilter)
    assert isinstance(flt.make_filter("ukf", cfg), flt.UkfFilter)
    assert isinstance(flt.make_filter("pf", cfg, rng=np.random.default_rng(0)),
                      flt.PfFilter)
    with pytest.raises(ValueError):
        flt.make_filter("pf", cfg)  # needs its own stream
    with pytest.raises(ValueError):
        flt.make_filter("enkf", cfg)


def test_estimate_stats_gaussian_and_particles():
    cfg, _ = make_linear_problem()
    mu = np.arange(4.0)
    sigma = np.diag([1.0, 2.0, 3.0, 4.0])
    out_mu, out_var = flt.estimate_stats(flt.GaussianBelief(mu, sigma), cfg.process)
    npt.assert_array_equal(out_mu, mu)
    npt.assert_array_equal(out_var, [1.0, 2.0, 3.0, 4.0])
    pset = flt.ParticleSet(np.array([[0.0], [2.0]]), np.array([0.5, 0.5]))
    proc1 = flt.LinearProcessModel(np.eye(1))
    out_mu, out_var = flt.estimate_stats(pset, proc1)
    npt.assert_allclose(out_mu, [1.0], atol=1e-15)
    npt.assert_allclose(out_var, [1.0], atol=1e-15)


def test_estimate_stats_renormalizes_attitude():
    cfg = rigid_config()
    mu = np.r_[2.0, 0.0, 0.0, 0.0, 0.1, 0.2, 0.3]
    out_mu, _ = flt.estimate_stats(flt.GaussianBelief(mu, np.eye(7)), cfg.process)
    npt.assert_allclose(np.linalg.norm(out_mu[:4]), 1.0, atol=1e-15)
    npt.assert_array_equal(out_mu[4:], mu[4:])


def test_rigid_body_batch_propagation_matches_rows():
    cfg = rigid_config()
    rng = np.random.default_rng(12)
    states = rng.standard_normal((5, 7))
    states[:, :4] /= np.linalg.norm(states[:, :4], axis=1, keepdims=True)
    batch = cfg.process.propagate(states, 0.0)
    for i in range(5):
        row = cfg.process.propagate(states[i:i + 1], 0.0)
        npt.assert_array_equal(batch[i], row[0])


def test_rigid_body_normalize_rows_unit_quaternions():
    cfg = rigid_config()
    states = np.tile(np.r_[2.0, 0.0, 0.0, 0.0, 0.1, 0.2, 0.3], (3, 1))
    out = cfg.process.normalize_rows(states)
    npt.assert_allclose(np.linalg.norm(out[:, :4], axis=1), 1.0, atol=1e-15)


def test_stacked_measurement_align_flips_quaternion_blocks():
    layout = make_layout()
    meas = flt.attitude_measurement(layout, R_BLOCKS, 7)
    mu_pred = np.r_[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
    y = np.r_[-0.9, 0.1, 0.1, 0.1, 0.9, -0.1, -0.1, -0.1, 1.0, 2.0, 3.0]
    aligned = meas.align(y, mu_pred)
    npt.assert_array_equal(aligned[0:4], -y[0:4])   # flipped into agreement
    npt.assert_array_equal(aligned[4:8], y[4:8])    # already aligned
    npt.assert_array_equal(aligned[8:11], y[8:11])  # rates never flip
