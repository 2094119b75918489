import hashlib
import os
import subprocess
import sys
import textwrap

import numpy as np
import numpy.testing as npt
import pytest

from attbench import core, dynamics as dyn
from attbench.attitude import normalize
from attbench.core import kernels_py

INERTIA = (2.0, 3.0, 4.0)


def batch_states(rows=6, cols=7, seed=21):
    rng = np.random.default_rng(seed)
    states = rng.standard_normal((rows, cols))
    states[:, :4] /= np.linalg.norm(states[:, :4], axis=1, keepdims=True)
    return states


def test_backend_is_compiled_unless_opted_out():
    if os.environ.get("ATTBENCH_PURE_PYTHON"):
        assert core.BACKEND == "python"
    else:
        assert core.BACKEND == "compiled"


def test_python_kernel_matches_active_backend_bitwise():
    states = batch_states()
    a = core.rk4_step_batch(states.copy(), 0.1, *INERTIA, 0.0, 0.0, 0.0)
    b = kernels_py.rk4_step_batch(states.copy(), 0.1, *INERTIA, 0.0, 0.0, 0.0)
    assert np.array_equal(a, b)


def test_kernel_applies_constant_torque():
    states = batch_states()
    free = core.rk4_step_batch(states.copy(), 0.1, *INERTIA, 0.0, 0.0, 0.0)
    pushed = core.rk4_step_batch(states.copy(), 0.1, *INERTIA, 0.5, -0.2, 0.1)
    assert not np.allclose(free[:, 4:7], pushed[:, 4:7])
    py = kernels_py.rk4_step_batch(states.copy(), 0.1, *INERTIA, 0.5, -0.2, 0.1)
    assert np.array_equal(pushed, py)


def test_kernel_renormalizes_quaternions():
    states = batch_states()
    states[:, :4] *= 1.5  # deliberately off the unit sphere
    out = core.rk4_step_batch(states, 0.1, *INERTIA, 0.0, 0.0, 0.0)
    npt.assert_allclose(np.linalg.norm(out[:, :4], axis=1), 1.0,
                        rtol=0.0, atol=1e-12)


def test_kernel_passes_extra_columns_through():
    states = batch_states(cols=10)
    out = core.rk4_step_batch(states.copy(), 0.1, *INERTIA, 0.0, 0.0, 0.0)
    npt.assert_array_equal(out[:, 7:10], states[:, 7:10])


def test_kernel_matches_generic_integrator():
    """One trajectory two ways: batched kernel vs scalar RK4 plus renorm."""
    state = np.array([0.5, 0.5, 0.5, 0.5, 0.1, -0.2, 0.05])
    traj = dyn.integrate(state, 0.1, 100, INERTIA)

    def rhs(x, t):
        return dyn.derivative(x, t, INERTIA)

    x = state.copy()
    for k in range(100):
        x = dyn.rk4_step(x, k * 0.1, 0.1, rhs)
        x[:4] = normalize(x[:4])
    npt.assert_allclose(traj.states[-1], x, rtol=0.0, atol=1e-10)


def trajectory_digest():
    cfg_state = np.array([0.5, 0.5, 0.5, 0.5, 0.1, -0.2, 0.05])
    traj = dyn.integrate(cfg_state, 0.1, 500, INERTIA)
    return hashlib.sha256(traj.states.tobytes()).hexdigest()


def test_pure_python_env_toggle_is_bit_identical():
    """The fallback must reproduce the compiled trajectory exactly."""
    script = textwrap.dedent("""
        import hashlib
        import numpy as np
        from attbench import core, dynamics as dyn
        state = np.array([0.5, 0.5, 0.5, 0.5, 0.1, -0.2, 0.05])
        traj = dyn.integrate(state, 0.1, 500, (2.0, 3.0, 4.0))
        print(core.BACKEND)
        print(hashlib.sha256(traj.states.tobytes()).hexdigest())
    """)
    env = dict(os.environ, ATTBENCH_PURE_PYTHON="1")
    proc = subprocess.run([sys.executable, "-c", script], env=env,
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    backend, digest = proc.stdout.split()
    assert backend == "python"
    assert digest == trajectory_digest()
