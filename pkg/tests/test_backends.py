import os
import subprocess
import sys

import numpy as np
import pytest

from definetti import BandPolicy, BarrierPolicy, SimConfig, simulate_paths
from definetti._backend import available
from definetti.hjb import _coefficients, jump_weights
from definetti.reproduce import am_model

backends = available()
needs_compiled = pytest.mark.skipif("compiled" not in backends, reason="compiled core not built")


@needs_compiled
@pytest.mark.parametrize("args", [
    (1.0, 1.0, 0.0, 1.0, 1, 0.0916, 0.1),
    (0.0, 21.4, 10.0, 1.0, 2, 0.0396, 0.1),
    (0.0, 3.0, 2.0, 1.0, 1, 0.0, 0.0),
])
def test_talbot_kernels_agree(args):
    t = np.array([0.01, 0.5, 3.0, 17.0])
    a = backends["compiled"].talbot_tilted(*args, t, 64)
    b = backends["python"].talbot_tilted(*args, t, 64)
    np.testing.assert_allclose(a, b, rtol=1e-13)


@needs_compiled
def test_jump_integrals_agree(rng):
    w, e = jump_weights(am_model(), 500, 0.05)
    v = rng.random(501)
    a = np.asarray(backends["compiled"].jump_integrals(w, e, v))
    b = backends["python"].jump_integrals(w, e, v)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


@needs_compiled
@pytest.mark.parametrize("dirichlet", [False, True])
def test_evaluate_policy_agree(rng, dirichlet):
    m = am_model()
    n, h = 400, 0.05
    w, e = jump_weights(m, n, h)
    a_up, a_dn, a_0 = _coefficients(m, 0.1, h, "upwind")
    pay = (rng.random(n + 1) < 0.3).astype(np.uint8)
    pay[0], pay[-1] = 0, 1
    a = np.asarray(backends["compiled"].evaluate_policy(pay, w, e, a_up, a_dn, a_0, m.lam, h, dirichlet))
    b = backends["python"].evaluate_policy(pay, w, e, a_up, a_dn, a_0, m.lam, h, dirichlet)
    np.testing.assert_allclose(a, b, rtol=1e-10)


@needs_compiled
def test_simulate_path_bitwise(brownian, cl):
    for m, pol in ((brownian, BandPolicy(((0.0, 0.5), (1.0, 2.0)))), (cl, BarrierPolicy(1.2))):
        cfg = SimConfig(m, 1.5, pol, q=0.1, paths=200, seed=99)
        assert list(simulate_paths(cfg, backend=backends["compiled"])) == \
            list(simulate_paths(cfg, backend=backends["python"]))


def test_pure_python_switch():
    env = dict(os.environ, DEFINETTI_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import definetti; print(definetti.COMPILED)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"
