import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from torus_lab.kam import KamInput, budget_D0, budget_total, evaluate, hessian_data


def random_spd(rng, n=2):
    A = rng.normal(size=(n, n))
    return A @ A.T + 1e-3 * np.eye(n)


def test_certificate_frozen_values():
    cert = evaluate(KamInput(n=2, M=2.0, d=1.0, eps0=1e-9, r=0.5, s=0.5))
    mu = 0.25
    eps = 1e-9 / (2.0 * 0.25)
    assert cert.mu == mu
    assert cert.epsilon == pytest.approx(eps, rel=1e-15)
    assert cert.threshold == pytest.approx(1e-3 * mu**8 * 0.5**14, rel=1e-15)
    assert cert.ratio == pytest.approx(eps / (mu**8 * 0.5**14), rel=1e-15)
    assert cert.alpha == pytest.approx(2.0 * 0.5 / (mu * 0.5**10.5) * math.sqrt(eps), rel=1e-14)
    assert cert.r_hat == pytest.approx(mu**2 * 0.5)
    assert cert.r_eps == pytest.approx(math.sqrt(eps) * 0.5 / (1e-3 * mu), rel=1e-14)
    assert cert.measure_bound == pytest.approx(cert.C * math.sqrt(eps), rel=1e-15)
    assert cert.condition is False


def test_condition_holds_for_tiny_perturbation():
    cert = evaluate(KamInput(n=2, M=1.0, d=1.0, eps0=1e-15, r=1.0, s=1.0))
    assert cert.condition
    assert cert.epsilon <= cert.threshold


@pytest.mark.parametrize("kw", [dict(r=0.0), dict(s=-1.0), dict(d=0.0), dict(M=float("inf")),
                                dict(tau=0.5), dict(d=2.0)])
def test_invalid_inputs(kw):
    base = dict(n=2, M=1.0, d=1.0, eps0=1e-6, r=1.0, s=1.0)
    base.update(kw)
    with pytest.raises(ValueError):
        KamInput(**base)


def test_mu_at_most_one_for_spd_hessians():
    rng = np.random.default_rng(5)
    for _ in range(2000):
        M, d = hessian_data(random_spd(rng))
        assert d / M**2 <= 1 + 1e-12


@settings(max_examples=100)
@given(st.floats(1e-14, 1e-2), st.floats(0.01, 0.99))
def test_flag_monotone_in_eps0(eps0, shrink):
    big = evaluate(KamInput(n=2, M=1.5, d=1.0, eps0=eps0, r=0.7, s=0.8))
    small = evaluate(KamInput(n=2, M=1.5, d=1.0, eps0=eps0 * shrink, r=0.7, s=0.8))
    assert small.ratio <= big.ratio
    assert small.condition or not big.condition


def test_hessian_data_stack():
    H = np.array([np.diag([2.0, 1.0]), np.diag([3.0, 0.5])])
    M, d = hessian_data(H)
    assert M == pytest.approx(3.0)
    assert d == pytest.approx(1.5)


@pytest.mark.parametrize("s,eps,a", [(1.0, 1e-3, 0.1), (0.5, 1e-6, 0.15), (2.0, 0.02, 0.05)])
def test_budget_D0_formula(s, eps, a):
    assert budget_D0(s, eps, a) == math.exp(-s / (6 * eps**a))


def test_budget_total_decreases():
    vals = [budget_total(e, 0.1, 0.5, 2.0, 1.0) for e in (1e-2, 1e-4, 1e-8, 1e-16)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("a", [0.0, 1 / 6, 0.3])
def test_budget_rejects_exponent(a):
    with pytest.raises(ValueError):
        budget_D0(1.0, 1e-3, a)


def test_certificate_json(tmp_path):
    cert = evaluate(KamInput(n=2, M=1.0, d=0.5, eps0=1e-8, r=0.5, s=1.0))
    path = tmp_path / "kam.json"
    cert.save(path)
    d = json.loads(path.read_text())
    assert d["input"]["eps0"] == 1e-8
    assert d["condition"] == cert.condition


def test_d0_budget_reference_value():
    assert budget_D0(1.0, 1e-3, 0.1) == pytest.approx(math.exp(-(10**0.3) / 6), rel=1e-15)
    assert budget_D0(1.0, 1e-3, 0.1) == pytest.approx(0.7170973, abs=1e-7)


def test_log_budget_affine_in_inverse_power():
    eps = np.geomspace(1e-12, 1e-2, 12)
    a = 0.1
    logs = np.log([budget_D0(1.0, e, a) for e in eps])
    slope, icpt = np.polyfit(eps**-a, logs, 1)
    assert slope == pytest.approx(-1 / 6, rel=1e-12)
    assert icpt == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(logs, slope * eps**-a + icpt, rtol=1e-12, atol=1e-14)


def test_nonresonant_data_pass_for_small_eps(tmp_path):
    from torus_lab.experiments import Runner, expand_config
    runner = Runner(expand_config({"eps": [1e-3, 1e-10, 1e-20, 1e-30]}), str(tmp_path))
    flags = [row["certificate"]["condition"] for row in runner.kam()]
    assert flags == [False, False, True, True]


def test_scaling_leaves_normalised_size_invariant():
    base = evaluate(KamInput(n=2, M=1.0, d=0.5, eps0=1e-9, r=0.2, s=0.5))
    for kappa in (4.0, 0.01):
        scaled = evaluate(KamInput(n=2, M=1.0, d=0.5, eps0=kappa * 1e-9, r=math.sqrt(kappa) * 0.2, s=0.5))
        assert scaled.epsilon == pytest.approx(base.epsilon, rel=1e-14)
    doubled = evaluate(KamInput(n=2, M=1.0, d=0.5, eps0=1e-9, r=0.4, s=0.5))
    assert doubled.epsilon == pytest.approx(base.epsilon / 4, rel=1e-14)


def test_budget_monotone_in_parameters():
    assert budget_D0(2.0, 1e-3, 0.1) < budget_D0(1.0, 1e-3, 0.1)
    assert budget_total(1e-8, 0.1, 0.5, 2.0, 1.0, c2=2.0) < budget_total(1e-8, 0.1, 0.5, 2.0, 1.0, c2=1.0)
    assert budget_total(1e-30, 0.1, 0.5, 2.0, 1.0) <= 1.0
