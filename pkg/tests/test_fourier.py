import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from torus_lab.fourier import (FourierSeries2, check_genericity, check_P1, check_P3, decompose,
                               make_example_potential, norm_s, p1_floor, pendulum_rotator,
                               project_to_lattice, resum, threshold_K)
from torus_lab.resonance import is_generator


def random_potential(rng, n_modes=50, kmax=12, s=1.0):
    half = {}
    while len(half) < n_modes:
        k = tuple(int(v) for v in rng.integers(-kmax, kmax + 1, size=2))
        if k == (0, 0) or (-k[0], -k[1]) in half:
            continue
        half[k] = complex(rng.normal(), rng.normal())
    return FourierSeries2.from_half(half, s)


def test_pendulum_rotator_values():
    f = pendulum_rotator()
    assert f([0.0, 0.0]) == pytest.approx(1.0, abs=1e-15)
    assert f([1.0, 2.0]) == pytest.approx(math.cos(1.0), abs=1e-15)
    np.testing.assert_allclose(f.gradient([1.0, 2.0]), [-math.sin(1.0), 0.0], atol=1e-15)


def test_example_potential_frozen_values():
    f = make_example_potential(1.0, 0.5, 6)
    assert len(f) == 48
    assert f.max_order == 6
    assert f.half()[(1, 0)] == pytest.approx(0.5 * math.exp(-1.0), rel=1e-15)
    assert f([0.3, 0.7]) == pytest.approx(0.6904074757027037, rel=1e-13)
    np.testing.assert_allclose(f.gradient([0.3, 0.7]), [-0.13967781, -0.31433913], atol=1e-8)
    assert norm_s(f, 1.0) == pytest.approx(0.5, rel=1e-14)


def test_real_valued_and_conjugate_symmetry():
    f = random_potential(np.random.default_rng(1))
    for k, c in f:
        assert f.coeffs[(-k[0], -k[1])] == pytest.approx(np.conj(c))
    x = np.random.default_rng(2).uniform(0, 2 * np.pi, size=(20, 2))
    vals = np.array([f(xi) for xi in x])
    assert np.all(np.isfinite(vals)) and vals.dtype.kind == "f"


def test_zero_mode_rejected():
    with pytest.raises(ValueError):
        FourierSeries2.from_half({(0, 0): 1.0}, 1.0)


@pytest.mark.parametrize("s", [0.0, -1.0])
def test_nonpositive_width_rejected(s):
    with pytest.raises(ValueError):
        FourierSeries2.from_half({(1, 0): 1.0}, s)


def test_gradient_matches_finite_differences():
    f = make_example_potential(1.0, 0.5, 5)
    x = np.array([0.4, -1.1])
    h = 1e-6
    fd = [(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(2)]
    np.testing.assert_allclose(f.gradient(x), fd, atol=1e-8)


def test_json_round_trip(tmp_path):
    f = random_potential(np.random.default_rng(3), n_modes=10)
    path = tmp_path / "pot.json"
    f.save(path)
    g = FourierSeries2.load(path)
    assert g.s == f.s
    assert g.coeffs == f.coeffs


def test_decompose_assigns_every_mode_once():
    f = random_potential(np.random.default_rng(4))
    prof = decompose(f, 100)
    assert all(is_generator(g) for g in prof)
    assert sum(len(p.coeffs) for p in prof.values()) == len(f)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_decompose_resum_exact(seed):
    f = random_potential(np.random.default_rng(seed), n_modes=20, kmax=9)
    assert resum(decompose(f, 100)) == f.coeffs


def test_lattice_projection_profile():
    f = FourierSeries2.from_half({(2, 4): 1.0, (1, 2): 0.25, (1, 0): 3.0}, 1.0)
    prof = project_to_lattice(f, (1, 2))
    assert prof.coeffs == {1: 0.25, -1: 0.25, 2: 1.0, -2: 1.0}
    with pytest.raises(ValueError):
        project_to_lattice(f, (2, 4))


@pytest.mark.parametrize("s,delta,expected", [(1.0, 0.5, 2), (0.5, 0.1, 12), (2.0, 1.0, 2)])
def test_threshold_K(s, delta, expected):
    assert threshold_K(s, delta) == expected


def test_norm_requires_positive_width():
    with pytest.raises(ValueError):
        norm_s(pendulum_rotator(), 0.0)


def test_norm_weighted_by_width():
    f = FourierSeries2.from_half({(1, 1): 0.5}, 1.0)
    assert norm_s(f, 0.5) == pytest.approx(0.5 * math.e)
    assert norm_s(f, 1.0) == pytest.approx(0.5 * math.exp(2.0))


def test_example_potential_passes_membership_checks():
    f = make_example_potential(1.0, 0.5, 20)
    rep = check_genericity(f, 1.0, 0.5, 20)
    assert rep.passed
    assert rep.to_dict()["passed"] is True


def test_missing_high_modes_are_reported():
    f = make_example_potential(1.0, 0.5, 6)
    rep = check_P1(f, 1.0, 0.5, 9)
    assert rep.p1_failures
    assert all(abs(d["k"][0]) + abs(d["k"][1]) > 6 for d in rep.p1_failures)


def test_small_high_mode_fails_floor():
    half = dict(make_example_potential(1.0, 0.5, 8).half())
    half[(3, 4)] = 0.5 * p1_floor(7, 1.0, 0.5)
    rep = check_P1(FourierSeries2.from_half(half, 1.0), 1.0, 0.5, 8)
    assert [tuple(d["k"]) for d in rep.p1_failures] == [(3, 4)]


@pytest.mark.parametrize("s,delta", [(1.0, 0.5), (0.3, 2.0)])
def test_example_potential_norm_attained_on_unit_modes(s, delta):
    f = make_example_potential(s, delta, 8)
    assert norm_s(f, s) == pytest.approx(delta, rel=1e-14)
    for k, c in f:
        n1 = abs(k[0]) + abs(k[1])
        assert abs(c) * math.exp(n1 * s) == pytest.approx(delta / n1**2, rel=1e-14)


@pytest.mark.parametrize("k", [(1, 0), (0, 1), (1, -1), (2, 1), (1, 3)])
def test_example_potential_profile_is_single_cosine(k):
    s, delta = 1.0, 0.5
    prof = project_to_lattice(make_example_potential(s, delta, 8), k)
    n1 = abs(k[0]) + abs(k[1])
    amp = delta * n1**-2 * math.exp(-n1 * s)
    assert prof.coeffs == pytest.approx({-1: amp, 1: amp}, rel=1e-14)
    theta = np.linspace(0, 2 * np.pi, 9)
    np.testing.assert_allclose(prof(theta), 2 * amp * np.cos(theta), atol=1e-16)


@pytest.mark.parametrize("s,delta,expected", [(1.0, 1.0, 2), (0.1, 0.1, 93)])
def test_threshold_reference_values(s, delta, expected):
    assert threshold_K(s, delta, 2.0) == expected


def test_example_potential_meets_p1_with_zero_margin():
    rep = check_genericity(make_example_potential(1.0, 0.5, 12), 1.0, 0.5, 12)
    assert rep.passed
    margins = [m for _, m in rep.margins["P1"]]
    assert len(margins) > 0
    assert max(abs(m) for m in margins) == 0.0


def test_smallest_example_potential():
    f = make_example_potential(1.0, 0.5, 1)
    assert set(f.coeffs) == {(1, 0), (-1, 0), (0, 1), (0, -1)}
    for c in f.coeffs.values():
        assert c == pytest.approx(0.5 * math.exp(-1), rel=1e-15)


def test_p3_detects_symmetric_critical_values():
    # cos t + cos 2t has two minima at cos t = -1/4 with equal values
    sym = FourierSeries2.from_half({(1, 0): 0.5, (2, 0): 0.5}, 1.0)
    rep = check_P3(sym, 1.0, 0.5)
    failing = [d for d in rep.p3_failures if d["k"] == (1, 0)]
    assert failing and len(failing[0]["critical_points"]) == 4
    shifted = FourierSeries2.from_half({(1, 0): 0.5, (2, 0): 0.5 * np.exp(0.3j)}, 1.0)
    rep = check_P3(shifted, 1.0, 0.5)
    assert not [d for d in rep.p3_failures if d["k"] == (1, 0)]
    assert dict(rep.margins["P3"])[(1, 0)] > 0.1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.2, 1.5), st.floats(0.1, 1.0))
def test_norm_comparison_inequality(seed, s, sigma):
    # sup-type norm <= weighted l1 norm <= (coth^2(sigma/2) - 1) sup-type norm at width s + sigma
    f = random_potential(np.random.default_rng(seed), n_modes=20, kmax=6, s=s)
    weights = np.exp(np.abs(f.modes).sum(axis=1) * s)
    l1 = float(np.sum(np.abs(f.amplitudes) * weights))
    assert norm_s(f, s) <= l1 * (1 + 1e-14)
    factor = 1 / math.tanh(sigma / 2) ** 2 - 1
    assert l1 <= factor * norm_s(f, s + sigma) * (1 + 1e-14)
