"""Acceptance suite: each test checks one criterion at its stated tolerance.

Every test prints a single ``criterion N: PASS|FAIL | details`` line, and the
lines are repeated in the pytest terminal summary.  Run with ``-s`` to see
them inline.
"""
import decimal
import filecmp
import json
import math
import os
import time
from decimal import Decimal

import numpy as np
import pytest
from conftest import record

from torus_lab.cli import main
from torus_lab.fourier import FourierSeries2, decompose, make_example_potential, pendulum_rotator, resum
from torus_lab.kam import KamInput, budget_D0, evaluate, hessian_data
from torus_lab.normal_form import average_nonresonant, average_simple_resonance, d0_centers
from torus_lab.pendulum import (LIB, ROT_MINUS, ROT_PLUS, action_of_energy, bezout_complements,
                                exact_pendulum_chart, log_split_fit, pendulum_action_oracle,
                                twist_hessian)
from torus_lab.resonance import (Annulus, ZoneDecomposition, double_resonance_margins,
                                 enumerate_generators)
from torus_lab.scan import NON_TORUS, PRIMARY, SECONDARY, Tolerances, measure_scan, scaling_fit

ANNULUS = Annulus(0.5, 2.0)


def test_pendulum_rotator_torus_fraction():
    eps, n = 1e-3, 20000
    target = 1 - 4 / (math.pi * ANNULUS.r_outer) * math.sqrt(eps)
    t0 = time.perf_counter()
    rep = measure_scan(pendulum_rotator(), eps, ANNULUS, n, Tolerances(), seed=0)
    seconds = time.perf_counter() - t0
    primary = rep.fractions[PRIMARY]
    total = rep.fractions[PRIMARY] + rep.fractions[SECONDARY]
    ok = abs(primary - target) <= 0.005 and total >= 0.999 and seconds <= 600
    record(1, ok, f"primary {primary:.6f} vs {target:.6f} +- 0.005, total {total:.6f} >= 0.999, "
                  f"{seconds:.0f} s for {n} orbits")
    assert ok


def random_potential(rng, n_modes=50, kmax=15):
    half = {}
    while len(half) < n_modes:
        k = tuple(int(v) for v in rng.integers(-kmax, kmax + 1, size=2))
        if k == (0, 0) or k in half or (-k[0], -k[1]) in half:
            continue
        half[k] = complex(rng.normal(), rng.normal())
    return FourierSeries2.from_half(half, 1.0)


def test_decomposition_exactness():
    rng = np.random.default_rng(2024)
    exact = 0
    for _ in range(100):
        f = random_potential(rng)
        back = resum(decompose(f, 100))
        exact += back == f.coeffs
    k1, k2 = np.meshgrid(np.arange(0, 101), np.arange(-100, 101), indexing="ij")
    keep = (np.gcd(k1, k2) == 1) & ((k1 > 0) | (k2 == 1))
    k1, k2 = k1[keep], k2[keep]
    l1 = np.abs(k1) + np.abs(k2)
    mismatched = [K for K in range(1, 101)
                  if sorted(enumerate_generators(K)) != sorted(zip(k1[l1 <= K].tolist(), k2[l1 <= K].tolist()))]
    ok = exact == 100 and not mismatched
    record(2, ok, f"{exact}/100 potentials reconstructed exactly, enumeration mismatches for Kmax in 1..100: "
                  f"{mismatched or 'none'}")
    assert ok


def admissible_samples(rng, per_K, r=0.5, R=2.0):
    """Admissible ``(y, ell)`` rows grouped by ``(K, k)``; half the ``ell`` lie next to ``kZ``."""
    for K in range(1, 21):
        alpha = r / (32 * K)
        gens = np.array([g for g in enumerate_generators(2 * K) if math.hypot(*g) <= K])
        pick = rng.integers(0, len(gens), size=per_K)
        for gi in np.unique(pick):
            k = gens[gi]
            m = int(np.sum(pick == gi))
            kn = math.hypot(*k)
            u = k / kn
            v = np.array([-u[1], u[0]])
            t = rng.uniform(-alpha, alpha, m) / kn
            rad = np.sqrt(rng.uniform(r * r, R * R, m))
            along = rng.choice([-1.0, 1.0], m) * np.sqrt(rad**2 - t**2)
            Y = t[:, None] * u + along[:, None] * v
            L = np.empty((m, 2), dtype=np.int64)
            for i in range(m):
                while True:
                    if i % 2:
                        j = rng.integers(-int(8 * K / kn), int(8 * K / kn) + 1)
                        ell = j * k + rng.integers(-1, 2, size=2)
                    else:
                        ell = rng.integers(-8 * K, 8 * K + 1, size=2)
                    if math.hypot(*ell) <= 8 * K and k[0] * ell[1] - k[1] * ell[0] != 0:
                        break
                L[i] = ell
            yield Y, k, L, alpha, K


def test_no_double_resonance_property():
    rng = np.random.default_rng(11)
    n = violations = 0
    worst = math.inf
    for Y, k, L, alpha, K in admissible_samples(rng, 5000):
        m = double_resonance_margins(Y, k, L, 0.5, alpha, K)
        n += len(m)
        violations += int(np.sum(m < 0))
        worst = min(worst, float(m.min()))
    ok = n >= 100000 and violations == 0
    record(3, ok, f"{n} samples, {violations} violations, smallest margin {worst:.3e}")
    assert ok


def test_normal_form_contract():
    eps, s = 1e-4, 1.0
    lines, ok = [], True
    for K in (5, 10, 15):
        f = make_example_potential(s, 0.5, 2 * K)
        zones = ZoneDecomposition(ANNULUS, ANNULUS.r_inner / (32 * K), K)
        worst = 0.0
        for c in d0_centers(zones, 3, seed=K, f=f, eps=eps):
            res = average_nonresonant(f, eps, zones, c)
            b = res.bounds["d0_remainder"]
            worst = max(worst, b["value"] / b["bound"])
        leak = 0.0
        for k in zones.generators:
            res = average_simple_resonance(f, eps, k, zones)
            g = res.grid
            leak = max(leak, res.diagnostics["lattice_leak"], float(np.abs(g.project_perp(res.g, k)).max()))
        ok &= worst <= 1 and leak == 0.0
        lines.append(f"K={K}: remainder/bound {worst:.2e}, lattice leak {leak:g} over {len(zones.generators)} zones")
    record(4, ok, "; ".join(lines))
    assert ok


def test_pendulum_oracle_equivalence():
    ch = exact_pendulum_chart()
    z = np.geomspace(1e-6, 10.0, 60)
    err = 0.0
    for sigma in (ROT_PLUS, ROT_MINUS):
        for zz in z:
            err = max(err, abs(action_of_energy(ch, sigma, 1 + zz) - pendulum_action_oracle(1 + zz, sigma)))
    # libration exists only for energies above the well bottom, z < 2
    for zz in z[z < 2]:
        err = max(err, abs(action_of_energy(ch, LIB, 1 - zz) - pendulum_action_oracle(1 - zz, LIB)))
    resid = max(log_split_fit(ch, sigma).residual for sigma in (ROT_PLUS, LIB))
    expo = [twist_hessian(ch, sigma, z=np.geomspace(1e-7, 1.0, 43)).fit["z_exponent"] for sigma in (ROT_PLUS, LIB)]
    ok = err <= 1e-8 and resid <= 1e-6 and all(abs(e + 1) <= 0.05 for e in expo)
    record(5, ok, f"oracle error {err:.2e}, log-split residual {resid:.2e}, "
                  f"twist z-exponents {expo[0]:.4f} (rot) {expo[1]:.4f} (lib)")
    assert ok


def test_bezout_unimodular_all_generators():
    k1, k2 = np.meshgrid(np.arange(0, 1001), np.arange(-1000, 1001), indexing="ij")
    keep = (np.gcd(k1, k2) == 1) & ((k1 > 0) | (k2 == 1))
    K = np.stack([k1[keep], k2[keep]], axis=1).astype(np.int64)
    kb = bezout_complements(K)
    det = kb[:, 0] * K[:, 1] - kb[:, 1] * K[:, 0]
    bad_det = int(np.sum(det != 1))
    bad_norm = int(np.sum(np.abs(kb).max(axis=1) > np.abs(K).max(axis=1)))
    ok = bad_det == 0 and bad_norm == 0
    record(6, ok, f"{len(K)} generators, det != 1: {bad_det}, |kbar| > |k|: {bad_norm}")
    assert ok


def test_kam_certificate_sanity():
    rng = np.random.default_rng(3)
    worst_mu = 0.0
    for _ in range(10000):
        Q, _ = np.linalg.qr(rng.normal(size=(2, 2)))
        lam = np.exp(rng.uniform(-7, 7, size=2))
        M, d = hessian_data(Q @ np.diag(lam) @ Q.T)
        worst_mu = max(worst_mu, KamInput(2, M, d, 1e-6, 1.0, 1.0).mu)
    monotone = True
    for _ in range(200):
        M = math.exp(rng.uniform(0, 2))
        d = M * M * rng.uniform(0.01, 1)
        r, s = rng.uniform(0.1, 2), rng.uniform(0.1, 2)
        flags = [evaluate(KamInput(2, M, d, e0, r, s)).condition for e0 in np.geomspace(1, 1e-30, 61)]
        monotone &= all(b or not a for a, b in zip(flags, flags[1:]))
    # exp(-x) has condition number x, so the error is measured in ulps of the exponent
    rel = 0.0
    with decimal.localcontext() as ctx:
        ctx.prec = 50
        for s, eps, a in zip(rng.uniform(0.1, 3, 1000), 10 ** rng.uniform(-12, -1, 1000),
                             rng.uniform(0.01, 0.16, 1000)):
            x = Decimal(s) / (6 * Decimal(eps) ** Decimal(a))
            ref = (-x).exp()
            err = abs(Decimal(budget_D0(s, eps, a)) - ref) / ref
            rel = max(rel, float(err) / max(1.0, float(x)))
    ulp = np.finfo(float).eps
    ok = worst_mu <= 1 and monotone and rel <= 4 * ulp
    record(7, ok, f"max mu {worst_mu:.6f} over 1e4 Hessians, flag monotone: {monotone}, "
                  f"budget error {rel / ulp:.2f} ulp per unit exponent")
    assert ok


def test_exponential_scaling_substitute():
    f = make_example_potential(1.0, 0.5, 3)
    eps = [0.02, 0.01, 0.005, 0.0025]
    tol = Tolerances(window_periods=30)
    m = [measure_scan(f, e, ANNULUS, 1200, tol, seed=8).fractions[NON_TORUS] for e in eps]
    decreasing = all(b < a for a, b in zip(m, m[1:]))
    fit = scaling_fit(eps, m)
    synth = []
    for a, c, C in [(0.03, 3.0, 1.0), (0.08, 1.0, 0.5), (0.12, 0.5, 2.0), (0.15, 2.0, 0.1)]:
        e = np.array(eps)
        synth.append(abs(scaling_fit(e, C * np.exp(-c * e ** -a)).a - a))
    ok = decreasing and fit.status == "ok" and fit.r2 >= 0.9 and 0 < fit.a < 1 / 6 and max(synth) <= 0.02
    good = [a for a, r2 in zip(fit.a_grid, fit.r2_grid) if r2 >= 0.9]
    span = f"[{min(good):.3f}, {max(good):.3f}]" if good else "empty"
    record(8, ok, f"non-torus fractions {[round(v, 4) for v in m]}, best a={fit.a:.3f} R2={fit.r2:.3f}, "
                  f"a with R2 >= 0.9: {span}, synthetic recovery error {max(synth):.1e}")
    assert ok


def test_determinism_across_workers(tmp_path):
    cfg = {"potential": {"builtin": "esempietto", "Kmax": 3}, "eps": [0.01],
           "scan": {"n_orbits": 200, "tolerances": {"window_periods": 10}},
           "zones": {"grid": 31}, "chart": {"z_points": 5}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    runs = {}
    for tag, w in (("a1", 1), ("b1", 1), ("a8", 8), ("b8", 8)):
        out = tmp_path / tag
        assert main(["all", "--config", str(path), "--out", str(out), "--workers", str(w), "--seed", "5"]) == 0
        runs[tag] = out
    names = sorted(n for n in os.listdir(runs["a1"]) if n != "meta.json")
    differing = []
    for tag in ("b1", "a8", "b8"):
        _, mismatch, errors = filecmp.cmpfiles(runs["a1"], runs[tag], names, shallow=False)
        differing += [f"{tag}/{n}" for n in mismatch + errors]
    ok = not differing and len(names) >= 10
    record(9, ok, f"{len(names)} result files compared over 4 runs (workers 1 and 8), differing: {differing or 'none'}")
    assert ok
