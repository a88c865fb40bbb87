"""Compiled inner loops for orbit integration.

The potential is passed as one representative ``k`` per ``+-k`` pair with
complex amplitude ``c``, so ``f(x) = sum 2 Re(c exp(i k.x))``.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _power_tables(x1, x2, n1, n2, p1, p2):
    z1 = np.exp(1j * x1)
    z2 = np.exp(1j * x2)
    p1[n1] = 1.0
    p2[n2] = 1.0
    for m in range(1, n1 + 1):
        p1[n1 + m] = p1[n1 + m - 1] * z1
        p1[n1 - m] = p1[n1 + m].conjugate()
    for m in range(1, n2 + 1):
        p2[n2 + m] = p2[n2 + m - 1] * z2
        p2[n2 - m] = p2[n2 + m].conjugate()


@njit(cache=True)
def _grad(modes, amps, x1, x2, n1, n2, p1, p2):
    g1 = 0.0
    g2 = 0.0
    if modes.shape[0] > 8:
        _power_tables(x1, x2, n1, n2, p1, p2)
        for m in range(modes.shape[0]):
            k1 = modes[m, 0]
            k2 = modes[m, 1]
            v = (amps[m] * p1[n1 + k1] * p2[n2 + k2]).imag
            g1 -= 2.0 * k1 * v
            g2 -= 2.0 * k2 * v
        return g1, g2
    for m in range(modes.shape[0]):
        k1 = modes[m, 0]
        k2 = modes[m, 1]
        ph = k1 * x1 + k2 * x2
        v = amps[m].real * np.sin(ph) + amps[m].imag * np.cos(ph)
        g1 -= 2.0 * k1 * v
        g2 -= 2.0 * k2 * v
    return g1, g2


@njit(cache=True)
def _potential(modes, amps, x1, x2, n1, n2, p1, p2):
    _power_tables(x1, x2, n1, n2, p1, p2)
    v = 0.0
    for m in range(modes.shape[0]):
        v += 2.0 * (amps[m] * p1[n1 + modes[m, 0]] * p2[n2 + modes[m, 1]]).real
    return v


@njit(cache=True)
def trajectory(modes, amps, eps, y0, x0, dt, n_steps, stride):
    """Drift-kick-drift integration of one orbit, sampled every ``stride`` steps.

    Returns ``(ys, xs, energies)`` with ``n_steps // stride + 1`` rows; angles
    are not reduced modulo 2 pi.
    """
    n1 = 0
    n2 = 0
    for m in range(modes.shape[0]):
        n1 = max(n1, abs(modes[m, 0]))
        n2 = max(n2, abs(modes[m, 1]))
    p1 = np.empty(2 * n1 + 1, dtype=np.complex128)
    p2 = np.empty(2 * n2 + 1, dtype=np.complex128)
    n_out = n_steps // stride + 1
    ys = np.empty((n_out, 2))
    xs = np.empty((n_out, 2))
    es = np.empty(n_out)
    y1, y2 = y0[0], y0[1]
    x1, x2 = x0[0], x0[1]
    h = 0.5 * dt
    ys[0, 0] = y1
    ys[0, 1] = y2
    xs[0, 0] = x1
    xs[0, 1] = x2
    es[0] = 0.5 * (y1 * y1 + y2 * y2) + eps * _potential(modes, amps, x1, x2, n1, n2, p1, p2)
    j = 1
    for n in range(1, n_steps + 1):
        x1 += h * y1
        x2 += h * y2
        if eps != 0.0:
            g1, g2 = _grad(modes, amps, x1, x2, n1, n2, p1, p2)
            y1 -= dt * eps * g1
            y2 -= dt * eps * g2
        x1 += h * y1
        x2 += h * y2
        if n % stride == 0:
            ys[j, 0] = y1
            ys[j, 1] = y2
            xs[j, 0] = x1
            xs[j, 1] = x2
            es[j] = 0.5 * (y1 * y1 + y2 * y2) + eps * _potential(modes, amps, x1, x2, n1, n2, p1, p2)
            j += 1
    return ys, xs, es


@njit(cache=True)
def scan_orbits(modes, amps, eps, Y0, X0, dt, n_win, n_windows, weights, cand, stride):
    """Stream orbits without storing trajectories.

    For each orbit returns weighted Birkhoff averages of the angle velocity
    over consecutive windows, the maximal energy deviation, and the range
    (max - min) of each candidate combination ``k.x`` over the horizon.
    """
    n_orb = Y0.shape[0]
    n_cand = cand.shape[0]
    n1 = 0
    n2 = 0
    for m in range(modes.shape[0]):
        n1 = max(n1, abs(modes[m, 0]))
        n2 = max(n2, abs(modes[m, 1]))
    p1 = np.empty(2 * n1 + 1, dtype=np.complex128)
    p2 = np.empty(2 * n2 + 1, dtype=np.complex128)
    rho = np.zeros((n_orb, n_windows, 2))
    de = np.zeros(n_orb)
    crange = np.zeros((n_orb, n_cand))
    cmin = np.empty(n_cand)
    cmax = np.empty(n_cand)
    h = 0.5 * dt
    for i in range(n_orb):
        y1, y2 = Y0[i, 0], Y0[i, 1]
        x1, x2 = X0[i, 0], X0[i, 1]
        e0 = 0.5 * (y1 * y1 + y2 * y2) + eps * _potential(modes, amps, x1, x2, n1, n2, p1, p2)
        emax = 0.0
        for c in range(n_cand):
            v = cand[c, 0] * x1 + cand[c, 1] * x2
            cmin[c] = v
            cmax[c] = v
        for w in range(n_windows):
            a1 = 0.0
            a2 = 0.0
            for n in range(n_win):
                ya1 = y1
                ya2 = y2
                x1 += h * y1
                x2 += h * y2
                if eps != 0.0:
                    g1, g2 = _grad(modes, amps, x1, x2, n1, n2, p1, p2)
                    y1 -= dt * eps * g1
                    y2 -= dt * eps * g2
                x1 += h * y1
                x2 += h * y2
                wt = weights[n]
                a1 += wt * (ya1 + y1)
                a2 += wt * (ya2 + y2)
                if n % stride == 0:
                    for c in range(n_cand):
                        v = cand[c, 0] * x1 + cand[c, 1] * x2
                        if v < cmin[c]:
                            cmin[c] = v
                        elif v > cmax[c]:
                            cmax[c] = v
            rho[i, w, 0] = 0.5 * a1
            rho[i, w, 1] = 0.5 * a2
            e = 0.5 * (y1 * y1 + y2 * y2) + eps * _potential(modes, amps, x1, x2, n1, n2, p1, p2)
            emax = max(emax, abs(e - e0))
        de[i] = emax
        for c in range(n_cand):
            crange[i, c] = cmax[c] - cmin[c]
    return rho, de, crange
