"""Effective pendulum near a simple resonance and its action-angle charts.

In the frame ``Q = A x`` with ``A = [[kb1, kb2], [k1, k2]]`` unimodular, the
resonant angle is ``q2 = k.x``.  After rescaling actions by
``lam = sqrt(2 |f_k| eps)`` and energies by ``lam^2`` the averaged system
reads

    1/2 |perp(kb)|^2 p1^2 + 1/2 |k|^2 p2^2 + cos(q2 + theta_k) + W(p1) + V(q2)

with ``W`` and ``V`` small.  For fixed ``p1`` this is a one degree of
freedom system whose level sets split into two rotational families
(``sigma = +1, -1``) and one librational family (``sigma = 0``).
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import brentq, minimize_scalar
from scipy.special import ellipe, ellipk

from . import _io
from .resonance import is_generator

__all__ = [
    "BezoutFrame",
    "PendulumChart",
    "TwistReport",
    "ChartError",
    "bezout_complement",
    "bezout_complements",
    "build_chart",
    "exact_pendulum_chart",
    "separatrix_energy",
    "action_of_energy",
    "energy_of_action",
    "frequency_of_energy",
    "angle_of",
    "log_split_fit",
    "twist_hessian",
    "admissible_region",
    "excluded_band",
    "pendulum_action_oracle",
]

ROT_PLUS, ROT_MINUS, LIB = 1, -1, 0


class ChartError(ValueError):
    """The resonance does not admit a pendulum chart with the given data."""


# -- Bezout frame -----------------------------------------------------------

def _egcd(a: int, b: int):
    x0, x1, y0, y1 = 1, 0, 0, 1
    while b:
        q, a, b = a // b, b, a % b
        x0, x1 = x1, x0 - q * x1
        y0, y1 = y1, y0 - q * y1
    return a, x0, y0


def _reduce(kb1, kb2, k1, k2):
    # kb + t k keeps the determinant; pick t minimising the sup norm
    best = (max(abs(kb1), abs(kb2)), 0)
    cands = set()
    for a, b in ((kb1, k1), (kb2, k2)):
        if b:
            t0 = -a // b
            cands.update((t0 - 1, t0, t0 + 1, t0 + 2))
    for t in cands:
        v = max(abs(kb1 + t * k1), abs(kb2 + t * k2))
        if v < best[0] or (v == best[0] and abs(t) < abs(best[1])):
            best = (v, t)
    t = best[1]
    return kb1 + t * k1, kb2 + t * k2


def bezout_complement(k) -> tuple[int, int]:
    """Integer ``kb`` with ``kb1 k2 - kb2 k1 = 1`` and ``|kb|_inf <= |k|_inf``."""
    k1, k2 = int(k[0]), int(k[1])
    if not is_generator((k1, k2)):
        raise ValueError(f"{(k1, k2)} is not a generator")
    g, u, v = _egcd(k2, k1)  # u k2 + v k1 = g = +-1
    u, v = u * g, v * g
    return _reduce(u, -v, k1, k2)


def bezout_complements(K: np.ndarray) -> np.ndarray:
    """Vectorised :func:`bezout_complement` for an ``(n, 2)`` integer array."""
    K = np.asarray(K, dtype=np.int64)
    a = K[:, 1].copy()
    b = K[:, 0].copy()
    x0 = np.ones_like(a)
    x1 = np.zeros_like(a)
    y0 = np.zeros_like(a)
    y1 = np.ones_like(a)
    while np.any(b != 0):
        nz = b != 0
        q = np.zeros_like(a)
        q[nz] = a[nz] // b[nz]
        a_new = np.where(nz, b, a)
        b_new = np.where(nz, a - q * np.where(nz, b, 0), 0)
        x0, x1 = np.where(nz, x1, x0), np.where(nz, x0 - q * x1, x1)
        y0, y1 = np.where(nz, y1, y0), np.where(nz, y0 - q * y1, y1)
        a, b = a_new, b_new
    u, v = x0 * a, y0 * a
    kb1, kb2 = u, -v
    k1, k2 = K[:, 0], K[:, 1]
    best1, best2 = kb1.copy(), kb2.copy()
    bestn = np.maximum(np.abs(kb1), np.abs(kb2))
    for comp_a, comp_b in ((kb1, k1), (kb2, k2)):
        safe = np.where(comp_b != 0, comp_b, 1)
        t0 = np.where(comp_b != 0, -comp_a // safe, 0)
        for d in (-1, 0, 1, 2):
            t = t0 + d
            c1, c2 = kb1 + t * k1, kb2 + t * k2
            n = np.maximum(np.abs(c1), np.abs(c2))
            better = n < bestn
            best1 = np.where(better, c1, best1)
            best2 = np.where(better, c2, best2)
            bestn = np.where(better, n, bestn)
    return np.stack([best1, best2], axis=1)


@dataclass(frozen=True)
class BezoutFrame:
    k: tuple
    kbar: tuple

    @classmethod
    def of(cls, k) -> "BezoutFrame":
        k = (int(k[0]), int(k[1]))
        return cls(k, bezout_complement(k))

    @property
    def A(self) -> np.ndarray:
        return np.array([self.kbar, self.k], dtype=np.int64)

    @property
    def U(self) -> np.ndarray:
        kb, k = np.array(self.kbar, float), np.array(self.k, float)
        return np.array([[1.0, 0.0], [-(kb @ k) / (k @ k), 1.0]])

    @property
    def perp_kbar(self) -> np.ndarray:
        kb, k = np.array(self.kbar, float), np.array(self.k, float)
        return kb - (kb @ k) / (k @ k) * k

    @property
    def perp2(self) -> float:
        v = self.perp_kbar
        return float(v @ v)

    @property
    def knorm(self) -> float:
        return math.hypot(*self.k)

    def to_actions(self, p, lam: float = 1.0) -> np.ndarray:
        """``y = lam A^T U p``."""
        return lam * (np.asarray(p, float) @ (self.A.T @ self.U).T)

    def from_actions(self, y, lam: float = 1.0) -> np.ndarray:
        return np.linalg.solve(self.A.T @ self.U, np.asarray(y, float).T).T / lam

    def to_dict(self):
        return {"k": list(self.k), "kbar": list(self.kbar), "A": self.A.tolist(), "U": self.U.tolist()}


# -- chart --------------------------------------------------------------------

@dataclass
class PendulumChart:
    """Rescaled one degree of freedom system at a simple resonance.

    ``v_modes`` holds the Fourier coefficients (``j -> c_j``, both signs) of
    the correction ``V(q)``; ``w_poly`` the Taylor coefficients of ``W`` in
    ``p1 - p1_center``.
    """

    frame: BezoutFrame
    lam: float
    theta_k: float
    v_modes: dict = field(default_factory=dict)
    w_poly: tuple = (0.0, 0.0, 0.0)
    p1_center: float = 0.0
    p1_half: float = 1.0
    eta: float = 0.0
    z_min: float = 1e-8
    quad_tol: float = 1e-13
    _crit: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        modes = {1: 0.5 * np.exp(1j * self.theta_k), -1: 0.5 * np.exp(-1j * self.theta_k)}
        for j, c in self.v_modes.items():
            modes[j] = modes.get(j, 0) + c
        self._j = np.array(sorted(modes), dtype=float)
        self._c = np.array([modes[j] for j in sorted(modes)], dtype=complex)

    @property
    def knorm(self) -> float:
        return self.frame.knorm

    def U(self, q, deriv: int = 0):
        q = np.asarray(q, dtype=float)
        e = np.exp(1j * np.multiply.outer(q, self._j))
        return (e @ (self._c * (1j * self._j) ** deriv)).real

    def W(self, p1, deriv: int = 0) -> float:
        d = np.asarray(p1, float) - self.p1_center
        w0, w1, w2 = self.w_poly
        return (w0 + w1 * d + 0.5 * w2 * d * d, w1 + w2 * d, w2 * np.ones_like(d))[deriv]

    def critical(self) -> dict:
        """Hyperbolic point ``q_h``, elliptic point ``q_e`` and the values of ``U`` there."""
        if not self._crit:
            q = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
            u = self.U(q)
            h = 2 * np.pi / 4096
            out = {}
            for name, i, sgn in (("q_h", int(np.argmax(u)), -1.0), ("q_e", int(np.argmin(u)), 1.0)):
                res = minimize_scalar(lambda t: sgn * self.U(t), bounds=(q[i] - h, q[i] + h),
                                      method="bounded", options={"xatol": 1e-14})
                out[name] = float(res.x)
            out["U_h"] = float(self.U(out["q_h"]))
            out["U_e"] = float(self.U(out["q_e"]))
            if self.U(out["q_h"], 2) >= 0:
                raise ChartError("no hyperbolic point of the effective potential")
            self._crit.update(out)
        return self._crit

    def to_dict(self) -> dict:
        c = self.critical()
        return {
            "frame": self.frame.to_dict(), "lambda": self.lam, "theta_k": self.theta_k,
            "v_modes": [[int(j), float(v.real), float(v.imag)] for j, v in sorted(self.v_modes.items())],
            "w_poly": list(self.w_poly), "p1_center": self.p1_center, "p1_half": self.p1_half,
            "eta": self.eta, "z_min": self.z_min, "separatrix_energy": c["U_h"] + self.w_poly[0],
            "critical": c,
        }


def exact_pendulum_chart(k=(1, 0)) -> PendulumChart:
    """Chart of ``1/2 |k|^2 p2^2 + cos q2`` (no corrections)."""
    return PendulumChart(BezoutFrame.of(k), lam=1.0, theta_k=0.0)


def build_chart(nf, eps: float, r: float, K: int, delta: float | None = None,
                s: float | None = None, strict_width: bool = True) -> PendulumChart:
    """Pendulum chart from a simple-resonance normal form.

    ``nf`` is the result of averaging at ``k``.  Its resonant part at the
    centre of the square gives ``eps F^k``; the first harmonic fixes
    ``lam`` and ``theta_k``, the higher harmonics form ``V`` and the mean,
    expanded along the resonance line, forms ``W``.
    """
    if nf.lam is None:
        raise ChartError("normal form has trivial lattice")
    frame = BezoutFrame.of(nf.lam)
    prof = nf.profile_modes()
    c1 = prof.get(1, 0j)
    k1 = abs(frame.k[0]) + abs(frame.k[1])
    if delta is not None and s is not None:
        floor = delta * k1**-2 * math.exp(-k1 * s)
        if abs(c1) < eps * floor * (1 - 1e-9):
            raise ChartError(f"|f_k| = {abs(c1) / eps:.3g} below the genericity floor {floor:.3g}")
    if abs(c1) == 0:
        raise ChartError("vanishing first harmonic")
    lam = math.sqrt(2 * abs(c1))
    theta_k = float(np.angle(c1))
    scale = 2 * abs(c1)
    v_modes = {j: c / scale for j, c in prof.items() if abs(j) >= 2}
    grid = nf.grid
    rk = r / (32 * frame.knorm * K)
    width = rk / (4 * lam * frame.knorm)
    if strict_width and width < 1:
        raise ChartError(f"rescaled width {width:.3g} < 1")
    pk = frame.perp_kbar
    p1c = float(grid.center @ pk / (lam * (pk @ pk)))
    p1_half = grid.w / (lam * math.sqrt(pk @ pk))
    ts = np.array([-1.0, -0.5, 0.0, 0.5, 1.0]) * 0.9 * p1_half
    vals = []
    for t in ts:
        y = lam * (p1c + t) * pk
        vals.append(grid.modes_at(nf.g, y)[grid.N, grid.N].real / lam**2)
    w2, w1, w0 = np.polyfit(ts, vals, 2)
    v_norm = sum(abs(c) for c in v_modes.values()) * 2
    eta = max(abs(2 * w2), v_norm)
    return PendulumChart(frame, lam, theta_k, v_modes, (float(w0), float(w1), float(2 * w2)),
                         p1c, p1_half, float(eta))


def separatrix_energy(chart: PendulumChart, p1: float = 0.0) -> float:
    return float(chart.W(p1) + chart.critical()["U_h"])


def _turning_points(chart: PendulumChart, e: float):
    c = chart.critical()
    qh, qe = c["q_h"], c["q_e"]
    if qe < qh:
        qe += 2 * np.pi
    hi = brentq(lambda q: e - chart.U(q), qe, qh + 2 * np.pi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    lo = brentq(lambda q: e - chart.U(q), qh, qe, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return lo, hi


def _loop_integral(chart: PendulumChart, sigma: int, e: float, power: float):
    """``(1/2pi) oint (2(e - U))^power dq`` over the level set (no ``|k|`` factor)."""
    with warnings.catch_warnings():
        # at the requested relative tolerance quad may report roundoff near the separatrix
        warnings.simplefilter("ignore", IntegrationWarning)
        return _loop_integral_raw(chart, sigma, e, power)


def _loop_integral_raw(chart, sigma, e, power):
    c = chart.critical()
    tol = chart.quad_tol
    if sigma == LIB:
        lo, hi = _turning_points(chart, e)
        m, h = 0.5 * (lo + hi), 0.5 * (hi - lo)

        def g(phi):
            q = m + h * math.sin(phi)
            cphi = math.cos(phi)
            if power < 0 and cphi < 1e-6:
                # e - U ~ |U'| h cos^2/2 at the turning points
                return math.sqrt(h / abs(float(chart.U(q, 1))))
            d = max(e - float(chart.U(q)), 0.0)
            if d == 0.0:
                return 0.0
            return h * cphi * (2 * d) ** power
        val, _ = quad(g, -np.pi / 2, np.pi / 2, epsabs=0, epsrel=tol, limit=400)
        return 2 * val / (2 * np.pi)
    qh = c["q_h"]

    def g(q):
        return (2 * max(e - float(chart.U(q)), 0.0)) ** power
    pts = [qh + np.pi]
    val, _ = quad(g, qh, qh + 2 * np.pi, epsabs=0, epsrel=tol, limit=400, points=pts)
    return val / (2 * np.pi)


def _region_check(chart, sigma, e):
    c = chart.critical()
    if sigma in (ROT_PLUS, ROT_MINUS):
        if e <= c["U_h"]:
            raise ValueError("rotational energy must exceed the separatrix energy")
    elif sigma == LIB:
        if not c["U_e"] < e < c["U_h"]:
            raise ValueError("librational energy must lie between the well bottom and the separatrix")
    else:
        raise ValueError(f"unknown region {sigma!r}")


def action_of_energy(chart: PendulumChart, sigma: int, E: float, p1: float = 0.0) -> float:
    """``I2 = (1/2pi) oint p2 dq2`` on the level ``E`` of region ``sigma``.

    Rotational actions carry the sign ``sigma``; librational actions are
    positive and vanish at the bottom of the well.
    """
    e = E - chart.W(p1)
    _region_check(chart, sigma, e)
    val = _loop_integral(chart, sigma, e, 0.5) / chart.knorm
    return float(val if sigma != ROT_MINUS else -val)


def frequency_of_energy(chart: PendulumChart, sigma: int, E: float, p1: float = 0.0) -> float:
    """``dI2/dE``, the period of the reduced motion over ``2 pi`` (positive)."""
    e = E - chart.W(p1)
    _region_check(chart, sigma, e)
    return float(_loop_integral(chart, sigma, e, -0.5) / chart.knorm)


def energy_of_action(chart: PendulumChart, sigma: int, I: float, p1: float = 0.0) -> float:
    """Inverse of :func:`action_of_energy` by bracketed root finding."""
    c = chart.critical()
    W = chart.W(p1)
    a = abs(I)
    if sigma == LIB:
        lo, hi = c["U_e"] + W, c["U_h"] + W
        lo_eps = (hi - lo) * 1e-15
        fa = lambda E: action_of_energy(chart, LIB, E, p1) - a
        return float(brentq(fa, lo + lo_eps, hi - (hi - lo) * 1e-12, xtol=1e-15, rtol=1e-15))
    E0 = c["U_h"] + W
    fa = lambda E: abs(action_of_energy(chart, sigma, E, p1)) - a
    top = E0 + 1.0
    while fa(top) < 0:
        top = E0 + 2 * (top - E0) + 1
    return float(brentq(fa, E0 + 1e-14, top, xtol=1e-15, rtol=1e-15))


def angle_of(chart: PendulumChart, sigma: int, E: float, q, p1: float = 0.0) -> np.ndarray:
    """Action-angle angle ``phi2`` of the point ``(E, q)`` on a rotational level.

    ``phi2`` is the normalised time since the hyperbolic angle, so that
    ``q -> q + 2 pi`` shifts it by exactly ``2 pi``.
    """
    if sigma == LIB:
        raise ValueError("angles are defined here for rotational levels only")
    e = E - chart.W(p1)
    _region_check(chart, sigma, e)
    qh = chart.critical()["q_h"]
    per = _loop_integral(chart, sigma, e, -0.5) * 2 * np.pi

    def t_of(qq):
        n, rem = divmod(qq - qh, 2 * np.pi)
        val, _ = quad(lambda u: (2 * (e - chart.U(u))) ** -0.5, qh, qh + rem, epsabs=0,
                      epsrel=chart.quad_tol, limit=400)
        return n * per + val
    out = np.array([t_of(float(qq)) for qq in np.atleast_1d(q)])
    return 2 * np.pi * out / per


def pendulum_action_oracle(E, sigma: int, knorm: float = 1.0):
    """Closed forms for ``1/2 |k|^2 p^2 + cos q`` through complete elliptic integrals."""
    E = np.asarray(E, dtype=float)
    if sigma == LIB:
        m = (E + 1) / 2
        return 8 / np.pi * (ellipe(m) - (1 - m) * ellipk(m)) / knorm
    val = 2 / np.pi * np.sqrt(2 * (E + 1)) * ellipe(2 / (E + 1)) / knorm
    return sigma * val


# -- near-separatrix structure -------------------------------------------------

@dataclass
class LogSplitFit:
    sigma: int
    p1: float
    phi: np.ndarray
    chi: np.ndarray
    residual: float
    z_range: tuple

    def __call__(self, t):
        t = np.asarray(t, float)
        return np.polyval(self.phi[::-1], t) + np.polyval(self.chi[::-1], t) * t * np.log(t)

    def derivative(self, t, order: int = 1):
        """Derivative in ``t = |z|`` (1st or 2nd)."""
        t = np.asarray(t, float)
        P = np.polynomial.Polynomial
        phi, chi = P(self.phi), P(self.chi)
        if order == 1:
            return phi.deriv()(t) + chi.deriv()(t) * t * np.log(t) + chi(t) * (np.log(t) + 1)
        return (phi.deriv(2)(t) + chi.deriv(2)(t) * t * np.log(t)
                + 2 * chi.deriv()(t) * (np.log(t) + 1) + chi(t) / t)

    def to_dict(self):
        return {"sigma": self.sigma, "p1": self.p1, "phi": self.phi.tolist(), "chi": self.chi.tolist(),
                "residual": self.residual, "z_range": list(self.z_range)}


def log_split_fit(chart: PendulumChart, sigma: int, p1: float = 0.0, z=None,
                  deg_phi: int = 4, deg_chi: int = 4) -> LogSplitFit:
    """Least-squares fit ``I2(t) = phi(t) + chi(t) t log t`` with ``t = |E - E0|``.

    Rotational regions use ``E = E0 + t`` and report ``|I2|``; the
    librational region uses ``E = E0 - t``.
    """
    if z is None:
        z = np.geomspace(1e-6, 1e-2, 60)
    t = np.asarray(z, dtype=float)
    if t.min() <= 0 or t.max() / t.min() < 10:
        raise ValueError("z grid must be positive and span at least a decade")
    E0 = separatrix_energy(chart, p1)
    sgn = -1.0 if sigma == LIB else 1.0
    I = np.array([abs(action_of_energy(chart, sigma, E0 + sgn * tt, p1)) for tt in t])
    L = t * np.log(t)
    cols = [t**i for i in range(deg_phi + 1)] + [L * t**i for i in range(deg_chi + 1)]
    X = np.stack(cols, axis=1)
    colscale = np.abs(X).max(axis=0)
    coef, *_ = np.linalg.lstsq(X / colscale, I, rcond=None)
    coef = coef / colscale
    if not np.all(np.isfinite(coef)):
        raise ValueError("ill-conditioned log-split fit")
    resid = float(np.max(np.abs(X @ coef - I)))
    return LogSplitFit(sigma, p1, coef[: deg_phi + 1], coef[deg_phi + 1:], resid, (float(t.min()), float(t.max())))


# -- twist ---------------------------------------------------------------------

@dataclass
class TwistReport:
    """Hessian of ``h(I) = 1/2 |perp kb|^2 I1^2 + E(I1, I2)`` on a ``(p1, z)`` grid."""

    sigma: int
    p1: np.ndarray
    z: np.ndarray
    I2: np.ndarray
    hessian: np.ndarray
    det: np.ndarray
    opnorm: np.ndarray
    fit: dict
    perp2: float
    dIdE: np.ndarray = None

    def to_dict(self):
        return {"sigma": self.sigma, "p1": self.p1.tolist(), "z": self.z.tolist(),
                "det": self.det.tolist(), "opnorm": self.opnorm.tolist(), "fit": self.fit,
                "perp2": self.perp2}


def _action_derivatives(chart, sigma, e_abs, z, fit):
    """``(I', I'')`` in energy at signed offset ``z`` from the separatrix."""
    t = abs(z)
    sgn = -1.0 if sigma == LIB else 1.0
    if fit is not None and t < chart.z_min:
        d1 = fit.derivative(t, 1) * sgn
        d2 = fit.derivative(t, 2)
        return d1, d2
    Ip = _loop_integral(chart, sigma, e_abs, -0.5) / chart.knorm
    h = 1e-4 * t
    ip = _loop_integral(chart, sigma, e_abs + h, -0.5) / chart.knorm
    im = _loop_integral(chart, sigma, e_abs - h, -0.5) / chart.knorm
    return Ip, (ip - im) / (2 * h)


def twist_hessian(chart: PendulumChart, sigma: int = ROT_PLUS, p1=None, z=None,
                  fit_window=(1e-6, 1e-2)) -> TwistReport:
    """Hessian, determinant and operator norm of the integrable Hamiltonian in actions.

    With ``J(E, p1)`` the action of energy ``E`` the derivatives of the
    inverse follow from ``E_2 = 1/J_E`` and its implicit differentiation.
    ``I'(E)`` comes from quadrature and ``I''`` from central differences;
    below ``z_min`` the log-split fit supplies both.  The determinant is fitted
    as ``log det = c + b_z log z + b_L log I'(E)`` on ``fit_window``; near the
    separatrix ``I'`` grows like ``log(1/z)``, so ``b_L`` absorbs the
    logarithmic factor and ``b_z`` isolates the power of ``z``.
    """
    if p1 is None:
        p1 = np.array([chart.p1_center])
    if z is None:
        z = np.geomspace(1e-7, 1.0, 57)
    p1 = np.atleast_1d(np.asarray(p1, float))
    z = np.asarray(z, float)
    sgn = -1.0 if sigma == LIB else 1.0
    fit = None
    if z.min() < chart.z_min:
        fit = log_split_fit(chart, sigma, float(p1[0]), np.geomspace(chart.z_min, 1e-2, 60))
    nP, nZ = len(p1), len(z)
    Hs = np.empty((nP, nZ, 2, 2))
    I2 = np.empty((nP, nZ))
    dIdE = np.empty((nP, nZ))
    perp2 = chart.frame.perp2
    U_h = chart.critical()["U_h"]
    for a, pp in enumerate(p1):
        W1, W2 = float(chart.W(pp, 1)), float(chart.W(pp, 2))
        for b, zz in enumerate(z):
            e = U_h + sgn * zz
            I2[a, b] = action_of_energy(chart, sigma, e + chart.W(pp), pp)
            Ip, Ipp = _action_derivatives(chart, sigma, e, sgn * zz, fit)
            dIdE[a, b] = abs(Ip)
            if sigma == ROT_MINUS:
                Ip, Ipp = -Ip, -Ipp
            JE, JEE = Ip, Ipp
            J1, JE1, J11 = -Ip * W1, -Ipp * W1, Ipp * W1 * W1 - Ip * W2
            E1 = -J1 / JE
            E22 = -JEE / JE**3
            E12 = -(JEE * E1 + JE1) / JE**2
            E11 = -((J11 + JE1 * E1) * JE - J1 * (JE1 + JEE * E1)) / JE**2
            Hs[a, b] = [[perp2 + E11, E12], [E12, E22]]
    det = np.linalg.det(Hs)
    opnorm = np.linalg.norm(Hs, ord=2, axis=(2, 3))
    sel = (z >= fit_window[0]) & (z <= fit_window[1])
    fitres = {}
    if sel.sum() >= 4:
        zz = z[sel]
        yv = np.log(np.abs(det[0, sel]))
        X = np.stack([np.ones_like(zz), np.log(zz), np.log(dIdE[0, sel])], axis=1)
        coef, *_ = np.linalg.lstsq(X, yv, rcond=None)
        far = np.argmin(np.abs(z - 1.0))
        E22_far = Hs[0, far, 1, 1]
        fitres = {"log_c": float(coef[0]), "z_exponent": float(coef[1]), "log_exponent": float(coef[2]),
                  "c1": float(math.exp(coef[0])), "window": list(fit_window),
                  "c0": float(math.exp(coef[0]) / perp2) if perp2 > 0 else float("nan"),
                  "E22_at_z1": float(E22_far)}
    return TwistReport(sigma, p1, z, I2, Hs, det, opnorm, fitres, perp2, dIdE)


def admissible_region(report: TwistReport, theta: float):
    """Mask of grid cells with ``||Hess|| <= 1/theta`` and ``|det| >= theta``.

    Returns ``(mask, excluded)``, where ``excluded`` is the measure in the
    ``(I1, I2)`` plane of the complement within the charted rectangle.  The
    ``I2`` extent of each cell is taken from consecutive grid actions.
    """
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    mask = (report.opnorm <= 1 / theta) & (np.abs(report.det) >= theta)
    I2 = report.I2
    dI = np.abs(np.diff(I2, axis=1))
    bad_cell = ~(mask[:, 1:] & mask[:, :-1])
    p1 = report.p1
    dp = np.diff(p1).mean() if len(p1) > 1 else 1.0
    excluded = float(np.sum(dI * bad_cell) * dp)
    return mask, excluded


def excluded_band(chart: PendulumChart, sigma: int, theta: float, p1: float = 0.0,
                  z_lo: float = 1e-12, z_hi: float = 1.0) -> float:
    """``I2``-length of the near-separatrix band violating the twist bounds.

    The boundary is located by bisection on ``log z``; the band is
    ``|I2(z*) - I2(0)|``, with ``I2(0)`` from the log-split fit.
    """
    def bad(z):
        rep = twist_hessian(chart, sigma, [p1], [z], fit_window=(0, 0))
        return not (rep.opnorm[0, 0] <= 1 / theta and abs(rep.det[0, 0]) >= theta)
    if not bad(z_lo):
        return 0.0
    if bad(z_hi):
        raise ValueError("twist bounds fail across the whole window")
    a, b = math.log(z_lo), math.log(z_hi)
    for _ in range(40):
        m = 0.5 * (a + b)
        if bad(math.exp(m)):
            a = m
        else:
            b = m
    zs = math.exp(b)
    E0 = separatrix_energy(chart, p1)
    sgn = -1.0 if sigma == LIB else 1.0
    fit = log_split_fit(chart, sigma, p1, np.geomspace(chart.z_min, 1e-2, 60))
    I_sep = fit.phi[0]
    return float(abs(abs(action_of_energy(chart, sigma, E0 + sgn * zs, p1)) - I_sep))


def write_table(chart: PendulumChart, path, sigma: int, energies, p1: float = 0.0) -> None:
    """CSV of ``(E, I2)`` pairs."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["E", "I2"])
        for E in energies:
            w.writerow([repr(float(E)), repr(action_of_energy(chart, sigma, float(E), p1))])


def save_chart(chart: PendulumChart, path, fits=(), twist: TwistReport | None = None) -> None:
    d = chart.to_dict()
    d["log_split"] = [f.to_dict() for f in fits]
    if twist is not None:
        d["twist_fit"] = twist.fit
    _io.dump(d, path)
