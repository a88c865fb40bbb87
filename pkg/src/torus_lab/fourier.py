"""Zero-average real-analytic potentials on the 2-torus.

A potential is stored sparsely as a map ``(k1, k2) -> f_k`` over nonzero
integer vectors with ``f_{-k} = conj(f_k)``.  Dense angle grids are only ever
derived from the coefficient map.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .resonance import enumerate_generators, generator_of, is_generator

__all__ = [
    "FourierSeries2",
    "OneDimProfile",
    "GenericityReport",
    "norm_s",
    "project_to_lattice",
    "decompose",
    "threshold_K",
    "p1_floor",
    "check_P1",
    "check_P2",
    "check_P3",
    "check_genericity",
    "make_example_potential",
    "pendulum_rotator",
]

GRID_POINTS = 4096
POLISH_TOL = 1e-12
TRUNCATION_FLOOR = 1e-16


class FourierSeries2:
    """Real trigonometric series ``f(x) = sum_k f_k exp(i k.x)`` on T^2.

    Parameters
    ----------
    coeffs : mapping
        ``(k1, k2) -> complex``.  Both ``k`` and ``-k`` must be present with
        conjugate values (use :meth:`from_half` to store one of each pair).
    s : float
        Declared analyticity width.
    """

    def __init__(self, coeffs: Mapping, s: float, *, rtol: float = 0.0):
        if not s > 0:
            raise ValueError("analyticity width s must be positive")
        self.s = float(s)
        data = {}
        for k, c in coeffs.items():
            k = (int(k[0]), int(k[1]))
            if k == (0, 0):
                raise ValueError("zero-average series: no entry allowed at k = (0, 0)")
            c = complex(c)
            if c != 0:
                data[k] = c
        for (k1, k2), c in data.items():
            other = data.get((-k1, -k2), 0j)
            if abs(other - c.conjugate()) > rtol * abs(c):
                raise ValueError(f"reality violated at k=({k1},{k2})")
        self._coeffs = dict(sorted(data.items()))
        self._modes = None
        self._amps = None

    @classmethod
    def from_half(cls, coeffs: Mapping, s: float) -> "FourierSeries2":
        """Build from one coefficient per ``+-k`` pair; the partner is implied."""
        full = {}
        for k, c in coeffs.items():
            k = (int(k[0]), int(k[1]))
            mk = (-k[0], -k[1])
            if k in full or mk in full:
                raise ValueError(f"both k and -k given for k={k}")
            full[k] = complex(c)
            full[mk] = complex(c).conjugate()
        return cls(full, s)

    @classmethod
    def zero(cls, s: float = 1.0) -> "FourierSeries2":
        return cls({}, s)

    @property
    def coeffs(self) -> dict:
        return dict(self._coeffs)

    def __getitem__(self, k) -> complex:
        return self._coeffs.get((int(k[0]), int(k[1])), 0j)

    def __len__(self):
        return len(self._coeffs)

    def __iter__(self):
        return iter(self._coeffs.items())

    def __eq__(self, other):
        return isinstance(other, FourierSeries2) and self._coeffs == other._coeffs and self.s == other.s

    def __repr__(self):
        return f"FourierSeries2({len(self)} modes, s={self.s})"

    @property
    def modes(self) -> np.ndarray:
        if self._modes is None:
            self._modes = np.array(list(self._coeffs), dtype=np.int64).reshape(-1, 2)
            self._amps = np.array(list(self._coeffs.values()), dtype=complex)
        return self._modes

    @property
    def amplitudes(self) -> np.ndarray:
        self.modes
        return self._amps

    def half(self) -> dict:
        """One representative of each ``+-k`` pair (``k1 > 0`` or ``k = (0, k2>0)``)."""
        return {k: c for k, c in self._coeffs.items() if k[0] > 0 or (k[0] == 0 and k[1] > 0)}

    @property
    def max_order(self) -> int:
        return int(np.abs(self.modes).sum(axis=1).max()) if len(self) else 0

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        phase = x @ self.modes.T
        return (np.exp(1j * phase) @ self.amplitudes).real

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        ek = np.exp(1j * (x @ self.modes.T)) * (1j * self.amplitudes)
        return (ek @ self.modes).real

    def scaled(self, factor: float) -> "FourierSeries2":
        return FourierSeries2({k: factor * c for k, c in self._coeffs.items()}, self.s)

    def __add__(self, other: "FourierSeries2") -> "FourierSeries2":
        out = dict(self._coeffs)
        for k, c in other:
            out[k] = out.get(k, 0j) + c
        return FourierSeries2(out, min(self.s, other.s))

    def truncated(self, Kmax: int) -> "FourierSeries2":
        return FourierSeries2({k: c for k, c in self if abs(k[0]) + abs(k[1]) <= Kmax}, self.s)

    # -- serialisation -------------------------------------------------
    def to_dict(self) -> dict:
        entries = [[k[0], k[1], c.real, c.imag] for k, c in self.half().items()]
        return {"s": self.s, "entries": entries}

    @classmethod
    def from_dict(cls, data: Mapping) -> "FourierSeries2":
        half = {}
        for k1, k2, re, im in data["entries"]:
            key = (int(k1), int(k2))
            if key in half or (-key[0], -key[1]) in half:
                raise ValueError(f"duplicate entry for +-{key}")
            half[key] = complex(re, im)
        return cls.from_half(half, float(data["s"]))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "FourierSeries2":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class OneDimProfile:
    """``F(theta) = sum_{j != 0} c_j exp(i j theta)``, the restriction of a
    potential to the line ``Z k``."""

    k: tuple
    coeffs: dict
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.k = (int(self.k[0]), int(self.k[1]))
        self.coeffs = {int(j): complex(c) for j, c in sorted(self.coeffs.items()) if c != 0}
        if 0 in self.coeffs:
            raise ValueError("profile must have zero average")
        for j, c in self.coeffs.items():
            if abs(self.coeffs.get(-j, 0j) - c.conjugate()) > 1e-14 * abs(c):
                raise ValueError(f"profile reality violated at j={j}")

    @property
    def orders(self) -> np.ndarray:
        return np.array(list(self.coeffs), dtype=float)

    @property
    def values(self) -> np.ndarray:
        return np.array(list(self.coeffs.values()), dtype=complex)

    def __call__(self, theta, deriv: int = 0) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if not self.coeffs:
            return np.zeros_like(theta)
        j = self.orders
        c = self.values * (1j * j) ** deriv
        return (np.exp(1j * np.multiply.outer(theta, j)) @ c).real

    def on_grid(self, n: int = GRID_POINTS, deriv: int = 0) -> np.ndarray:
        """Values on the uniform grid ``2 pi i / n`` (cached)."""
        key = (n, deriv)
        if key not in self._cache:
            spectrum = np.zeros(n, dtype=complex)
            for j, c in self.coeffs.items():
                spectrum[j % n] += c * (1j * j) ** deriv
            self._cache[key] = (np.fft.ifft(spectrum) * n).real
        return self._cache[key]

    def derivative_bound(self, deriv: int) -> float:
        """``sum |c_j| |j|^deriv``, a bound on ``sup |F^(deriv)|``."""
        return float(sum(abs(c) * abs(j) ** deriv for j, c in self.coeffs.items()))

    def truncated(self, s: float, floor: float = TRUNCATION_FLOOR) -> "OneDimProfile":
        """Drop orders whose decay factor ``exp(-|j||k|_1 s)`` is below ``floor``
        relative to the leading one."""
        k1 = abs(self.k[0]) + abs(self.k[1])
        jmax = 1 + int(math.floor(math.log(1 / floor) / (k1 * s)))
        return OneDimProfile(self.k, {j: c for j, c in self.coeffs.items() if abs(j) <= jmax})


def norm_s(f: FourierSeries2, s: float) -> float:
    """Sup-type weighted norm ``sup_k |f_k| exp(|k|_1 s)``."""
    if not s > 0:
        raise ValueError("s must be positive")
    if isinstance(f, Mapping):
        if (0, 0) in f:
            raise ValueError("series has an entry at k = 0")
        f = FourierSeries2(f, s)
    if len(f) == 0:
        return 0.0
    w = np.abs(f.modes).sum(axis=1)
    return float(np.max(np.abs(f.amplitudes) * np.exp(w * s)))


def project_to_lattice(f: FourierSeries2, k) -> OneDimProfile:
    """Profile ``F^k_j = f_{jk}`` of ``f`` along the generator ``k``."""
    if not is_generator(k):
        raise ValueError(f"{tuple(k)} is not a generator")
    k1, k2 = int(k[0]), int(k[1])
    out = {}
    for (m1, m2), c in f:
        if k1 * m2 - k2 * m1 == 0:
            j = (m1 // k1) if k1 else (m2 // k2)
            out[j] = c
    return OneDimProfile((k1, k2), out)


def decompose(f: FourierSeries2, Kmax: int) -> dict:
    """Split ``f`` (modes with ``|k|_1 <= Kmax``) into one-dimensional profiles.

    Every stored mode is assigned to exactly one generator line; returns
    ``{generator: OneDimProfile}`` in generator order, omitting empty lines.
    """
    if Kmax < 1:
        raise ValueError("Kmax must be >= 1")
    buckets: dict = {}
    for k, c in f:
        if abs(k[0]) + abs(k[1]) > Kmax:
            continue
        g, j = generator_of(k)
        buckets.setdefault(g, {})[j] = c
    return {g: OneDimProfile(g, buckets[g]) for g in sorted(buckets)}


def resum(profiles: Mapping) -> dict:
    """Inverse of :func:`decompose`: coefficient map from profiles."""
    out = {}
    for (g1, g2), prof in profiles.items():
        for j, c in prof.coeffs.items():
            out[(j * g1, j * g2)] = c
    return out


def threshold_K(s: float, delta: float, c_universal: float = 2.0) -> int:
    """``ceil(c * max{1, 1/s, log(1/(s delta))/s})``."""
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    if not s > 0:
        raise ValueError("s must be positive")
    if not c_universal > 1:
        raise ValueError("c_universal must exceed 1")
    val = c_universal * max(1.0, 1.0 / s, math.log(1.0 / (s * delta)) / s)
    return int(math.ceil(val - 1e-12 * val))


def p1_floor(k1norm, s: float, delta: float):
    """Lower bound ``delta |k|_1^-2 exp(-|k|_1 s)`` required on the high modes."""
    k1norm = np.asarray(k1norm, dtype=float)
    return delta * k1norm**-2 * np.exp(-k1norm * s)


@dataclass
class GenericityReport:
    delta: float
    threshold: int
    examined_cutoff: int
    p1_failures: list = field(default_factory=list)
    p2_failures: list = field(default_factory=list)
    p3_failures: list = field(default_factory=list)
    inconclusive: list = field(default_factory=list)
    margins: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not (self.p1_failures or self.p2_failures or self.p3_failures or self.inconclusive)

    def merge(self, other: "GenericityReport") -> "GenericityReport":
        out = GenericityReport(self.delta, self.threshold, max(self.examined_cutoff, other.examined_cutoff))
        for name in ("p1_failures", "p2_failures", "p3_failures", "inconclusive"):
            getattr(out, name).extend(getattr(self, name) + getattr(other, name))
        out.margins = {**self.margins, **other.margins}
        return out

    def to_dict(self) -> dict:
        def conv(items):
            return [{**d, "k": list(d["k"])} for d in items]

        return {
            "delta": self.delta,
            "threshold": self.threshold,
            "examined_cutoff": self.examined_cutoff,
            "passed": self.passed,
            "p1_failures": conv(self.p1_failures),
            "p2_failures": conv(self.p2_failures),
            "p3_failures": conv(self.p3_failures),
            "inconclusive": conv(self.inconclusive),
            "margins": {name: [[list(k), m] for k, m in vals] for name, vals in self.margins.items()},
        }


def check_P1(f: FourierSeries2, s: float, delta: float, Kmax: int,
             c_universal: float = 2.0) -> GenericityReport:
    """Lower bound on ``|f_k|`` for generators with ``K_s(delta) < |k|_1 <= Kmax``."""
    Ks = threshold_K(s, delta, c_universal)
    rep = GenericityReport(delta, Ks, Kmax)
    margins = []
    if Kmax > Ks:
        for k in enumerate_generators(Kmax):
            n1 = abs(k[0]) + abs(k[1])
            if n1 <= Ks:
                continue
            bound = float(p1_floor(n1, s, delta))
            margin = abs(f[k]) - bound
            margins.append((k, margin))
            if margin < 0:
                rep.p1_failures.append({"k": k, "margin": margin, "bound": bound})
    rep.margins["P1"] = margins
    return rep


def _low_profiles(f, s, delta, c_universal):
    Ks = threshold_K(s, delta, c_universal)
    return Ks, [(k, project_to_lattice(f, k).truncated(s)) for k in enumerate_generators(Ks)]


def _p2_profile(prof: OneDimProfile, n: int):
    """Certified lower bound for ``min |F'| + |F''|``; returns (status, margin)."""
    scale = prof.derivative_bound(2)
    if scale == 0:
        return "fail", 0.0
    g = np.abs(prof.on_grid(n, 1)) + np.abs(prof.on_grid(n, 2))
    lip = prof.derivative_bound(2) + prof.derivative_bound(3)
    h = 2 * np.pi / n
    lower = g - lip * h / 2
    if lower.min() > 0:
        return "pass", float(lower.min())

    def gfun(t):
        return abs(prof(t, 1)) + abs(prof(t, 2))

    cert = np.inf
    for i in np.flatnonzero(lower <= 0):
        a = (i - 1) * h
        b = (i + 1) * h
        res = minimize_scalar(gfun, bounds=(a, b), method="bounded", options={"xatol": POLISH_TOL})
        if res.fun <= POLISH_TOL * scale:
            return "fail", float(res.fun)
        fine = np.linspace(a, b, n + 1)
        hf = fine[1] - fine[0]
        low = np.abs(prof(fine, 1)) + np.abs(prof(fine, 2)) - lip * hf / 2
        cert = min(cert, float(low.min()))
        if cert <= 0:
            return "inconclusive", float(res.fun)
    return "pass", float(min(cert, lower[lower > 0].min(initial=np.inf)))


def check_P2(f: FourierSeries2, s: float, delta: float, c_universal: float = 2.0,
             n: int = GRID_POINTS) -> GenericityReport:
    """``min_theta |dF^k| + |d^2F^k| > 0`` for generators with ``|k|_1 <= K_s(delta)``."""
    Ks, profs = _low_profiles(f, s, delta, c_universal)
    rep = GenericityReport(delta, Ks, Ks)
    margins = []
    for k, prof in profs:
        status, margin = _p2_profile(prof, n)
        margins.append((k, margin))
        if status == "fail":
            rep.p2_failures.append({"k": k, "margin": margin})
        elif status == "inconclusive":
            rep.inconclusive.append({"k": k, "check": "P2", "margin": margin})
    rep.margins["P2"] = margins
    return rep


def critical_points(prof: OneDimProfile, n: int = GRID_POINTS) -> np.ndarray:
    """Zeros of ``F'`` in ``[0, 2 pi)`` from grid sign changes, polished by Brent."""
    d1 = prof.on_grid(n, 1)
    h = 2 * np.pi / n
    roots = []
    for i in range(n):
        a, b = d1[i], d1[(i + 1) % n]
        if a == 0:
            roots.append(i * h)
        elif a * b < 0:
            roots.append(brentq(lambda t: prof(t, 1), i * h, (i + 1) * h, xtol=POLISH_TOL))
    return np.array(roots)


def _p3_profile(prof: OneDimProfile, n: int, tol_equal: float):
    if not prof.coeffs:
        # constant profile: every point is critical with the same value
        return "fail", 0.0, np.array([])
    roots = critical_points(prof, n)
    if len(roots) < 2 or len(roots) % 2:
        return "inconclusive", 0.0, roots
    vals = np.sort(prof(roots))
    scale = max(prof.derivative_bound(0), 1e-300)
    gap = float(np.diff(vals).min()) / scale
    if gap <= tol_equal:
        return "fail", gap, roots
    return "pass", gap, roots


def check_P3(f: FourierSeries2, s: float, delta: float, c_universal: float = 2.0,
             n: int = GRID_POINTS, tol_equal: float = 1e-9) -> GenericityReport:
    """Distinct critical values of ``F^k`` for generators with ``|k|_1 <= K_s(delta)``.

    The reported margin is the smallest gap between critical values relative
    to ``sum |F_j|``.
    """
    Ks, profs = _low_profiles(f, s, delta, c_universal)
    rep = GenericityReport(delta, Ks, Ks)
    margins = []
    for k, prof in profs:
        status, gap, roots = _p3_profile(prof, n, tol_equal)
        margins.append((k, gap))
        if status == "fail":
            rep.p3_failures.append({"k": k, "margin": gap, "critical_points": roots.tolist()})
        elif status == "inconclusive":
            rep.inconclusive.append({"k": k, "check": "P3", "n_critical": int(len(roots))})
    rep.margins["P3"] = margins
    return rep


def check_genericity(f: FourierSeries2, s: float, delta: float, Kmax: int,
                     c_universal: float = 2.0) -> GenericityReport:
    """All three membership checks merged into one report."""
    rep = check_P1(f, s, delta, Kmax, c_universal)
    rep = rep.merge(check_P2(f, s, delta, c_universal))
    return rep.merge(check_P3(f, s, delta, c_universal))


def make_example_potential(s: float, delta: float, Kmax: int) -> FourierSeries2:
    """``2 delta sum_g |g|_1^-2 exp(-|g|_1 s) cos(g.x)`` over generators ``|g|_1 <= Kmax``.

    Each mode ``+-g`` carries exactly the lower bound of the high-mode
    condition, so that condition holds with equality.
    """
    if Kmax < 1:
        raise ValueError("Kmax must be >= 1")
    half = {}
    for g in enumerate_generators(Kmax):
        half[g] = float(p1_floor(abs(g[0]) + abs(g[1]), s, delta))
    return FourierSeries2.from_half(half, s)


def pendulum_rotator(s: float = 1.0) -> FourierSeries2:
    """``cos x1``: the integrable pendulum coupled with a free rotator."""
    return FourierSeries2.from_half({(1, 0): 0.5}, s)
