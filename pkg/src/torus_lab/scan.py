"""Orbit integration, torus detection and measurement of the non-torus set.

Orbits of ``H = |y|^2/2 + eps f(x)`` are integrated with a symmetric
drift-kick-drift splitting.  An orbit counts as lying on a torus when its
rotation vector, estimated independently on consecutive time windows,
agrees across windows.  Rotation vectors are weighted Birkhoff averages of
``dx/dt = y``, which converge super-polynomially on quasi-periodic orbits and
do not depend on picking a spectral peak.
"""
from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.stats import binomtest, qmc

from . import _io, _kernels
from .fourier import FourierSeries2
from .resonance import Annulus, generator_of

__all__ = [
    "Trajectory",
    "StepRejected",
    "Tolerances",
    "ScanReport",
    "ScalingFit",
    "integrate",
    "fundamental_frequencies",
    "classify_orbit",
    "classify_points",
    "choose_step",
    "initial_conditions",
    "measure_scan",
    "scaling_fit",
    "wilson_interval",
]

PRIMARY, SECONDARY, NON_TORUS, INCONCLUSIVE = "primary", "secondary", "non-torus", "inconclusive"
CLASSES = (PRIMARY, SECONDARY, NON_TORUS, INCONCLUSIVE)
CHUNK = 64


class StepRejected(RuntimeError):
    """Energy drift along an orbit exceeded the configured threshold."""


def _kernel_args(f: FourierSeries2):
    half = f.half()
    if not half:
        return np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=complex)
    modes = np.array(list(half), dtype=np.int64)
    amps = np.array(list(half.values()), dtype=complex)
    return modes, amps


def _grad_bound(f: FourierSeries2) -> float:
    if not len(f):
        return 0.0
    return float(np.sum(np.abs(f.amplitudes) * np.abs(f.modes).max(axis=1)))


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray
    x: np.ndarray
    energy: np.ndarray
    eps: float
    dt: float

    @property
    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.energy - self.energy[0])))


def integrate(f: FourierSeries2, eps: float, y0, x0, dt: float, T: float,
              stride: int = 1, max_drift: float | None = None) -> Trajectory:
    """Integrate one orbit over ``[0, T]`` (``T`` may be negative).

    Angles are returned unwrapped.  If ``max_drift`` is given and the energy
    deviates from its initial value by more than that, :class:`StepRejected`
    is raised so the caller can retry with a smaller step.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    n_steps = int(round(abs(T) / dt))
    h = math.copysign(dt, T) if T != 0 else dt
    modes, amps = _kernel_args(f)
    ys, xs, es = _kernels.trajectory(modes, amps, float(eps), np.asarray(y0, float),
                                     np.asarray(x0, float), h, n_steps, int(stride))
    t = np.arange(len(es)) * stride * h
    traj = Trajectory(t, ys, xs, es, eps, dt)
    if max_drift is not None and traj.energy_drift > max_drift:
        raise StepRejected(f"energy drift {traj.energy_drift:.3g} > {max_drift:.3g} at dt={dt}")
    return traj


def _peak(z, t, w, guess, width):
    def neg(om):
        return -abs(np.sum(w * z * np.exp(-1j * om * t)))
    res = minimize_scalar(neg, bounds=(guess - width, guess + width), method="bounded",
                          options={"xatol": 1e-15, "maxiter": 500})
    return res.x, -res.fun


def fundamental_frequencies(traj: Trajectory, windows: int = 2, pad: int = 8) -> np.ndarray:
    """Leading frequency of ``exp(i x_j(t))`` on each of ``windows`` equal windows.

    A Hann-weighted, zero-padded FFT locates the peak, which is then refined
    by maximising the windowed Fourier amplitude in continuous frequency.
    Returns an array of shape ``(windows, 2)``; chaotic windows still return
    a number and must be judged by comparing windows.
    """
    if windows < 2:
        raise ValueError("need at least two windows")
    n = (len(traj.t) - 1) // windows
    if n < 16:
        raise ValueError("trajectory too short for the requested windows")
    out = np.empty((windows, 2))
    step = traj.t[1] - traj.t[0]
    hann = 0.5 * (1 - np.cos(2 * np.pi * np.arange(n) / n))
    nfft = pad * n
    freqs = 2 * np.pi * np.fft.fftfreq(nfft, d=step)
    for w in range(windows):
        sl = slice(w * n, (w + 1) * n)
        tt = traj.t[sl] - traj.t[sl][0]
        for j in range(2):
            z = np.exp(1j * traj.x[sl, j])
            power = np.abs(np.fft.fft(hann * z, nfft))
            guess = freqs[int(np.argmax(power))]
            om, _ = _peak(z, tt, hann, guess, 2 * np.pi / (pad * n * step))
            out[w, j] = om
    return out


@dataclass(frozen=True)
class Tolerances:
    """Classification and integration settings.

    ``window_periods`` sets the window length in units of ``2 pi/sqrt(eps)``
    (the small-oscillation period of a unit resonance); ``kick`` caps
    ``eps max|grad f| dt`` and ``phase`` caps ``max|k|_1 R dt``.
    """

    tol_freq: float = 1e-7
    inconclusive_factor: float = 10.0
    window_periods: float = 100.0
    n_windows: int = 2
    kick: float = 1e-3
    phase: float = 1.0
    dt_max: float = 0.5
    stride: int = 4
    max_drift_rel: float = 5e-2
    retries: int = 2
    secondary_factor: float = 10.0

    def to_dict(self):
        return asdict(self)


def choose_step(f: FourierSeries2, eps: float, R: float, tol: Tolerances) -> float:
    """Largest step obeying the kick, phase and absolute caps."""
    dt = tol.dt_max
    G = _grad_bound(f)
    if eps > 0 and G > 0:
        dt = min(dt, tol.kick / (eps * G))
    if len(f):
        dt = min(dt, tol.phase / (f.max_order * R))
    return dt


def window_time(eps: float, tol: Tolerances) -> float:
    base = 2 * math.pi / math.sqrt(eps) if eps > 0 else 2 * math.pi / 1e-3
    return tol.window_periods * base


def classify_orbit(rho: np.ndarray, crange: np.ndarray, cand: np.ndarray, tol: Tolerances) -> str:
    """Label one orbit from its per-window rotation vectors ``rho``.

    ``crange[c]`` is the range of ``cand[c].x`` over the horizon.  A torus
    whose orbit keeps some resonant combination inside an interval shorter
    than ``2 pi`` while the matching frequency vanishes is secondary.
    """
    drift = float(np.max(np.abs(np.diff(rho, axis=0)))) if len(rho) > 1 else 0.0
    if not np.isfinite(drift) or drift >= tol.tol_freq * tol.inconclusive_factor:
        return NON_TORUS
    if drift >= tol.tol_freq:
        return INCONCLUSIVE
    if len(cand):
        kr = np.abs(cand @ rho[-1])
        if np.any((crange < 2 * np.pi) & (kr < tol.secondary_factor * tol.tol_freq)):
            return SECONDARY
    return PRIMARY


def candidate_vectors(f: FourierSeries2) -> np.ndarray:
    """Generators of the resonance lines carried by the potential's modes."""
    gens = sorted({generator_of(k)[0] for k, _ in f})
    return np.array(gens, dtype=np.int64).reshape(-1, 2)


def initial_conditions(annulus: Annulus, n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Latin-hypercube sample of ``(|y|^2, arg y, x1, x2)``, uniform in Liouville measure."""
    lhs = qmc.LatinHypercube(d=4, seed=np.random.default_rng(seed)).random(n)
    r2 = annulus.r_inner**2 + lhs[:, 0] * (annulus.r_outer**2 - annulus.r_inner**2)
    rad = np.sqrt(r2)
    phi = 2 * np.pi * lhs[:, 1]
    Y = np.stack([rad * np.cos(phi), rad * np.sin(phi)], axis=1)
    X = 2 * np.pi * lhs[:, 2:]
    return Y, X


def _scan_chunk(args):
    modes, amps, eps, Y0, X0, dt, Tw, tol, cand = args
    n_win = max(16, int(round(Tw / dt)))
    u = (np.arange(n_win) + 0.5) / n_win
    w = np.exp(-1.0 / (u * (1 - u)))
    w /= w.sum()
    rho, de, cr = _kernels.scan_orbits(modes, amps, eps, Y0, X0, dt, n_win, tol.n_windows,
                                       w, cand, tol.stride)
    return rho, de, cr


def _run_chunks(jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [_scan_chunk(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_scan_chunk, jobs))


def classify_points(f: FourierSeries2, eps: float, Y0, X0, tol: Tolerances = Tolerances(),
                    R: float | None = None) -> tuple[list, np.ndarray]:
    """Labels and per-window rotation vectors for explicit initial conditions.

    Uses the same step, windows and rules as :func:`measure_scan`; ``R``
    (default ``max |y0|``) enters the phase cap of the step.
    """
    Y0 = np.atleast_2d(np.asarray(Y0, dtype=float))
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    if Y0.shape != X0.shape or Y0.shape[1] != 2:
        raise ValueError("Y0 and X0 must have shape (n, 2)")
    modes, amps = _kernel_args(f)
    cand = candidate_vectors(f)
    R = float(np.max(np.hypot(Y0[:, 0], Y0[:, 1]))) if R is None else R
    dt = choose_step(f, eps, max(R, 1e-12), tol)
    rho, de, cr = _scan_chunk((modes, amps, float(eps), Y0, X0, dt, window_time(eps, tol), tol, cand))
    labels = [classify_orbit(rho[i], cr[i], cand, tol) for i in range(len(Y0))]
    if eps > 0:
        cap = tol.max_drift_rel * eps
        labels = [INCONCLUSIVE if de[i] > cap else lab for i, lab in enumerate(labels)]
    return labels, rho


def wilson_interval(count: int, n: int, level: float = 0.95) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    ci = binomtest(int(count), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass
class ScanReport:
    eps: float
    annulus: tuple
    n_orbits: int
    seed: int
    dt: float
    window: float
    tolerances: dict
    counts: dict
    fractions: dict
    non_torus_ci: tuple
    primary_ci: tuple
    ring_edges: list
    ring_counts: dict
    max_energy_drift: float
    retried: int
    orbits: dict = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    @property
    def non_torus_fraction(self) -> float:
        return self.fractions[NON_TORUS]

    @property
    def torus_fraction(self) -> float:
        return self.fractions[PRIMARY] + self.fractions[SECONDARY]

    def to_dict(self, include_meta: bool = True) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("orbits", "meta")}
        d["annulus"] = list(self.annulus)
        d["non_torus_ci"] = list(self.non_torus_ci)
        d["primary_ci"] = list(self.primary_ci)
        if include_meta:
            d["meta"] = self.meta
        return d

    def save(self, path) -> None:
        _io.dump(self.to_dict(), path)

    def write_csv(self, path) -> None:
        o = self.orbits
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["y1", "y2", "x1", "x2", "class", "omega1", "omega2", "drift"])
            for i in range(len(o["label"])):
                w.writerow([repr(float(v)) for v in (*o["y0"][i], *o["x0"][i])]
                           + [o["label"][i]]
                           + [repr(float(v)) for v in (*o["omega"][i], o["drift"][i])])


def measure_scan(f: FourierSeries2, eps: float, annulus: Annulus, n_orbits: int,
                 tol: Tolerances = Tolerances(), seed: int = 0, workers: int = 1,
                 n_rings: int = 8, max_orbits: int = 10**6) -> ScanReport:
    """Classify ``n_orbits`` orbits started uniformly in ``annulus x T^2``.

    Initial angles are drawn jointly with the actions, so every angle
    section contributes; the Liouville fraction of each class is estimated
    directly.  Work is cut into fixed chunks of orbits, so results do not
    depend on ``workers``.
    """
    if n_orbits < 1:
        raise ValueError("n_orbits must be positive")
    if n_orbits > max_orbits:
        raise ValueError(f"orbit budget exceeded: {n_orbits} > {max_orbits}")
    t0 = time.perf_counter()
    Y0, X0 = initial_conditions(annulus, n_orbits, seed)
    modes, amps = _kernel_args(f)
    cand = candidate_vectors(f)
    dt = choose_step(f, eps, annulus.r_outer, tol)
    Tw = window_time(eps, tol)
    drift_cap = tol.max_drift_rel * max(eps, 1e-300)

    def run(idx, step):
        jobs = [(modes, amps, float(eps), Y0[idx[i:i + CHUNK]], X0[idx[i:i + CHUNK]], step, Tw, tol, cand)
                for i in range(0, len(idx), CHUNK)]
        parts = _run_chunks(jobs, workers)
        return (np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]),
                np.concatenate([p[2] for p in parts]))

    idx = np.arange(n_orbits)
    rho, de, cr = run(idx, dt)
    retried = 0
    step = dt
    for _ in range(tol.retries):
        bad = np.flatnonzero(de > drift_cap) if eps > 0 else np.array([], dtype=int)
        if not len(bad):
            break
        step /= 2
        retried += len(bad)
        r2, d2, c2 = run(bad, step)
        rho[bad], de[bad], cr[bad] = r2, d2, c2

    labels = [classify_orbit(rho[i], cr[i], cand, tol) for i in range(n_orbits)]
    if eps > 0:
        labels = [INCONCLUSIVE if de[i] > drift_cap else lab for i, lab in enumerate(labels)]
    counts = {c: labels.count(c) for c in CLASSES}
    fractions = {c: counts[c] / n_orbits for c in CLASSES}
    radii = np.hypot(Y0[:, 0], Y0[:, 1])
    edges = np.sqrt(np.linspace(annulus.r_inner**2, annulus.r_outer**2, n_rings + 1))
    ring = np.clip(np.searchsorted(edges, radii, side="right") - 1, 0, n_rings - 1)
    lab_arr = np.array(labels)
    ring_counts = {c: np.bincount(ring[lab_arr == c], minlength=n_rings).tolist() for c in CLASSES}
    drift = np.max(np.abs(np.diff(rho, axis=1)), axis=(1, 2))
    report = ScanReport(
        eps=float(eps), annulus=(annulus.r_inner, annulus.r_outer), n_orbits=n_orbits, seed=seed,
        dt=dt, window=Tw, tolerances=tol.to_dict(), counts=counts, fractions=fractions,
        non_torus_ci=wilson_interval(counts[NON_TORUS], n_orbits),
        primary_ci=wilson_interval(counts[PRIMARY], n_orbits),
        ring_edges=edges.tolist(), ring_counts=ring_counts,
        max_energy_drift=float(de.max()), retried=retried,
        orbits={"y0": Y0, "x0": X0, "label": labels, "omega": rho[:, -1], "drift": drift},
    )
    report.meta = {"seconds": time.perf_counter() - t0, "workers": workers}
    return report


@dataclass
class ScalingFit:
    """Best fit of ``m = C exp(-c eps^-a)``; ``status`` is ``"ok"`` or ``"below resolution"``."""

    a: float
    c: float
    C: float
    r2: float
    status: str = "ok"
    a_grid: list = field(default_factory=list, repr=False)
    r2_grid: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {"a": self.a, "c": self.c, "C": self.C, "r2": self.r2, "status": self.status}


def scaling_fit(eps, m, a_grid=None) -> ScalingFit:
    """Regress ``log m`` on ``eps**-a`` for each ``a`` on a grid in ``(0, 1/6)``.

    The exponent with the smallest residual wins.  Zero measurements carry
    no information about the rate and are dropped; if fewer than three
    nonzero values remain the fit is reported as below resolution.
    """
    eps = np.asarray(eps, dtype=float)
    m = np.asarray(m, dtype=float)
    if len(eps) != len(m):
        raise ValueError("eps and m must have equal length")
    keep = m > 0
    if keep.sum() < 3:
        if len(eps) < 3:
            raise ValueError("need at least three eps values")
        return ScalingFit(float("nan"), float("nan"), 0.0, float("nan"), "below resolution")
    eps, y = eps[keep], np.log(m[keep])
    if a_grid is None:
        a_grid = np.linspace(0.002, 1 / 6 - 0.002, 821)
    best = None
    r2s = []
    sst = np.sum((y - y.mean()) ** 2)
    for a in a_grid:
        X = np.stack([np.ones_like(eps), eps ** (-a)], axis=1)
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        ssr = float(np.sum((X @ coef - y) ** 2))
        r2 = 1 - ssr / sst if sst > 0 else 1.0
        r2s.append(r2)
        if best is None or ssr < best[0]:
            best = (ssr, a, coef, r2)
    _, a, coef, r2 = best
    return ScalingFit(float(a), float(-coef[1]), float(math.exp(coef[0])), float(r2), "ok",
                      list(map(float, a_grid)), r2s)
