"""Finite-order Lie-series averaging of ``h(y) + f(y, x)`` near a point of action space.

Functions of ``(y, x)`` are stored densely: Chebyshev-Lobatto nodes on a
small square of actions times a box of Fourier modes ``|k|_inf <= N``.
Products are formed on an angle grid large enough to avoid aliasing for the
retained modes, after which modes with ``|k|_1 > N`` are discarded.

Poisson brackets follow ``{F, G} = F_x . G_y - F_y . G_x``, so the time-one
map of the flow generated by ``chi`` acts as ``F -> exp(L) F`` with
``L F = {F, chi}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy import fft as sfft
from scipy.integrate import solve_ivp

from . import _io
from .fourier import FourierSeries2
from .resonance import ZoneDecomposition, enumerate_generators

__all__ = [
    "ConditionFailure",
    "BoundViolation",
    "ModeGrid",
    "NormalFormResult",
    "weighted_l1_norm",
    "nonresonance_certificate",
    "normalize",
    "average_nonresonant",
    "average_simple_resonance",
    "d0_centers",
    "resonance_center",
]


class ConditionFailure(ValueError):
    """The smallness parameter ``theta_*`` is not below one."""


class BoundViolation(ArithmeticError):
    """A recorded norm violates the inequality it is meant to satisfy."""


def _along(mat, A, j):
    """Apply ``mat`` along action axis ``j`` of a coefficient array."""
    n0, n1 = A.shape[:2]
    if j == 0:
        return (mat @ A.reshape(n0, -1)).reshape(A.shape)
    return (mat @ A.reshape(n0, n1, -1)).reshape(A.shape)


class ModeGrid:
    """Discretisation of functions on ``B x T^2`` with ``B`` a square of actions.

    Parameters
    ----------
    center : array_like, shape (2,)
    half_width : float
        Half side of the real square ``B``.
    n_y : int
        Chebyshev-Lobatto nodes per action direction.
    N : int
        Retained Fourier modes satisfy ``|k|_1 <= N``.
    """

    def __init__(self, center, half_width: float, n_y: int = 8, N: int = 8, chop: float = 1e-14):
        if half_width <= 0 or n_y < 2 or N < 1:
            raise ValueError("need half_width > 0, n_y >= 2, N >= 1")
        self.center = np.asarray(center, dtype=float)
        self.w = float(half_width)
        self.n_y = int(n_y)
        self.N = int(N)
        self.chop = float(chop)
        t = np.cos(np.pi * np.arange(n_y) / (n_y - 1))
        self.t = t
        V = C.chebvander(t, n_y - 1)
        self._V = V
        self._Vinv = np.linalg.inv(V)
        Vd = np.stack([C.chebval(t, C.chebder(np.eye(n_y)[m])) if m else np.zeros(n_y)
                       for m in range(n_y)], axis=1)
        self._D = Vd @ self._Vinv / self.w
        y = self.center[:, None] + self.w * t[None, :]
        self.Y = np.stack(np.meshgrid(y[0], y[1], indexing="ij"), axis=-1)
        k = np.arange(-N, N + 1)
        self.K1, self.K2 = np.meshgrid(k, k, indexing="ij")
        self.l1 = np.abs(self.K1) + np.abs(self.K2)
        self.box = self.l1 <= N
        self.M = sfft.next_fast_len(3 * N + 1)
        self._idx = np.mod(k, self.M)

    @property
    def shape(self):
        return (self.n_y, self.n_y, 2 * self.N + 1, 2 * self.N + 1)

    def zeros(self):
        return np.zeros(self.shape, dtype=complex)

    def from_potential(self, f: FourierSeries2, scale: float = 1.0) -> np.ndarray:
        """Tile ``scale * f(x)`` over the action nodes (modes outside the box dropped)."""
        A = self.zeros()
        N = self.N
        for (k1, k2), c in f:
            if abs(k1) + abs(k2) <= N:
                A[:, :, k1 + N, k2 + N] = scale * c
        return A

    def mode(self, A, k):
        return A[:, :, k[0] + self.N, k[1] + self.N]

    # -- calculus ---------------------------------------------------------
    def dx(self, A, j):
        return 1j * (self.K1 if j == 0 else self.K2) * A

    def dy(self, A, j):
        return _along(self._D, A, j)

    # functions are real, so only the half spectrum k2 >= 0 is transformed
    def _phys(self, A):
        N = self.N
        P = np.zeros(A.shape[:2] + (self.M, self.M // 2 + 1), dtype=complex)
        P[:, :, self._idx, :N + 1] = A[:, :, :, N:]
        return sfft.irfft2(P, s=(self.M, self.M), axes=(2, 3), norm="forward")

    def _coef(self, V):
        N = self.N
        P = sfft.rfft2(V, axes=(2, 3), norm="forward")
        out = np.empty(V.shape[:2] + (2 * N + 1, 2 * N + 1), dtype=complex)
        out[:, :, :, N:] = P[:, :, self._idx, :N + 1]
        out[:, :, :, :N] = np.conj(out[:, :, ::-1, :N:-1])
        out[:, :, ~self.box] = 0
        return out

    def bracket(self, F, G):
        """``{F, G}`` truncated to the mode box.

        Chebyshev coefficients below ``chop`` times the largest one are
        zeroed; otherwise repeated action derivatives on a small square
        amplify rounding noise geometrically.
        """
        acc = 0
        for j in range(2):
            acc = acc + self._phys(self.dx(F, j)) * self._phys(self.dy(G, j))
            acc = acc - self._phys(self.dy(F, j)) * self._phys(self.dx(G, j))
        return self.denoise(self._coef(acc))

    def denoise(self, A):
        if self.chop <= 0:
            return A
        cf = self.cheb(A)
        cf[np.abs(cf) < self.chop * np.abs(cf).max(initial=0.0)] = 0
        return _along(self._V, _along(self._V, cf, 0), 1)

    # -- projections ------------------------------------------------------
    def lattice_mask(self, lam) -> np.ndarray:
        """Modes in ``Lambda`` (``lam=None`` means the trivial lattice ``{0}``)."""
        if lam is None:
            return (self.K1 == 0) & (self.K2 == 0)
        return self.K1 * lam[1] - self.K2 * lam[0] == 0

    def project(self, A, lam):
        return np.where(self.lattice_mask(lam), A, 0)

    def project_perp(self, A, lam):
        return np.where(self.lattice_mask(lam), 0, A)

    # -- evaluation ---------------------------------------------------------
    def cheb(self, A):
        """Chebyshev coefficients in both action directions."""
        return _along(self._Vinv, _along(self._Vinv, A, 0), 1)

    def modes_at(self, A, y):
        """Fourier coefficients (2N+1, 2N+1) at an arbitrary action ``y``."""
        t = (np.asarray(y, dtype=float) - self.center) / self.w
        v0 = C.chebvander(np.atleast_1d(t[0]), self.n_y - 1)[0]
        v1 = C.chebvander(np.atleast_1d(t[1]), self.n_y - 1)[0]
        return np.einsum("a,b,ab...->...", v0, v1, self.cheb(A))

    def value(self, A, y, x) -> float:
        c = self.modes_at(A, y)
        ph = np.exp(1j * (self.K1 * x[0] + self.K2 * x[1]))
        return float(np.sum(c * ph).real)

    def gradient(self, A, y, x):
        """``(d/dy, d/dx)`` of ``A`` at one point, each of shape (2,)."""
        t = (np.asarray(y, dtype=float) - self.center) / self.w
        n = self.n_y
        cf = self.cheb(A)
        ph = np.exp(1j * (self.K1 * x[0] + self.K2 * x[1]))
        v = [C.chebvander(np.atleast_1d(t[j]), n - 1)[0] for j in range(2)]
        dv = [np.array([C.chebval(t[j], C.chebder(np.eye(n)[m])) if m else 0.0
                        for m in range(n)]) / self.w for j in range(2)]
        c = np.einsum("a,b,ab...->...", v[0], v[1], cf)
        gy = np.array([np.sum(np.einsum("a,b,ab...->...", dv[0], v[1], cf) * ph).real,
                       np.sum(np.einsum("a,b,ab...->...", v[0], dv[1], cf) * ph).real])
        gx = np.array([np.sum(1j * self.K1 * c * ph).real, np.sum(1j * self.K2 * c * ph).real])
        return gy, gx


def _exp(x: float) -> float:
    return math.exp(x) if x < 700 else math.inf


def _bernstein_rho(widen: float, half_width: float) -> float:
    # ellipse with semi-major axis 1 + d contains the d-neighbourhood of [-1, 1]
    d = widen / half_width
    return 1 + d + math.sqrt((1 + d) ** 2 - 1)


def weighted_l1_norm(grid: ModeGrid, A, s: float, r: float = 0.0) -> float:
    """``sup_y sum_k |A_k(y)| exp(|k|_1 s)``.

    With ``r = 0`` the supremum runs over the action nodes.  With ``r > 0``
    each mode's supremum over the complex ``r``-neighbourhood of the square
    is bounded through its Chebyshev coefficients on a Bernstein ellipse.
    """
    weight = np.exp(grid.l1 * s)
    if r <= 0:
        return float(np.max(np.sum(np.abs(A) * weight, axis=(2, 3))))
    rho = _bernstein_rho(r, grid.w)
    m = np.arange(grid.n_y)
    scale = rho ** (m[:, None] + m[None, :])
    cf = np.abs(grid.cheb(A))
    per_mode = np.einsum("ab,ab...->...", scale, cf)
    return float(np.sum(per_mode * weight))


def nonresonance_certificate(Y, lam, alpha: float, K: int, grad_h=None):
    """Check ``|h'(y).k| >= alpha`` for ``k`` not in ``Lambda``, ``|k|_1 <= K``.

    ``Y`` is an ``(n, 2)`` sample of actions; ``grad_h`` defaults to the
    identity (``h = |y|^2/2``).  Returns ``(ok, worst margin)``.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.size == 0:
        raise ValueError("empty action sample")
    Hp = Y if grad_h is None else np.asarray(grad_h(Y), dtype=float)
    ks = []
    for g in enumerate_generators(K):
        if lam is not None and g[0] * lam[1] - g[1] * lam[0] == 0:
            continue
        for j in range(1, K // (abs(g[0]) + abs(g[1])) + 1):
            ks.append((j * g[0], j * g[1]))
    if not ks:
        return True, math.inf
    ks = np.array(ks, dtype=float)
    margin = float(np.min(np.abs(Hp @ ks.T)) - alpha)
    return margin >= 0, margin


@dataclass
class NormalFormResult:
    """Output of :func:`normalize` on one action square.

    ``g`` carries the modes in ``Lambda``; ``remainder`` the rest.  The
    generating functions ``chis`` are stored in application order: the
    normalising map is ``Phi_1 o Phi_2 o ...`` with ``Phi_j`` the time-one
    map of ``chis[j-1]``.
    """

    grid: ModeGrid
    lam: tuple | None
    g: np.ndarray
    remainder: np.ndarray
    chis: list
    theta_star: float
    sbar: float
    r: float
    s: float
    K: int
    alpha: float
    norms: dict
    bounds: dict
    steps: int
    lie_orders: list
    strict: bool = True
    diagnostics: dict = field(default_factory=dict)

    @property
    def mean(self) -> np.ndarray:
        """Average over angles as a function on the action nodes."""
        return self.grid.mode(self.g, (0, 0))

    def profile_modes(self) -> dict:
        """``j -> F_{j lam}`` at the square's centre, ``j != 0``."""
        if self.lam is None:
            return {}
        N = self.grid.N
        L1 = abs(self.lam[0]) + abs(self.lam[1])
        c = self.grid.modes_at(self.g, self.grid.center)
        out = {}
        for j in range(-(N // L1), N // L1 + 1):
            if j:
                out[j] = complex(c[j * self.lam[0] + N, j * self.lam[1] + N])
        return out

    def ok(self) -> bool:
        return all(b["ok"] for b in self.bounds.values())

    def to_dict(self) -> dict:
        grid = self.grid
        N = grid.N
        c_g = grid.modes_at(self.g, grid.center)
        c_r = grid.modes_at(self.remainder, grid.center)
        g_tab = [[int(grid.K1[i, j]), int(grid.K2[i, j]), float(c_g[i, j].real), float(c_g[i, j].imag)]
                 for i, j in zip(*np.nonzero(np.abs(c_g) > 0))]
        order = np.argsort(-np.abs(c_r), axis=None)[:64]
        r_tab = []
        for flat in order:
            i, j = np.unravel_index(flat, c_r.shape)
            if abs(c_r[i, j]) > 0:
                r_tab.append([int(grid.K1[i, j]), int(grid.K2[i, j]), float(c_r[i, j].real),
                              float(c_r[i, j].imag)])
        return {
            "lattice": None if self.lam is None else list(self.lam),
            "center": grid.center.tolist(), "half_width": grid.w, "n_y": grid.n_y, "N": N,
            "r": self.r, "s": self.s, "K": self.K, "alpha": self.alpha,
            "theta_star": self.theta_star, "sbar": self.sbar, "steps": self.steps,
            "lie_orders": self.lie_orders, "strict": self.strict,
            "norms": self.norms, "bounds": self.bounds,
            "g_at_center": g_tab, "remainder_at_center_top": r_tab,
            "diagnostics": self.diagnostics,
        }

    def save(self, path) -> None:
        _io.dump(self.to_dict(), path)

    # -- checks of the change of variables ------------------------------
    def _flow(self, chi, y, x, t=1.0):
        grid = self.grid

        def rhs(_, u):
            gy, gx = grid.gradient(chi, u[:2], u[2:])
            return np.concatenate([-gx, gy])
        sol = solve_ivp(rhs, (0, t), np.concatenate([y, x]), method="DOP853",
                        rtol=1e-13, atol=1e-15)
        return sol.y[:, -1]

    def transform(self, y, x):
        """Image of ``(y, x)`` under the composed normalising map."""
        u = np.concatenate([np.asarray(y, float), np.asarray(x, float)])
        for chi in reversed(self.chis):
            u = self._flow(chi, u[:2], u[2:])
        return u[:2], u[2:]

    def jacobian_det(self, y, x, h: float | None = None) -> float:
        """Determinant of the numerical Jacobian of :meth:`transform` (central differences)."""
        if h is None:
            h = 1e-3 * self.grid.w
        u0 = np.concatenate([np.asarray(y, float), np.asarray(x, float)])
        J = np.empty((4, 4))
        for j in range(4):
            e = np.zeros(4)
            e[j] = h
            up = np.concatenate(self.transform((u0 + e)[:2], (u0 + e)[2:]))
            um = np.concatenate(self.transform((u0 - e)[:2], (u0 - e)[2:]))
            J[:, j] = (up - um) / (2 * h)
        return float(np.linalg.det(J))

    def energy_defect(self, H, y, x) -> float:
        """``|H(Psi(y, x)) - (h + g + f_**)(y, x)|`` with ``h = |y|^2/2``."""
        Yp, Xp = self.transform(y, x)
        lhs = H(Yp, Xp)
        y = np.asarray(y, float)
        rhs = 0.5 * y @ y + self.grid.value(self.g + self.remainder, y, x)
        return abs(lhs - rhs)


def _lie_step(grid: ModeGrid, F, lam, cutoff: int, tol: float, max_order: int):
    sel = (~grid.lattice_mask(lam)) & (grid.l1 <= cutoff) & (grid.l1 > 0)
    Fc = np.where(sel, F, 0)
    denom = 1j * (grid.Y[..., 0, None, None] * grid.K1 + grid.Y[..., 1, None, None] * grid.K2)
    chi = np.where(sel, Fc / np.where(sel, denom, 1.0), 0)
    scale = max(np.abs(F).max(), 1e-300)
    Z = grid.bracket(F, chi) - Fc
    out = F + Z
    n = 1
    while n < max_order and np.abs(Z).max() > tol * scale:
        n += 1
        Z = grid.bracket(Z, chi) / n
        out = out + Z
    return out, chi, n, float(np.abs(Z).max())


def normalize(grid: ModeGrid, F, lam, alpha: float, K: int, r: float, s: float,
              steps: int | None = None, cutoff: int | None = None, max_steps: int = 6,
              lie_tol: float = 1e-15, max_order: int = 24, strict: bool = True,
              slack: float = 10.0) -> NormalFormResult:
    """Average the non-``Lambda`` modes ``0 < |k|_1 <= cutoff`` out of ``F``.

    ``F`` is the perturbation on ``grid`` with kinetic part ``|y|^2/2``.
    ``steps=None`` repeats Lie steps until the targeted modes fall below
    ``lie_tol`` relative to ``F`` or ``max_steps`` is reached.  With
    ``strict=True`` a value ``theta_* >= 1`` raises :class:`ConditionFailure`;
    otherwise it is only recorded.
    """
    cutoff = K if cutoff is None else min(cutoff, grid.N)
    norm_in = weighted_l1_norm(grid, F, s, r)
    theta = 2**11 * K**2 / (alpha * r * s) * norm_in
    if strict and theta >= 1:
        raise ConditionFailure(f"theta_* = {theta:.3g} >= 1")
    sbar = min(s / 2, math.log(8 / theta)) if theta > 0 else s / 2
    ok, margin = nonresonance_certificate(grid.Y.reshape(-1, 2), lam, alpha, cutoff)
    P_in = grid.project(F, lam)
    chis, orders = [], []
    G = F
    target = (~grid.lattice_mask(lam)) & (grid.l1 <= cutoff) & (grid.l1 > 0)
    n_steps = steps if steps is not None else max_steps
    done = 0
    for _ in range(n_steps):
        if not np.any(np.where(target, G, 0)):
            break
        G, chi, order, _tail = _lie_step(grid, G, lam, cutoff, 1e-17, max_order)
        chis.append(chi)
        orders.append(order)
        done += 1
        if steps is None and np.abs(np.where(target, G, 0)).max() <= lie_tol * max(np.abs(F).max(), 1e-300):
            break
    g = grid.project(G, lam)
    rem = grid.project_perp(G, lam)
    norm_g_diff = weighted_l1_norm(grid, g - P_in, s / 2, r / 2)
    norm_rem = weighted_l1_norm(grid, rem, s / 2, r / 2)
    # with theta_* >= 1 these bounds say nothing; they are reported as absent
    applicable = bool(theta < 1)
    bound_g = theta / K * norm_in if applicable else math.inf
    bound_rem = 2 * _exp(-(K - 2) * sbar) * norm_in if applicable else math.inf
    bounds = {
        "g_minus_projection": {"value": norm_g_diff, "bound": bound_g, "applicable": applicable,
                               "ok": norm_g_diff <= slack * bound_g or norm_g_diff == 0},
        "remainder": {"value": norm_rem, "bound": bound_rem, "applicable": applicable,
                      "ok": norm_rem <= slack * bound_rem or norm_rem == 0},
    }
    res = NormalFormResult(
        grid=grid, lam=None if lam is None else tuple(int(v) for v in lam), g=g, remainder=rem,
        chis=chis, theta_star=float(theta), sbar=float(sbar), r=r, s=s, K=K, alpha=alpha,
        norms={"input": norm_in, "g_minus_projection": norm_g_diff, "remainder": norm_rem,
               "targeted_residual": float(np.abs(np.where(target, G, 0)).max())},
        bounds=bounds, steps=done, lie_orders=orders, strict=strict,
        diagnostics={"nonresonance_margin": margin, "nonresonant": ok, "cutoff": cutoff},
    )
    return res


def d0_centers(zones: ZoneDecomposition, n: int, seed: int = 0, f: FourierSeries2 | None = None,
               eps: float = 0.0, pool: int = 4096) -> np.ndarray:
    """``n`` actions in the completely non-resonant zone.

    Candidates are drawn uniformly in the annulus and kept when
    ``|y.k| >= 2 alpha`` for every ``|k|_1 <= K``, which leaves room for the
    normalising square.  When a potential is given, the ``n`` candidates with
    the smallest first-order distortion ``max_k eps |f_k| |k|^2 / (y.k)^2``
    are returned, so that the Lie series converges quickly.
    """
    rng = np.random.default_rng(seed)
    A = zones.annulus
    G = zones.gen_array
    rad = np.sqrt(rng.uniform(A.r_inner**2, A.r_outer**2, pool))
    ph = rng.uniform(0, 2 * np.pi, pool)
    Y = np.stack([rad * np.cos(ph), rad * np.sin(ph)], axis=1)
    Y = Y[np.all(np.abs(Y @ G.T) >= 2 * zones.alpha, axis=1)]
    if len(Y) < n:
        raise ValueError("too few non-resonant candidates; enlarge the pool")
    if f is None or not len(f):
        return Y[:n]
    modes = f.modes.astype(float)
    amp = np.abs(f.amplitudes)
    q = np.max(eps * amp * np.sum(modes**2, axis=1) / (Y @ modes.T) ** 2, axis=1)
    return Y[np.argsort(q, kind="stable")[:n]]


def resonance_center(k, r_inner: float, r_outer: float) -> np.ndarray:
    """Point of the line ``y.k = 0`` at radius ``(r + R)/2``."""
    k = np.asarray(k, dtype=float)
    perp = np.array([k[1], -k[0]]) / np.hypot(*k)
    return 0.5 * (r_inner + r_outer) * perp


def average_nonresonant(f: FourierSeries2, eps: float, zones: ZoneDecomposition,
                        center, n_y: int = 8, N: int | None = None, slack: float = 10.0,
                        **kw) -> NormalFormResult:
    """Normal form on a square of side ``r0 = alpha/(2K)`` around a point of ``D0``.

    Records ``sup|g - <f>|`` against ``eps K^2/alpha^2`` and asserts
    ``||f_o|| <= slack e^{-K s/3} ||eps f||_s`` with ``f_o`` the remainder
    measured at widths ``(r0/2, s(1 - 2/K)/2)``.
    """
    K, alpha, s = zones.K, zones.alpha, f.s
    N = 2 * K if N is None else N
    r0 = alpha / (2 * K)
    grid = ModeGrid(center, r0 / 2, n_y, N)
    F = grid.from_potential(f, eps)
    res = normalize(grid, F, None, alpha, K, r0 / 2, s, strict=False, slack=slack, **kw)
    sup_f = eps * max((abs(c) * math.exp((abs(k[0]) + abs(k[1])) * s) for k, c in f), default=0.0)
    s_out = s * (1 - 2 / K) / 2
    rem = weighted_l1_norm(grid, res.remainder, s_out, r0 / 4)
    bound = slack * math.exp(-K * s / 3) * sup_f
    mean_dev = float(np.max(np.abs(res.mean)))
    mean_scale = eps * K**2 / alpha**2
    res.bounds["d0_remainder"] = {"value": rem, "bound": bound, "ok": rem <= bound}
    res.bounds["mean_shift"] = {"value": mean_dev, "bound": slack * mean_scale * sup_f,
                                "ok": mean_dev <= slack * mean_scale * sup_f}
    res.norms["d0_remainder"] = rem
    res.norms["sup_input"] = sup_f
    if rem > bound:
        raise BoundViolation(f"D0 remainder {rem:.3g} exceeds {bound:.3g}")
    return res


def average_simple_resonance(f: FourierSeries2, eps: float, k, zones: ZoneDecomposition,
                             n_y: int = 8, N: int | None = None, slack: float = 10.0,
                             center=None, **kw) -> NormalFormResult:
    """Normal form with ``Lambda = kZ`` on a square of side ``r_k = r/(32|k|K)``.

    Non-resonant modes up to ``min(8K, N)`` are removed.  The result's
    ``g`` splits into the mean ``G0`` and the zero-average effective
    potential ``G``; ``||G - eps F^k||`` is compared with
    ``slack eps |k|_1^2 K^2 ||eps f||`` and the remainder with
    ``2 e^{-(4K-1)s}`` (floored at rounding level).
    """
    K, s = zones.K, f.s
    A = zones.annulus
    k = (int(k[0]), int(k[1]))
    N = 2 * K if N is None else N
    kn = math.hypot(*k)
    rk = A.r_inner / (32 * kn * K)
    if center is None:
        center = resonance_center(k, A.r_inner, A.r_outer)
    grid = ModeGrid(center, rk / 2, n_y, N)
    F = grid.from_potential(f, eps)
    alpha_k = A.r_inner / (4 * kn)
    res = normalize(grid, F, k, alpha_k, 8 * K, rk / 2, s, cutoff=min(8 * K, N), strict=False,
                    slack=slack, **kw)
    P_in = grid.project(F, k)
    G = res.g.copy()
    G[:, :, grid.N, grid.N] = 0
    P0 = P_in.copy()
    P0[:, :, grid.N, grid.N] = 0
    dev = weighted_l1_norm(grid, G - P0, s / 2, rk / 4)
    sup_f = eps * max((abs(c) * math.exp((abs(kk[0]) + abs(kk[1])) * s) for kk, c in f), default=0.0)
    k1 = abs(k[0]) + abs(k[1])
    scale = eps * k1**2 * K**2 * sup_f
    res.bounds["effective_potential"] = {"value": dev, "bound": slack * scale, "ok": dev <= slack * scale}
    rem = res.norms["remainder"]
    # coefficients below the chop level are not resolved; their widened weight sets the floor
    rho = _bernstein_rho(rk / 4, grid.w)
    floor = max(64 * np.finfo(float).eps, grid.chop) * rho ** (2 * (grid.n_y - 1)) * res.norms["input"]
    rbound = max(slack * 2 * math.exp(-(4 * K - 1) * s) * sup_f, floor)
    res.bounds["resonant_remainder"] = {"value": rem, "bound": rbound, "ok": bool(rem <= rbound),
                                        "floor": float(floor)}
    res.diagnostics["lattice_leak"] = float(np.abs(grid.project(res.remainder, k)).max())
    return res
