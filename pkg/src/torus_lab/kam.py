"""Quantitative KAM smallness condition, derived scales and measure budgets.

The constant ``c`` of the smallness condition depends only on the dimension
and the Diophantine exponent but has no known numerical value; the default
``1e-3`` is a placeholder and every certificate also reports the ratio
``epsilon / (mu^8 s^(4 tau + 8))`` so any other constant can be applied.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _io

__all__ = ["KamInput", "KamCertificate", "evaluate", "hessian_data", "budget_D0", "budget_total"]

C_KAM = 1e-3
TAU = 1.5


@dataclass(frozen=True)
class KamInput:
    """Data of a nearly-integrable system ``h(y) + f(y, x)``.

    ``M`` bounds the Hessian of ``h``, ``d`` bounds its determinant from
    below, ``eps0`` bounds ``f``; ``r``, ``s`` are the analyticity widths.
    """

    n: int
    M: float
    d: float
    eps0: float
    r: float
    s: float
    tau: float = TAU
    diamD: float = 1.0
    c_kam: float = C_KAM

    def __post_init__(self):
        if self.r <= 0 or self.s <= 0:
            raise ValueError("widths r and s must be positive")
        if not (self.M > 0 and self.d > 0 and self.eps0 >= 0):
            raise ValueError("need M > 0, d > 0, eps0 >= 0")
        if not all(math.isfinite(v) for v in (self.M, self.d, self.eps0)):
            raise ValueError("M, d, eps0 must be finite")
        if self.tau <= self.n - 1:
            raise ValueError("tau must exceed n - 1")
        if self.mu > 1 * (1 + 1e-12):
            raise ValueError(f"inconsistent input: mu = d/M^n = {self.mu:.6g} > 1")

    @property
    def mu(self) -> float:
        return self.d / self.M**self.n


@dataclass(frozen=True)
class KamCertificate:
    epsilon: float
    ratio: float
    condition: bool
    alpha: float
    r_hat: float
    r_eps: float
    C: float
    measure_bound: float
    mu: float
    threshold: float
    input: dict

    def to_dict(self):
        return asdict(self)

    def save(self, path):
        _io.dump(self.to_dict(), path)


def evaluate(inp: KamInput) -> KamCertificate:
    """Smallness flag, derived scales and measure bound for ``inp``."""
    n, M, r, s, tau, c = inp.n, inp.M, inp.r, inp.s, inp.tau, inp.c_kam
    mu = inp.mu
    eps = inp.eps0 / (M * r * r)
    base = mu**8 * s ** (4 * tau + 8)
    threshold = c * base
    se = math.sqrt(eps)
    alpha = M * r / (mu * s ** (3 * tau + 6)) * se
    r_hat = mu**2 * r
    r_eps = se * r / (c * mu)
    Cm = max(mu**2 * r, inp.diamD) ** n / (c * mu ** (n + 5) * s ** (3 * tau + 6))
    return KamCertificate(eps, eps / base, eps <= threshold, alpha, r_hat, r_eps, Cm, Cm * se,
                          mu, threshold, asdict(inp))


def hessian_data(H) -> tuple[float, float]:
    """``(M, d)`` for a stack of symmetric Hessians: sup operator norm and inf ``|det|``."""
    H = np.asarray(H, dtype=float)
    if H.ndim == 2:
        H = H[None]
    M = float(np.max(np.linalg.norm(H, ord=2, axis=(1, 2))))
    d = float(np.min(np.abs(np.linalg.det(H))))
    return M, d


def budget_D0(s: float, eps: float, a: float) -> float:
    """Relative non-torus bound ``exp(-s / (6 eps^a))`` on the non-resonant zone."""
    if not 0 < a < 1 / 6:
        raise ValueError("need 0 < a < 1/6")
    return math.exp(-s / (6 * eps**a))


def budget_total(eps: float, a: float, r: float, R: float, s: float, c2: float = 1.0) -> float:
    """Measure bound for the annulus: D0 budget times its area plus ``2 theta``.

    ``theta = exp(-c2 / eps^a)`` is the per-resonance twist threshold; the
    resonant zones together contribute at most ``2 theta`` once ``eps`` is
    small.  The result has the form ``const exp(-const / eps^a)``.
    """
    if not 0 < a < 1 / 6:
        raise ValueError("need 0 < a < 1/6")
    if min(eps, r, R, s, c2) <= 0 or r >= R:
        raise ValueError("parameters must be positive with r < R")
    area = math.pi * (R * R - r * r)
    theta = math.exp(-c2 / eps**a)
    return area * budget_D0(s, eps, a) + 2 * theta
