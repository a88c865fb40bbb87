"""Resonance geometry of the action annulus.

Generators of maximal one-dimensional sublattices of Z^2, orthogonal
projections along a resonance direction, the non-resonant / simply-resonant
zone decomposition and the no-double-resonance inequality.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Annulus",
    "ZoneDecomposition",
    "HypothesisError",
    "AlphaTooLarge",
    "ParallelVector",
    "VectorTooLong",
    "is_generator",
    "generator_of",
    "enumerate_generators",
    "proj_parallel",
    "proj_perp",
    "double_resonance_gap",
    "double_resonance_margins",
    "choose_parameters",
]


class HypothesisError(ValueError):
    """An input violates a hypothesis of the no-double-resonance inequality."""


class AlphaTooLarge(HypothesisError):
    pass


class ParallelVector(HypothesisError):
    pass


class VectorTooLong(HypothesisError):
    pass


def is_generator(k) -> bool:
    k1, k2 = int(k[0]), int(k[1])
    if (k1, k2) == (0, 1):
        return True
    return k1 > 0 and math.gcd(k1, k2) == 1


def generator_of(k) -> tuple[tuple[int, int], int]:
    """Return ``(g, j)`` with ``k = j * g`` and ``g`` a generator."""
    k1, k2 = int(k[0]), int(k[1])
    if k1 == 0 and k2 == 0:
        raise ValueError("the zero vector lies on no generator line")
    d = math.gcd(k1, k2)
    g1, g2 = k1 // d, k2 // d
    if g1 < 0 or (g1 == 0 and g2 < 0):
        return (-g1, -g2), -d
    return (g1, g2), d


def enumerate_generators(Kmax: int) -> list[tuple[int, int]]:
    """All generators with ``|k|_1 <= Kmax``, sorted lexicographically."""
    if Kmax < 1:
        raise ValueError("Kmax must be >= 1")
    out = [(0, 1)]
    for k1 in range(1, Kmax + 1):
        rest = Kmax - k1
        for k2 in range(-rest, rest + 1):
            if math.gcd(k1, k2) == 1:
                out.append((k1, k2))
    out.sort()
    return out


def _as_vec(k) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    if not np.any(k):
        raise ValueError("k must be nonzero")
    return k


def proj_parallel(y, k) -> np.ndarray:
    """Orthogonal projection of ``y`` onto the line spanned by ``k``."""
    k = _as_vec(k)
    y = np.asarray(y, dtype=float)
    return (y @ k / (k @ k))[..., None] * k


def proj_perp(y, k) -> np.ndarray:
    """Orthogonal projection of ``y`` onto the line orthogonal to ``k``."""
    k = _as_vec(k)
    y = np.asarray(y, dtype=float)
    coef = (y[..., 0] * k[1] - y[..., 1] * k[0]) / (k @ k)
    return coef[..., None] * np.array([k[1], -k[0]])


@dataclass(frozen=True)
class Annulus:
    r_inner: float
    r_outer: float

    def __post_init__(self):
        if not 0 < self.r_inner < self.r_outer:
            raise ValueError("need 0 < r_inner < r_outer")

    def contains(self, y, tol: float = 1e-12) -> np.ndarray:
        rho = np.hypot(*np.moveaxis(np.asarray(y, dtype=float), -1, 0))
        return (rho >= self.r_inner * (1 - tol)) & (rho <= self.r_outer * (1 + tol))

    @property
    def area(self) -> float:
        return math.pi * (self.r_outer**2 - self.r_inner**2)


@dataclass(frozen=True)
class ZoneDecomposition:
    """Split of an annulus into the completely non-resonant set and the
    alpha-neighbourhoods of the resonance lines ``y.k = 0``, ``|k|_1 <= K``.

    Points with ``|y.k| == alpha`` belong to the resonant zone of ``k``.
    """

    annulus: Annulus
    alpha: float
    K: int
    generators: tuple = field(default=())

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not self.generators:
            object.__setattr__(self, "generators", tuple(enumerate_generators(self.K)))

    @property
    def gen_array(self) -> np.ndarray:
        return np.array(self.generators, dtype=float)

    def resonant_mask(self, points) -> np.ndarray:
        """Boolean array ``(..., n_generators)``: point lies in ``D^{1,k}``."""
        pts = np.asarray(points, dtype=float)
        return np.abs(pts @ self.gen_array.T) <= self.alpha

    def classify(self, y) -> str | list[tuple[int, int]]:
        """``"D0"`` or the list of generators ``k`` with ``|y.k| <= alpha``."""
        y = np.asarray(y, dtype=float)
        if not self.annulus.contains(y):
            raise ValueError(f"point {tuple(y)} lies outside the annulus")
        mask = self.resonant_mask(y)
        if not mask.any():
            return "D0"
        return [self.generators[i] for i in np.flatnonzero(mask)]

    def classify_grid(self, points) -> list:
        pts = np.asarray(points, dtype=float)
        inside = self.annulus.contains(pts)
        if not inside.all():
            raise ValueError("grid contains points outside the annulus")
        masks = self.resonant_mask(pts)
        return [
            "D0" if not row.any() else [self.generators[i] for i in np.flatnonzero(row)]
            for row in masks
        ]

    def grid(self, n: int) -> np.ndarray:
        """Cartesian ``n x n`` grid over the bounding square, clipped to the annulus."""
        R = self.annulus.r_outer
        u = np.linspace(-R, R, n)
        Y = np.stack(np.meshgrid(u, u, indexing="ij"), axis=-1).reshape(-1, 2)
        return Y[self.annulus.contains(Y)]

    def write_csv(self, path, points) -> None:
        labels = self.classify_grid(points)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["y1", "y2", "label"])
            for (y1, y2), lab in zip(np.asarray(points), labels):
                if lab == "D0":
                    text = "D0"
                else:
                    text = ";".join(f"D1({a},{b})" for a, b in lab)
                w.writerow([repr(float(y1)), repr(float(y2)), text])


def _check_gap_hypotheses(k, ell, r, alpha, K):
    k = np.asarray(k, dtype=int)
    ell = np.asarray(ell, dtype=int)
    if alpha > r / (32 * K):
        raise AlphaTooLarge(f"alpha={alpha} exceeds r/(32K)={r / (32 * K)}")
    if not is_generator(k):
        raise HypothesisError(f"{tuple(k)} is not a generator")
    if math.hypot(*k) > K:
        raise VectorTooLong(f"|k|={math.hypot(*k):.3g} exceeds K={K}")
    if k[0] * ell[1] - k[1] * ell[0] == 0:
        raise ParallelVector(f"ell={tuple(ell)} lies in kZ")
    if math.hypot(*ell) > 8 * K:
        raise VectorTooLong(f"|ell|={math.hypot(*ell):.3g} exceeds 8K={8 * K}")


def double_resonance_gap(y, k, ell, r: float, alpha: float, K: int) -> float:
    """Margin ``|y.ell| - r/(4|k|)`` for ``y`` in the resonant zone of ``k``.

    Nonnegative whenever the hypotheses hold: ``alpha <= r/(32K)``,
    ``|k| <= K``, ``ell`` not a multiple of ``k`` and ``|ell| <= 8K``,
    ``|y| >= r`` and ``|y.k| <= alpha``.
    """
    _check_gap_hypotheses(k, ell, r, alpha, K)
    y = np.asarray(y, dtype=float)
    if np.hypot(*y) < r:
        raise HypothesisError("|y| < r")
    if abs(y @ np.asarray(k, dtype=float)) > alpha:
        raise HypothesisError("y is not in the resonant zone of k")
    kn = math.hypot(*k)
    return float(abs(y @ np.asarray(ell, dtype=float)) - r / (4 * kn))


def double_resonance_margins(Y, k, L, r: float, alpha: float, K: int) -> np.ndarray:
    """Vectorised margins for rows of ``Y`` (points) against rows of ``L``.

    Hypotheses on ``alpha`` and ``k`` are checked once; rows of ``L``
    parallel to ``k`` or longer than ``8K`` are rejected.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    L = np.atleast_2d(np.asarray(L, dtype=int))
    k = np.asarray(k, dtype=int)
    if alpha > r / (32 * K):
        raise AlphaTooLarge(f"alpha={alpha} exceeds r/(32K)={r / (32 * K)}")
    if math.hypot(*k) > K:
        raise VectorTooLong("|k| exceeds K")
    if np.any(k[0] * L[:, 1] - k[1] * L[:, 0] == 0):
        raise ParallelVector("some ell lies in kZ")
    if np.any(np.hypot(L[:, 0], L[:, 1]) > 8 * K):
        raise VectorTooLong("some |ell| exceeds 8K")
    return np.abs(np.einsum("ij,ij->i", Y, L)) - r / (4 * math.hypot(*k))


def choose_parameters(r: float, eps: float, a: float, alpha_rule: str = "gap"):
    """Return ``(alpha, K)`` as functions of ``eps``.

    ``K = ceil(eps**-a)``.  With ``alpha_rule="gap"`` (default)
    ``alpha = r/(32K)`` so that the no-double-resonance inequality applies;
    ``alpha_rule="half"`` gives ``alpha = r/2``.
    """
    if not 0 < a < 1 / 6:
        raise ValueError("need 0 < a < 1/6")
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = eps ** (-a)
    K = max(1, math.ceil(x * (1 - 1e-12)))
    if alpha_rule == "gap":
        alpha = r / (32 * K)
    elif alpha_rule == "half":
        alpha = r / 2
    else:
        raise ValueError(f"unknown alpha_rule {alpha_rule!r}")
    return alpha, K
