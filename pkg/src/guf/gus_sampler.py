"""Geometric unscented sampling of a Gaussian belief.

Importance levels ``d_k`` pick nested ellipsoidal shells of the belief whose
tail probability is ``d_k``. Each shell carries a unit-sphere reference
sampling mapped through the Cholesky factor; every point on shell ``k`` gets
the same positive weight ``exp(-r_k/2)`` (normalized), and a single stretch
``beta`` applied to all shell radii makes the weighted covariance exact.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .numerics import chi_square_survival, chi_square_upper_quantile, cholesky

__all__ = [
    "GaussianBelief",
    "ImportanceLevel",
    "LevelMode",
    "Allocation",
    "SigmaSet",
    "OrderViolation",
    "NegativeStretchRadius",
    "mahalanobis",
    "importance_value",
    "region_importance",
    "importance_levels",
    "resolve_radii",
    "build_sigma_set",
    "basic_points",
    "basic_weight",
    "allocate_designs",
    "approximate_expectation",
]


class OrderViolation(ValueError):
    pass


class NegativeStretchRadius(ValueError):
    """Raised when ``r_k + beta < 0`` for some level; the set is undefined."""


@dataclass(frozen=True)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if mean.ndim != 1:
            raise ValueError("mean must be a vector")
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"covariance shape {cov.shape} does not match mean of length {mean.size}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self):
        return self.mean.size

    @classmethod
    def standard(cls, n):
        return cls(np.zeros(n), np.eye(n))

    def sqrt(self):
        return cholesky(self.cov)

    @property
    def normalizer(self):
        """Density normalizer ``(2 pi)^(-n/2) |P|^(-1/2)``."""
        L = self.sqrt()
        log_det = 2.0 * np.log(np.diag(L)).sum()
        return math.exp(-0.5 * self.dim * math.log(2.0 * math.pi) - 0.5 * log_det)


@dataclass(frozen=True)
class ImportanceLevel:
    d: float
    r: float | None = None


class LevelMode(str, enum.Enum):
    GRID = "grid"  # d_k = k / (N + 1)
    GRID_CLOSED = "gridclosed"  # d_k = k / N, top level sits on the mean
    RANDOM = "random"


class Allocation(str, enum.Enum):
    EQUAL = "equal"
    DENSITY = "density"


@dataclass(frozen=True)
class SigmaSet:
    """Weighted point set approximating a belief.

    ``level``, ``beta`` and ``source_levels`` are only populated by the
    geometric sampler; other rules leave them empty.
    """

    points: np.ndarray
    weights: np.ndarray
    level: np.ndarray | None = None
    beta: float | None = None
    source_levels: tuple = field(default=(), repr=False)

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def has_negative_weights(self):
        return bool((self.weights < 0.0).any())

    def mean(self):
        return self.weights @ self.points

    def covariance(self):
        dx = self.points - self.mean()
        return (self.weights[:, None] * dx).T @ dx


def _whiten(belief, x):
    L = belief.sqrt()
    dx = np.asarray(x, dtype=float) - belief.mean
    return solve_triangular(L, dx, lower=True)


def mahalanobis(belief, x):
    """Squared Mahalanobis distance of ``x`` from the belief mean."""
    z = _whiten(belief, x)
    return float(z @ z)


def importance_value(belief, x):
    """Tail probability of the shell through ``x``; equals 1 at the mean."""
    return chi_square_survival(belief.dim, mahalanobis(belief, x))


def region_importance(d1, d2):
    if d1 > d2:
        raise OrderViolation(f"lower importance {d1} exceeds upper {d2}")
    if d1 < 0.0 or d2 > 1.0:
        raise ValueError("importance values must lie in [0, 1]")
    return d2 - d1


def importance_levels(count, mode=LevelMode.GRID, rng=None):
    """``count`` strictly increasing importance values in ``(0, 1]``.

    Random mode draws sorted uniforms, redrawing exact zeros and duplicates.
    """
    if count < 1:
        raise ValueError("need at least one level")
    mode = LevelMode(mode)
    if mode is LevelMode.GRID:
        ds = [k / (count + 1) for k in range(1, count + 1)]
    elif mode is LevelMode.GRID_CLOSED:
        ds = [k / count for k in range(1, count + 1)]
    else:
        if rng is None:
            raise ValueError("random importance levels require a random stream")
        drawn = set()
        while len(drawn) < count:
            u = float(rng.random())
            if u > 0.0:
                drawn.add(u)
        ds = sorted(drawn)
    return [ImportanceLevel(d) for d in ds]


def resolve_radii(levels, n):
    return [ImportanceLevel(lv.d, chi_square_upper_quantile(n, lv.d)) for lv in levels]


def basic_weight(belief, r):
    """Unnormalized density value ``lambda * exp(-r/2)`` on the shell of radius ``r``."""
    return belief.normalizer * math.exp(-0.5 * r)


def _check_inputs(belief, levels, designs):
    if len(levels) != len(designs):
        raise ValueError(f"{len(levels)} levels but {len(designs)} designs")
    if not levels:
        raise ValueError("at least one level is required")
    if any(lv.r is None for lv in levels):
        raise ValueError("levels must be resolved (call resolve_radii first)")
    for lo, hi in zip(levels, levels[1:]):
        if not lo.d < hi.d:
            raise OrderViolation("importance levels must be strictly increasing")
    for design in designs:
        if design.dim != belief.dim:
            raise ValueError(f"design dimension {design.dim} does not match belief dimension {belief.dim}")


def basic_points(belief, levels, designs):
    """Pre-stretch points ``mean + sqrt(r_k) L S_j``, stacked level by level."""
    _check_inputs(belief, levels, designs)
    L = belief.sqrt()
    blocks = [belief.mean + math.sqrt(lv.r) * design.points @ L.T for lv, design in zip(levels, designs)]
    return np.vstack(blocks)


def level_weights_and_stretch(levels, designs):
    """Per-point weight of every level and the covariance-matching stretch.

    Depends only on the radii and the designs, not on the belief.
    """
    r = np.array([lv.r for lv in levels])
    counts = np.array([d.size for d in designs], dtype=float)
    c = np.array([d.c_value for d in designs])
    dens = np.exp(-0.5 * (r - r.min()))  # shift cancels in the ratio
    w = dens / (counts @ dens)
    beta = (1.0 - np.sum(w * r * c)) / np.sum(w * c)
    return w, float(beta)


def build_sigma_set(belief, levels, designs):
    """Moment-matched, positively weighted sigma set for ``belief``.

    Args:
        belief: Gaussian to sample.
        levels: resolved importance levels, strictly increasing in ``d``.
        designs: one :class:`ReferenceSampling` per level.

    Raises:
        NegativeStretchRadius: some ``r_k + beta`` is negative.
        NotPositiveDefinite: the covariance cannot be factored.
    """
    _check_inputs(belief, levels, designs)
    w, beta = level_weights_and_stretch(levels, designs)
    radii2 = np.array([lv.r for lv in levels]) + beta
    if (radii2 < 0.0).any():
        k = int(np.argmin(radii2))
        raise NegativeStretchRadius(f"level {k} has r + beta = {radii2[k]:.6g} < 0 (beta = {beta:.6g})")
    L = belief.sqrt()
    pts, wts, lvl = [], [], []
    for k, design in enumerate(designs):
        pts.append(belief.mean + math.sqrt(radii2[k]) * design.points @ L.T)
        wts.append(np.full(design.size, w[k]))
        lvl.append(np.full(design.size, k))
    return SigmaSet(
        points=np.vstack(pts),
        weights=np.concatenate(wts),
        level=np.concatenate(lvl),
        beta=beta,
        source_levels=tuple(levels),
    )


def allocate_designs(levels, catalogue, policy=Allocation.EQUAL):
    """Pick one design per level from ``catalogue`` following an allocation policy.

    ``EQUAL`` reuses the largest catalogue entry on every level. ``DENSITY``
    targets counts proportional to ``exp(-r_k/2)``, scaled so the densest
    level gets the largest design, then rounds each target to the catalogue
    entry of nearest size (ties go to the larger one).
    """
    if not catalogue:
        raise ValueError("empty design catalogue")
    policy = Allocation(policy)
    by_size = sorted(catalogue, key=lambda d: d.size)
    largest = by_size[-1]
    if policy is Allocation.EQUAL:
        return [largest] * len(levels)
    r = np.array([lv.r for lv in levels])
    dens = np.exp(-0.5 * (r - r.min()))
    targets = largest.size * dens / dens.max()
    chosen = []
    for t in targets:
        chosen.append(min(reversed(by_size), key=lambda d: abs(d.size - t)))
    return chosen


def approximate_expectation(sigma_set, f):
    """``sum_j w_j f(X_j)``; ``f`` maps one point to a scalar or array."""
    values = np.array([np.asarray(f(x), dtype=float) for x in sigma_set.points])
    return np.tensordot(sigma_set.weights, values, axes=1)
