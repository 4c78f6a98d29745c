"""Sigma-point Gaussian filtering with pluggable sampling rules.

All rules share one time/measurement update. A rule turns a Gaussian belief
into a weighted point set; its ``resample`` flag decides whether the
measurement update draws fresh points from the predicted belief (cubature
style) or reuses the propagated ones (original unscented filter).

Model functions are vectorized: ``f`` maps an ``(N, n)`` array of states to
``(N, n)`` and ``h`` maps ``(N, n)`` to ``(N, m)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import cho_solve

from . import gus_sampler as gus
from .gus_sampler import GaussianBelief, LevelMode, SigmaSet
from .numerics import NotPositiveDefinite, cholesky
from .sphere_designs import ReferenceSampling, layered_design

__all__ = [
    "ScaleDegenerate",
    "DimensionTooLarge",
    "StateSpaceModel",
    "SamplingRule",
    "UnscentedRule",
    "CubatureRule",
    "FifthDegreeCubatureRule",
    "GaussHermiteRule",
    "GeometricRule",
    "FilterEstimate",
    "ut_points",
    "ckf3_points",
    "ckf5_points",
    "gh_points",
    "gus_points",
    "gauss_hermite_1d",
    "predict",
    "propagate",
    "update",
    "run_filter",
    "kalman_reference",
]


class ScaleDegenerate(ValueError):
    pass


class DimensionTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class StateSpaceModel:
    """Additive-noise model ``x' = f(x) + v``, ``z = h(x) + w``.

    ``residual(z1, z2)`` replaces ``z1 - z2`` (rows broadcast) and
    ``measurement_mean(Z, w)`` replaces ``w @ Z``; both default to plain
    arithmetic.
    """

    f: Callable
    h: Callable
    Q: np.ndarray
    R: np.ndarray
    residual: Optional[Callable] = None
    measurement_mean: Optional[Callable] = None

    @property
    def dim_x(self):
        return np.shape(self.Q)[0]

    @property
    def dim_z(self):
        return np.shape(self.R)[0]

    def diff_z(self, z1, z2):
        if self.residual is not None:
            return self.residual(z1, z2)
        return z1 - z2

    def mean_z(self, Z, w):
        if self.measurement_mean is not None:
            return self.measurement_mean(Z, w)
        return w @ Z


# -- point rules -------------------------------------------------------------


def ut_points(belief, kappa):
    """``2n + 1`` symmetric points; center weight ``kappa / (n + kappa)``."""
    n = belief.dim
    scale = n + kappa
    if scale <= 0.0:
        raise ScaleDegenerate(f"kappa + n must be positive, got {scale}")
    cols = math.sqrt(scale) * belief.sqrt()
    pts = np.vstack([belief.mean, belief.mean + cols.T, belief.mean - cols.T])
    w = np.full(2 * n + 1, 0.5 / scale)
    w[0] = kappa / scale
    return SigmaSet(points=pts, weights=w)


def ckf3_points(belief):
    n = belief.dim
    cols = math.sqrt(n) * belief.sqrt()
    pts = np.vstack([belief.mean + cols.T, belief.mean - cols.T])
    return SigmaSet(points=pts, weights=np.full(2 * n, 0.5 / n))


def ckf5_points(belief):
    """Fifth-degree cubature rule with ``2n**2 + 1`` points.

    Axis weights are ``(4 - n) / (2 (n + 2)**2)``, negative for ``n > 4``.
    """
    n = belief.dim
    L = belief.sqrt()
    a = math.sqrt(n + 2.0)
    b = math.sqrt((n + 2.0) / 2.0)
    pts = [belief.mean]
    w = [2.0 / (n + 2.0)]
    w_axis = (4.0 - n) / (2.0 * (n + 2.0) ** 2)
    for i in range(n):
        pts += [belief.mean + a * L[:, i], belief.mean - a * L[:, i]]
        w += [w_axis, w_axis]
    w_pair = 1.0 / (n + 2.0) ** 2
    for i, j in itertools.combinations(range(n), 2):
        for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            pts.append(belief.mean + b * (si * L[:, i] + sj * L[:, j]))
            w.append(w_pair)
    return SigmaSet(points=np.array(pts), weights=np.array(w))


def gauss_hermite_1d(m):
    """Nodes and weights of the ``m``-point rule for a unit-variance Gaussian.

    Golub-Welsch on the probabilists' Hermite Jacobi matrix; ``m`` of 2 and 3
    return their closed forms.
    """
    if m < 2:
        raise ValueError("Gauss-Hermite order must be >= 2")
    if m == 2:
        return np.array([-1.0, 1.0]), np.array([0.5, 0.5])
    if m == 3:
        s3 = math.sqrt(3.0)
        return np.array([-s3, 0.0, s3]), np.array([1 / 6, 2 / 3, 1 / 6])
    return _golub_welsch(m)


def _golub_welsch(m):
    off = np.sqrt(np.arange(1, m, dtype=float))
    J = np.diag(off, 1) + np.diag(off, -1)
    nodes, vecs = np.linalg.eigh(J)
    weights = vecs[0, :] ** 2
    return nodes, weights / weights.sum()


def gh_points(belief, m, max_points=10**6):
    n = belief.dim
    if m**n > max_points:
        raise DimensionTooLarge(f"{m}**{n} points exceeds the cap of {max_points}")
    nodes, weights = gauss_hermite_1d(m)
    grid = np.array(list(itertools.product(nodes, repeat=n)))
    w = np.prod(np.array(list(itertools.product(weights, repeat=n))), axis=1)
    return SigmaSet(points=belief.mean + grid @ belief.sqrt().T, weights=w)


def gus_points(belief, rule):
    return rule.sample(belief)


class SamplingRule:
    """Base class: a named way to turn a belief into a :class:`SigmaSet`."""

    name = "rule"
    resample = True

    def sample(self, belief):
        raise NotImplementedError

    def size(self, n):
        return len(self.sample(GaussianBelief.standard(n)))


@dataclass
class UnscentedRule(SamplingRule):
    kappa: float = 1.0
    resample: bool = False

    @property
    def name(self):
        return f"{'gukf' if self.resample else 'ukf'}(kappa={self.kappa:g})"

    def sample(self, belief):
        return ut_points(belief, self.kappa)


@dataclass
class CubatureRule(SamplingRule):
    resample: bool = True
    name = "ckf3"

    def sample(self, belief):
        return ckf3_points(belief)


@dataclass
class FifthDegreeCubatureRule(SamplingRule):
    resample: bool = True
    name = "ckf5"

    def sample(self, belief):
        return ckf5_points(belief)


@dataclass
class GaussHermiteRule(SamplingRule):
    order: int = 3
    max_points: int = 10**6
    resample: bool = True

    @property
    def name(self):
        return f"ghqf(m={self.order})"

    def sample(self, belief):
        return gh_points(belief, self.order, self.max_points)


@dataclass
class GeometricRule(SamplingRule):
    """Geometric unscented sampling as a filter rule.

    Args:
        levels: number of importance levels ``N``.
        mode: how the importance values are placed (see :class:`LevelMode`).
        design: a single :class:`ReferenceSampling` reused on every level, a
            list with one per level, or ``None`` for ``layered_design(n, depth)``.
        depth: depth of the default layered design, capped at the dimension.
        rng: random stream, required only by ``LevelMode.RANDOM``; levels are
            redrawn on every call in that mode.
    """

    levels: int = 2
    mode: LevelMode = LevelMode.GRID
    design: object = None
    depth: int = 1
    rng: object = None
    resample: bool = True
    _unit: dict = field(default_factory=dict, init=False, repr=False)

    @property
    def name(self):
        return f"guf(N={self.levels})"

    def _designs(self, n):
        if self.design is None:
            return [layered_design(n, min(self.depth, n))] * self.levels
        if isinstance(self.design, ReferenceSampling):
            return [self.design] * self.levels
        designs = list(self.design)
        if len(designs) != self.levels:
            raise ValueError(f"{len(designs)} designs given for {self.levels} levels")
        return designs

    def unit_set(self, n):
        """Sigma set of the standard normal in ``n`` dimensions."""
        if LevelMode(self.mode) is LevelMode.RANDOM:
            levels = gus.importance_levels(self.levels, self.mode, self.rng)
            return gus.build_sigma_set(GaussianBelief.standard(n), gus.resolve_radii(levels, n), self._designs(n))
        if n not in self._unit:
            levels = gus.resolve_radii(gus.importance_levels(self.levels, self.mode), n)
            self._unit[n] = gus.build_sigma_set(GaussianBelief.standard(n), levels, self._designs(n))
        return self._unit[n]

    def sample(self, belief):
        unit = self.unit_set(belief.dim)
        # the set is built for N(0, I); an affine map carries it to the belief
        pts = belief.mean + unit.points @ belief.sqrt().T
        return SigmaSet(points=pts, weights=unit.weights, level=unit.level, beta=unit.beta,
                        source_levels=unit.source_levels)

    def size(self, n):
        return sum(d.size for d in self._designs(n))


# -- filter loop ---------------------------------------------------------------


@dataclass(frozen=True)
class FilterEstimate:
    posterior: GaussianBelief
    predicted: GaussianBelief
    Pzz: Optional[np.ndarray] = None
    Pxz: Optional[np.ndarray] = None
    gain: Optional[np.ndarray] = None
    diverged: bool = False


def _symmetrize(P):
    return 0.5 * (P + P.T)


def _weighted_cov(w, dA, dB):
    return (w[:, None] * dA).T @ dB


def propagate(model, belief, rule):
    """Time update; returns the predicted belief and the propagated point set."""
    S = rule.sample(belief)
    X = np.asarray(model.f(S.points), dtype=float)
    mean = S.weights @ X
    P = _weighted_cov(S.weights, X - mean, X - mean) + model.Q
    prop = SigmaSet(points=X, weights=S.weights, level=S.level, beta=S.beta, source_levels=S.source_levels)
    return GaussianBelief(mean, _symmetrize(P)), prop


def predict(model, belief, rule):
    return propagate(model, belief, rule)[0]


def update(model, predicted, y, rule, propagated=None):
    """Measurement update.

    Points are redrawn from ``predicted`` when ``rule.resample`` is set or no
    propagated set is supplied. A non-factorable innovation covariance makes
    the step coast: the posterior equals the prediction and ``diverged`` is set.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    try:
        S = rule.sample(predicted) if (rule.resample or propagated is None) else propagated
    except NotPositiveDefinite:
        return FilterEstimate(posterior=predicted, predicted=predicted, diverged=True)
    w = S.weights
    Z = np.asarray(model.h(S.points), dtype=float).reshape(len(S), -1)
    z_mean = model.mean_z(Z, w)
    dZ = model.diff_z(Z, z_mean)
    dX = S.points - predicted.mean
    Pzz = _symmetrize(_weighted_cov(w, dZ, dZ) + model.R)
    Pxz = _weighted_cov(w, dX, dZ)
    try:
        Lz = cholesky(Pzz)
    except NotPositiveDefinite:
        return FilterEstimate(posterior=predicted, predicted=predicted, Pzz=Pzz, Pxz=Pxz, diverged=True)
    K = cho_solve((Lz, True), Pxz.T).T
    innovation = model.diff_z(y, z_mean)
    mean = predicted.mean + K @ innovation
    P = _symmetrize(predicted.cov - K @ Pzz @ K.T)
    if not (np.isfinite(mean).all() and np.isfinite(P).all()):
        return FilterEstimate(posterior=predicted, predicted=predicted, Pzz=Pzz, Pxz=Pxz, diverged=True)
    return FilterEstimate(GaussianBelief(mean, P), predicted, Pzz, Pxz, K, False)


def run_filter(model, initial, measurements, rule):
    """Fold predict/update over ``measurements``; divergence is recorded, never raised."""
    if len(measurements) < 1:
        raise ValueError("need at least one measurement")
    belief = initial
    out = []
    for y in measurements:
        try:
            predicted, prop = propagate(model, belief, rule)
            est = update(model, predicted, y, rule, prop)
        except NotPositiveDefinite:
            mean = np.asarray(model.f(belief.mean[None, :]), dtype=float)[0]
            coast = GaussianBelief(mean, _symmetrize(belief.cov + model.Q))
            est = FilterEstimate(posterior=coast, predicted=coast, diverged=True)
        out.append(est)
        belief = est.posterior
    return out


def kalman_reference(A, H, Q, R, initial, measurements):
    """Closed-form linear Kalman recursion; returns the posterior beliefs."""
    A, H, Q, R = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, H, Q, R))
    x, P = initial.mean, initial.cov
    out = []
    for y in measurements:
        x = A @ x
        P = A @ P @ A.T + Q
        S = H @ P @ H.T + R
        L = cholesky(S)
        K = cho_solve((L, True), H @ P).T
        x = x + K @ (np.atleast_1d(y) - H @ x)
        P = _symmetrize(P - K @ S @ K.T)
        out.append(GaussianBelief(x, P))
    return out
