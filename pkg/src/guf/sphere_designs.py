"""Unit-sphere point sets closed under coordinate permutations and sign changes.

A point set on the unit sphere is built from *generators*: canonical orbit
representatives whose coordinates are nonnegative and sorted nonincreasing.
The orbit of a generator under the hyperoctahedral group (all permutations
combined with all sign flips) has a closed-form size and a closed-form sum of
outer products, ``h_coefficient(g) * I``, which is what the covariance match
of the sampler relies on.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ZeroVector",
    "Generator",
    "ReferenceSampling",
    "canonicalize",
    "orbit_size",
    "expand_orbit",
    "h_coefficient",
    "sum_outer_products",
    "nearest_neighbor_distances",
    "min_separation",
    "reference_sampling",
    "layered_design",
]

_EQ_TOL = 1e-12


class ZeroVector(ValueError):
    pass


@dataclass(frozen=True)
class Generator:
    """Canonical orbit representative on the unit sphere.

    ``multiplicities`` are the run lengths of equal coordinates (the zero run
    included), so they always sum to the dimension.
    """

    coords: tuple
    multiplicities: tuple

    @property
    def dim(self):
        return len(self.coords)

    @property
    def boundaries(self):
        """Index (1-based) of the last coordinate of each run."""
        return tuple(itertools.accumulate(self.multiplicities))

    @property
    def nonzero_count(self):
        return sum(1 for c in self.coords if c > 0.0)

    def as_array(self):
        return np.array(self.coords, dtype=float)


def canonicalize(v):
    """Orbit representative of ``v``: absolute values sorted nonincreasing, unit norm.

    Coordinates equal within a relative ``1e-12`` are merged into one run and
    snapped to a common value, so orbit expansion is exact.
    """
    v = np.abs(np.asarray(v, dtype=float).ravel())
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ZeroVector("cannot canonicalize the zero vector")
    x = np.sort(v / norm)[::-1]
    x[x < _EQ_TOL] = 0.0

    values, runs = [], []
    for c in x:
        if values and abs(values[-1] - c) <= _EQ_TOL * max(1.0, abs(c)):
            runs[-1] += 1
        else:
            values.append(float(c))
            runs.append(1)
    coords = tuple(val for val, run in zip(values, runs) for _ in range(run))
    return Generator(coords=coords, multiplicities=tuple(runs))


def orbit_size(g):
    """Number of distinct images of ``g``: ``2**N * n! / prod(a_j!)``."""
    denom = math.prod(math.factorial(a) for a in g.multiplicities)
    return 2 ** g.nonzero_count * math.factorial(g.dim) // denom


def _distinct_arrangements(values, runs, n):
    # Place each run of equal values on a choice of free positions; every
    # distinct permutation of the multiset is produced exactly once.
    def place(run_idx, free):
        if run_idx == len(runs):
            yield {}
            return
        for chosen in itertools.combinations(free, runs[run_idx]):
            rest = [p for p in free if p not in chosen]
            for tail in place(run_idx + 1, rest):
                tail = dict(tail)
                for p in chosen:
                    tail[p] = values[run_idx]
                yield tail

    for assignment in place(0, list(range(n))):
        yield [assignment[i] for i in range(n)]


def expand_orbit(g):
    """All distinct images of ``g`` under permutations and sign changes.

    Returns an ``(orbit_size(g), n)`` array in a deterministic order. Images
    are generated combinatorially, so no floating-point deduplication occurs.
    """
    n = g.dim
    values = [g.coords[t - 1] for t in g.boundaries]
    rows = []
    for arrangement in _distinct_arrangements(values, list(g.multiplicities), n):
        nonzero = [i for i, c in enumerate(arrangement) if c != 0.0]
        for signs in itertools.product((1.0, -1.0), repeat=len(nonzero)):
            y = list(arrangement)
            for i, s in zip(nonzero, signs):
                y[i] = s * y[i]
            rows.append(y)
    return np.array(rows, dtype=float).reshape(-1, n)


def h_coefficient(g):
    """Scalar ``H`` with ``sum(y y^T over orbit(g)) == H * I``.

    ``H = 2**N * (n-1)! / prod(a_j!) * sum_i a_i * x_{t_i}**2``.
    """
    # 2**N (n-1)! / prod(a_j!) is orbit_size / n; keeping the integer part
    # exact leaves two roundings in total
    runs = math.fsum(a * g.coords[t - 1] ** 2 for a, t in zip(g.multiplicities, g.boundaries))
    return orbit_size(g) * runs / g.dim


def sum_outer_products(points):
    """``sum_j y_j y_j^T`` over the rows of ``points``, accumulated with ``math.fsum``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("expected a nonempty (k, n) array of points")
    n = pts.shape[1]
    M = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            M[i, j] = M[j, i] = math.fsum(pts[:, i] * pts[:, j])
    return M


def nearest_neighbor_distances(points):
    """Distance from every point to its nearest distinct neighbor."""
    pts = np.asarray(points, dtype=float)
    if pts.shape[0] < 2:
        raise ValueError("need at least two points")
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    np.fill_diagonal(dist, np.inf)
    return dist.min(axis=1)


def min_separation(points):
    """Smallest nearest-neighbor distance in the set.

    A single orbit satisfies the equal-spacing condition when every entry of
    :func:`nearest_neighbor_distances` equals this value.
    """
    return float(nearest_neighbor_distances(points).min())


@dataclass(frozen=True)
class ReferenceSampling:
    """Union of orbit-disjoint generator orbits on the unit sphere."""

    basis: tuple
    points: np.ndarray = field(repr=False, compare=False)

    @property
    def dim(self):
        return self.basis[0].dim

    @property
    def size(self):
        return self.points.shape[0]

    @property
    def c_value(self):
        """Sum of ``h_coefficient`` over the basis; ``M = c_value * I``."""
        return float(sum(h_coefficient(b) for b in self.basis))


def reference_sampling(generators):
    """Build a :class:`ReferenceSampling` from raw generator vectors.

    Vectors are canonicalized (hence normalized); repeated orbits are rejected
    because the basis must be orbit-disjoint.
    """
    basis = []
    for v in generators:
        g = v if isinstance(v, Generator) else canonicalize(v)
        if any(b.dim != g.dim for b in basis):
            raise ValueError("all generators must share one dimension")
        if g in basis:
            raise ValueError(f"generator {g.coords} repeats an existing orbit")
        basis.append(g)
    if not basis:
        raise ValueError("at least one generator is required")
    points = np.vstack([expand_orbit(g) for g in basis])
    points.setflags(write=False)
    return ReferenceSampling(basis=tuple(basis), points=points)


def layered_design(n, depth):
    """Cumulative union of the orbits of ``(1,...,1,0,...,0)/sqrt(k)`` for ``k = 1..depth``.

    In five dimensions depths 1-4 give 10, 50, 130 and 210 points; in two
    dimensions depth 2 is the regular octagon.
    """
    if not 1 <= depth <= n:
        raise ValueError(f"depth must lie in [1, {n}], got {depth}")
    gens = [[1.0] * k + [0.0] * (n - k) for k in range(1, depth + 1)]
    return reference_sampling(gens)
