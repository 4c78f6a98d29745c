"""Scalar and matrix primitives: SPD factorization, chi-square tail, seeded streams."""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "NotPositiveDefinite",
    "ZeroTailMass",
    "NonConvergent",
    "cholesky",
    "chi_square_survival",
    "chi_square_upper_quantile",
    "radial_normalizer",
    "random_stream",
]

_JITTER_SCALE = 1e-9
_GAMMA_EPS = 1e-16
_GAMMA_MAX_ITER = 500
_QUANTILE_ATOL = 1e-12
_QUANTILE_RESIDUAL = 1e-12
_QUANTILE_MAX_ITER = 200


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Raised when a covariance cannot be factored even after one jitter pass."""


class ZeroTailMass(ValueError):
    """Raised when a zero tail probability is requested (infinite radius)."""


class NonConvergent(RuntimeError):
    pass


def cholesky(P):
    """Lower-triangular factor ``L`` with ``L @ L.T == P``.

    If the plain factorization fails, ``1e-9 * trace(P) / n`` is added to the
    diagonal and the factorization is retried once.

    Raises:
        NotPositiveDefinite: the repaired matrix still is not positive definite.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {P.shape}")
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        pass
    n = P.shape[0]
    jitter = _JITTER_SCALE * np.trace(P) / n
    if not np.isfinite(jitter) or jitter <= 0.0:
        raise NotPositiveDefinite("matrix is not positive definite (no usable jitter)")
    try:
        return np.linalg.cholesky(P + jitter * np.eye(n))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("matrix is not positive definite after jitter") from exc


def _lower_gamma_series(a, x):
    # P(a, x) by the power series; good for x < a + 1
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_GAMMA_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _GAMMA_EPS:
            break
    else:
        raise NonConvergent(f"incomplete gamma series did not converge (a={a}, x={x})")
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _upper_gamma_fraction(a, x):
    # Q(a, x) by the modified Lentz continued fraction; good for x >= a + 1
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _GAMMA_MAX_ITER + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _GAMMA_EPS:
            break
    else:
        raise NonConvergent(f"incomplete gamma fraction did not converge (a={a}, x={x})")
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def _regularized_upper_gamma(a, x):
    if x <= 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _lower_gamma_series(a, x)
    return _upper_gamma_fraction(a, x)


def radial_normalizer(n):
    """Constant ``1 / (2**(n/2 - 1) * Gamma(n/2))`` of the chi radial density."""
    return 1.0 / (2.0 ** (n / 2.0 - 1.0) * math.gamma(n / 2.0))


def chi_square_survival(n, r):
    """Probability that the squared norm of a standard ``n``-variate normal exceeds ``r``.

    Equals the regularized upper incomplete gamma ``Q(n/2, r/2)``, i.e. the
    radial integral ``gamma * int_{sqrt(r)}^inf s**(n-1) exp(-s**2/2) ds``.
    """
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    if r < 0.0:
        raise ValueError(f"squared radius must be >= 0, got {r}")
    return _regularized_upper_gamma(0.5 * n, 0.5 * float(r))


def chi_square_upper_quantile(n, d):
    """Squared radius ``r`` with ``chi_square_survival(n, r) == d``.

    Bisection over ``[0, B]``, ``B`` doubled until the tail at ``B`` drops
    below ``d``. Stops once the bracket is narrower than 1e-12 and the tail
    at the midpoint is within 1e-12 of ``d``; the second test matters for
    ``n = 1`` near ``r = 0``, where the tail has infinite slope.

    Raises:
        ZeroTailMass: ``d == 0``.
        NonConvergent: the bracket or bisection exceeded its iteration cap.
    """
    if not 0.0 <= d <= 1.0:
        raise ValueError(f"tail mass must lie in [0, 1], got {d}")
    if d == 0.0:
        raise ZeroTailMass("zero tail mass corresponds to an infinite radius")
    if d == 1.0:
        return 0.0

    lo, hi = 0.0, max(1.0, float(n))
    for _ in range(_QUANTILE_MAX_ITER):
        if chi_square_survival(n, hi) < d:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise NonConvergent(f"could not bracket quantile for n={n}, d={d}")

    for _ in range(_QUANTILE_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            # bracket is down to adjacent floats
            return mid
        if chi_square_survival(n, mid) > d:
            lo = mid
        else:
            hi = mid
        if hi - lo <= _QUANTILE_ATOL:
            mid = 0.5 * (lo + hi)
            if abs(chi_square_survival(n, mid) - d) <= _QUANTILE_RESIDUAL:
                return mid
    raise NonConvergent(f"bisection did not converge for n={n}, d={d}")


def random_stream(seed, stream=0):
    """Independent ``numpy`` generator keyed by ``(seed, stream)``.

    Streams with the same key replay the same sequence; distinct stream ids
    are statistically independent (``SeedSequence`` spawn keys).
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.PCG64(ss))
