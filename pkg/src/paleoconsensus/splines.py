"""Natural cubic spline machinery on an arbitrary knot grid.

Everything here follows the value/second-derivative representation of a
natural cubic spline: a vector ``g`` of values at the knots determines the
interior second derivatives through the tridiagonal system ``R gamma = Q^T g``
(``gamma`` vanishes at both end knots).  The roughness matrix is
``K = Q R^{-1} Q^T`` so that ``g^T K g`` is the integrated squared second
derivative of the interpolant.

Array conventions: knot values may be passed as a vector of length ``n`` or as
an ``(n, k)`` matrix holding ``k`` value vectors in its columns.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize, sparse

from ._validation import as_vector, check_increasing, check_positive
from .exceptions import InvalidInputError


def check_knots(knots):
    """Validate a knot grid and return it as a float array."""
    x = as_vector(knots, "knots")
    if x.size < 3:
        raise InvalidInputError(f"a natural cubic spline needs at least 3 knots, got {x.size}")
    return check_increasing(x, "knots")


@dataclass(frozen=True)
class _SplineParts:
    knots: np.ndarray
    h: np.ndarray
    Q: sparse.csc_matrix  # n x (n-2)
    R_banded: np.ndarray  # upper form for solveh_banded, shape (2, n-2)

    @property
    def n(self):
        return self.knots.size


def _spline_parts(knots):
    x = check_knots(knots)
    h = np.diff(x)
    n = x.size
    inv_h = 1.0 / h
    # column j of Q couples knots j, j+1, j+2
    Q = sparse.diags(
        [inv_h[:-1], -inv_h[:-1] - inv_h[1:], inv_h[1:]],
        offsets=[0, -1, -2],
        shape=(n, n - 2),
        format="csc",
    )
    R = np.zeros((2, n - 2))
    R[1] = (h[:-1] + h[1:]) / 3.0
    R[0, 1:] = h[1:-1] / 6.0
    return _SplineParts(knots=x, h=h, Q=Q, R_banded=R)


def _solve_R(parts, rhs):
    if parts.R_banded.shape[1] == 1:
        # LAPACK's tridiagonal path rejects a 1x1 system
        return rhs / parts.R_banded[1, 0]
    return linalg.solveh_banded(parts.R_banded, rhs, lower=False, check_finite=False)


def _interior_second_derivatives(parts, values):
    return _solve_R(parts, parts.Q.T @ values)


def second_derivatives(knots, values):
    """Second derivatives of the natural cubic interpolant at every knot.

    Returns an array shaped like ``values`` whose first and last rows are zero.
    """
    parts = knots if isinstance(knots, _SplineParts) else _spline_parts(knots)
    values = _check_values(values, parts.n)
    gamma = np.zeros_like(values, dtype=float)
    gamma[1:-1] = _interior_second_derivatives(parts, values)
    return gamma


def _check_values(values, n, name="mu"):
    arr = np.asarray(values, dtype=float)
    if arr.ndim not in (1, 2) or arr.shape[0] != n:
        raise InvalidInputError(f"{name} must have {n} rows, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class RoughnessMatrix:
    """Dense roughness matrix ``K`` together with the knots it was built on."""

    K: np.ndarray
    knots: np.ndarray
    _parts: _SplineParts = field(repr=False, compare=False)

    @property
    def n(self):
        return self.knots.size

    def __array__(self, dtype=None, copy=None):
        return self.K if dtype is None else self.K.astype(dtype)


def build_roughness_matrix(knots):
    """Build ``K`` with ``mu^T K mu`` equal to the integral of the squared
    second derivative of the natural cubic interpolant of ``mu``.
    """
    parts = _spline_parts(knots)
    Qt = parts.Q.T.toarray()
    K = parts.Q @ _solve_R(parts, Qt)
    K = 0.5 * (K + K.T)
    return RoughnessMatrix(K=K, knots=parts.knots, _parts=parts)


def roughness(mu, K):
    """Roughness ``mu^T K mu`` of knot values ``mu``.

    ``K`` may be a :class:`RoughnessMatrix` or a plain square array.
    """
    Kmat = K.K if isinstance(K, RoughnessMatrix) else np.asarray(K, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 1 or Kmat.shape != (mu.size, mu.size):
        raise InvalidInputError(
            f"mu of length {mu.size} does not match roughness matrix of shape {Kmat.shape}"
        )
    return max(float(mu @ Kmat @ mu), 0.0)


def roughness_at(knots, mu):
    """Roughness computed from the banded representation, without forming ``K``.

    ``O(n)``; used inside the date sampler where knots move every proposal.
    """
    parts = knots if isinstance(knots, _SplineParts) else _spline_parts(knots)
    mu = _check_values(mu, parts.n)
    Qtmu = parts.Q.T @ mu
    return max(float(Qtmu @ _solve_R(parts, Qtmu)), 0.0)


class Smoother:
    """The smoothing operator ``S_lambda = (I + lambda K)^{-1}``.

    Applying it returns the minimizer of ``||v - mu||^2 + lambda v^T K v``.
    The solve runs through the pentadiagonal system
    ``(R + lambda Q^T Q) gamma = Q^T mu``, ``v = mu - lambda Q gamma``, whose
    banded Cholesky factor is computed once and reused for every right-hand
    side.
    """

    def __init__(self, knots, lam):
        if isinstance(knots, RoughnessMatrix):
            parts = knots._parts
        elif isinstance(knots, _SplineParts):
            parts = knots
        else:
            parts = _spline_parts(knots)
        self.lam = check_positive(lam, "lambda", allow_zero=True)
        self._parts = parts
        self._factor = None
        if self.lam > 0:
            QtQ = parts.Q.T @ parts.Q
            m = parts.n - 2
            ab = np.zeros((3, m))
            ab[1:] = parts.R_banded
            for offset in (0, 1, 2):
                diag = QtQ.diagonal(offset)
                ab[2 - offset, offset:] += self.lam * diag
            self._factor = linalg.cholesky_banded(ab, lower=False, check_finite=False)

    @property
    def knots(self):
        return self._parts.knots

    def apply(self, mu):
        mu = _check_values(mu, self._parts.n)
        if self._factor is None:
            return mu.copy()
        rhs = self._parts.Q.T @ mu
        gamma = linalg.cho_solve_banded((self._factor, False), rhs, check_finite=False)
        return mu - self.lam * (self._parts.Q @ gamma)

    __call__ = apply


def smooth(mu, lam, K):
    """Smoothing-spline fit ``(I + lam K)^{-1} mu`` for a knot-value vector."""
    lam = float(lam)
    if lam < 0:
        raise InvalidInputError(f"lambda must be >= 0, got {lam}")
    return Smoother(K, lam).apply(mu)


def _locate(knots, s):
    s = np.atleast_1d(np.asarray(s, dtype=float))
    lo, hi = knots[0], knots[-1]
    if np.any(s < lo) or np.any(s > hi) or not np.all(np.isfinite(s)):
        raise InvalidInputError(f"evaluation points must lie within the knot span [{lo}, {hi}]")
    idx = np.clip(np.searchsorted(knots, s, side="right") - 1, 0, knots.size - 2)
    h = knots[idx + 1] - knots[idx]
    a = s - knots[idx]
    b = knots[idx + 1] - s
    return idx, h, a, b


def interpolate(knots, mu, s):
    """Evaluate the natural cubic interpolant of ``mu`` at ``s``.

    Scalar ``s`` gives a scalar (or a row of length ``k`` for matrix ``mu``).
    """
    parts = _spline_parts(knots)
    mu = _check_values(mu, parts.n)
    gamma = second_derivatives(parts, mu)
    scalar = np.ndim(s) == 0
    idx, h, a, b = _locate(parts.knots, s)
    if mu.ndim == 2:
        h, a, b = h[:, None], a[:, None], b[:, None]
    g0, g1 = mu[idx], mu[idx + 1]
    c0, c1 = gamma[idx], gamma[idx + 1]
    val = (b * g0 + a * g1) / h + ((b**3 - h * h * b) * c0 + (a**3 - h * h * a) * c1) / (6 * h)
    return val[0] if scalar else val


def derivative(knots, mu, s):
    """First derivative of the natural cubic interpolant of ``mu`` at ``s``.

    Same result as ``build_derivative_matrix(knots, s).D @ mu`` without
    forming the matrix.
    """
    parts = knots if isinstance(knots, _SplineParts) else _spline_parts(knots)
    mu = _check_values(mu, parts.n)
    gamma = second_derivatives(parts, mu)
    scalar = np.ndim(s) == 0
    idx, h, a, b = _locate(parts.knots, s)
    if mu.ndim == 2:
        h, a, b = h[:, None], a[:, None], b[:, None]
    slope = (mu[idx + 1] - mu[idx]) / h
    val = slope + ((3 * a * a - h * h) * gamma[idx + 1] - (3 * b * b - h * h) * gamma[idx]) / (6 * h)
    return val[0] if scalar else val


@dataclass(frozen=True)
class DerivativeMatrix:
    """``D`` maps knot values to first derivatives of the interpolant on ``s``."""

    D: np.ndarray
    s: np.ndarray
    knots: np.ndarray

    def __matmul__(self, other):
        return self.D @ other


def build_derivative_matrix(knots, s_grid):
    parts = _spline_parts(knots)
    s = check_increasing(as_vector(s_grid, "s_grid", min_len=1), "s_grid")
    idx, h, a, b = _locate(parts.knots, s)
    n, r = parts.n, s.size
    gamma_map = np.zeros((n, n))
    gamma_map[1:-1] = _solve_R(parts, parts.Q.T.toarray())
    rows = np.arange(r)
    D = np.zeros((r, n))
    D[rows, idx] -= 1.0 / h
    D[rows, idx + 1] += 1.0 / h
    D += (-(3 * b * b - h * h) / (6 * h))[:, None] * gamma_map[idx]
    D += ((3 * a * a - h * h) / (6 * h))[:, None] * gamma_map[idx + 1]
    return DerivativeMatrix(D=D, s=s, knots=parts.knots)


def effective_dof(K, lam):
    """Trace of ``S_lambda``, the effective degrees of freedom of the smoother."""
    eig = _eigenvalues(K)
    lam = np.asarray(lam, dtype=float)
    return np.sum(1.0 / (1.0 + lam[..., None] * eig), axis=-1)


def _eigenvalues(K):
    Kmat = K.K if isinstance(K, RoughnessMatrix) else np.asarray(K, dtype=float)
    eig = linalg.eigvalsh(Kmat)
    # the two null-space eigenvalues are exact zeros, not rounding noise
    eig[:2] = 0.0
    return np.clip(eig, 0.0, None)


def lambda_for_edf(K, edf):
    """Smoothing level whose effective degrees of freedom equal ``edf``.

    ``edf`` must lie strictly between 2 (the linear fit) and ``n``.
    """
    eig = _eigenvalues(K)
    n = eig.size
    if not 2.0 < edf < n:
        raise InvalidInputError(f"edf must lie in (2, {n}), got {edf}")

    def gap(loglam):
        return np.sum(1.0 / (1.0 + np.exp(loglam) * eig)) - edf

    positive = eig[eig > eig.max() * 1e-12]
    lo = np.log(1e-6 / positive.max())
    hi = np.log(1e6 / positive.min())
    while gap(lo) < 0:
        lo -= 10.0
    while gap(hi) > 0:
        hi += 10.0
    return float(np.exp(optimize.brentq(gap, lo, hi, xtol=1e-12)))
