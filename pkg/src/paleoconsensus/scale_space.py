"""Scale-space trend inference on posterior consensus samples.

For a smoothing level ``lam`` each posterior sample ``mu`` is smoothed with
``S_lam = (I + lam K)^{-1}`` and differentiated on a dense time grid; the
signs of these derivative samples are then flagged jointly over the grid.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._validation import as_vector, check_increasing, check_probability
from .exceptions import InvalidInputError, UnsupportedModeError
from .splines import (
    Smoother,
    _spline_parts,
    build_derivative_matrix,
    build_roughness_matrix,
    derivative,
    interpolate,
    lambda_for_edf,
)

logger = logging.getLogger(__name__)

DECREASING, NONE, INCREASING = -1, 0, 1


def default_time_grid(t, size=2000):
    """Uniform evaluation grid spanning the joint chronology."""
    t = np.asarray(t, dtype=float)
    if size < 2:
        raise InvalidInputError("the time grid needs at least 2 points")
    return np.linspace(t.min(), t.max(), int(size))


def default_scale_grid(t, size=200, lam_min=None, lam_max=None):
    """Logarithmic grid of smoothing levels.

    Unless given, the endpoints are chosen so the smoother keeps ``n - 1``
    effective degrees of freedom at the fine end and 2.5 at the coarse end.
    """
    if size < 1:
        raise InvalidInputError("the scale grid needs at least one level")
    if lam_min is None or lam_max is None:
        K = build_roughness_matrix(t)
        if K.n < 4:
            raise InvalidInputError("default scale endpoints need at least 4 knots")
        if lam_min is None:
            lam_min = lambda_for_edf(K, K.n - 1)
        if lam_max is None:
            lam_max = lambda_for_edf(K, 2.5)
    if not 0 < lam_min <= lam_max:
        raise InvalidInputError(f"need 0 < lam_min <= lam_max, got {lam_min}, {lam_max}")
    if size == 1:
        return np.array([float(lam_min)])
    return np.geomspace(lam_min, lam_max, int(size))


def _check_grid(s_grid):
    return check_increasing(as_vector(s_grid, "s_grid", min_len=1), "s_grid")


class _Engine:
    """Per-chain cache of the spline pieces reused across smoothing levels."""

    def __init__(self, chain, s_grid):
        if len(chain) == 0:
            raise InvalidInputError("the chain holds no samples")
        self.chain = chain
        self.s = _check_grid(s_grid)
        self.clamped = 0
        if chain.random_dates:
            self.orders = np.argsort(chain.tau, axis=1)
            self.parts = [_spline_parts(tau[o]) for tau, o in zip(chain.tau, self.orders)]
            self.s_per_sample = []
            for p in self.parts:
                lo, hi = p.knots[0], p.knots[-1]
                self.clamped += int(np.count_nonzero((self.s < lo) | (self.s > hi)))
                self.s_per_sample.append(np.clip(self.s, lo, hi))
            if self.clamped:
                logger.warning(
                    "%d evaluation points fell outside a sample's date span and were clamped",
                    self.clamped,
                )
        else:
            t = chain.joint.t
            if self.s[0] < t[0] or self.s[-1] > t[-1]:
                raise InvalidInputError("the time grid must lie within the joint chronology")
            self.parts = _spline_parts(t)
            self.D = build_derivative_matrix(t, self.s).D

    def smoothed(self, lam, values=None):
        """Smoothed knot values, shape ``(S, n)`` in each sample's knot order."""
        values = self.chain.mu if values is None else values
        if not self.chain.random_dates:
            return Smoother(self.parts, lam).apply(values.T).T
        out = np.empty_like(values)
        for i, (p, o) in enumerate(zip(self.parts, self.orders)):
            out[i] = Smoother(p, lam).apply(values[i, o])
        return out

    def derivatives(self, lam, values=None):
        v = self.smoothed(lam, values)
        if not self.chain.random_dates:
            return v @ self.D.T
        return np.array([
            derivative(p, vi, si) for p, vi, si in zip(self.parts, v, self.s_per_sample)
        ])

    def curves(self, lam):
        v = self.smoothed(lam)
        if not self.chain.random_dates:
            return interpolate(self.parts.knots, v.T, self.s).T
        return np.array([
            interpolate(p.knots, vi, si) for p, vi, si in zip(self.parts, v, self.s_per_sample)
        ])


def derivative_samples(chain, lam, s_grid):
    """Posterior samples of the smoothed consensus slope, shape ``(S, r)``."""
    if not lam > 0:
        raise InvalidInputError(f"lambda must be > 0, got {lam}")
    return _Engine(chain, s_grid).derivatives(lam)


def posterior_mean_smooth(chain, lam, s_grid):
    """Pointwise posterior mean of the smoothed consensus curve on ``s_grid``."""
    return _Engine(chain, s_grid).curves(lam).mean(axis=0)


def flag_joint_credible(samples, alpha):
    """Flag slope signs that hold jointly with posterior probability ``alpha``.

    Grid points are ranked by the posterior probability of their more likely
    sign.  Points are added in that order while the fraction of samples in
    which every flagged sign holds simultaneously stays at least ``alpha``;
    the first point that would push it below ``alpha`` ends the search.

    Returns an int8 vector over the grid with -1 (decreasing), 0 or +1.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise InvalidInputError("samples must be a non-empty (samples, points) matrix")
    alpha = check_probability(alpha, "alpha")
    S, r = samples.shape
    pos = samples > 0
    neg = samples < 0
    p_pos = pos.mean(axis=0)
    p_neg = neg.mean(axis=0)
    sign = np.where(p_pos >= p_neg, INCREASING, DECREASING)
    prob = np.maximum(p_pos, p_neg)
    need = alpha * S
    flags = np.zeros(r, dtype=np.int8)
    joint_ok = np.ones(S, dtype=bool)
    for j in np.argsort(-prob, kind="stable"):
        if prob[j] < alpha:
            break
        col = pos[:, j] if sign[j] == INCREASING else neg[:, j]
        trial = joint_ok & col
        if np.count_nonzero(trial) < need:
            break
        joint_ok = trial
        flags[j] = sign[j]
    return flags


@dataclass(frozen=True, eq=False)
class CredibilityMap:
    """Flags over (smoothing level, time point) with per-level posterior means.

    ``flags[i, j]`` refers to ``lambdas[i]`` and ``s[j]`` (forward time);
    ``mean_smooth`` and ``mean_derivative`` share that layout.
    """

    flags: np.ndarray
    lambdas: np.ndarray
    s: np.ndarray
    alpha: float
    mean_smooth: np.ndarray
    mean_derivative: np.ndarray
    clamped: int = 0

    @property
    def age_bp(self):
        return -self.s

    @property
    def shape(self):
        return self.flags.shape


def build_credibility_map(chain, scale_grid, time_grid, alpha=0.8, n_jobs=1):
    """Stack joint-credibility flags over every smoothing level.

    Levels are independent, so ``n_jobs > 1`` evaluates them on a thread pool.
    """
    lambdas = check_increasing(as_vector(scale_grid, "scale_grid", min_len=1), "scale_grid")
    if np.any(lambdas <= 0):
        raise InvalidInputError("smoothing levels must be positive")
    alpha = check_probability(alpha, "alpha")
    engine = _Engine(chain, time_grid)

    def level(lam):
        d = engine.derivatives(lam)
        return flag_joint_credible(d, alpha), engine.curves(lam).mean(axis=0), d.mean(axis=0)

    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            rows = list(pool.map(level, lambdas))
    else:
        rows = [level(lam) for lam in lambdas]
    flags, smooth_mean, deriv_mean = (np.array(x) for x in zip(*rows))
    return CredibilityMap(
        flags=flags.astype(np.int8),
        lambdas=lambdas,
        s=engine.s,
        alpha=alpha,
        mean_smooth=smooth_mean,
        mean_derivative=deriv_mean,
        clamped=engine.clamped,
    )


@dataclass(frozen=True, eq=False)
class ContributionCurve:
    record_id: str
    lam: float
    s: np.ndarray
    values: np.ndarray


def contribution_samples(chain, lam, s_grid):
    """Per-sample slope contributions of every record, shape ``(S, m, r)``."""
    if chain.extended or chain.contributions is None:
        raise UnsupportedModeError(
            "record contributions are defined for the per-record error model only"
        )
    engine = _Engine(chain, s_grid)
    S, m, n = chain.contributions.shape
    out = np.empty((S, m, engine.s.size))
    for k in range(m):
        out[:, k] = engine.derivatives(lam, chain.contributions[:, k])
    return out


def record_contributions(chain, k, lam, s_grid):
    """Posterior mean contribution of record ``k`` to the smoothed slope."""
    if chain.extended or chain.contributions is None:
        raise UnsupportedModeError(
            "record contributions are defined for the per-record error model only"
        )
    m = chain.contributions.shape[1]
    if not 0 <= k < m:
        raise InvalidInputError(f"record index {k} out of range for {m} records")
    engine = _Engine(chain, s_grid)
    vals = engine.derivatives(lam, chain.contributions[:, k]).mean(axis=0)
    return ContributionCurve(
        record_id=chain.joint.record_ids[k], lam=float(lam), s=engine.s, values=vals
    )


def contribution_curves(chain, lambdas, s_grid):
    """Mean contribution curves of every record at each level in ``lambdas``.

    Returns a list of ``(level_index, ContributionCurve)`` ordered by level
    then record, sharing one set of spline pieces across all of them.
    """
    if chain.extended or chain.contributions is None:
        raise UnsupportedModeError(
            "record contributions are defined for the per-record error model only"
        )
    engine = _Engine(chain, s_grid)
    out = []
    for i, lam in enumerate(lambdas):
        if not lam > 0:
            raise InvalidInputError(f"lambda must be > 0, got {lam}")
        for k, rid in enumerate(chain.joint.record_ids):
            vals = engine.derivatives(lam, chain.contributions[:, k]).mean(axis=0)
            out.append((i, ContributionCurve(record_id=rid, lam=float(lam), s=engine.s, values=vals)))
    return out
