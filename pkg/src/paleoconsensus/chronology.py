"""Proxy records, anomalies, date binning and the joint chronology.

Ages arrive in calibrated years before present (BP).  Internally time runs
forward: ``time = -age_bp``, so a record's samples are stored oldest first
and the joint chronology is strictly increasing.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import as_vector, check_increasing
from .exceptions import BinCollisionError, ConfigurationError, InvalidInputError


@dataclass(frozen=True, eq=False)
class ProxySeries:
    """One reconstruction: values at dated samples.

    Rows are reordered oldest first on construction; ``age_bp`` must be
    strictly monotone in the input order.
    """

    record_id: str
    age_bp: np.ndarray
    values: np.ndarray
    age_sd: np.ndarray | None = None

    def __post_init__(self):
        age = as_vector(self.age_bp, f"age_bp of record {self.record_id!r}")
        vals = as_vector(self.values, f"values of record {self.record_id!r}")
        if age.size != vals.size:
            raise InvalidInputError(
                f"record {self.record_id!r}: {age.size} ages but {vals.size} values"
            )
        if age.size < 2:
            raise InvalidInputError(f"record {self.record_id!r} needs at least 2 samples")
        sd = None
        if self.age_sd is not None:
            sd = as_vector(self.age_sd, f"age_sd of record {self.record_id!r}")
            if sd.size != age.size:
                raise InvalidInputError(
                    f"record {self.record_id!r}: {age.size} ages but {sd.size} age_sd values"
                )
            if np.any(sd < 0):
                raise InvalidInputError(f"record {self.record_id!r}: negative age_sd")
        steps = np.diff(age)
        if np.all(steps > 0):
            order = slice(None, None, -1)
        elif np.all(steps < 0):
            order = slice(None)
        else:
            raise InvalidInputError(f"record {self.record_id!r}: ages are not strictly monotone")
        object.__setattr__(self, "age_bp", age[order].copy())
        object.__setattr__(self, "values", vals[order].copy())
        object.__setattr__(self, "age_sd", None if sd is None else sd[order].copy())

    @property
    def time(self):
        """Forward-time coordinates, strictly increasing."""
        return -self.age_bp

    def __len__(self):
        return self.age_bp.size


@dataclass(frozen=True, eq=False)
class AnomalySeries(ProxySeries):
    """A centered record; ``mean`` is the level that was subtracted."""

    mean: float = 0.0


def center(series):
    if len(series.values) == 0:
        raise InvalidInputError("cannot center an empty series")
    mean = float(np.mean(series.values))
    return AnomalySeries(
        record_id=series.record_id,
        age_bp=series.age_bp,
        values=series.values - mean,
        age_sd=series.age_sd,
        mean=mean,
    )


def bin_dates(series, width=15.0):
    """Merge near-coincident dates across all records.

    Distinct pooled ages are sorted and grouped greedily: a group keeps
    absorbing the next age while its span stays within ``width``.  Each age
    is replaced by the mean of the distinct ages in its group.
    """
    width = float(width)
    if width < 0 or not np.isfinite(width):
        raise InvalidInputError(f"bin width must be >= 0, got {width}")
    series = list(series)
    if width == 0 or not series:
        return series

    pooled = np.unique(np.concatenate([s.age_bp for s in series]))
    group_of = np.empty(pooled.size, dtype=int)
    start, g = pooled[0], 0
    for i, age in enumerate(pooled):
        if age - start > width:
            g += 1
            start = age
        group_of[i] = g
    sums = np.bincount(group_of, weights=pooled)
    counts = np.bincount(group_of)
    means = sums / counts

    out = []
    for s in series:
        groups = group_of[np.searchsorted(pooled, s.age_bp)]
        dup = np.flatnonzero(np.diff(groups) == 0)
        if dup.size:
            i = dup[0]
            raise BinCollisionError(s.record_id, s.age_bp[[i, i + 1]])
        out.append(replace(s, age_bp=means[groups]))
    return out


@dataclass(frozen=True, eq=False)
class JointChronology:
    """Distinct dates of all records, on the forward time axis.

    ``incidence[k][l]`` is the joint index of sample ``l`` of record ``k``.
    ``mean_sd`` averages the dating standard errors of records sharing a
    date; ``psi`` holds the smoothed dating errors once they are attached.
    """

    t: np.ndarray
    incidence: tuple
    record_ids: tuple
    mean_sd: np.ndarray | None = None
    psi: np.ndarray | None = field(default=None)

    @property
    def n(self):
        return self.t.size

    @property
    def age_bp(self):
        return -self.t

    @property
    def sizes(self):
        return tuple(len(ix) for ix in self.incidence)

    def with_psi(self, psi):
        psi = as_vector(psi, "psi")
        if psi.size != self.n:
            raise InvalidInputError(f"psi needs {self.n} entries, got {psi.size}")
        if np.any(psi <= 0):
            raise InvalidInputError("dating standard deviations psi must be positive")
        return replace(self, psi=psi)


def merge_chronologies(series):
    series = list(series)
    if not series:
        raise InvalidInputError("at least one record is required")
    t = np.unique(np.concatenate([s.time for s in series]))
    incidence = tuple(np.searchsorted(t, s.time) for s in series)

    mean_sd = None
    if all(s.age_sd is not None for s in series):
        total = np.zeros(t.size)
        count = np.zeros(t.size)
        for s, ix in zip(series, incidence):
            np.add.at(total, ix, s.age_sd)
            np.add.at(count, ix, 1)
        mean_sd = total / count
    return JointChronology(
        t=t,
        incidence=incidence,
        record_ids=tuple(s.record_id for s in series),
        mean_sd=mean_sd,
    )


def rule_of_thumb_bandwidth(t):
    t = np.asarray(t, dtype=float)
    spread = np.std(t, ddof=1) if t.size > 1 else 0.0
    if spread == 0:
        return 1.0
    return 1.06 * spread * t.size ** (-0.2)


def local_linear(x, y, x_eval, bandwidth):
    """Gaussian-kernel local linear regression of ``y`` on ``x`` at ``x_eval``."""
    d = (x[None, :] - x_eval[:, None]) / bandwidth
    w = np.exp(-0.5 * d * d)
    u = x[None, :] - x_eval[:, None]
    s0 = w.sum(1)
    s1 = (w * u).sum(1)
    s2 = (w * u * u).sum(1)
    t0 = (w * y).sum(1)
    t1 = (w * u * y).sum(1)
    denom = s0 * s2 - s1 * s1
    # near-degenerate designs fall back to the local constant fit
    tiny = denom <= 1e-12 * s0 * s2
    fit = np.where(tiny, t0 / s0, (s2 * t0 - s1 * t1) / np.where(tiny, 1.0, denom))
    return fit


def smooth_date_errors(t, sd, bandwidth=None, floor=1.0):
    """Smoothed dating standard deviations ``psi`` at each joint date.

    Raises
    ------
    ConfigurationError
        If every standard error is zero, so no dating model can be built.
    """
    t = check_increasing(as_vector(t, "t", min_len=1), "t")
    sd = as_vector(sd, "sd")
    if sd.size != t.size:
        raise InvalidInputError(f"sd has {sd.size} entries for {t.size} dates")
    if np.any(sd < 0):
        raise InvalidInputError("dating standard errors must be >= 0")
    if not np.any(sd > 0):
        raise ConfigurationError("all dating standard errors are zero; random dates need age_sd > 0")
    h = rule_of_thumb_bandwidth(t) if bandwidth is None else float(bandwidth)
    if h <= 0:
        raise InvalidInputError(f"bandwidth must be > 0, got {h}")
    psi = local_linear(t, sd, t, h)
    return np.maximum(psi, float(floor))
