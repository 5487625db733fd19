"""Synthetic records with a known consensus signal, for validation runs."""

from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import ConfigurationError

SIGNALS = ("line", "sine", "sum-of-sines")


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic data set.

    Ages are drawn uniformly on ``[age_min, age_max]`` years BP, rounded to
    whole years, with consecutive samples of a record at least ``min_gap``
    years apart so default date binning never merges them.  Dating errors
    have standard deviation ``date_sd + date_sd_slope * age`` and are
    redrawn until observed dates keep the record's order with gaps of at
    least ``min_gap / 2``.  ``noise_sd`` may be one value or one per record.  With ``shared_ages`` every record is sampled at the same
    true ages.
    """

    signal: str = "sum-of-sines"
    n_records: int = 3
    samples_per_record: int = 20
    noise_sd: float | tuple = 0.2
    date_sd: float = 0.0
    date_sd_slope: float = 0.0
    age_min: float = 0.0
    age_max: float = 10000.0
    amplitude: float = 1.0
    min_gap: float = 31.0
    shared_ages: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.signal not in SIGNALS:
            raise ConfigurationError(f"unknown signal {self.signal!r}; use one of {SIGNALS}")
        if self.n_records < 1 or self.samples_per_record < 2:
            raise ConfigurationError("need at least one record with two samples")
        if not self.age_max > self.age_min:
            raise ConfigurationError("age_max must exceed age_min")
        if self.min_gap < 1:
            raise ConfigurationError("min_gap must be >= 1 year")
        if (self.samples_per_record - 1) * self.min_gap > 0.5 * (self.age_max - self.age_min):
            raise ConfigurationError("too many samples for the age range and min_gap")
        if self.date_sd < 0 or self.date_sd_slope < 0 or np.any(np.asarray(self.noise_sd) < 0):
            raise ConfigurationError("noise and dating-error scales must be >= 0")
        if np.ndim(self.noise_sd) and len(self.noise_sd) != self.n_records:
            raise ConfigurationError("give one noise_sd or one per record")

    def noise_for(self, k):
        return float(self.noise_sd[k]) if np.ndim(self.noise_sd) else float(self.noise_sd)

    def to_dict(self):
        d = asdict(self)
        if isinstance(d["noise_sd"], tuple):
            d["noise_sd"] = list(d["noise_sd"])
        return d


def signal_function(spec):
    """Ground-truth anomaly as a function of age BP."""
    span = spec.age_max - spec.age_min
    A = spec.amplitude

    if spec.signal == "line":
        def f(age):
            return A * (np.asarray(age, dtype=float) - spec.age_min) / span - 0.5 * A
    elif spec.signal == "sine":
        def f(age):
            return A * np.sin(2 * np.pi * (np.asarray(age, dtype=float) - spec.age_min) / span)
    else:
        def f(age):
            x = (np.asarray(age, dtype=float) - spec.age_min) / span
            return A * np.sin(2 * np.pi * x) + 0.5 * A * np.sin(2 * np.pi * 3 * x + 0.5)
    return f


def _spaced_ages(rng, lo, hi, size, gap):
    # uniform draws conditioned on the minimum spacing
    for _ in range(10000):
        ages = np.sort(rng.integers(lo, hi + 1, size))
        if np.all(np.diff(ages) >= gap):
            return ages
    # dense designs: spread the slack uniformly over the gaps instead
    slack = (hi - lo) - (size - 1) * gap
    offsets = np.sort(rng.integers(0, int(slack) + 1, size))
    return lo + offsets + gap * np.arange(size)


def simulate(spec, dense_points=2001):
    """Generate records and the dense truth.

    Returns ``(rows, truth)`` where ``rows`` are tuples
    ``(record_id, age_bp, age_sd, value)`` in input-CSV order and ``truth`` is
    an ``(dense_points, 2)`` array of ``(age_bp, value)``.
    """
    rng = np.random.default_rng(spec.seed)
    f = signal_function(spec)
    lo, hi = int(np.ceil(spec.age_min)), int(np.floor(spec.age_max))
    rows = []
    shared = _spaced_ages(rng, lo, hi, spec.samples_per_record, spec.min_gap) if spec.shared_ages else None
    for k in range(spec.n_records):
        if shared is None:
            true_age = _spaced_ages(rng, lo, hi, spec.samples_per_record, spec.min_gap)
        else:
            true_age = shared
        values = f(true_age) + spec.noise_for(k) * rng.standard_normal(true_age.size)
        sd = spec.date_sd + spec.date_sd_slope * true_age
        observed = true_age.astype(float)
        if np.any(sd > 0):
            for _ in range(1000):
                observed = np.round(true_age + sd * rng.standard_normal(true_age.size), 3)
                if np.all(np.diff(observed) >= 0.5 * spec.min_gap):
                    break
            else:
                raise ConfigurationError("dating errors too large to keep record order")
        rid = f"rec{k + 1}"
        for a, s, v in zip(observed[::-1], sd[::-1], values[::-1]):
            rows.append((rid, float(a), float(s), float(v)))
    dense = np.linspace(spec.age_min, spec.age_max, dense_points)
    truth = np.column_stack([dense, f(dense)])
    return rows, truth
