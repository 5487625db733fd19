"""Reading input records and writing analysis artifacts.

Input CSV: header ``record_id,age_bp,age_sd,value``, one row per sample,
``age_sd`` may be empty.  All outputs report ages in years BP.
"""

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .chronology import ProxySeries
from .exceptions import ConfigurationError, InvalidInputError

INPUT_COLUMNS = ("record_id", "age_bp", "age_sd", "value")


def fmt(x):
    """Fixed float formatting shared by every CSV writer."""
    return format(float(x), ".10g")


def _parse_float(text, column, lineno, path, allow_empty=False):
    text = text.strip()
    if text == "" and allow_empty:
        return None
    try:
        value = float(text)
    except ValueError:
        raise InvalidInputError(f"{path}:{lineno}: column {column!r}: not a number: {text!r}") from None
    if not np.isfinite(value):
        raise InvalidInputError(f"{path}:{lineno}: column {column!r}: non-finite value {text!r}")
    return value


def read_records(path, require_age_sd=False):
    """Parse an input CSV into ``ProxySeries`` in order of first appearance.

    Raises
    ------
    InvalidInputError
        On malformed rows, with the offending line number.
    ConfigurationError
        If ``require_age_sd`` is set and the ``age_sd`` column is missing or
        incomplete.
    """
    path = Path(path)
    rows = {}
    has_sd_column = True
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InvalidInputError(f"{path}: empty file") from None
        missing = [c for c in ("record_id", "age_bp", "value") if c not in header]
        if missing:
            raise InvalidInputError(f"{path}:1: missing column(s) {', '.join(missing)}")
        col = {name: header.index(name) for name in header if name in INPUT_COLUMNS}
        has_sd_column = "age_sd" in col
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InvalidInputError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            rid = row[col["record_id"]].strip()
            if not rid:
                raise InvalidInputError(f"{path}:{lineno}: empty record_id")
            age = _parse_float(row[col["age_bp"]], "age_bp", lineno, path)
            value = _parse_float(row[col["value"]], "value", lineno, path)
            sd = None
            if has_sd_column:
                sd = _parse_float(row[col["age_sd"]], "age_sd", lineno, path, allow_empty=True)
                if sd is not None and sd < 0:
                    raise InvalidInputError(f"{path}:{lineno}: column 'age_sd': negative value")
            rows.setdefault(rid, []).append((age, sd, value, lineno))
    if not rows:
        raise InvalidInputError(f"{path}: no data rows")

    if require_age_sd:
        if not has_sd_column:
            raise ConfigurationError(f"{path}: random dates require the 'age_sd' column")
        for rid, recs in rows.items():
            for _, sd, _, lineno in recs:
                if sd is None:
                    raise ConfigurationError(
                        f"{path}:{lineno}: random dates require a value in column 'age_sd'"
                    )

    series = []
    for rid, recs in rows.items():
        ages = [r[0] for r in recs]
        sds = [r[1] for r in recs]
        values = [r[2] for r in recs]
        sd = None if any(s is None for s in sds) else sds
        try:
            series.append(ProxySeries(rid, ages, values, sd))
        except InvalidInputError as exc:
            lines = ", ".join(str(r[3]) for r in recs[:3])
            raise InvalidInputError(f"{path} (lines {lines}, ...): {exc}") from None
    return series


def write_records(path, rows):
    """Write ``(record_id, age_bp, age_sd, value)`` rows as an input CSV."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(INPUT_COLUMNS)
        for rid, age, sd, value in rows:
            w.writerow([rid, fmt(age), "" if sd is None else fmt(sd), fmt(value)])


def write_truth(path, truth):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["age_bp", "value"])
        for age, value in truth:
            w.writerow([fmt(age), fmt(value)])


def read_truth(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1]


def write_consensus(path, age_bp, mu_samples, offset=0.0):
    """Posterior mean and pointwise 5%/95% quantiles of ``mu`` per joint date.

    Rows are written from youngest to oldest age.
    """
    mu = np.asarray(mu_samples, dtype=float) + offset
    mean = mu.mean(axis=0)
    q05, q95 = np.quantile(mu, [0.05, 0.95], axis=0)
    order = np.argsort(age_bp, kind="stable")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["age_bp", "mean", "q05", "q95"])
        for i in order:
            w.writerow([fmt(age_bp[i]), fmt(mean[i]), fmt(q05[i]), fmt(q95[i])])


def read_consensus(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, i] for i, name in enumerate(["age_bp", "mean", "q05", "q95"])}


def write_map(path, cmap):
    """Flag lattice in long form: one row per (level, time point)."""
    age = cmap.age_bp
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("age_bp,lambda,flag\n")
        for lam, row in zip(cmap.lambdas, cmap.flags):
            lam_s = fmt(lam)
            fh.writelines(f"{fmt(a)},{lam_s},{int(f)}\n" for a, f in zip(age, row))


def read_map(path):
    """Inverse of :func:`write_map`: returns ``(flags, lambdas, age_bp)``.

    ``flags[i, j]`` pairs ``lambdas[i]`` with ``age_bp[j]`` in file order.
    """
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    _, first = np.unique(data[:, 1], return_index=True)
    lambdas = data[np.sort(first), 1]
    r = data.shape[0] // lambdas.size
    flags = data[:, 2].astype(np.int8).reshape(lambdas.size, r)
    return flags, lambdas, data[:r, 0]


def write_contributions(path, curves):
    """Rows ``record,age_bp,lambda_level,lambda,contribution``.

    ``curves`` is an iterable of ``(level_index, ContributionCurve)``.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("record,age_bp,lambda_level,lambda,contribution\n")
        for level, c in curves:
            lam_s = fmt(c.lam)
            fh.writelines(
                f"{c.record_id},{fmt(-s)},{level},{lam_s},{fmt(v)}\n"
                for s, v in zip(c.s, c.values)
            )


def write_manifest(path, manifest):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not a valid manifest: {exc}") from None


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def dump_chain(path, chain):
    """Store the chain as a compressed ``.npz`` archive.

    Arrays: ``iteration (S,)``, ``mu (S, n)``, ``lambda0 (S,)``,
    ``tau (S, n)``, ``age_bp (n,)`` and ``sigma_diag_<k> (S, j_k)`` per
    record (a single ``sigma_diag_0`` for the pooled extended model);
    ``record_ids`` lists the record names.  Joint dates follow the
    forward-time order of the chronology, oldest first.
    """
    arrays = {
        "iteration": np.asarray(chain.iterations),
        "mu": chain.mu,
        "lambda0": chain.lambda0,
        "tau": chain.tau,
        "age_bp": chain.joint.age_bp,
        "record_ids": np.array(chain.joint.record_ids),
    }
    for k, d in enumerate(chain.sigma_diag):
        arrays[f"sigma_diag_{k}"] = d
    np.savez_compressed(path, **arrays)


def load_chain_dump(path):
    with np.load(path, allow_pickle=False) as z:
        return {k: z[k] for k in z.files}
