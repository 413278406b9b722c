"""Panel-data containers, CSV ingestion, trimming and differencing.

Long-format CSV comes in, validated immutable `PanelDataset` objects come
out, and per-period `DiffSample` objects (outcome differences against a
baseline period, with their exact-zero indicators) feed the estimators.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError, SchemaError, UsageError

logger = logging.getLogger(__name__)

__all__ = [
    "PanelDataset",
    "DiffSample",
    "TrimReport",
    "ingest_csv",
    "panel_to_csv",
    "trim",
    "build_diff_samples",
    "random_growth_transform",
]


@dataclass(frozen=True)
class PanelDataset:
    """Balanced units x periods panel with treatment labels and baseline
    covariates.

    Outcomes are stored as exact decimal-parsed floats; zero detection on
    differences is literal equality.  Covariates are measured at the first
    period only.  Immutable and safe to share across threads.
    """

    unit_ids: np.ndarray
    times: np.ndarray
    outcomes: np.ndarray
    treatment: np.ndarray
    treatment_labels: tuple[str, ...]
    covariates: np.ndarray
    covariate_names: tuple[str, ...]
    treatment_start: int = 1

    def __post_init__(self):
        times = np.asarray(self.times)
        if times.ndim != 1 or len(times) < 2:
            raise DataError("need at least two periods")
        if np.any(np.diff(times) <= 0):
            raise DataError("times must be strictly increasing")
        n, m1 = self.outcomes.shape
        if len(self.unit_ids) != n or len(self.treatment) != n:
            raise DataError("unit_ids / treatment length does not match outcomes")
        if m1 != len(times):
            raise DataError("outcome columns do not match times")
        if self.covariates.shape != (n, len(self.covariate_names)):
            raise DataError("covariate matrix shape does not match names")
        codes = np.asarray(self.treatment)
        r = len(self.treatment_labels)
        counts = np.bincount(codes, minlength=r)
        if codes.min() < 0 or codes.max() >= r or np.any(counts == 0):
            raise DataError(
                "treatment labels must be contiguous {0..R-1} with every "
                f"group nonempty; counts={counts.tolist()}"
            )
        if not (0 < self.treatment_start < len(times)):
            raise DataError("treatment_start must index a period after t0")

    @property
    def n_units(self):
        return self.outcomes.shape[0]

    @property
    def n_periods(self):
        return self.outcomes.shape[1]

    @property
    def n_treatments(self):
        return len(self.treatment_labels)

    @property
    def group_counts(self):
        counts = np.bincount(self.treatment, minlength=self.n_treatments)
        return dict(zip(self.treatment_labels, counts.tolist()))

    def covariate(self, name):
        try:
            j = self.covariate_names.index(name)
        except ValueError:
            raise ConfigError(f"unknown covariate {name!r}") from None
        return self.covariates[:, j]

    def label_code(self, label):
        """Map a treatment label (name or integer code) to its code."""
        if isinstance(label, (int, np.integer)):
            if not 0 <= label < self.n_treatments:
                raise UsageError(f"treatment code {label} out of range")
            return int(label)
        try:
            return self.treatment_labels.index(str(label))
        except ValueError:
            raise UsageError(f"unknown treatment label {label!r}") from None

    def take_units(self, indices):
        """Subset (or resample, with repeats) by unit row indices."""
        idx = np.asarray(indices)
        return replace(
            self,
            unit_ids=self.unit_ids[idx],
            outcomes=self.outcomes[idx],
            treatment=self.treatment[idx],
            covariates=self.covariates[idx],
        )

    def fingerprint(self):
        import hashlib

        h = hashlib.sha256()
        for arr in (self.outcomes, self.treatment, self.covariates):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(",".join(map(str, self.unit_ids)).encode())
        h.update(",".join(map(str, self.times)).encode())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class DiffSample:
    """Outcome differences against the baseline period for one target
    period, with exact-zero indicators.

    ``is_zero[i]`` is true iff ``delta[i] == 0`` bitwise.  One sample per
    post-baseline period; periods are modeled separately.
    """

    period: int
    period_index: int
    t0_index: int
    delta: np.ndarray
    is_zero: np.ndarray
    treatment: np.ndarray
    treatment_labels: tuple[str, ...]
    covariates: np.ndarray
    covariate_names: tuple[str, ...]
    unit_ids: np.ndarray
    pre_program: bool = False

    def __post_init__(self):
        if not np.array_equal(self.is_zero, self.delta == 0):
            raise DataError("is_zero must equal (delta == 0) exactly")

    @property
    def n(self):
        return len(self.delta)

    @property
    def n_treatments(self):
        return len(self.treatment_labels)

    @property
    def zero_share(self):
        return float(np.mean(self.is_zero))

    def zero_share_by_group(self):
        out = {}
        for code, label in enumerate(self.treatment_labels):
            sel = self.treatment == code
            out[label] = float(np.mean(self.is_zero[sel])) if sel.any() else float("nan")
        return out

    def covariate(self, name):
        try:
            j = self.covariate_names.index(name)
        except ValueError:
            raise ConfigError(f"unknown covariate {name!r}") from None
        return self.covariates[:, j]

    def restrict_nonzero(self):
        """Rows with a nonzero difference (the continuous-part subsample)."""
        keep = ~self.is_zero
        return replace(
            self,
            delta=self.delta[keep],
            is_zero=self.is_zero[keep],
            treatment=self.treatment[keep],
            covariates=self.covariates[keep],
            unit_ids=self.unit_ids[keep],
        )


@dataclass
class TrimReport:
    """Per-rule attribution of trimmed units."""

    n_before: int
    n_after: int
    dropped_by_rule: dict = field(default_factory=dict)

    @property
    def n_dropped(self):
        return self.n_before - self.n_after


_REQUIRED_SCHEMA_KEYS = ("unit", "time", "outcome", "treatment")


def ingest_csv(path, schema):
    """Read a long-format panel CSV into a validated `PanelDataset`.

    Parameters
    ----------
    path : str or Path
        CSV with a header row; UTF-8.
    schema : dict
        Column map with keys ``unit``, ``time``, ``outcome``,
        ``treatment`` and ``covariates`` (list of column names).
        Optional keys: ``treatment_levels`` (label order, first label is
        the untreated reference) and ``treatment_start`` (period value at
        which treatment may take effect; defaults to the second period).

    Raises
    ------
    SchemaError
        A mapped column is missing from the file.
    DataError
        Duplicate (unit, time) rows, non-numeric outcomes (reported with
        the offending line number), or units missing some periods.
    """
    for key in _REQUIRED_SCHEMA_KEYS:
        if key not in schema:
            raise SchemaError(f"schema is missing required key {key!r}")
    cov_cols = list(schema.get("covariates", []))
    # round_trip parsing keeps decimal-exact outcomes, so later zero
    # detection on differences is literal equality; '#' lines allow the
    # provenance header the CLI stamps on emitted datasets
    df = pd.read_csv(
        path, dtype={schema["unit"]: str}, float_precision="round_trip", comment="#"
    )
    needed = [schema[k] for k in _REQUIRED_SCHEMA_KEYS] + cov_cols
    missing = [c for c in needed if c not in df.columns]
    if missing:
        raise SchemaError(f"columns missing from {path}: {missing}")

    unit_col, time_col = schema["unit"], schema["time"]
    out_col, treat_col = schema["outcome"], schema["treatment"]

    dup = df.duplicated(subset=[unit_col, time_col])
    if dup.any():
        rows = df.index[dup][:5].tolist()
        raise DataError(f"duplicate (unit, time) rows at data lines {rows}")

    outcome = pd.to_numeric(df[out_col], errors="coerce")
    bad = outcome.isna() & df[out_col].notna()
    if bad.any() or outcome.isna().any():
        # +2: one for the header line, one for 1-based numbering
        lines = [int(i) + 2 for i in df.index[outcome.isna()][:5]]
        raise DataError(f"non-numeric outcome values at file lines {lines}")
    df = df.assign(**{out_col: outcome.astype(float)})

    times = np.sort(df[time_col].unique())
    if len(times) < 2:
        raise DataError("need at least two periods")

    counts = df.groupby(unit_col)[time_col].nunique()
    incomplete = counts.index[counts != len(times)].tolist()
    if incomplete:
        shown = incomplete[:10]
        raise DataError(
            f"{len(incomplete)} unit(s) missing some periods, e.g. {shown}; "
            "units must have a complete outcome row for every period"
        )

    wide = df.pivot(index=unit_col, columns=time_col, values=out_col)
    wide = wide.reindex(columns=times)
    unit_ids = wide.index.to_numpy()
    outcomes = wide.to_numpy(dtype=float)

    base = df[df[time_col] == times[0]].set_index(unit_col).loc[unit_ids]
    treat_raw = base[treat_col]
    per_unit = df.groupby(unit_col)[treat_col].nunique()
    if (per_unit > 1).any():
        raise DataError("treatment label varies over time for some units")

    codes, labels = _encode_treatment(treat_raw, schema.get("treatment_levels"))
    covariates = (
        base[cov_cols].to_numpy(dtype=float)
        if cov_cols
        else np.empty((len(unit_ids), 0))
    )
    if cov_cols and not np.all(np.isfinite(covariates)):
        raise DataError("covariates contain missing or non-finite values")

    start = schema.get("treatment_start")
    if start is None:
        k = 1
    else:
        where = np.flatnonzero(times == start)
        if len(where) != 1:
            raise SchemaError(f"treatment_start {start!r} is not an observed period")
        k = int(where[0])

    data = PanelDataset(
        unit_ids=unit_ids,
        times=np.asarray(times),
        outcomes=outcomes,
        treatment=codes,
        treatment_labels=labels,
        covariates=covariates,
        covariate_names=tuple(cov_cols),
        treatment_start=k,
    )
    logger.info(
        "ingested %d units x %d periods; treatment groups: %s",
        data.n_units,
        data.n_periods,
        data.group_counts,
    )
    return data


def _encode_treatment(values, levels):
    values = values.astype(str).to_numpy()
    if levels is not None:
        levels = [str(v) for v in levels]
        lookup = {v: i for i, v in enumerate(levels)}
        unknown = sorted(set(values) - set(levels))
        if unknown:
            raise DataError(f"treatment values not in treatment_levels: {unknown}")
        codes = np.array([lookup[v] for v in values], dtype=int)
        return codes, tuple(levels)
    uniq = sorted(set(values))
    if all(v.lstrip("-").isdigit() for v in uniq):
        ints = sorted(int(v) for v in uniq)
        if ints != list(range(len(ints))):
            raise DataError(
                f"numeric treatment labels must be contiguous from 0, got {ints}"
            )
        codes = np.array([int(v) for v in values], dtype=int)
        return codes, tuple(str(i) for i in range(len(ints)))
    for ref in ("none", "None", "NONE", "0"):
        if ref in uniq:
            levels = [ref] + sorted(v for v in uniq if v != ref)
            break
    else:
        raise DataError(
            "cannot infer the untreated reference label; pass "
            "'treatment_levels' in the schema with the reference first"
        )
    lookup = {v: i for i, v in enumerate(levels)}
    codes = np.array([lookup[v] for v in values], dtype=int)
    return codes, tuple(levels)


def panel_frame(data):
    """Long-format frame and the schema that ingests it back."""
    n, m1 = data.outcomes.shape
    frame = pd.DataFrame(
        {
            "unit": np.repeat(data.unit_ids, m1),
            "time": np.tile(data.times, n),
            "outcome": data.outcomes.ravel(),
            "treatment": np.repeat(
                [data.treatment_labels[c] for c in data.treatment], m1
            ),
        }
    )
    for j, name in enumerate(data.covariate_names):
        frame[name] = np.repeat(data.covariates[:, j], m1)
    schema = {
        "unit": "unit",
        "time": "time",
        "outcome": "outcome",
        "treatment": "treatment",
        "covariates": list(data.covariate_names),
        "treatment_levels": list(data.treatment_labels),
        "treatment_start": int(data.times[data.treatment_start]),
    }
    return frame, schema


def panel_to_csv(data, path):
    """Write the long-format CSV that `ingest_csv` reads back.

    Floats are written with full round-trip precision so exact-zero
    differences survive the round trip.
    """
    frame, schema = panel_frame(data)
    frame.to_csv(path, index=False)
    return schema


def trim(data, rules, return_report=False):
    """Drop units violating per-covariate bounds.

    ``rules`` maps covariate name to ``{"max": hi}`` and/or
    ``{"min": lo}``; bounds are exclusive (a unit is kept when
    ``value < max`` and ``value > min``).  Idempotent.
    """
    keep = np.ones(data.n_units, dtype=bool)
    report = TrimReport(n_before=data.n_units, n_after=data.n_units)
    for name, bounds in rules.items():
        if name not in data.covariate_names:
            raise ConfigError(f"trim rule on unknown covariate {name!r}")
        x = data.covariate(name)
        ok = np.ones_like(keep)
        if "max" in bounds:
            ok &= x < bounds["max"]
        if "min" in bounds:
            ok &= x > bounds["min"]
        report.dropped_by_rule[name] = int((~ok).sum())
        keep &= ok
    trimmed = data.take_units(np.flatnonzero(keep))
    report.n_after = trimmed.n_units
    logger.info(
        "trim: kept %d of %d units (dropped per rule: %s)",
        report.n_after,
        report.n_before,
        report.dropped_by_rule,
    )
    if return_report:
        return trimmed, report
    return trimmed


def build_diff_samples(data, t0_index=0):
    """One `DiffSample` per period after the baseline ``t0_index``.

    ``delta = Y[:, t] - Y[:, t0]`` and ``is_zero = (delta == 0)`` exactly;
    zero shares per period and treatment group are logged.
    """
    if not 0 <= t0_index < data.n_periods - 1:
        raise UsageError("t0_index must leave at least one later period")
    samples = []
    base = data.outcomes[:, t0_index]
    for j in range(t0_index + 1, data.n_periods):
        delta = data.outcomes[:, j] - base
        sample = DiffSample(
            period=int(data.times[j]),
            period_index=j,
            t0_index=t0_index,
            delta=delta,
            is_zero=delta == 0,
            treatment=data.treatment,
            treatment_labels=data.treatment_labels,
            covariates=data.covariates,
            covariate_names=data.covariate_names,
            unit_ids=data.unit_ids,
            pre_program=j < data.treatment_start,
        )
        logger.info(
            "period %s: zero share %.3f by group %s",
            sample.period,
            sample.zero_share,
            sample.zero_share_by_group(),
        )
        samples.append(sample)
    return samples


def random_growth_transform(data, t0_index):
    """Difference samples with unit-specific linear trends removed.

    ``delta = Y_t - Y_t0 - (t - t0) * (Y_t0 - Y_{t0-1})`` with the period
    gap counted in integer period steps; any path that is affine in the
    period index transforms to exactly zero.  Requires a period before
    the baseline.
    """
    if t0_index < 1:
        raise UsageError("random growth transform needs a period before t0")
    if t0_index >= data.n_periods - 1:
        raise UsageError("t0_index must leave at least one later period")
    base = data.outcomes[:, t0_index]
    growth = base - data.outcomes[:, t0_index - 1]
    samples = []
    for j in range(t0_index + 1, data.n_periods):
        steps = j - t0_index
        delta = data.outcomes[:, j] - base - steps * growth
        samples.append(
            DiffSample(
                period=int(data.times[j]),
                period_index=j,
                t0_index=t0_index,
                delta=delta,
                is_zero=delta == 0,
                treatment=data.treatment,
                treatment_labels=data.treatment_labels,
                covariates=data.covariates,
                covariate_names=data.covariate_names,
                unit_ids=data.unit_ids,
                pre_program=j < data.treatment_start,
            )
        )
    return samples
