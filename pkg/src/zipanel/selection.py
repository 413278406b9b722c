"""Backward variable selection and k-medoids unit selection.

Backward selection works per model part: a candidate covariate is kept
when it is significant at the threshold for at least one period; the
worst candidate (largest minimum p-value across periods) is dropped and
the per-period models are refitted until every remaining candidate
qualifies.  Representative units come from a PAM (partitioning around
medoids) clustering: greedy BUILD seeding followed by best-improvement
SWAP until no single medoid exchange lowers the total dissimilarity.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .data import build_diff_samples
from .design import ModelFormula, SmoothTerm
from .errors import ConfigError, UsageError
from .gam import AdditiveModel, term_pvalues

logger = logging.getLogger(__name__)

__all__ = [
    "SelectionReport",
    "MedoidSet",
    "backward_select",
    "kmedoids",
    "profile_medoids",
]


@dataclass
class SelectionReport:
    """Outcome of one backward-selection run."""

    part: str
    threshold: float
    retained: tuple
    dropped: tuple  # (name, min p-value across periods at drop time)
    forced: tuple
    per_period_pvalues: pd.DataFrame

    def to_dict(self):
        return {
            "part": self.part,
            "threshold": self.threshold,
            "retained": list(self.retained),
            "dropped": [[name, p] for name, p in self.dropped],
            "forced": list(self.forced),
            "per_period_pvalues": self.per_period_pvalues.to_dict(),
        }


def _candidate_terms(formula, force_include):
    """Droppable covariates: plain linear terms and plain univariate smooths."""
    names = {}
    for cov in formula.linear:
        if cov not in force_include:
            names[cov] = ("linear", cov)
    for term in formula.smooths:
        if term.by_treatment or term.by is not None:
            continue
        if term.spec.kind != "univariate":
            continue
        cov = term.spec.covariate
        if cov not in force_include:
            names[cov] = ("smooth", term.spec.name)
    return names


def _without(formula, cov):
    """Formula with every plain term of one covariate removed."""
    return replace(
        formula,
        linear=tuple(c for c in formula.linear if c != cov),
        smooths=tuple(
            t
            for t in formula.smooths
            if not (
                not t.by_treatment
                and t.by is None
                and t.spec.kind == "univariate"
                and t.spec.covariate == cov
            )
        ),
    )


def _pvalue_for(table, kind, term_name):
    sel = table[table["term"] == term_name]
    if sel.empty:
        return np.nan
    return float(sel["p_value"].iloc[0])


def backward_select(data, base_formula, part, threshold=0.01, force_include=(),
                    t0_index=0):
    """Backward selection of covariates for one model part.

    Parameters
    ----------
    data : PanelDataset
    base_formula : ModelFormula
        Starting formula; plain linear terms and plain univariate smooths
        are the droppable candidates.
    part : {"zero", "continuous"}
        Zero part fits the binomial model on the full sample; continuous
        part fits the Gaussian model on the nonzero-difference rows.
    threshold : float
        A candidate survives when its p-value is below this for at least
        one period.
    force_include : sequence of str
        Covariates that are never dropped (e.g. the initial outcome).

    Notes
    -----
    Ties on the drop criterion are broken by dropping the
    lexicographically last covariate name, which makes runs
    deterministic.
    """
    if part not in ("zero", "continuous"):
        raise UsageError("part must be 'zero' or 'continuous'")
    family = "binomial" if part == "zero" else "gaussian"
    samples = build_diff_samples(data, t0_index=t0_index)
    if part == "continuous":
        samples = [s.restrict_nonzero() for s in samples]

    formula = base_formula
    force_include = tuple(force_include)
    candidates = _candidate_terms(formula, force_include)
    if not candidates:
        raise ConfigError("no droppable candidate variables in the formula")
    dropped = []

    while True:
        tables = {}
        for s in samples:
            fit = AdditiveModel(formula, family=family).fit(s)
            tables[s.period] = term_pvalues(fit)
        min_p = {}
        for cov, (kind, term_name) in candidates.items():
            ps = [_pvalue_for(tables[s.period], kind, term_name) for s in samples]
            valid = [p for p in ps if np.isfinite(p)]
            min_p[cov] = min(valid) if valid else float("inf")
        failing = {c: p for c, p in min_p.items() if not (p < threshold)}
        if not failing:
            break
        worst_p = max(failing.values())
        worst = sorted(c for c, p in failing.items() if p == worst_p)[-1]
        dropped.append((worst, float(failing[worst])))
        formula = _without(formula, worst)
        candidates = _candidate_terms(formula, force_include)
        logger.info("backward_select dropped %s (min p across periods %.4g)", worst, worst_p)
        if not candidates:
            tables = {}
            for s in samples:
                fit = AdditiveModel(formula, family=family).fit(s)
                tables[s.period] = term_pvalues(fit)
            break

    pmat = {}
    for period, table in tables.items():
        pmat[period] = {
            row["term"]: row["p_value"] for _, row in table.iterrows()
        }
    retained = tuple(sorted(candidates.keys())) + force_include
    return SelectionReport(
        part=part,
        threshold=threshold,
        retained=tuple(sorted(set(retained))),
        dropped=tuple(dropped),
        forced=force_include,
        per_period_pvalues=pd.DataFrame(pmat).sort_index(),
    )


# ---------------------------------------------------------------------------
# PAM k-medoids


@dataclass
class MedoidSet:
    """A PAM solution: medoid rows, assignments and total cost."""

    k: int
    medoid_indices: tuple
    medoid_units: tuple
    assignments: np.ndarray
    total_cost: float
    cost_trace: tuple = field(default_factory=tuple)

    def to_dict(self):
        return {
            "k": self.k,
            "medoid_indices": list(self.medoid_indices),
            "medoid_units": list(self.medoid_units),
            "assignments": self.assignments.tolist(),
            "total_cost": self.total_cost,
            "cost_trace": list(self.cost_trace),
        }


def _distance_matrix(points, metric):
    if isinstance(metric, np.ndarray):
        if metric.shape[0] != metric.shape[1]:
            raise UsageError("precomputed distance matrix must be square")
        return metric
    diff = points[:, None, :] - points[None, :, :]
    if metric == "euclidean":
        return np.sqrt((diff**2).sum(axis=2))
    if metric == "manhattan":
        return np.abs(diff).sum(axis=2)
    raise ConfigError(f"unknown metric {metric!r}")


def _cost(D, medoids):
    return float(D[:, list(medoids)].min(axis=1).sum())


def kmedoids(points, k, metric="euclidean", seed=0, unit_ids=None, standardize=False):
    """PAM clustering of rows of ``points``.

    BUILD greedily seeds the medoids; SWAP repeatedly applies the best
    single medoid/non-medoid exchange until no exchange lowers the total
    dissimilarity.  Ties are broken by the lowest row index, so the
    procedure is deterministic; ``seed`` is accepted for interface
    stability but unused.  ``standardize`` z-scores the columns before
    computing distances (the profile stays on the raw scale).
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points.reshape(-1, 1)
    n = points.shape[0]
    if not 1 <= k <= n:
        raise UsageError(f"k must be in 1..{n}, got {k}")
    work = points
    if standardize:
        sd = points.std(axis=0)
        sd[sd == 0] = 1.0
        work = (points - points.mean(axis=0)) / sd
    D = _distance_matrix(work, metric)

    # BUILD: first medoid minimizes total distance, then greedy additions
    medoids = [int(np.argmin(D.sum(axis=1)))]
    while len(medoids) < k:
        nearest = D[:, medoids].min(axis=1)
        gains = np.maximum(nearest[None, :] - D, 0.0).sum(axis=1)
        gains[medoids] = -np.inf
        medoids.append(int(np.argmax(gains)))

    trace = [_cost(D, medoids)]
    # SWAP: best-improvement exchanges until a local optimum
    while True:
        best_delta = -1e-12
        best_swap = None
        current = trace[-1]
        for mi, m in enumerate(medoids):
            others = medoids[:mi] + medoids[mi + 1 :]
            for h in range(n):
                if h in medoids:
                    continue
                cand = others + [h]
                delta = current - _cost(D, cand)
                if delta > best_delta + 1e-12:
                    best_delta = delta
                    best_swap = (mi, h)
        if best_swap is None:
            break
        mi, h = best_swap
        medoids[mi] = h
        trace.append(_cost(D, medoids))

    medoids = sorted(medoids)
    assignments = np.asarray(medoids)[np.argmin(D[:, medoids], axis=1)]
    units = (
        tuple(unit_ids[m] for m in medoids)
        if unit_ids is not None
        else tuple(medoids)
    )
    return MedoidSet(
        k=k,
        medoid_indices=tuple(medoids),
        medoid_units=units,
        assignments=assignments,
        total_cost=trace[-1],
        cost_trace=tuple(trace),
    )


def profile_medoids(data, medoids):
    """Raw-scale covariate table for the selected medoid units."""
    rows = []
    for idx, unit in zip(medoids.medoid_indices, medoids.medoid_units):
        row = {"unit": unit}
        for j, name in enumerate(data.covariate_names):
            row[name] = data.covariates[idx, j]
        rows.append(row)
    return pd.DataFrame(rows)


def exhaustive_kmedoids(points, k, metric="euclidean", standardize=False):
    """Global optimum by complete enumeration; for small n only."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points.reshape(-1, 1)
    n = points.shape[0]
    work = points
    if standardize:
        sd = points.std(axis=0)
        sd[sd == 0] = 1.0
        work = (points - points.mean(axis=0)) / sd
    D = _distance_matrix(work, metric)
    best = None
    for combo in itertools.combinations(range(n), k):
        c = _cost(D, list(combo))
        if best is None or c < best[0] - 1e-12:
            best = (c, combo)
    return best[0], best[1]
