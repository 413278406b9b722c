"""Counterfactual effect assembly from fitted mixtures.

The expected effect of treatment r against baseline b at a covariate
point combines the two model parts:

    point = (1 - p_r) * alpha - (p_r - p_b) * mu_b

where p_r and p_b are the zero-probabilities under either label, alpha is
the fitted differential of the continuous means, and mu_b is the
continuous mean under the baseline label.  The identity between `point`
and the stored components is bit-exact by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ._validation import check_is_fitted
from .errors import UsageError

__all__ = [
    "EffectEstimate",
    "counterfactual_effect",
    "treatment_contrast",
    "effect_profile",
    "effects_to_frame",
]


@dataclass
class EffectEstimate:
    """Per-unit, per-period counterfactual effect with optional band."""

    x: dict
    period: int
    treatment: str
    baseline: str
    point: float
    components: dict
    unit: str | None = None
    ci_low: float | None = None
    ci_high: float | None = None
    pre_program: bool = False
    extrapolated: bool = False

    def __post_init__(self):
        expected = assemble_point(self.components)
        if self.point != expected:
            raise UsageError("point does not match its components")
        if self.ci_low is not None and self.ci_high is not None:
            if self.ci_low > self.ci_high:
                raise UsageError("ci_low must not exceed ci_high")


def assemble_point(components):
    """The effect identity; used everywhere a point is produced."""
    return (
        components["one_minus_p_r"] * components["alpha_hat"]
        - components["p_diff"] * components["mu0_hat"]
    )


def _effect_components(fit, x, r_code, b_code):
    p_r, ex1 = fit.predict_zero_prob(x, r=r_code, return_extrapolated=True)
    p_b, ex2 = fit.predict_zero_prob(x, r=b_code, return_extrapolated=True)
    mean_r, ex3 = fit.predict_cont_mean(x, r=r_code, return_extrapolated=True)
    mean_b, ex4 = fit.predict_cont_mean(x, r=b_code, return_extrapolated=True)
    components = {
        "one_minus_p_r": 1.0 - p_r,
        "alpha_hat": mean_r - mean_b,
        "p_diff": p_r - p_b,
        "mu0_hat": mean_b,
    }
    return components, (ex1 or ex2 or ex3 or ex4)


def _resolve_code(fit, label):
    labels = fit.treatment_labels_
    if isinstance(label, (int, np.integer)):
        if not 0 <= label < len(labels):
            raise UsageError(f"treatment code {label} out of range")
        return int(label)
    if label in labels:
        return labels.index(label)
    raise UsageError(f"unknown treatment label {label!r}")


def counterfactual_effect(fit, x, r, unit=None):
    """Expected effect of treatment ``r`` against no treatment at ``x``."""
    check_is_fitted(fit, "zero_part_")
    r_code = _resolve_code(fit, r)
    if r_code == 0:
        raise UsageError("effect of the untreated label against itself is zero")
    components, extrapolated = _effect_components(fit, x, r_code, 0)
    return EffectEstimate(
        x=dict(x),
        period=fit.period_,
        treatment=fit.treatment_labels_[r_code],
        baseline=fit.treatment_labels_[0],
        point=assemble_point(components),
        components=components,
        unit=unit,
        pre_program=fit.pre_program_,
        extrapolated=extrapolated,
    )


def treatment_contrast(fit, x, r_a, r_b, unit=None):
    """Expected effect of ``r_a`` relative to ``r_b`` on the same scale.

    With the untreated baseline for ``r_b`` this reduces exactly to
    `counterfactual_effect`; the stored components generalize the
    identity with ``mu0_hat`` the continuous mean under ``r_b``.
    """
    check_is_fitted(fit, "zero_part_")
    a = _resolve_code(fit, r_a)
    b = _resolve_code(fit, r_b)
    if a == b:
        raise UsageError("contrast requires two distinct treatment labels")
    components, extrapolated = _effect_components(fit, x, a, b)
    return EffectEstimate(
        x=dict(x),
        period=fit.period_,
        treatment=fit.treatment_labels_[a],
        baseline=fit.treatment_labels_[b],
        point=assemble_point(components),
        components=components,
        unit=unit,
        pre_program=fit.pre_program_,
        extrapolated=extrapolated,
    )


def effect_profile(fits, x, r, baseline=0, unit=None):
    """Time series of effects across per-period fits.

    All fits must share formulas and treatment labels; the profile is the
    natural input for counterfactual-evolution plots.
    """
    if not fits:
        raise UsageError("no fitted periods given")
    first = fits[0]
    for fit in fits[1:]:
        if (
            fit.zero_formula != first.zero_formula
            or fit.cont_formula != first.cont_formula
            or fit.treatment_labels_ != first.treatment_labels_
        ):
            raise UsageError("per-period fits use inconsistent formulas")
    r_code = _resolve_code(first, r)
    b_code = _resolve_code(first, baseline)
    if r_code == 0:
        raise UsageError("profiles are defined for treated labels, not r=0")
    if r_code == b_code:
        raise UsageError("profile needs a treated label distinct from baseline")
    ordered = sorted(fits, key=lambda f: f.period_)
    return [
        treatment_contrast(fit, x, r_code, b_code, unit=unit) for fit in ordered
    ]


def effects_to_frame(estimates):
    """Tidy frame (unit, period, treatment, point, band, components)."""
    rows = []
    for e in estimates:
        row = {
            "unit": e.unit,
            "period": e.period,
            "treatment": e.treatment,
            "baseline": e.baseline,
            "point": e.point,
            "ci_low": e.ci_low,
            "ci_high": e.ci_high,
            "one_minus_p_r": e.components["one_minus_p_r"],
            "alpha_hat": e.components["alpha_hat"],
            "p_diff": e.components["p_diff"],
            "mu0_hat": e.components["mu0_hat"],
            "pre_program": e.pre_program,
            "extrapolated": e.extrapolated,
        }
        for name, value in e.x.items():
            row[f"x_{name}"] = value
        rows.append(row)
    return pd.DataFrame(rows)
