"""Specification diagnostics: placebo tests, a ladder of benchmark
models, and neighbor-treatment spillover checks.

Placebo tests fit the continuous part with a homogeneous per-period
treatment coefficient on either the plain before/after differences or
the random-growth transformed ones, with or without covariate controls;
a significant coefficient in a window where no effect should exist
signals misspecification.  The four-model ladder compares the full
additive mixture against simpler linear and continuous-only benchmarks
on a single effect scale.  Spillovers enter through a categorical label
summarizing the treatment composition of each unit's neighbors.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .data import DiffSample, build_diff_samples, random_growth_transform
from .design import ModelFormula, SmoothTerm
from .effects import EffectEstimate, assemble_point, treatment_contrast
from .errors import ConfigError, DataError, UsageError
from .gam import AdditiveModel, fit_gaussian, term_pvalues
from .mixture import MixtureModel
from .splines import SmoothSpec

logger = logging.getLogger(__name__)

__all__ = [
    "PlaceboResult",
    "NeighborGraph",
    "placebo_test",
    "fit_comparison_ladder",
    "build_wd",
    "fit_spillover_model",
    "WD_LEVELS",
]

WD_LEVELS = ("0", "5_ALL", "Z_ALL", "5&Z_SOME", "5&Z_ALL")


# ---------------------------------------------------------------------------
# placebo tests


@dataclass
class PlaceboResult:
    spec: str
    controls: str
    t0: int
    t: int
    window: str
    treatment: str
    alpha_hat: float
    se: float
    p_value: float
    alpha_config: float

    @property
    def verdict(self):
        """True when the pseudo-effect is insignificant (test passed)."""
        return bool(self.p_value > self.alpha_config)


def placebo_test(data, spec, controls, t0, t, treatment, alpha_config=0.05,
                 control_basis_dim=8):
    """Homogeneous-effect placebo fit on one (t0, t) window.

    Parameters
    ----------
    data : PanelDataset
    spec : {"before_after", "random_growth"}
        Plain differences against t0, or differences with unit-specific
        linear trends removed (needs a period before t0).
    controls : {"none", "covariates"}
        Nothing beyond the treatment indicators, or one univariate smooth
        per covariate.
    t0, t : int
        Period values (calendar), not indices.
    treatment : label or code
        The arm whose homogeneous coefficient is reported.

    Returns
    -------
    PlaceboResult
        Coefficient, p-value, and pass verdict at ``alpha_config``.
    """
    if spec not in ("before_after", "random_growth"):
        raise UsageError("spec must be 'before_after' or 'random_growth'")
    if controls not in ("none", "covariates"):
        raise UsageError("controls must be 'none' or 'covariates'")
    times = list(data.times)
    if t0 not in times or t not in times:
        raise UsageError(f"window ({t0}, {t}) not within observed periods {times}")
    t0_index, t_index = times.index(t0), times.index(t)
    if t_index <= t0_index:
        raise UsageError("t must come after t0")
    if spec == "random_growth" and t0_index < 1:
        raise UsageError("random growth placebo needs a period before t0")

    build = build_diff_samples if spec == "before_after" else random_growth_transform
    samples = {s.period_index: s for s in build(data, t0_index)}
    sample = samples[t_index].restrict_nonzero()

    smooths = ()
    if controls == "covariates":
        smooths = tuple(
            SmoothTerm(SmoothSpec(name, basis_dim=control_basis_dim))
            for name in data.covariate_names
        )
    formula = ModelFormula(response="delta", treatment_effects=True, smooths=smooths)
    fit = fit_gaussian(formula, sample)

    code = data.label_code(treatment)
    if code == 0:
        raise UsageError("placebo coefficient is defined for treated labels")
    label = data.treatment_labels[code]
    table = term_pvalues(fit)
    row = table[table["term"] == f"treatment[{label}]"]
    if row.empty:
        raise DataError(f"treatment group {label} missing from the placebo sample")
    window = "pre" if t_index < data.treatment_start else "post"
    return PlaceboResult(
        spec=spec,
        controls=controls,
        t0=t0,
        t=t,
        window=window,
        treatment=label,
        alpha_hat=float(row["estimate"].iloc[0]),
        se=float(row["se"].iloc[0]),
        p_value=float(row["p_value"].iloc[0]),
        alpha_config=alpha_config,
    )


# ---------------------------------------------------------------------------
# comparison ladder


LADDER_MODELS = ("model1", "model2", "model3", "model4")


def _ladder_formulas(covariate_names, interaction, tensor_dim):
    linear_covs = tuple(covariate_names)
    cont1 = ModelFormula(response="delta", linear=linear_covs)
    cont2 = ModelFormula(
        response="delta", linear=linear_covs, linear_by_treatment=tuple(interaction)
    )
    zero3 = ModelFormula(response="is_zero", linear=linear_covs)
    smooths4 = tuple(
        SmoothTerm(SmoothSpec(name, basis_dim=8)) for name in covariate_names
    ) + (
        SmoothTerm(
            SmoothSpec(
                tuple(interaction), basis_dim=(tensor_dim, tensor_dim), kind="tensor"
            ),
            by_treatment=True,
        ),
    )
    cont4 = ModelFormula(response="delta", smooths=smooths4)
    zero4 = ModelFormula(
        response="is_zero",
        smooths=tuple(
            SmoothTerm(SmoothSpec(name, basis_dim=8)) for name in covariate_names
        ),
    )
    return {
        "model1": (None, cont1),
        "model2": (None, cont2),
        "model3": (zero3, cont2),
        "model4": (zero4, cont4),
    }


def _continuous_only_effect(fit, x, r_code, b_code, period, pre_program):
    mean_r = fit.predict(x, treatment=r_code)
    mean_b = fit.predict(x, treatment=b_code)
    components = {
        "one_minus_p_r": 1.0,
        "alpha_hat": mean_r - mean_b,
        "p_diff": 0.0,
        "mu0_hat": mean_b,
    }
    labels = fit.design_.treatment_labels
    return EffectEstimate(
        x=dict(x),
        period=period,
        treatment=labels[r_code],
        baseline=labels[b_code],
        point=assemble_point(components),
        components=components,
        pre_program=pre_program,
    )


def fit_comparison_ladder(data, target_x, r, interaction, baseline=0, t0_index=0,
                          tensor_dim=5):
    """Effect profiles under the four benchmark models.

    Model 1: linear continuous response, homogeneous effect per period.
    Model 2: adds linear treatment interactions in the two interaction
    covariates.  Model 3: same continuous design plus the zero-part
    mixture (the continuous coefficients coincide with Model 2; the
    effect differs only through the zero-part reweighting).  Model 4:
    additive mixture with a treatment-specific bivariate surface.
    Models 1 and 2 have no zero part, so their effects are reported with
    the zero probability pinned to zero, which puts all four models on
    one scale.

    Returns
    -------
    dict mapping model name to a list of per-period `EffectEstimate`.
    """
    for name in interaction:
        if name not in data.covariate_names:
            raise ConfigError(f"interaction covariate {name!r} not in the dataset")
    r_code = data.label_code(r)
    if r_code == 0:
        raise UsageError("ladder profiles are defined for treated labels")
    b_code = data.label_code(baseline)
    formulas = _ladder_formulas(data.covariate_names, interaction, tensor_dim)
    samples = build_diff_samples(data, t0_index=t0_index)

    profiles = {name: [] for name in LADDER_MODELS}
    for sample in samples:
        nonzero = sample.restrict_nonzero()
        for name in ("model1", "model2"):
            _, cont = formulas[name]
            fit = fit_gaussian(cont, nonzero)
            profiles[name].append(
                _continuous_only_effect(
                    fit, target_x, r_code, b_code, sample.period, sample.pre_program
                )
            )
        for name in ("model3", "model4"):
            zero, cont = formulas[name]
            mix = MixtureModel(zero_formula=zero, cont_formula=cont).fit(sample)
            profiles[name].append(
                treatment_contrast(mix, target_x, r_code, b_code)
            )
    return profiles


def ladder_to_frame(profiles):
    """Tidy frame keyed by (model, period, treatment)."""
    rows = []
    for model, estimates in profiles.items():
        for e in estimates:
            rows.append(
                {
                    "model": model,
                    "period": e.period,
                    "treatment": e.treatment,
                    "baseline": e.baseline,
                    "point": e.point,
                    "ci_low": e.ci_low,
                    "ci_high": e.ci_high,
                    "pre_program": e.pre_program,
                }
            )
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# spillovers


@dataclass
class NeighborGraph:
    """Symmetric adjacency between units, from a unit_a,unit_b edge list."""

    adjacency: dict

    @classmethod
    def from_edges(cls, pairs):
        adjacency = {}
        for a, b in pairs:
            a, b = str(a), str(b)
            adjacency.setdefault(a, set()).add(b)
            adjacency.setdefault(b, set()).add(a)
        return cls(adjacency=adjacency)

    @classmethod
    def from_csv(cls, path):
        frame = pd.read_csv(path, dtype=str)
        if not {"unit_a", "unit_b"}.issubset(frame.columns):
            raise ConfigError("edge list needs 'unit_a' and 'unit_b' columns")
        return cls.from_edges(zip(frame["unit_a"], frame["unit_b"]))

    def neighbors(self, unit):
        return self.adjacency.get(str(unit), set())


def build_wd(data, graph, five_b_labels=("5B", "ZRR&5B"), zrr_labels=("ZRR", "ZRR&5B")):
    """Categorical neighbor-treatment label per unit.

    Classification of a unit's neighbor set: all untreated -> "0"; all
    treated by 5B only -> "5_ALL"; all by ZRR only -> "Z_ALL"; all under
    both programs -> "5&Z_ALL"; any other mix of program exposure ->
    "5&Z_SOME".  Units without neighbors get "0" with a warning.  The
    result is a pure function of (adjacency, treatment).
    """
    labels = data.treatment_labels
    code_of = {label: i for i, label in enumerate(labels)}
    five_b = {code_of[l] for l in five_b_labels if l in code_of}
    zrr = {code_of[l] for l in zrr_labels if l in code_of}
    both = five_b & zrr
    treatment_by_unit = dict(zip((str(u) for u in data.unit_ids), data.treatment))

    out = []
    orphans = 0
    for unit in data.unit_ids:
        codes = []
        for nb in graph.neighbors(unit):
            if nb in treatment_by_unit:
                codes.append(int(treatment_by_unit[nb]))
        if not codes:
            orphans += 1
            out.append("0")
            continue
        codes = np.asarray(codes)
        is_5b_only = np.isin(codes, list(five_b - both))
        is_zrr_only = np.isin(codes, list(zrr - both))
        is_both = np.isin(codes, list(both))
        if np.all(codes == 0):
            out.append("0")
        elif np.all(is_5b_only):
            out.append("5_ALL")
        elif np.all(is_zrr_only):
            out.append("Z_ALL")
        elif np.all(is_both):
            out.append("5&Z_ALL")
        else:
            out.append("5&Z_SOME")
    if orphans:
        warnings.warn(
            f"{orphans} unit(s) have no neighbors in the edge list; labeled '0'",
            UserWarning,
            stacklevel=2,
        )
    return np.asarray(out, dtype=object)


def _augment_sample(sample, wd, levels_present):
    dummies = np.column_stack(
        [(wd == level).astype(float) for level in levels_present]
    )
    names = tuple(f"WD_{level}" for level in levels_present)
    return replace(
        sample,
        covariates=np.column_stack([sample.covariates, dummies]),
        covariate_names=sample.covariate_names + names,
    )


def fit_spillover_model(data, wd, interaction=None, t0_index=0, tensor_dim=4):
    """Continuous-part fits with neighbor-treatment main effects.

    Adds one dummy per non-reference WD level to the per-period Gaussian
    model (alongside the own-treatment indicators and covariate smooths);
    ``interaction`` names two covariates whose WD-specific bivariate
    surface is added on top.  Empty WD levels are dropped with a warning.

    Returns
    -------
    (fits, table)
        Per-period fitted models and a tidy frame of WD effects with
        p-values (per-level main effects plus surface rows when
        requested).
    """
    wd = np.asarray(wd, dtype=object)
    if len(wd) != data.n_units:
        raise UsageError("wd labels must align with the dataset's units")
    present = [lv for lv in WD_LEVELS[1:] if np.any(wd == lv)]
    missing = [lv for lv in WD_LEVELS[1:] if lv not in present]
    if not present:
        raise ConfigError("WD has a single level; no spillover contrast exists")
    if missing:
        warnings.warn(
            f"WD level(s) {missing} empty; dropped from the model",
            UserWarning,
            stacklevel=2,
        )

    smooths = tuple(
        SmoothTerm(SmoothSpec(name, basis_dim=8)) for name in data.covariate_names
    )
    linear = tuple(f"WD_{lv}" for lv in present)
    if interaction is not None:
        for name in interaction:
            if name not in data.covariate_names:
                raise ConfigError(f"interaction covariate {name!r} not in the dataset")
        smooths = smooths + tuple(
            SmoothTerm(
                SmoothSpec(
                    tuple(interaction), basis_dim=(tensor_dim, tensor_dim), kind="tensor"
                ),
                by=f"WD_{lv}",
            )
            for lv in present
        )
    formula = ModelFormula(response="delta", linear=linear, smooths=smooths)

    fits = []
    rows = []
    for sample in build_diff_samples(data, t0_index=t0_index):
        augmented = _augment_sample(sample.restrict_nonzero(), wd[~sample.is_zero], present)
        fit = fit_gaussian(formula, augmented)
        fits.append(fit)
        table = term_pvalues(fit)
        for lv in present:
            row = table[table["term"] == f"WD_{lv}"]
            rows.append(
                {
                    "period": sample.period,
                    "level": lv,
                    "kind": "main",
                    "estimate": float(row["estimate"].iloc[0]),
                    "se": float(row["se"].iloc[0]),
                    "p_value": float(row["p_value"].iloc[0]),
                }
            )
            if interaction is not None:
                name = "te({},{}):by[WD_{}]".format(*interaction, lv)
                srow = table[table["term"] == name]
                if not srow.empty:
                    rows.append(
                        {
                            "period": sample.period,
                            "level": lv,
                            "kind": "surface",
                            "estimate": np.nan,
                            "se": np.nan,
                            "p_value": float(srow["p_value"].iloc[0]),
                        }
                    )
    return fits, pd.DataFrame(rows)
