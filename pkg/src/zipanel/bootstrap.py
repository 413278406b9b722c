"""Percentile bootstrap bands for counterfactual effects.

Units are resampled with replacement keeping their whole time path, all
per-period mixtures are refitted on each replicate (reusing the original
smoothing parameters in fast mode), and bands are empirical percentiles
of the replicate effects.  Per-replicate RNG streams are spawned from the
plan seed, so results are identical for any worker count.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .data import build_diff_samples
from .effects import treatment_contrast
from .errors import ConfigError, InferenceError, UsageError, ZipanelError
from .mixture import MixtureModel

logger = logging.getLogger(__name__)

__all__ = [
    "BootstrapPlan",
    "EffectTarget",
    "BootstrapResult",
    "percentile_band",
    "bootstrap_effects",
]


@dataclass(frozen=True)
class BootstrapPlan:
    """Resampling plan.

    ``resample`` is unit-level: a draw keeps each sampled unit's full
    time path, which respects within-unit dependence across periods.
    ``reuse_lambda`` skips per-replicate smoothing selection and reuses
    the original fit's smoothing parameters (fast mode, flagged in
    outputs).
    """

    replicates: int = 1000
    seed: int = 0
    resample: str = "unit"
    quantiles: tuple = (0.025, 0.975)
    reuse_lambda: bool = False
    workers: int = 1
    max_failure_rate: float = 0.05

    def __post_init__(self):
        if self.replicates < 2:
            raise ConfigError("need at least two bootstrap replicates")
        lo, hi = self.quantiles
        if not (0.0 < lo < hi < 1.0):
            raise ConfigError("quantiles must be ordered within (0, 1)")
        if self.resample != "unit":
            raise ConfigError("only unit-level resampling is supported")


@dataclass(frozen=True)
class EffectTarget:
    """One (covariate point, treatment, period) band target."""

    x: dict
    treatment: object
    period: int
    baseline: object = 0
    unit: str | None = None


@dataclass
class BootstrapResult:
    estimates: list
    draws: np.ndarray
    replicate_ok: np.ndarray
    failures: list
    plan: BootstrapPlan

    @property
    def n_failed(self):
        return len(self.failures)


def percentile_band(draws, quantiles=(0.025, 0.975)):
    """Empirical band from replicate draws.

    Linear-interpolation quantile definition (the numpy default, type-7);
    invariant to the order of the draws.
    """
    draws = np.asarray(draws, dtype=float)
    if draws.size == 0:
        raise UsageError("no draws to take percentiles of")
    lo, hi = quantiles
    return (
        float(np.quantile(draws, lo, method="linear")),
        float(np.quantile(draws, hi, method="linear")),
    )


def _fit_periods(data, t0_index, zero_formula, cont_formula, periods, lam_by_period):
    samples = {s.period: s for s in build_diff_samples(data, t0_index)}
    fits = {}
    for period in periods:
        if period not in samples:
            raise UsageError(f"target period {period} not in the panel")
        lam_zero, lam_cont = lam_by_period.get(period, (None, None))
        fits[period] = MixtureModel(
            zero_formula=zero_formula,
            cont_formula=cont_formula,
            lam_zero=lam_zero,
            lam_cont=lam_cont,
        ).fit(samples[period])
    return fits


def _replicate_points(seed, data, t0_index, zero_formula, cont_formula,
                      periods, lam_by_period, targets):
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, data.n_units, data.n_units)
    resampled = data.take_units(idx)
    fits = _fit_periods(
        resampled, t0_index, zero_formula, cont_formula, periods, lam_by_period
    )
    out = np.empty(len(targets))
    for j, tg in enumerate(targets):
        est = treatment_contrast(fits[tg.period], tg.x, tg.treatment, tg.baseline)
        out[j] = est.point
    return out


def bootstrap_effects(data, zero_formula, cont_formula, plan, targets, t0_index=0,
                      base_fits=None):
    """Effect estimates with percentile bands for the given targets.

    The point estimates come from a fit on the original data; bands come
    from ``plan.replicates`` unit resamples.  Replicates whose refit
    fails are dropped and counted; more than ``plan.max_failure_rate``
    failures aborts with the failure log.
    """
    targets = list(targets)
    if not targets:
        raise UsageError("no bootstrap targets given")
    periods = sorted({tg.period for tg in targets})

    if base_fits is None:
        base_fits = _fit_periods(data, t0_index, zero_formula, cont_formula, periods, {})
    lam_by_period = {}
    if plan.reuse_lambda:
        lam_by_period = {
            p: (base_fits[p].zero_part_.lambda_, base_fits[p].cont_part_.lambda_)
            for p in periods
        }

    estimates = []
    for tg in targets:
        est = treatment_contrast(
            base_fits[tg.period], tg.x, tg.treatment, tg.baseline, unit=tg.unit
        )
        estimates.append(est)

    B = plan.replicates
    seeds = np.random.SeedSequence(plan.seed).spawn(B)
    draws = np.full((B, len(targets)), np.nan)
    ok = np.zeros(B, dtype=bool)
    failures = []

    def run(b):
        return _replicate_points(
            seeds[b], data, t0_index, zero_formula, cont_formula,
            periods, lam_by_period, targets,
        )

    if plan.workers > 1:
        with ThreadPoolExecutor(max_workers=plan.workers) as pool:
            futures = {b: pool.submit(run, b) for b in range(B)}
            for b, fut in futures.items():
                try:
                    draws[b] = fut.result()
                    ok[b] = True
                except (ZipanelError, np.linalg.LinAlgError) as exc:
                    failures.append((b, str(exc)))
    else:
        for b in range(B):
            try:
                draws[b] = run(b)
                ok[b] = True
            except (ZipanelError, np.linalg.LinAlgError) as exc:
                failures.append((b, str(exc)))

    if len(failures) > plan.max_failure_rate * B:
        raise InferenceError(
            f"{len(failures)} of {B} bootstrap replicates failed "
            f"(cap {plan.max_failure_rate:.0%}); first failures: {failures[:5]}"
        )
    if failures:
        logger.warning("dropped %d failed bootstrap replicates", len(failures))

    good = draws[ok]
    banded = []
    for j, est in enumerate(estimates):
        lo, hi = percentile_band(good[:, j], plan.quantiles)
        banded.append(replace_band(est, lo, hi))
    return BootstrapResult(
        estimates=banded,
        draws=good,
        replicate_ok=ok,
        failures=failures,
        plan=plan,
    )


def replace_band(estimate, lo, hi):
    return replace(estimate, ci_low=lo, ci_high=hi)
