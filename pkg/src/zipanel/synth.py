"""Synthetic panel generator with closed-form effect truths.

Scenarios draw baseline covariates, assign treatments, build potential
outcome paths (optionally with unit levels and unit trends correlated
with treatment), apply an additive treatment shift from the program
start, and censor the difference to an exact zero with a logit-additive
probability.  The `TruthRecord` returns the analytic expected effect at
any covariate point, assembled with the same two-part algebra the
estimators use, so recovery, coverage, size and power tests all have an
independent oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .data import PanelDataset
from .errors import ConfigError, UsageError

__all__ = ["Scenario", "TruthRecord", "generate", "truth_effect"]


# ---------------------------------------------------------------------------
# function terms


def _eval_term(term, cov_values):
    """One additive piece of a scenario function, at dict-of-arrays."""
    fn = term.get("fn", "linear")
    if fn == "gauss2":
        a, b = term["covs"]
        xa, xb = cov_values[a], cov_values[b]
        ca, cb = term["centers"]
        wa, wb = term["widths"]
        return term["coef"] * np.exp(
            -(((xa - ca) / wa) ** 2) - ((xb - cb) / wb) ** 2
        )
    x = cov_values[term["cov"]]
    coef = term["coef"]
    if fn == "linear":
        return coef * x
    if fn == "sin":
        return coef * np.sin(term.get("freq", 1.0) * x)
    if fn == "quad":
        return coef * (x - term.get("center", 0.0)) ** 2
    if fn == "log1p":
        return coef * np.log1p(np.abs(x))
    if fn == "gauss":
        return coef * np.exp(-(((x - term.get("center", 0.0)) / term.get("width", 1.0)) ** 2))
    raise ConfigError(f"unknown scenario term fn {fn!r}")


def _eval_terms(terms, cov_values, like):
    total = np.zeros_like(like, dtype=float)
    for term in terms:
        total = total + _eval_term(term, cov_values)
    return total


@dataclass(frozen=True)
class Scenario:
    """Full description of one synthetic panel experiment.

    Parameters
    ----------
    n : int
        Units.
    n_post_periods : int
        Periods after the baseline (the panel has ``n_post_periods + 1``).
    covariates : tuple of dict
        Each ``{"name", "dist", ...}`` with dist one of ``uniform``
        (lo, hi), ``normal`` (mean, sd), ``lognormal`` (mu, sigma).
    treatment : dict
        ``{"kind": "probs", "probs": [...]}`` for random assignment or
        ``{"kind": "logit", "intercepts": [...], "coefs": [{cov: w}, ...]}``
        (per non-reference arm) for covariate-dependent assignment.
    treatment_labels : tuple of str
        Label names, reference first.
    baseline : dict
        Control-path mean difference: ``{"intercepts": [c_1..c_m],
        "terms": [...], "time_scale": [s_1..s_m]?}`` so that
        mu_t(x) = c_t + s_t * sum(terms).
    effects : tuple of dict
        Per non-reference arm: ``{"values": [a_1..a_m], "terms": [...],
        "time_scale": [...]?}``; forced to zero before ``treatment_start``.
    zero : dict or None
        Zero-censoring mechanism on the logit scale:
        ``{"intercepts": [b_1..b_m], "treatment_shifts": [d_0..d_{R-1}],
        "terms": [...]}``; shifts apply from ``treatment_start`` on.
        None disables censoring.
    unit_effects : dict
        ``{"level_sd", "slope_sd", "level_shifts": per arm,
        "slope_shifts": per arm}``; arm shifts induce confounding.
    initial_level : dict
        ``{"const": c, "terms": [...]}`` level at the first period.
    noise_sd : float
    treatment_start : int
        Period index k >= 1 at which effects and zero shifts start.
    start_time : int
        Calendar value of the first period.
    seed : int
    """

    n: int
    n_post_periods: int
    covariates: tuple
    treatment: dict
    treatment_labels: tuple
    baseline: dict
    effects: tuple
    zero: dict | None = None
    unit_effects: dict = field(default_factory=dict)
    initial_level: dict = field(default_factory=lambda: {"const": 50.0, "terms": []})
    noise_sd: float = 1.0
    treatment_start: int = 1
    start_time: int = 0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(dict(c) for c in self.covariates))
        object.__setattr__(self, "treatment_labels", tuple(self.treatment_labels))
        object.__setattr__(self, "effects", tuple(dict(e) for e in self.effects))
        m = self.n_post_periods
        if m < 1:
            raise ConfigError("need at least one post-baseline period")
        if not 1 <= self.treatment_start <= m:
            raise ConfigError("treatment_start must be a post-baseline period index")
        r = len(self.treatment_labels)
        if len(self.effects) != r - 1:
            raise ConfigError(
                f"need one effect spec per non-reference arm ({r - 1}), "
                f"got {len(self.effects)}"
            )
        if len(self.baseline.get("intercepts", [])) != m:
            raise ConfigError("baseline intercepts must list one value per post period")
        if self.zero is not None:
            if len(self.zero.get("intercepts", [])) != m:
                raise ConfigError("zero intercepts must list one value per post period")
            shifts = self.zero.get("treatment_shifts", [0.0] * r)
            if len(shifts) != r:
                raise ConfigError("zero treatment_shifts must list one value per arm")

    @property
    def covariate_names(self):
        return tuple(c["name"] for c in self.covariates)

    def to_dict(self):
        return {
            "n": self.n,
            "n_post_periods": self.n_post_periods,
            "covariates": [dict(c) for c in self.covariates],
            "treatment": dict(self.treatment),
            "treatment_labels": list(self.treatment_labels),
            "baseline": dict(self.baseline),
            "effects": [dict(e) for e in self.effects],
            "zero": None if self.zero is None else dict(self.zero),
            "unit_effects": dict(self.unit_effects),
            "initial_level": dict(self.initial_level),
            "noise_sd": self.noise_sd,
            "treatment_start": self.treatment_start,
            "start_time": self.start_time,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            n=d["n"],
            n_post_periods=d["n_post_periods"],
            covariates=tuple(d["covariates"]),
            treatment=d["treatment"],
            treatment_labels=tuple(d["treatment_labels"]),
            baseline=d["baseline"],
            effects=tuple(d["effects"]),
            zero=d.get("zero"),
            unit_effects=d.get("unit_effects", {}),
            initial_level=d.get("initial_level", {"const": 50.0, "terms": []}),
            noise_sd=d.get("noise_sd", 1.0),
            treatment_start=d.get("treatment_start", 1),
            start_time=d.get("start_time", 0),
            seed=d.get("seed", 0),
        )


@dataclass(frozen=True)
class TruthRecord:
    """Closed-form scenario quantities at arbitrary covariate points."""

    scenario: Scenario

    def _covs(self, x):
        return {k: np.asarray(v, dtype=float) for k, v in x.items()}

    def mu0(self, x, t_index):
        """Mean control-path difference between period t and the baseline."""
        s = self.scenario
        self._check_t(t_index)
        cv = self._covs(x)
        spec = s.baseline
        c = spec["intercepts"][t_index - 1]
        scale = spec.get("time_scale", [1.0] * s.n_post_periods)[t_index - 1]
        like = next(iter(cv.values())) if cv else np.asarray(0.0)
        return c + scale * _eval_terms(spec.get("terms", []), cv, like)

    def alpha(self, x, r, t_index):
        """Mean treatment shift of arm r on the nonzero-difference scale."""
        s = self.scenario
        self._check_t(t_index)
        r = self._code(r)
        if r == 0 or t_index < s.treatment_start:
            cv = self._covs(x)
            like = next(iter(cv.values())) if cv else np.asarray(0.0)
            return np.zeros_like(like, dtype=float)
        spec = s.effects[r - 1]
        cv = self._covs(x)
        a = spec["values"][t_index - 1]
        scale = spec.get("time_scale", [1.0] * s.n_post_periods)[t_index - 1]
        like = next(iter(cv.values())) if cv else np.asarray(0.0)
        return a + scale * _eval_terms(spec.get("terms", []), cv, like)

    def zero_prob(self, x, r, t_index):
        s = self.scenario
        self._check_t(t_index)
        r = self._code(r)
        if s.zero is None:
            cv = self._covs(x)
            like = next(iter(cv.values())) if cv else np.asarray(0.0)
            return np.zeros_like(like, dtype=float)
        cv = self._covs(x)
        like = next(iter(cv.values())) if cv else np.asarray(0.0)
        eta = s.zero["intercepts"][t_index - 1] + _eval_terms(
            s.zero.get("terms", []), cv, like
        )
        shifts = s.zero.get("treatment_shifts", [0.0] * len(s.treatment_labels))
        if t_index >= s.treatment_start:
            eta = eta + shifts[r]
        return expit(eta)

    def effect(self, x, r, t_index):
        """Analytic E[Y_t^r - Y_t^0 | x] under the scenario."""
        s = self.scenario
        slope_shifts = s.unit_effects.get("slope_shifts")
        if slope_shifts and any(v != 0 for v in slope_shifts):
            raise UsageError(
                "analytic effects require unconfounded unit trends "
                "(slope_shifts all zero)"
            )
        p_r = self.zero_prob(x, r, t_index)
        p_0 = self.zero_prob(x, 0, t_index)
        a = self.alpha(x, r, t_index)
        m = self.mu0(x, t_index)
        return (1.0 - p_r) * a - (p_r - p_0) * m

    def _code(self, r):
        labels = self.scenario.treatment_labels
        if isinstance(r, (int, np.integer)):
            if not 0 <= r < len(labels):
                raise UsageError(f"treatment code {r} out of range")
            return int(r)
        if r in labels:
            return labels.index(r)
        raise UsageError(f"unknown treatment label {r!r}")

    def _check_t(self, t_index):
        if not 1 <= t_index <= self.scenario.n_post_periods:
            raise UsageError(f"t_index must be in 1..{self.scenario.n_post_periods}")


def truth_effect(truth, x, r, t_index):
    """Analytic expected effect; thin wrapper over `TruthRecord.effect`."""
    return truth.effect(x, r, t_index)


def _draw_covariates(scenario, rng):
    values = {}
    for spec in scenario.covariates:
        dist = spec.get("dist", "uniform")
        if dist == "uniform":
            values[spec["name"]] = rng.uniform(spec.get("lo", 0.0), spec.get("hi", 1.0), scenario.n)
        elif dist == "normal":
            values[spec["name"]] = rng.normal(spec.get("mean", 0.0), spec.get("sd", 1.0), scenario.n)
        elif dist == "lognormal":
            values[spec["name"]] = rng.lognormal(spec.get("mu", 0.0), spec.get("sigma", 1.0), scenario.n)
        else:
            raise ConfigError(f"unknown covariate dist {dist!r}")
    return values


def _draw_treatment(scenario, cov_values, rng):
    r = len(scenario.treatment_labels)
    rule = scenario.treatment
    if rule.get("kind", "probs") == "probs":
        probs = np.asarray(rule["probs"], dtype=float)
        if len(probs) != r or abs(probs.sum() - 1.0) > 1e-9:
            raise ConfigError("treatment probs must be a length-R simplex vector")
        return rng.choice(r, size=scenario.n, p=probs)
    if rule["kind"] == "logit":
        scores = np.zeros((scenario.n, r))
        intercepts = rule.get("intercepts", [0.0] * (r - 1))
        coefs = rule.get("coefs", [{}] * (r - 1))
        like = np.zeros(scenario.n)
        for j in range(1, r):
            terms = [
                {"cov": cov, "fn": "linear", "coef": w}
                for cov, w in coefs[j - 1].items()
            ]
            scores[:, j] = intercepts[j - 1] + _eval_terms(terms, cov_values, like)
        scores -= scores.max(axis=1, keepdims=True)
        p = np.exp(scores)
        p /= p.sum(axis=1, keepdims=True)
        u = rng.uniform(size=scenario.n)
        return (u[:, None] > np.cumsum(p, axis=1)).sum(axis=1)
    raise ConfigError(f"unknown treatment rule {rule.get('kind')!r}")


def generate(scenario, force_arm=None):
    """Simulate one panel; pure function of the scenario and its seed.

    ``force_arm`` overrides every unit's realized treatment label without
    touching any random draw, which makes counterfactual paths directly
    comparable across calls.

    Returns
    -------
    (PanelDataset, TruthRecord)
    """
    rng = np.random.default_rng(scenario.seed)
    n, m = scenario.n, scenario.n_post_periods
    r_arms = len(scenario.treatment_labels)
    truth = TruthRecord(scenario)

    cov_values = _draw_covariates(scenario, rng)
    treatment = _draw_treatment(scenario, cov_values, rng)

    ue = scenario.unit_effects
    level_z = rng.normal(0.0, 1.0, n)
    slope_z = rng.normal(0.0, 1.0, n)
    noise = rng.normal(0.0, scenario.noise_sd, (n, m + 1))
    zero_u = rng.uniform(size=(n, m))

    if force_arm is not None:
        code = truth._code(force_arm)
        treatment = np.full(n, code, dtype=int)

    level_shifts = np.asarray(ue.get("level_shifts", [0.0] * r_arms), dtype=float)
    slope_shifts = np.asarray(ue.get("slope_shifts", [0.0] * r_arms), dtype=float)
    phi_level = level_shifts[treatment] + ue.get("level_sd", 0.0) * level_z
    phi_slope = slope_shifts[treatment] + ue.get("slope_sd", 0.0) * slope_z

    init = scenario.initial_level
    like = np.zeros(n)
    base_level = (
        init.get("const", 0.0)
        + _eval_terms(init.get("terms", []), cov_values, like)
        + phi_level
        + noise[:, 0]
    )

    x_frame = {name: cov_values[name] for name in scenario.covariate_names}
    outcomes = np.empty((n, m + 1))
    outcomes[:, 0] = base_level
    for t in range(1, m + 1):
        mu = truth.mu0(x_frame, t)
        alpha = np.zeros(n)
        if t >= scenario.treatment_start:
            for code in range(1, r_arms):
                sel = treatment == code
                if sel.any():
                    alpha[sel] = np.asarray(
                        truth.alpha({k: v[sel] for k, v in x_frame.items()}, code, t)
                    )
        delta_latent = mu + phi_slope * t + noise[:, t] - noise[:, 0] + alpha
        if scenario.zero is not None:
            pz = np.empty(n)
            for code in range(r_arms):
                sel = treatment == code
                if sel.any():
                    pz[sel] = np.asarray(
                        truth.zero_prob({k: v[sel] for k, v in x_frame.items()}, code, t)
                    )
            censored = zero_u[:, t - 1] < pz
            delta = np.where(censored, 0.0, delta_latent)
        else:
            delta = delta_latent
        outcomes[:, t] = outcomes[:, 0] + delta

    covariates = np.column_stack(
        [cov_values[name] for name in scenario.covariate_names]
    ) if scenario.covariate_names else np.empty((n, 0))

    data = PanelDataset(
        unit_ids=np.array([f"u{i:06d}" for i in range(n)]),
        times=np.arange(scenario.start_time, scenario.start_time + m + 1),
        outcomes=outcomes,
        treatment=treatment,
        treatment_labels=scenario.treatment_labels,
        covariates=covariates,
        covariate_names=scenario.covariate_names,
        treatment_start=scenario.treatment_start,
    )
    return data, truth
