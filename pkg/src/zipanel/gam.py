"""Penalized additive model fitting with REML smoothing selection.

Gaussian models are fitted by penalized least squares, binomial-logit
models by penalized iteratively reweighted least squares.  Smoothing
parameters minimize a restricted-likelihood criterion: exact (profiled
scale) for the Gaussian family, Laplace-approximate for the binomial.
The optimizer is quasi-Newton on log-lambda with numeric gradients and
three spread starting points.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize as sp_optimize
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import expit
from scipy.stats import chi2, f as f_dist, norm

from sklearn.base import BaseEstimator

from ._validation import check_is_fitted
from .design import Design, ModelFormula, build_design
from .errors import (
    ConvergenceError,
    DataError,
    NumericalError,
    PerfectSeparationWarning,
    UsageError,
)

__all__ = [
    "AdditiveModel",
    "AnovaResult",
    "fit_gaussian",
    "fit_binomial_logit",
    "optimize_reml",
    "reml_score",
    "reml_score_gradient",
    "term_pvalues",
    "approx_anova",
]

FAMILIES = ("gaussian", "binomial")
IRLS_SCORE_TOL = 1e-8
IRLS_DEVIANCE_TOL = 1e-10
SEPARATION_ETA = 20.0
REML_START_GRID = (-6.0, 0.0, 6.0)
REML_BOUNDS = (-12.0, 12.0)
FD_STEP = 1e-4


# ---------------------------------------------------------------------------
# penalty bookkeeping


def _penalty_matrix(design, lam):
    """Sum of lambda-weighted penalty blocks, embedded at full size."""
    S = np.zeros((design.p, design.p))
    for lam_j, pb in zip(lam, design.penalties):
        S[pb.cols, pb.cols] += lam_j * pb.matrix
    return S


def _logdet_penalty_pseudo(design, lam):
    """Rank-aware log pseudo-determinant of the total penalty.

    Penalties sharing a column block (tensor marginals) are summed before
    eigendecomposition; the structural rank of each group fixes how many
    eigenvalues enter."""
    groups = design.penalty_groups()
    lam = np.asarray(lam, dtype=float)
    total = 0.0
    offset = 0
    # map each penalty block to its lambda by position in design.penalties
    lam_of = {id(pb): lam_j for lam_j, pb in zip(lam, design.penalties)}
    for (start, stop), blocks, rank in groups:
        if rank == 0:
            continue
        S = sum(lam_of[id(pb)] * pb.matrix for pb in blocks)
        vals = np.linalg.eigvalsh(S)[::-1][:rank]
        total += float(np.sum(np.log(np.clip(vals, 1e-300, None))))
        offset += stop - start
    return total


def _solve_penalized(A, rhs):
    try:
        c = cho_factor(A, lower=True)
    except LinAlgError as exc:
        cond = np.linalg.cond(A)
        raise NumericalError(
            "penalized normal equations are singular "
            f"(condition number ~ {cond:.3e})"
        ) from exc
    return c, cho_solve(c, rhs)


def _logdet_from_chol(c):
    return 2.0 * float(np.sum(np.log(np.diag(c[0]))))


# ---------------------------------------------------------------------------
# fixed-lambda fits


@dataclass
class _FitState:
    coef: np.ndarray
    lam: np.ndarray
    scale: float
    edf: dict
    edf_total: float
    cov: np.ndarray
    deviance: float
    loglik: float
    reml: float
    penalized_deviance: float
    iterations: int
    separation: bool
    fitted: np.ndarray


def _edf_by_term(design, A_chol, G):
    F_diag = np.diag(cho_solve(A_chol, G))
    edf = {}
    for t in design.terms:
        edf[t.name] = float(np.sum(F_diag[t.cols]))
    return edf, float(np.sum(F_diag))


def _gaussian_fit(design, lam, cache=None):
    X, y = design.X, design.y
    n = design.n
    if cache is None:
        cache = {}
    if "G" not in cache:
        cache["G"] = X.T @ X
        cache["b"] = X.T @ y
    G, b = cache["G"], cache["b"]
    S = _penalty_matrix(design, lam)
    A = G + S
    chol, beta = _solve_penalized(A, b)
    resid = y - X @ beta
    rss = float(resid @ resid)
    pen = float(beta @ S @ beta)
    mp = design.null_dim
    if n <= mp:
        raise NumericalError(f"sample size {n} too small for {mp} unpenalized terms")
    phi_reml = (rss + pen) / (n - mp)
    logdet_a = _logdet_from_chol(chol)
    logdet_s = _logdet_penalty_pseudo(design, lam)
    reml = (
        0.5 * (n - mp) * (np.log(2.0 * np.pi * phi_reml) + 1.0)
        + 0.5 * logdet_a
        - 0.5 * logdet_s
    )
    edf, edf_total = _edf_by_term(design, chol, G)
    scale = rss / max(n - edf_total, 1e-8)
    cov = cho_solve(chol, np.eye(design.p)) * scale
    loglik = -0.5 * n * np.log(2.0 * np.pi * scale) - 0.5 * rss / scale
    return _FitState(
        coef=beta,
        lam=np.asarray(lam, dtype=float),
        scale=scale,
        edf=edf,
        edf_total=edf_total,
        cov=cov,
        deviance=rss,
        loglik=loglik,
        reml=reml,
        penalized_deviance=rss + pen,
        iterations=0,
        separation=False,
        fitted=X @ beta,
    )


def _binomial_loglik(y, mu):
    mu = np.clip(mu, 1e-12, 1.0 - 1e-12)
    return float(np.sum(y * np.log(mu) + (1.0 - y) * np.log(1.0 - mu)))


def _binomial_fit(design, lam, beta0=None, max_iter=100):
    X, y = design.X, design.y
    n = design.n
    S = _penalty_matrix(design, lam)
    beta = np.zeros(design.p) if beta0 is None else beta0.copy()
    eta = X @ beta
    mu = expit(eta)
    pdev = -2.0 * _binomial_loglik(y, mu) + float(beta @ S @ beta)
    chol = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        w = np.clip(mu * (1.0 - mu), 1e-10, None)
        z = eta + (y - mu) / w
        Xw = X * w[:, None]
        A = X.T @ Xw + S
        chol, beta_new = _solve_penalized(A, X.T @ (w * z))
        step = beta_new - beta
        # step halving keeps the penalized deviance monotone
        for _ in range(30):
            eta_new = X @ (beta + step)
            mu_new = expit(eta_new)
            pdev_new = -2.0 * _binomial_loglik(y, mu_new) + float(
                (beta + step) @ S @ (beta + step)
            )
            if pdev_new <= pdev + 1e-12:
                break
            step = step / 2.0
        beta = beta + step
        eta, mu = X @ beta, expit(X @ beta)
        pdev_new = -2.0 * _binomial_loglik(y, mu) + float(beta @ S @ beta)
        score = X.T @ (y - mu) - S @ beta
        if (
            np.max(np.abs(score)) < IRLS_SCORE_TOL
            or abs(pdev - pdev_new) < IRLS_DEVIANCE_TOL * (abs(pdev) + 1.0)
        ):
            pdev = pdev_new
            converged = True
            break
        pdev = pdev_new
    if not converged:
        raise ConvergenceError(
            f"penalized IRLS did not converge in {max_iter} iterations "
            f"(last penalized deviance {pdev:.6e})"
        )
    separation = bool(np.max(np.abs(eta)) > SEPARATION_ETA)
    if separation:
        warnings.warn(
            "linear predictor diverging; data may be separated, returning "
            "the penalized solution",
            PerfectSeparationWarning,
            stacklevel=3,
        )
    w = np.clip(mu * (1.0 - mu), 1e-10, None)
    G = X.T @ (X * w[:, None])
    A = G + S
    chol, _ = _solve_penalized(A, np.zeros(design.p))
    loglik = _binomial_loglik(y, mu)
    pen = float(beta @ S @ beta)
    mp = design.null_dim
    logdet_a = _logdet_from_chol(chol)
    logdet_s = _logdet_penalty_pseudo(design, lam)
    reml = (
        -(loglik - 0.5 * pen)
        + 0.5 * logdet_a
        - 0.5 * logdet_s
        - 0.5 * mp * np.log(2.0 * np.pi)
    )
    edf, edf_total = _edf_by_term(design, chol, G)
    cov = cho_solve(chol, np.eye(design.p))
    return _FitState(
        coef=beta,
        lam=np.asarray(lam, dtype=float),
        scale=1.0,
        edf=edf,
        edf_total=edf_total,
        cov=cov,
        deviance=-2.0 * loglik,
        loglik=loglik,
        reml=reml,
        penalized_deviance=pdev,
        iterations=it,
        separation=separation,
        fitted=mu,
    )


def _fit_fixed(design, family, lam, beta0=None, max_iter=100):
    if family == "gaussian":
        return _gaussian_fit(design, lam)
    return _binomial_fit(design, lam, beta0=beta0, max_iter=max_iter)


# ---------------------------------------------------------------------------
# REML optimization


class _RemlObjective:
    """Score and numeric gradient over rho = log(lambda), with caches."""

    def __init__(self, design, family, max_iter=100):
        self.design = design
        self.family = family
        self.max_iter = max_iter
        self.cache = {}
        self.warm_beta = None
        if family == "gaussian":
            self.cache["G"] = design.X.T @ design.X
            self.cache["b"] = design.X.T @ design.y

    def score(self, rho):
        lam = np.exp(np.asarray(rho, dtype=float))
        if self.family == "gaussian":
            state = _gaussian_fit(self.design, lam, cache=self.cache)
        else:
            state = _binomial_fit(
                self.design, lam, beta0=self.warm_beta, max_iter=self.max_iter
            )
            self.warm_beta = state.coef
        return state.reml

    def gradient(self, rho):
        rho = np.asarray(rho, dtype=float)
        g = np.zeros_like(rho)
        for j in range(len(rho)):
            hi = rho.copy()
            lo = rho.copy()
            hi[j] += FD_STEP
            lo[j] -= FD_STEP
            g[j] = (self.score(hi) - self.score(lo)) / (2.0 * FD_STEP)
        return g


def _optimize_lambda(design, family, starts=REML_START_GRID, max_iter=100):
    if design.n_lambda == 0:
        return np.empty(0), []
    k = design.n_lambda
    diagnostics = []
    best = None
    for start in starts:
        obj = _RemlObjective(design, family, max_iter=max_iter)
        rho0 = np.full(k, float(start))
        try:
            res = sp_optimize.minimize(
                obj.score,
                rho0,
                jac=obj.gradient,
                method="L-BFGS-B",
                bounds=[REML_BOUNDS] * k,
                options={"ftol": 1e-10, "gtol": 1e-5, "maxiter": 200},
            )
            diagnostics.append(
                {"start": start, "score": float(res.fun), "message": str(res.message)}
            )
            if best is None or res.fun < best[0]:
                best = (float(res.fun), res.x.copy())
        except (NumericalError, ConvergenceError) as exc:
            diagnostics.append({"start": start, "error": str(exc)})
    if best is None:
        raise ConvergenceError(
            f"all REML starts failed: {diagnostics}"
        )
    return np.exp(best[1]), diagnostics


# ---------------------------------------------------------------------------
# estimator


class AdditiveModel(BaseEstimator):
    """Penalized additive regression model for one part of the mixture.

    Parameters
    ----------
    formula : ModelFormula
        Terms of the linear predictor and the response column.
    family : {"gaussian", "binomial"}
        Gaussian identity link or binomial logit link.
    lam : array-like or None
        Fixed smoothing parameters (one per penalty).  When None they are
        chosen by minimizing the REML criterion.
    reml_starts : int
        Number of quasi-Newton starting points, spread over log-lambda.
    max_iter : int
        Iteration cap for the penalized IRLS inner loop.

    Attributes
    ----------
    coef_ : ndarray
        Fitted coefficients on the (constrained) design.
    lambda_ : ndarray
        Smoothing parameters in penalty order.
    covariance_ : ndarray
        Bayesian posterior covariance (penalized information inverse
        times the scale).
    edf_ : dict
        Effective degrees of freedom per term.
    scale_ : float
        Residual variance (Gaussian) or 1 (binomial).
    reml_score_ : float
        Minimized REML criterion value.
    """

    def __init__(self, formula, family="gaussian", lam=None, reml_starts=3, max_iter=100):
        self.formula = formula
        self.family = family
        self.lam = lam
        self.reml_starts = reml_starts
        self.max_iter = max_iter

    def fit(self, sample):
        if self.family not in FAMILIES:
            raise UsageError(f"family must be one of {FAMILIES}")
        design = build_design(self.formula, sample)
        if design.n == 0:
            raise DataError("empty fitting sample")
        if self.family == "binomial":
            classes = np.unique(design.y)
            if len(classes) < 2:
                raise DataError(
                    "binomial response has a single class "
                    f"(all {int(classes[0]) if len(classes) else '?'})"
                )
        if self.lam is not None:
            lam = np.asarray(self.lam, dtype=float)
            if lam.ndim == 0:
                lam = np.full(design.n_lambda, float(lam))
            if len(lam) != design.n_lambda:
                raise UsageError(
                    f"expected {design.n_lambda} smoothing parameters, got {len(lam)}"
                )
            if np.any(lam <= 0):
                raise UsageError("smoothing parameters must be positive")
            self.reml_diagnostics_ = []
        else:
            starts = _spread_starts(self.reml_starts)
            lam, self.reml_diagnostics_ = _optimize_lambda(
                design, self.family, starts=starts, max_iter=self.max_iter
            )
        state = _fit_fixed(design, self.family, lam, max_iter=self.max_iter)
        self.design_ = design
        self.coef_ = state.coef
        self.lambda_ = state.lam
        self.covariance_ = state.cov
        self.edf_ = state.edf
        self.edf_total_ = state.edf_total
        self.scale_ = state.scale
        self.reml_score_ = state.reml
        self.deviance_ = state.deviance
        self.loglik_ = state.loglik
        self.penalized_deviance_ = state.penalized_deviance
        self.irls_iterations_ = state.iterations
        self.separation_ = state.separation
        self.fitted_ = state.fitted
        self.n_obs_ = design.n
        return self

    # -- prediction --------------------------------------------------------

    def _rows(self, x, treatment):
        code = self._treatment_code(treatment)
        single = isinstance(x, dict)
        xs = [x] if single else list(x)
        xs = [self._as_point(p) for p in xs]
        M, flags = self.design_.prediction_matrix(xs, code)
        return M, flags, single

    def _as_point(self, x):
        if isinstance(x, dict):
            return x
        arr = np.asarray(x, dtype=float).ravel()
        names = self.design_.covariate_names
        if len(arr) != len(names):
            raise UsageError(
                f"expected {len(names)} covariate values ({names}), got {len(arr)}"
            )
        return dict(zip(names, arr))

    def _treatment_code(self, treatment):
        labels = self.design_.treatment_labels
        if isinstance(treatment, (int, np.integer)):
            if not 0 <= treatment < len(labels):
                raise UsageError(f"treatment code {treatment} out of range")
            return int(treatment)
        if treatment in labels:
            return labels.index(treatment)
        raise UsageError(f"unknown treatment label {treatment!r}")

    def predict(self, x, treatment=0, scale="response", return_extrapolated=False):
        """Predict at covariate point(s) under one treatment label.

        ``x`` is a dict of covariate values, a covariate vector ordered as
        in the fitting sample, or a sequence of dicts.  Points outside a
        spline's training range are clamped to the boundary knot; set
        ``return_extrapolated`` to recover the clamp flags.
        """
        check_is_fitted(self)
        M, flags, single = self._rows(x, treatment)
        eta = M @ self.coef_
        out = expit(eta) if (scale == "response" and self.family == "binomial") else eta
        if single:
            out = float(out[0])
            flags = bool(flags[0])
        if return_extrapolated:
            return out, flags
        return out

    def linear_predictor(self, x, treatment=0):
        return self.predict(x, treatment=treatment, scale="link")

    # -- serialization ------------------------------------------------------

    def to_dict(self):
        check_is_fitted(self)
        d = self.design_
        return {
            "formula": self.formula.to_dict(),
            "family": self.family,
            "coef": self.coef_.tolist(),
            "lambda": self.lambda_.tolist(),
            "scale": self.scale_,
            "edf": self.edf_,
            "edf_total": self.edf_total_,
            "reml_score": self.reml_score_,
            "loglik": self.loglik_,
            "covariance_diag": np.diag(self.covariance_).tolist(),
            "n_obs": self.n_obs_,
            "covariate_names": list(d.covariate_names),
            "treatment_labels": list(d.treatment_labels),
            "terms": [
                {
                    "name": t.name,
                    "start": t.start,
                    "stop": t.stop,
                    "kind": t.kind,
                    "labels": list(t.labels),
                }
                for t in d.terms
            ],
            "builders": [
                {
                    "term": b.term,
                    "kind": b.kind,
                    "covariates": list(b.covariates),
                    "knots": [k.tolist() for k in b.knots],
                    "degrees": list(b.degrees),
                    "transform": b.transform.tolist(),
                    "by_label": b.by_label,
                    "start": b.start,
                    "stop": b.stop,
                    "by_column": b.by_column,
                }
                for b in d.builders
            ],
        }

    @classmethod
    def from_dict(cls, payload):
        from .design import SmoothBuilder, TermColumns

        formula = ModelFormula.from_dict(payload["formula"])
        model = cls(formula=formula, family=payload["family"])
        terms = [
            TermColumns(
                name=t["name"],
                start=t["start"],
                stop=t["stop"],
                kind=t["kind"],
                labels=tuple(t["labels"]),
            )
            for t in payload["terms"]
        ]
        builders = [
            SmoothBuilder(
                term=b["term"],
                kind=b["kind"],
                covariates=tuple(b["covariates"]),
                knots=tuple(np.asarray(k) for k in b["knots"]),
                degrees=tuple(b["degrees"]),
                transform=np.asarray(b["transform"]),
                by_label=b["by_label"],
                start=b["start"],
                stop=b["stop"],
                by_column=b.get("by_column"),
            )
            for b in payload["builders"]
        ]
        coef = np.asarray(payload["coef"], dtype=float)
        model.design_ = Design(
            formula=formula,
            X=np.empty((0, len(coef))),
            y=np.empty(0),
            terms=terms,
            penalties=[],
            builders=builders,
            covariate_names=tuple(payload["covariate_names"]),
            treatment_labels=tuple(payload["treatment_labels"]),
        )
        model.coef_ = coef
        model.lambda_ = np.asarray(payload["lambda"], dtype=float)
        model.scale_ = payload["scale"]
        model.edf_ = payload["edf"]
        model.edf_total_ = payload["edf_total"]
        model.reml_score_ = payload["reml_score"]
        model.loglik_ = payload["loglik"]
        model.covariance_ = np.diag(payload["covariance_diag"])
        model.n_obs_ = payload["n_obs"]
        return model


def _spread_starts(n_starts):
    if n_starts <= 1:
        return (0.0,)
    lo, hi = -6.0, 6.0
    return tuple(np.linspace(lo, hi, n_starts))


# ---------------------------------------------------------------------------
# functional API


def fit_gaussian(formula, sample, lam=None):
    """Fit a Gaussian additive model on a (nonzero-difference) sample.

    With ``lam`` given, coefficients minimize the penalized sum of
    squares at those smoothing parameters; otherwise REML-optimal values
    are used.
    """
    if formula.response != "delta":
        raise UsageError("gaussian part models the 'delta' response")
    return AdditiveModel(formula, family="gaussian", lam=lam).fit(sample)


def fit_binomial_logit(formula, sample, lam=None):
    """Fit a binomial-logit additive model of the zero indicator."""
    if formula.response != "is_zero":
        raise UsageError("binomial part models the 'is_zero' response")
    return AdditiveModel(formula, family="binomial", lam=lam).fit(sample)


def optimize_reml(formula, sample, family):
    """Fit with smoothing parameters minimizing the REML criterion."""
    return AdditiveModel(formula, family=family, lam=None).fit(sample)


def reml_score(lam, formula, sample, family):
    """REML criterion at fixed smoothing parameters (lower is better)."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise UsageError("smoothing parameters must be positive")
    design = build_design(formula, sample)
    if len(lam) != design.n_lambda:
        raise UsageError(
            f"expected {design.n_lambda} smoothing parameters, got {len(lam)}"
        )
    return float(_fit_fixed(design, family, lam).reml)


def reml_score_gradient(lam, formula, sample, family):
    """Central-difference gradient of the REML score w.r.t. log-lambda."""
    design = build_design(formula, sample)
    obj = _RemlObjective(design, family)
    return obj.gradient(np.log(np.asarray(lam, dtype=float)))


# ---------------------------------------------------------------------------
# inference


def term_pvalues(fit):
    """Per-term Wald tests.

    Parametric columns get two-sided z-tests.  Smooth blocks get a
    Wald-type test of the whole coefficient block against the Bayesian
    covariance, rank-truncated at the rounded effective degrees of
    freedom (the convention is recorded in the row's ``df``).

    Returns
    -------
    pandas.DataFrame
        One row per parametric column or smooth block: ``term``,
        ``kind``, ``estimate``, ``se``, ``edf``, ``statistic``, ``df``,
        ``p_value``.
    """
    import pandas as pd

    check_is_fitted(fit)
    design = fit.design_
    rows = []
    for t in design.terms:
        if t.kind == "parametric":
            for offset in range(t.size):
                j = t.start + offset
                if t.labels:
                    label = design.treatment_labels[t.labels[offset]]
                    name = f"{t.name}[{label}]"
                else:
                    name = t.name
                se = float(np.sqrt(max(fit.covariance_[j, j], 0.0)))
                est = float(fit.coef_[j])
                z = est / se if se > 0 else np.inf
                rows.append(
                    {
                        "term": name,
                        "kind": "parametric",
                        "estimate": est,
                        "se": se,
                        "edf": 1.0,
                        "statistic": z,
                        "df": 1.0,
                        "p_value": float(2.0 * norm.sf(abs(z))),
                    }
                )
        else:
            beta = fit.coef_[t.cols]
            V = fit.covariance_[t.cols, t.cols]
            edf = fit.edf_[t.name]
            r = int(min(t.size, max(1, round(edf))))
            vals, vecs = np.linalg.eigh(V)
            vals, vecs = vals[::-1], vecs[:, ::-1]
            keep = vals[:r] > max(vals[0], 0.0) * 1e-12
            inv = (vecs[:, :r][:, keep] / vals[:r][keep]) @ vecs[:, :r][:, keep].T
            stat = float(beta @ inv @ beta)
            df = int(np.sum(keep))
            rows.append(
                {
                    "term": t.name,
                    "kind": "smooth",
                    "estimate": np.nan,
                    "se": np.nan,
                    "edf": float(edf),
                    "statistic": stat,
                    "df": float(df),
                    "p_value": float(chi2.sf(stat, df)),
                }
            )
    return pd.DataFrame(rows)


@dataclass
class AnovaResult:
    statistic: float
    df: float
    df_resid: float | None
    p_value: float


def approx_anova(restricted, general):
    """Approximate test of a restricted model against a nesting one.

    Deviance-difference test on the difference of effective degrees of
    freedom: an F test for the Gaussian family (scale estimated from the
    general model) and a chi-square test for the binomial family.
    """
    check_is_fitted(restricted)
    check_is_fitted(general)
    if restricted.family != general.family:
        raise UsageError("models compare only within one family")
    dr, dg = restricted.design_, general.design_
    if dr.n != dg.n:
        raise UsageError("models were fitted on different samples")
    _check_nested(dr.X, dg.X)
    df = general.edf_total_ - restricted.edf_total_
    stat_raw = restricted.deviance_ - general.deviance_
    if df <= 1e-8 or stat_raw <= 0:
        return AnovaResult(statistic=0.0, df=max(df, 0.0), df_resid=None, p_value=1.0)
    if general.family == "gaussian":
        df_resid = max(dg.n - general.edf_total_, 1.0)
        fstat = (stat_raw / df) / general.scale_
        return AnovaResult(
            statistic=float(fstat),
            df=float(df),
            df_resid=float(df_resid),
            p_value=float(f_dist.sf(fstat, df, df_resid)),
        )
    return AnovaResult(
        statistic=float(stat_raw),
        df=float(df),
        df_resid=None,
        p_value=float(chi2.sf(stat_raw, df)),
    )


def _check_nested(X_restricted, X_general, tol=1e-6):
    sol, *_ = np.linalg.lstsq(X_general, X_restricted, rcond=None)
    resid = X_restricted - X_general @ sol
    scale = max(np.abs(X_restricted).max(), 1.0)
    if np.abs(resid).max() > tol * scale:
        raise UsageError(
            "restricted design is not nested in the general design "
            f"(max projection residual {np.abs(resid).max():.2e})"
        )
