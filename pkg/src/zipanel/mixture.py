"""Two-part mixture of a point mass at zero and a Gaussian response.

The likelihood of a mixture of a discrete atom and a continuous density
factorizes, so the zero part (binomial logit on the full sample) and the
continuous part (Gaussian additive model on the nonzero-difference
subsample) are fitted separately and bound together here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from sklearn.base import BaseEstimator

from ._validation import check_is_fitted
from .errors import DataError, UsageError
from .gam import AdditiveModel
from .design import ModelFormula

__all__ = [
    "MixtureModel",
    "fit_mixture",
    "predict_zero_prob",
    "predict_cont_mean",
    "save_bundle",
    "load_bundle",
]


class MixtureModel(BaseEstimator):
    """Per-period two-part model: zero indicator and continuous response.

    Parameters
    ----------
    zero_formula : ModelFormula
        Logit model of the exact-zero indicator (response "is_zero"),
        fitted on the full sample.
    cont_formula : ModelFormula
        Gaussian model of the difference (response "delta"), fitted
        exclusively on the rows with a nonzero difference.
    lam_zero, lam_cont : array-like or None
        Fixed smoothing parameters for either part; None selects them by
        REML.
    """

    def __init__(self, zero_formula, cont_formula, lam_zero=None, lam_cont=None):
        self.zero_formula = zero_formula
        self.cont_formula = cont_formula
        self.lam_zero = lam_zero
        self.lam_cont = lam_cont

    def fit(self, sample):
        if self.zero_formula.response != "is_zero":
            raise UsageError("zero_formula must model the 'is_zero' response")
        if self.cont_formula.response != "delta":
            raise UsageError("cont_formula must model the 'delta' response")
        n_zero = int(np.sum(sample.is_zero))
        if n_zero == 0:
            raise DataError(
                "sample has no exact zeros: the mixture degenerates, fit the "
                "continuous part alone"
            )
        if n_zero == sample.n:
            raise DataError("sample is all zeros: nothing for the continuous part")
        cont_sample = sample.restrict_nonzero()
        self.zero_part_ = AdditiveModel(
            self.zero_formula, family="binomial", lam=self.lam_zero
        ).fit(sample)
        self.cont_part_ = AdditiveModel(
            self.cont_formula, family="gaussian", lam=self.lam_cont
        ).fit(cont_sample)
        self.period_ = sample.period
        self.period_index_ = sample.period_index
        self.pre_program_ = sample.pre_program
        self.subsample_sizes_ = (sample.n, cont_sample.n)
        self.treatment_labels_ = sample.treatment_labels
        self.loglik_ = self.zero_part_.loglik_ + self.cont_part_.loglik_
        return self

    @property
    def coef_(self):  # fitted marker for check_is_fitted
        check_is_fitted(self, "zero_part_")
        return self.cont_part_.coef_

    def predict_zero_prob(self, x, r=0, return_extrapolated=False):
        """P(no variation | x, treatment r) through the inverse logit."""
        check_is_fitted(self, "zero_part_")
        return self.zero_part_.predict(
            x, treatment=r, scale="response", return_extrapolated=return_extrapolated
        )

    def predict_cont_mean(self, x, r=0, return_extrapolated=False):
        """E[difference | x, treatment r, difference != 0]."""
        check_is_fitted(self, "cont_part_")
        return self.cont_part_.predict(
            x, treatment=r, scale="response", return_extrapolated=return_extrapolated
        )

    def to_dict(self):
        check_is_fitted(self, "zero_part_")
        return {
            "period": self.period_,
            "period_index": self.period_index_,
            "pre_program": self.pre_program_,
            "subsample_sizes": list(self.subsample_sizes_),
            "treatment_labels": list(self.treatment_labels_),
            "loglik": self.loglik_,
            "zero_part": self.zero_part_.to_dict(),
            "cont_part": self.cont_part_.to_dict(),
        }

    @classmethod
    def from_dict(cls, payload):
        zero = AdditiveModel.from_dict(payload["zero_part"])
        cont = AdditiveModel.from_dict(payload["cont_part"])
        model = cls(zero_formula=zero.formula, cont_formula=cont.formula)
        model.zero_part_ = zero
        model.cont_part_ = cont
        model.period_ = payload["period"]
        model.period_index_ = payload["period_index"]
        model.pre_program_ = payload["pre_program"]
        model.subsample_sizes_ = tuple(payload["subsample_sizes"])
        model.treatment_labels_ = tuple(payload["treatment_labels"])
        model.loglik_ = payload["loglik"]
        return model


def fit_mixture(sample, zero_formula, cont_formula, lam_zero=None, lam_cont=None):
    """Fit the two-part model on one per-period difference sample.

    The total log-likelihood is the zero-part log-likelihood plus the
    continuous-part log-likelihood; the factorization is exact.
    """
    return MixtureModel(
        zero_formula=zero_formula,
        cont_formula=cont_formula,
        lam_zero=lam_zero,
        lam_cont=lam_cont,
    ).fit(sample)


def predict_zero_prob(fit, x, r=0):
    return fit.predict_zero_prob(x, r=r)


def predict_cont_mean(fit, x, r=0):
    return fit.predict_cont_mean(x, r=r)


def save_bundle(fits, path, metadata=None):
    """Serialize per-period mixture fits to a single JSON model file."""
    payload = {
        "metadata": metadata or {},
        "periods": [fit.to_dict() for fit in fits],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_bundle(path):
    """Load per-period mixture fits saved by `save_bundle`."""
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    fits = [MixtureModel.from_dict(d) for d in payload["periods"]]
    return fits, payload.get("metadata", {})
