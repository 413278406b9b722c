import numpy as np
import pytest

from zipanel.data import DiffSample


def make_sample(delta, x=None, treatment=None, labels=("none", "T"), period=1,
                covariate_names=None, extra_covariates=None):
    """Hand-rolled DiffSample for unit tests."""
    delta = np.asarray(delta, dtype=float)
    n = len(delta)
    if x is None:
        x = np.linspace(0.0, 1.0, n)
    x = np.asarray(x, dtype=float)
    cols = [x] if x.ndim == 1 else list(x.T)
    if extra_covariates is not None:
        cols += [np.asarray(c, dtype=float) for c in extra_covariates]
    covariates = np.column_stack(cols)
    if covariate_names is None:
        covariate_names = tuple(f"X{j}" for j in range(covariates.shape[1]))
        if covariates.shape[1] == 1:
            covariate_names = ("X",)
    if treatment is None:
        treatment = np.zeros(n, dtype=int)
        labels = labels[:1]
    treatment = np.asarray(treatment, dtype=int)
    return DiffSample(
        period=period,
        period_index=1,
        t0_index=0,
        delta=delta,
        is_zero=delta == 0,
        treatment=treatment,
        treatment_labels=tuple(labels),
        covariates=covariates,
        covariate_names=tuple(covariate_names),
        unit_ids=np.array([f"u{i}" for i in range(n)]),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
