"""Model formulas and their realized design matrices.

A `ModelFormula` declares the parametric terms (intercept, treatment
indicators, linear covariates, linear treatment interactions) and smooth
terms of one additive model part.  `build_design` realizes it on a
`DiffSample`: it assembles the design matrix, the penalty blocks with
their structural ranks, and per-term builders that can re-evaluate the
design at new covariate points for prediction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, UsageError
from .splines import (
    SmoothSpec,
    apply_centering_constraint,
    bspline_basis,
    tensor_basis,
    univariate_block,
)

__all__ = ["ModelFormula", "SmoothTerm", "Design", "build_design"]

RESPONSES = ("delta", "is_zero")


@dataclass(frozen=True)
class SmoothTerm:
    """A smooth term of a formula.

    ``by_treatment`` realizes one copy per non-reference treatment label,
    multiplied by that label's indicator.  ``by`` multiplies the block by
    an arbitrary covariate column instead (typically a 0/1 dummy), which
    gates the smooth to the rows where that column is nonzero.
    """

    spec: SmoothSpec
    by_treatment: bool = False
    by: str | None = None

    def __post_init__(self):
        if self.by_treatment and self.by is not None:
            raise ConfigError("a smooth cannot have both by_treatment and by")

    def to_dict(self):
        return {
            "spec": self.spec.to_dict(),
            "by_treatment": self.by_treatment,
            "by": self.by,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            spec=SmoothSpec.from_dict(d["spec"]),
            by_treatment=bool(d.get("by_treatment", False)),
            by=d.get("by"),
        )


@dataclass(frozen=True)
class ModelFormula:
    """Declarative model structure for one part of the mixture.

    Parameters
    ----------
    response : {"delta", "is_zero"}
        Which sample column the model explains.
    treatment_effects : bool
        Include one indicator per non-reference treatment label.
    linear : tuple of str
        Covariates entering linearly.
    linear_by_treatment : tuple of str
        Covariates entering linearly, interacted with each treatment
        indicator.
    smooths : tuple of SmoothTerm
        Penalized smooth terms.
    """

    response: str
    treatment_effects: bool = True
    linear: tuple = ()
    linear_by_treatment: tuple = ()
    smooths: tuple = ()

    def __post_init__(self):
        if self.response not in RESPONSES:
            raise ConfigError(f"response must be one of {RESPONSES}")
        object.__setattr__(self, "linear", tuple(self.linear))
        object.__setattr__(self, "linear_by_treatment", tuple(self.linear_by_treatment))
        smooths = tuple(
            t if isinstance(t, SmoothTerm) else SmoothTerm(t) for t in self.smooths
        )
        object.__setattr__(self, "smooths", smooths)
        names = self.term_names()
        if len(names) != len(set(names)):
            raise ConfigError(f"duplicate term names in formula: {names}")

    def term_names(self):
        names = ["intercept"]
        if self.treatment_effects:
            names.append("treatment")
        names += list(self.linear)
        names += [f"{c}:treatment" for c in self.linear_by_treatment]
        for term in self.smooths:
            base = term.spec.name
            if term.by_treatment:
                names.append(base + ":treatment")
            elif term.by is not None:
                names.append(f"{base}:by[{term.by}]")
            else:
                names.append(base)
        return names

    def to_dict(self):
        return {
            "response": self.response,
            "treatment_effects": self.treatment_effects,
            "linear": list(self.linear),
            "linear_by_treatment": list(self.linear_by_treatment),
            "smooths": [t.to_dict() for t in self.smooths],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            response=d["response"],
            treatment_effects=bool(d.get("treatment_effects", True)),
            linear=tuple(d.get("linear", ())),
            linear_by_treatment=tuple(d.get("linear_by_treatment", ())),
            smooths=tuple(SmoothTerm.from_dict(t) for t in d.get("smooths", ())),
        )


@dataclass
class TermColumns:
    """Column bookkeeping for one named term."""

    name: str
    start: int
    stop: int
    kind: str  # "parametric" | "smooth"
    labels: tuple = ()  # per-column labels for parametric terms

    @property
    def cols(self):
        return slice(self.start, self.stop)

    @property
    def size(self):
        return self.stop - self.start


@dataclass
class PenaltyBlock:
    """One penalty component: a PSD matrix acting on a column range."""

    start: int
    stop: int
    matrix: np.ndarray
    rank: int
    term: str

    @property
    def cols(self):
        return slice(self.start, self.stop)


@dataclass
class SmoothBuilder:
    """Everything needed to re-evaluate one smooth block at new points."""

    term: str
    kind: str
    covariates: tuple
    knots: tuple
    degrees: tuple
    transform: np.ndarray
    by_label: int | None
    start: int
    stop: int
    by_column: str | None = None

    def eval(self, x_by_name, treatment_code):
        """Design-row segment at one covariate point; returns (values, clamped)."""
        width = self.stop - self.start
        if self.by_label is not None and treatment_code != self.by_label:
            return np.zeros(width), False
        gate = 1.0
        if self.by_column is not None:
            if self.by_column not in x_by_name:
                raise UsageError(
                    f"prediction point missing 'by' covariate {self.by_column!r}"
                )
            gate = float(x_by_name[self.by_column])
            if gate == 0.0:
                return np.zeros(width), False
        values = []
        clamped = False
        for cov, knots, degree in zip(self.covariates, self.knots, self.degrees):
            if cov not in x_by_name:
                raise UsageError(f"prediction point missing covariate {cov!r}")
            b, c = bspline_basis(
                np.atleast_1d(float(x_by_name[cov])), knots, degree, return_clamped=True
            )
            values.append(b[0])
            clamped = clamped or bool(c[0])
        if self.kind == "tensor":
            raw = np.outer(values[0], values[1]).ravel()
        else:
            raw = values[0]
        return gate * (raw @ self.transform), clamped


@dataclass
class Design:
    """A formula realized on a sample."""

    formula: ModelFormula
    X: np.ndarray
    y: np.ndarray
    terms: list
    penalties: list
    builders: list
    covariate_names: tuple
    treatment_labels: tuple
    dropped_terms: tuple = ()

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def n_lambda(self):
        return len(self.penalties)

    def penalty_groups(self):
        """Penalty blocks grouped by shared column range, with the
        structural rank of each group's summed penalty."""
        groups = {}
        for pb in self.penalties:
            groups.setdefault((pb.start, pb.stop), []).append(pb)
        out = []
        for (start, stop), blocks in sorted(groups.items()):
            total = blocks[0].matrix.copy()
            for pb in blocks[1:]:
                total = total + pb.matrix
            out.append(((start, stop), blocks, _psd_rank(total)))
        return out

    @property
    def null_dim(self):
        """Number of unpenalized coefficient directions."""
        return self.p - sum(rank for _, _, rank in self.penalty_groups())

    def term(self, name):
        for t in self.terms:
            if t.name == name:
                return t
        raise UsageError(f"unknown term {name!r}")

    def prediction_row(self, x_by_name, treatment_code):
        """Full design row at one covariate point under one treatment."""
        row = np.zeros(self.p)
        clamped = False
        for t in self.terms:
            if t.kind != "parametric":
                continue
            row[t.cols] = _parametric_row(t, x_by_name, treatment_code)
        for b in self.builders:
            seg, c = b.eval(x_by_name, treatment_code)
            row[b.start : b.stop] = seg
            clamped = clamped or c
        return row, clamped

    def prediction_matrix(self, xs_by_name, treatment_code):
        """Design rows for a sequence of covariate dicts (single label)."""
        rows = []
        flags = []
        for x in xs_by_name:
            r, c = self.prediction_row(x, treatment_code)
            rows.append(r)
            flags.append(c)
        return np.asarray(rows), np.asarray(flags)


def _parametric_row(term, x_by_name, treatment_code):
    if term.name == "intercept":
        return np.array([1.0])
    if term.name == "treatment":
        out = np.zeros(term.size)
        for j, code in enumerate(term.labels):
            if code == treatment_code:
                out[j] = 1.0
        return out
    if term.name.endswith(":treatment"):
        cov = term.name[: -len(":treatment")]
        if cov not in x_by_name:
            raise UsageError(f"prediction point missing covariate {cov!r}")
        out = np.zeros(term.size)
        for j, code in enumerate(term.labels):
            if code == treatment_code:
                out[j] = float(x_by_name[cov])
        return out
    if term.name not in x_by_name:
        raise UsageError(f"prediction point missing covariate {term.name!r}")
    return np.array([float(x_by_name[term.name])])


def _psd_rank(S, rtol=1e-9):
    vals = np.linalg.eigvalsh(S)
    if len(vals) == 0:
        return 0
    tol = max(vals[-1], 0.0) * rtol + 1e-300
    return int(np.sum(vals > tol))


def build_design(formula, sample):
    """Realize ``formula`` on ``sample``.

    Smooth covariates that are constant on the fitting subsample are
    dropped with a warning.  Treatment-specific smooths are centered over
    their own group's rows; baseline smooths over the whole sample.
    """
    n = sample.n
    labels_present = np.unique(sample.treatment)
    non_ref = [c for c in range(1, sample.n_treatments)]
    if formula.treatment_effects or formula.linear_by_treatment or any(
        t.by_treatment for t in formula.smooths
    ):
        missing = [c for c in non_ref if c not in labels_present]
        if missing:
            names = [sample.treatment_labels[c] for c in missing]
            raise DataError(
                f"treatment groups {names} absent from the fitting sample"
            )

    if formula.response == "delta":
        y = np.asarray(sample.delta, dtype=float)
    else:
        y = sample.is_zero.astype(float)

    columns = []
    terms = []
    penalties = []
    builders = []
    dropped = []
    pos = 0

    def add_parametric(name, block, labels=()):
        nonlocal pos
        columns.append(block)
        terms.append(
            TermColumns(
                name=name,
                start=pos,
                stop=pos + block.shape[1],
                kind="parametric",
                labels=tuple(labels),
            )
        )
        pos += block.shape[1]

    add_parametric("intercept", np.ones((n, 1)))

    if formula.treatment_effects:
        dummies = np.column_stack(
            [(sample.treatment == c).astype(float) for c in non_ref]
        )
        add_parametric("treatment", dummies, labels=non_ref)

    for cov in formula.linear:
        add_parametric(cov, sample.covariate(cov).reshape(-1, 1))

    for cov in formula.linear_by_treatment:
        x = sample.covariate(cov)
        block = np.column_stack(
            [np.where(sample.treatment == c, x, 0.0) for c in non_ref]
        )
        add_parametric(f"{cov}:treatment", block, labels=non_ref)

    for term in formula.smooths:
        spec = term.spec
        covs = (spec.covariate,) if spec.kind == "univariate" else spec.covariate
        if any(np.ptp(sample.covariate(c)) == 0 for c in covs):
            warnings.warn(
                f"smooth {spec.name} dropped: covariate constant on the "
                "fitting subsample",
                UserWarning,
                stacklevel=2,
            )
            dropped.append(spec.name)
            continue
        by_labels = non_ref if term.by_treatment else [None]
        for code in by_labels:
            if code is not None:
                name = f"{spec.name}:treatment[{sample.treatment_labels[code]}]"
                gate = (sample.treatment == code).astype(float)
            elif term.by is not None:
                name = f"{spec.name}:by[{term.by}]"
                gate = sample.covariate(term.by)
            else:
                name = spec.name
                gate = None
            block = _build_block(spec, sample)
            mask = None if gate is None else gate != 0
            if mask is not None and not mask.any():
                warnings.warn(
                    f"smooth {name} dropped: gating column is all zero",
                    UserWarning,
                    stacklevel=2,
                )
                dropped.append(name)
                continue
            block = apply_centering_constraint(block, mask)
            basis = block.basis if gate is None else block.basis * gate[:, None]
            columns.append(basis)
            terms.append(
                TermColumns(name=name, start=pos, stop=pos + basis.shape[1], kind="smooth")
            )
            for S in block.penalties:
                penalties.append(
                    PenaltyBlock(
                        start=pos,
                        stop=pos + basis.shape[1],
                        matrix=S,
                        rank=_psd_rank(S),
                        term=name,
                    )
                )
            builders.append(
                SmoothBuilder(
                    term=name,
                    kind=spec.kind,
                    covariates=covs,
                    knots=block.knots,
                    degrees=block.degrees,
                    transform=block.transform,
                    by_label=code,
                    start=pos,
                    stop=pos + basis.shape[1],
                    by_column=term.by,
                )
            )
            pos += basis.shape[1]

    X = np.hstack(columns) if columns else np.empty((n, 0))
    return Design(
        formula=formula,
        X=X,
        y=y,
        terms=terms,
        penalties=penalties,
        builders=builders,
        covariate_names=sample.covariate_names,
        treatment_labels=sample.treatment_labels,
        dropped_terms=tuple(dropped),
    )


def _build_block(spec, sample):
    if spec.kind == "univariate":
        return univariate_block(sample.covariate(spec.covariate), spec)
    bx = univariate_block(
        sample.covariate(spec.covariate[0]),
        SmoothSpec(
            covariate=spec.covariate[0],
            basis_dim=spec.basis_dim[0],
            degree=spec.degree,
            penalty_order=spec.penalty_order,
        ),
    )
    by = univariate_block(
        sample.covariate(spec.covariate[1]),
        SmoothSpec(
            covariate=spec.covariate[1],
            basis_dim=spec.basis_dim[1],
            degree=spec.degree,
            penalty_order=spec.penalty_order,
        ),
    )
    return tensor_basis(bx, by)
