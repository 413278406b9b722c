"""Penalized B-spline building blocks.

Univariate bases on quantile knots, difference penalties, row-wise
Kronecker (tensor-product) bases with separate marginal penalties, and
sum-to-zero identifiability constraints applied by reparameterization.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import BSpline

from ._validation import as_float_vector
from .errors import ConfigError, NumericalError, UsageError

__all__ = [
    "SmoothSpec",
    "DesignBlock",
    "bspline_basis",
    "quantile_knots",
    "difference_penalty",
    "univariate_block",
    "tensor_basis",
    "apply_centering_constraint",
]


@dataclass(frozen=True)
class SmoothSpec:
    """Declarative configuration of one smooth term.

    Parameters
    ----------
    covariate : str or tuple of two str
        Covariate name; a pair of names for a bivariate tensor smooth.
    basis_dim : int or tuple of two int
        Marginal basis size K (pair of sizes for a tensor smooth).
    degree : int
        Spline degree (cubic by default).
    penalty_order : int
        Order of the difference penalty (second differences by default).
    kind : {"univariate", "tensor"}
    """

    covariate: str | tuple[str, str]
    basis_dim: int | tuple[int, int] = 10
    degree: int = 3
    penalty_order: int = 2
    kind: str = "univariate"

    def __post_init__(self):
        if self.kind not in ("univariate", "tensor"):
            raise ConfigError(f"unknown smooth kind {self.kind!r}")
        if self.kind == "univariate":
            if not isinstance(self.covariate, str):
                raise ConfigError("univariate smooth takes a single covariate name")
            if self.basis_dim <= self.degree + 1:
                raise ConfigError(
                    f"basis_dim must exceed degree+1, got {self.basis_dim}"
                )
        else:
            covs = tuple(self.covariate)
            dims = self.basis_dim
            if np.isscalar(dims):
                dims = (int(dims), int(dims))
            dims = tuple(int(d) for d in dims)
            if len(covs) != 2 or len(dims) != 2:
                raise ConfigError("tensor smooth takes two covariates and two dims")
            if min(dims) < 4:
                raise ConfigError(f"tensor marginal dims must be >= 4, got {dims}")
            object.__setattr__(self, "covariate", covs)
            object.__setattr__(self, "basis_dim", dims)

    @property
    def name(self):
        if self.kind == "tensor":
            return "te({},{})".format(*self.covariate)
        return f"s({self.covariate})"

    def to_dict(self):
        return {
            "covariate": list(self.covariate)
            if self.kind == "tensor"
            else self.covariate,
            "basis_dim": list(self.basis_dim)
            if self.kind == "tensor"
            else self.basis_dim,
            "degree": self.degree,
            "penalty_order": self.penalty_order,
            "kind": self.kind,
        }

    @classmethod
    def from_dict(cls, d):
        cov = d["covariate"]
        dim = d.get("basis_dim", 10)
        if isinstance(cov, (list, tuple)):
            cov = tuple(cov)
        if isinstance(dim, (list, tuple)):
            dim = tuple(dim)
        return cls(
            covariate=cov,
            basis_dim=dim,
            degree=d.get("degree", 3),
            penalty_order=d.get("penalty_order", 2),
            kind=d.get("kind", "univariate"),
        )


@dataclass(frozen=True)
class DesignBlock:
    """Realized penalized basis for one smooth term.

    `basis` is n x q after any constraint; `penalties` holds one matrix for
    a univariate block and two (marginal) matrices for a tensor block, each
    tuned by its own smoothing parameter.  `transform` is the q_raw x q
    reparameterization applied by the centering constraint (identity when
    unconstrained) and is required to rebuild the basis at new points.
    """

    basis: np.ndarray
    penalties: tuple[np.ndarray, ...]
    knots: tuple[np.ndarray, ...]
    degrees: tuple[int, ...]
    kind: str = "univariate"
    constraint_applied: bool = False
    transform: np.ndarray | None = None

    @property
    def size(self):
        return self.basis.shape[1]


def bspline_basis(x, knots, degree, return_clamped=False):
    """Evaluate a B-spline basis at the points ``x``.

    ``knots`` must be nondecreasing with ``degree + 1`` repeats at each
    boundary.  Points outside the boundary knots are clamped to the
    boundary before evaluation.  Rows sum to one (partition of unity).

    Parameters
    ----------
    x : array-like
    knots : array-like
        Full knot vector including boundary repeats.
    degree : int
    return_clamped : bool
        Also return the boolean mask of clamped (out-of-range) points.

    Returns
    -------
    ndarray of shape (len(x), len(knots) - degree - 1)
    """
    x = as_float_vector(x, "x")
    knots = np.asarray(knots, dtype=float)
    if np.any(np.diff(knots) < 0):
        raise ConfigError("knots must be nondecreasing")
    if len(knots) < 2 * (degree + 1):
        raise ConfigError(
            f"need at least {2 * (degree + 1)} knots for degree {degree}, "
            f"got {len(knots)}"
        )
    lo, hi = knots[degree], knots[-degree - 1]
    clamped = (x < lo) | (x > hi)
    xc = np.clip(x, lo, hi)
    design = BSpline.design_matrix(xc, knots, degree, extrapolate=False).toarray()
    if return_clamped:
        return design, clamped
    return design


def quantile_knots(x, basis_dim, degree=3):
    """Knot vector with interior knots at quantiles of ``x``.

    Produces ``basis_dim`` basis functions: ``basis_dim - degree - 1``
    interior knots plus ``degree + 1`` repeats of each boundary.  Falls
    back to evenly spaced interior knots when quantiles collide (heavily
    tied covariates).
    """
    x = as_float_vector(x, "x")
    lo, hi = float(np.min(x)), float(np.max(x))
    if hi <= lo:
        raise ConfigError("cannot place knots on a constant covariate")
    n_interior = basis_dim - degree - 1
    if n_interior < 0:
        raise ConfigError("basis_dim too small for degree")
    probs = np.arange(1, n_interior + 1) / (n_interior + 1)
    interior = np.quantile(x, probs) if n_interior else np.array([])
    # ties in skewed covariates can collapse quantiles onto each other
    if n_interior and (
        len(np.unique(interior)) < n_interior
        or interior[0] <= lo
        or interior[-1] >= hi
    ):
        interior = np.linspace(lo, hi, n_interior + 2)[1:-1]
    return np.concatenate(
        [np.full(degree + 1, lo), interior, np.full(degree + 1, hi)]
    )


def difference_penalty(q, order=2):
    """Penalty matrix S = D'D for the order-th difference matrix D.

    S is symmetric PSD with rank ``q - order``; its null space holds the
    polynomials of degree < order, so constants (and lines, for order 2)
    are unpenalized.
    """
    if order < 1:
        raise ConfigError("penalty order must be >= 1")
    if order >= q:
        raise ConfigError(f"penalty order {order} must be < basis size {q}")
    D = np.diff(np.eye(q), n=order, axis=0)
    return D.T @ D


def univariate_block(x, spec):
    """Build the penalized design block of a univariate smooth from data."""
    knots = quantile_knots(x, spec.basis_dim, spec.degree)
    basis = bspline_basis(x, knots, spec.degree)
    penalty = difference_penalty(basis.shape[1], spec.penalty_order)
    return DesignBlock(
        basis=basis,
        penalties=(penalty,),
        knots=(knots,),
        degrees=(spec.degree,),
        kind="univariate",
    )


def tensor_basis(bx, by):
    """Row-wise Kronecker product of two univariate blocks.

    The result has ``qx * qy`` columns and two penalty components,
    ``Sx (x) I`` and ``I (x) Sy``, kept separate so that each direction
    gets its own smoothing parameter (non-isotropic smoothing).
    """
    if bx.kind != "univariate" or by.kind != "univariate":
        raise UsageError("tensor_basis expects two univariate blocks")
    if bx.constraint_applied or by.constraint_applied:
        raise UsageError("apply constraints after forming the tensor product")
    if bx.basis.shape[0] != by.basis.shape[0]:
        raise UsageError(
            "marginal bases evaluated on different sample sizes: "
            f"{bx.basis.shape[0]} vs {by.basis.shape[0]}"
        )
    qx, qy = bx.size, by.size
    basis = (bx.basis[:, :, None] * by.basis[:, None, :]).reshape(-1, qx * qy)
    pen_x = np.kron(bx.penalties[0], np.eye(qy))
    pen_y = np.kron(np.eye(qx), by.penalties[0])
    return DesignBlock(
        basis=basis,
        penalties=(pen_x, pen_y),
        knots=bx.knots + by.knots,
        degrees=bx.degrees + by.degrees,
        kind="tensor",
    )


def apply_centering_constraint(block, mask=None):
    """Reparameterize a block so its fit averages to zero on a subsample.

    One basis dimension is absorbed: with c the vector of column sums over
    the masked rows, coefficients are restricted to the null space of c'
    via an orthonormal transform Z from a QR decomposition, so every
    column of the new basis sums to zero over the mask.  Penalties are
    transformed consistently (Z'SZ) and fitted values are unchanged up to
    the absorbed constant.
    """
    if block.constraint_applied:
        raise UsageError("centering constraint already applied to this block")
    n = block.basis.shape[0]
    if mask is None:
        mask = np.ones(n, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (n,):
        raise UsageError("subsample mask length does not match basis rows")
    if not mask.any():
        raise UsageError("centering mask selects no rows")
    c = block.basis[mask].sum(axis=0)
    if np.linalg.norm(c) < 1e-12:
        raise NumericalError(
            "cannot center block: column sums are numerically zero "
            f"(max |sum| = {np.max(np.abs(c)):.2e})"
        )
    # complete QR of c: first column spans c, the rest span its null space
    Q, _ = np.linalg.qr(c.reshape(-1, 1), mode="complete")
    Z = Q[:, 1:]
    return replace(
        block,
        basis=block.basis @ Z,
        penalties=tuple(Z.T @ S @ Z for S in block.penalties),
        constraint_applied=True,
        transform=Z,
    )
