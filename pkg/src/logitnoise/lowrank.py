"""Gaussian algebra for low-rank-plus-floor square-root covariances.

The covariance is parametrized through its symmetric square root

    Sigma^{1/2} = sum_r c_r c_r^T + lambda * I,        Sigma = (Sigma^{1/2})^2,

with a strictly positive floor lambda, so Sigma is positive definite for any
factors.  All operations cost O(d * R^2) using the Woodbury identity (the
rank-1 case is the plain Sherman-Morrison formula); nothing here ever builds
a dense d x d matrix except the explicit ``dense_*`` helpers used for
debugging and tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# dense_cov / dense_sqrt refuse dimensions above this; they exist for
# small-scale verification only.
DENSE_DIM_LIMIT = 64


@dataclass(frozen=True)
class LowRankCov:
    """Square-root factors plus floor: Sigma^{1/2} = factors^T factors + floor * I.

    Attributes
    ----------
    factors : np.ndarray
        Shape (R, d); a 1-D array of length d is accepted as R = 1.
    floor : float
        lambda > 0; keeps the square-root factor positive definite.
    """

    factors: np.ndarray
    floor: float

    def __post_init__(self) -> None:
        f = np.array(self.factors, dtype=np.float64)
        if f.ndim == 1:
            f = f[None, :]
        if f.ndim != 2 or f.shape[1] < 1:
            raise ValueError(f"factors must have shape (R, d), got {np.shape(self.factors)}")
        if not np.all(np.isfinite(f)):
            raise ValueError("factors have non-finite entries")
        if not (np.isfinite(self.floor) and self.floor > 0):
            raise ValueError(f"floor (lambda) must be finite and > 0, got {self.floor!r}")
        f.setflags(write=False)
        object.__setattr__(self, "factors", f)

    @property
    def dim(self) -> int:
        return self.factors.shape[1]

    @property
    def rank(self) -> int:
        return self.factors.shape[0]


@dataclass(frozen=True)
class GaussianParams:
    """Mean vector plus a :class:`LowRankCov` covariance square root."""

    mean: np.ndarray
    cov: LowRankCov

    def __post_init__(self) -> None:
        m = np.array(self.mean, dtype=np.float64)
        if m.ndim != 1:
            raise ValueError(f"mean must be 1-D, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("mean has non-finite entries")
        if m.size != self.cov.dim:
            raise ValueError(f"mean dimension {m.size} does not match covariance dimension {self.cov.dim}")
        m.setflags(write=False)
        object.__setattr__(self, "mean", m)


def _as_vector(x, dim: int, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.shape != (dim,):
        raise ValueError(f"{name} must have shape ({dim},), got {v.shape}")
    return v


def sqrt_apply(cov: LowRankCov, x) -> np.ndarray:
    """Sigma^{1/2} @ x without forming the matrix."""
    x = _as_vector(x, cov.dim, "x")
    c = cov.factors
    return c.T @ (c @ x) + cov.floor * x


def sqrt_solve(cov: LowRankCov, r) -> np.ndarray:
    """Solve Sigma^{1/2} x = r via the Woodbury identity.

    x = (r - C^T (lambda I_R + C C^T)^{-1} C r) / lambda, which for R = 1 is
    the Sherman-Morrison formula (r - c (c.r)/(lambda + c.c)) / lambda.
    """
    r = _as_vector(r, cov.dim, "r")
    c = cov.factors
    lam = cov.floor
    cap = lam * np.eye(cov.rank) + c @ c.T
    return (r - c.T @ np.linalg.solve(cap, c @ r)) / lam


def log_det(cov: LowRankCov) -> float:
    """log det Sigma = 2 log det Sigma^{1/2}.

    det(lambda I_d + C^T C) = lambda^(d-R) det(lambda I_R + C C^T), so only an
    R x R determinant is needed.  For R = 1 this is
    2 [(d-1) log lambda + log(lambda + |c|^2)].
    """
    c = cov.factors
    lam = cov.floor
    cap = lam * np.eye(cov.rank) + c @ c.T
    sign, ld = np.linalg.slogdet(cap)
    if sign <= 0:
        raise FloatingPointError("square-root factor lost positive definiteness")
    return 2.0 * ((cov.dim - cov.rank) * float(np.log(lam)) + float(ld))


def mahalanobis(params: GaussianParams, y) -> float:
    """(y - mean)^T Sigma^{-1} (y - mean) = |Sigma^{-1/2} (y - mean)|^2."""
    y = _as_vector(y, params.cov.dim, "y")
    x = sqrt_solve(params.cov, y - params.mean)
    return float(x @ x)


def gaussian_nll(params: GaussianParams, y, include_constants: bool = False) -> float:
    """Negative Gaussian log-density at y.

    0.5 * mahalanobis + 0.5 * log det Sigma, plus (d/2) log(2 pi) when
    ``include_constants`` is set.
    """
    nll = 0.5 * mahalanobis(params, y) + 0.5 * log_det(params.cov)
    if include_constants:
        nll += 0.5 * params.cov.dim * float(np.log(2.0 * np.pi))
    return float(nll)


def sample(params: GaussianParams, rng: np.random.Generator) -> np.ndarray:
    """Draw mean + Sigma^{1/2} eps with eps ~ N(0, I)."""
    eps = rng.standard_normal(params.cov.dim)
    return params.mean + sqrt_apply(params.cov, eps)


def dense_sqrt(cov: LowRankCov) -> np.ndarray:
    """Materialize Sigma^{1/2} (small dimensions only)."""
    if cov.dim > DENSE_DIM_LIMIT:
        raise ValueError(f"refusing to build a dense {cov.dim} x {cov.dim} matrix (limit {DENSE_DIM_LIMIT})")
    c = cov.factors
    return c.T @ c + cov.floor * np.eye(cov.dim)


def dense_cov(cov: LowRankCov) -> np.ndarray:
    """Materialize Sigma = (Sigma^{1/2})^2 (small dimensions only)."""
    a = dense_sqrt(cov)
    return a @ a
