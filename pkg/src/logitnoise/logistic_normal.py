"""Logistic-normal likelihood: density, training loss, gradients, prediction.

A classifier head predicts the mean (and optionally a covariance factor) of a
Gaussian in logit space; pushing that Gaussian through the tempered
softmax-centered map yields a logistic-normal distribution over the simplex.
Training maximizes the log-density of a fixed smoothed target point per label
(constants dropped), which reduces to a Mahalanobis term plus a log-det term:

    loss = 0.5 (y - mu)^T Sigma^{-1} (y - mu) + 0.5 log det Sigma.

The covariance is built from the network's raw head output according to a
``SigmaSpec``; all gradients here are hand-derived and checked against finite
differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bijectors import (
    BijectorConfig,
    SimplexPoint,
    tempered_forward,
    tempered_inverse,
    tempered_inverse_log_det_jacobian,
)
from .lowrank import GaussianParams, gaussian_nll

SIGMA_MODES = ("identity", "isotropic", "diagonal", "full_lowrank")


@dataclass(frozen=True)
class SigmaSpec:
    """How the per-example covariance square root is built from the raw head.

    mode:
      - "identity":     Sigma = I, no covariance head.
      - "isotropic":    Sigma^{1/2} = (s^2 + floor) I, head is one scalar s.
      - "diagonal":     Sigma^{1/2} = diag(s_j^2 + floor), head is s in R^d.
      - "full_lowrank": Sigma^{1/2} = c c^T + floor * I, head is c in R^d.
    floor:
      lambda > 0; lower-bounds the square-root spectrum, so the quadratic term
      of the loss is at most |y - mu|^2 / floor^2.
    """

    mode: str = "full_lowrank"
    floor: float = 0.5

    def __post_init__(self) -> None:
        if self.mode not in SIGMA_MODES:
            raise ValueError(f"sigma mode must be one of {SIGMA_MODES}, got {self.mode!r}")
        if not (np.isfinite(self.floor) and self.floor > 0):
            raise ValueError(f"floor (lambda) must be finite and > 0, got {self.floor!r}")

    def head_dim(self, logit_dim: int) -> int:
        """Dimension of the raw covariance head for a given logit dimension."""
        return {"identity": 0, "isotropic": 1, "diagonal": logit_dim, "full_lowrank": logit_dim}[self.mode]


@dataclass(frozen=True)
class LNOutput:
    """One example's network output: mean logits plus raw covariance head."""

    mean: np.ndarray
    cov_raw: np.ndarray

    def __post_init__(self) -> None:
        m = np.array(self.mean, dtype=np.float64)
        c = np.array(self.cov_raw, dtype=np.float64)
        if m.ndim != 1 or m.size < 1:
            raise ValueError(f"mean must be a 1-D vector, got shape {m.shape}")
        if c.ndim != 1:
            raise ValueError(f"cov_raw must be a 1-D vector (possibly empty), got shape {c.shape}")
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(c))):
            raise ValueError("network output has non-finite entries")
        m.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov_raw", c)


def log_prob(params: GaussianParams, q, cfg: BijectorConfig) -> float:
    """Exact log-density of the tempered logistic-normal at simplex point q.

    Gaussian log-density at y = tempered_inverse(q) plus the log absolute
    Jacobian determinant of the full inverse map (temperature scale and
    softmax-centered parts).
    """
    if params.mean.size != cfg.logit_dim:
        raise ValueError(f"Gaussian dimension {params.mean.size} does not match logit dimension {cfg.logit_dim}")
    y = tempered_inverse(q, cfg).values
    return -gaussian_nll(params, y, include_constants=True) + tempered_inverse_log_det_jacobian(q, cfg)


def batch_loss_grads(mean: np.ndarray, cov_raw: np.ndarray, targets: np.ndarray, sigma: SigmaSpec):
    """Per-example losses and loss gradients for a batch.

    Parameters
    ----------
    mean : (n, d) predicted mean logits.
    cov_raw : (n, h) raw covariance head outputs, h = sigma.head_dim(d).
    targets : (n, d) target logits.
    sigma : SigmaSpec.

    Returns
    -------
    losses : (n,) 0.5 * mahalanobis + 0.5 * log det Sigma per example.
    d_mean : (n, d) dLoss/dmean.
    d_cov : (n, h) dLoss/dcov_raw.
    """
    mean = np.asarray(mean, dtype=np.float64)
    cov_raw = np.asarray(cov_raw, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if mean.ndim != 2 or targets.shape != mean.shape:
        raise ValueError(f"mean and targets must both have shape (n, d), got {mean.shape} and {targets.shape}")
    n, d = mean.shape
    if cov_raw.shape != (n, sigma.head_dim(d)):
        raise ValueError(f"cov_raw must have shape ({n}, {sigma.head_dim(d)}), got {cov_raw.shape}")
    r = targets - mean
    lam = sigma.floor

    if sigma.mode == "identity":
        losses = 0.5 * (r * r).sum(axis=1)
        return losses, -r, np.zeros((n, 0))

    if sigma.mode == "isotropic":
        s = cov_raw[:, 0]
        a = s * s + lam
        rr = (r * r).sum(axis=1)
        losses = 0.5 * rr / a**2 + d * np.log(a)
        d_mean = -r / a[:, None] ** 2
        d_cov = (2.0 * s * (d / a - rr / a**3))[:, None]
        return losses, d_mean, d_cov

    if sigma.mode == "diagonal":
        s = cov_raw
        a = s * s + lam
        losses = 0.5 * ((r / a) ** 2).sum(axis=1) + np.log(a).sum(axis=1)
        d_mean = -r / a**2
        d_cov = 2.0 * s * (1.0 / a - r * r / a**3)
        return losses, d_mean, d_cov

    # full_lowrank: Sigma^{1/2} = c c^T + lam I per example.
    c = cov_raw
    denom = lam + (c * c).sum(axis=1)

    def ssolve(v):
        return (v - c * ((c * v).sum(axis=1) / denom)[:, None]) / lam

    u = ssolve(r)  # Sigma^{-1/2} r
    w = ssolve(u)  # Sigma^{-1} r
    losses = 0.5 * (u * u).sum(axis=1) + (d - 1) * np.log(lam) + np.log(denom)
    d_mean = -w
    cw = (c * w).sum(axis=1)[:, None]
    cu = (c * u).sum(axis=1)[:, None]
    d_cov = 2.0 * c / denom[:, None] - cw * u - cu * w
    return losses, d_mean, d_cov


def batch_mahalanobis(mean: np.ndarray, cov_raw: np.ndarray, targets: np.ndarray, sigma: SigmaSpec) -> np.ndarray:
    """Per-example (y - mu)^T Sigma^{-1} (y - mu) for a batch, shape (n,).

    Same covariance construction as :func:`batch_loss_grads`, without the
    log-det part.
    """
    mean = np.asarray(mean, dtype=np.float64)
    cov_raw = np.asarray(cov_raw, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    r = targets - mean
    lam = sigma.floor
    if sigma.mode == "identity":
        return (r * r).sum(axis=1)
    if sigma.mode == "isotropic":
        a = cov_raw[:, 0] ** 2 + lam
        return (r * r).sum(axis=1) / a**2
    if sigma.mode == "diagonal":
        a = cov_raw**2 + lam
        return ((r / a) ** 2).sum(axis=1)
    c = cov_raw
    denom = lam + (c * c).sum(axis=1)
    u = (r - c * ((c * r).sum(axis=1) / denom)[:, None]) / lam
    return (u * u).sum(axis=1)


def train_loss(out: LNOutput, label: int, cfg: BijectorConfig, sigma: SigmaSpec) -> float:
    """Training loss for one example (constants dropped)."""
    from .bijectors import target_logits

    y = target_logits(label, cfg).values
    losses, _, _ = batch_loss_grads(out.mean[None, :], out.cov_raw[None, :], y[None, :], sigma)
    return float(losses[0])


def loss_grads(out: LNOutput, label: int, cfg: BijectorConfig, sigma: SigmaSpec):
    """(dLoss/dmean, dLoss/dcov_raw) for one example."""
    from .bijectors import target_logits

    y = target_logits(label, cfg).values
    _, d_mean, d_cov = batch_loss_grads(out.mean[None, :], out.cov_raw[None, :], y[None, :], sigma)
    return d_mean[0], d_cov[0]


def optimal_sigma(residual) -> np.ndarray:
    """Unconstrained per-example maximizer of the likelihood: Sigma = r r^T.

    The maximizer is degenerate (rank one); it is the limit the learned
    covariance is pulled toward when a residual cannot be reduced.
    """
    r = np.asarray(residual, dtype=np.float64)
    if r.ndim != 1 or r.size < 1:
        raise ValueError(f"residual must be a 1-D vector, got shape {r.shape}")
    return np.outer(r, r)


def grad_at_optimal_sigma(residual) -> np.ndarray:
    """dLoss/dmean at Sigma = r r^T: -r / |r|^2 (norm shrinks as 1/|r|)."""
    r = np.asarray(residual, dtype=np.float64)
    nrm2 = float(r @ r)
    if nrm2 == 0.0:
        raise ValueError("gradient at the optimal covariance is undefined for a zero residual")
    return -r / nrm2


def optimal_scalar_sigma(residual: float, floor: float) -> float:
    """Binary-case optimal variance under the floored parametrization.

    With sigma^{1/2} = c^2 + floor, minimizing the scalar loss over c gives
    variance max(floor^2, r^2): floored for small residuals, matched to the
    squared residual for large ones.
    """
    if not (np.isfinite(floor) and floor > 0):
        raise ValueError(f"floor must be finite and > 0, got {floor!r}")
    return max(floor**2, float(residual) ** 2)


def predict(mean, cfg: BijectorConfig) -> tuple[SimplexPoint, int]:
    """Point prediction from mean logits.

    Returns the simplex point tempered_forward(mean) over all effective
    classes and the argmax over the real classes only (the dummy class is
    never predicted); ties break toward the lowest index.
    """
    probs = tempered_forward(mean, cfg)
    label = int(np.argmax(probs.probs[: cfg.num_real_classes]))
    return probs, label


def predict_labels(mean: np.ndarray, cfg: BijectorConfig) -> np.ndarray:
    """Vectorized argmax prediction for a batch of mean logits (n, d).

    Equivalent to ``predict(row, cfg)[1]`` per row: softmax is monotone, so
    the argmax over real classes of softmax_centered(mean / tau) is the
    argmax of the padded logits restricted to the real classes.
    """
    mean = np.asarray(mean, dtype=np.float64)
    padded = np.concatenate([mean, np.zeros((mean.shape[0], 1))], axis=1)
    return np.argmax(padded[:, : cfg.num_real_classes], axis=1)
