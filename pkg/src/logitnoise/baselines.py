"""Baseline classification losses: CE, label smoothing, GCE, NAN, Het family.

All baselines operate on plain K-class logits with an ordinary softmax (no
centering, no dummy class).  Gradients are hand-derived; ``*_grad`` functions
return dLoss/dlogits except ``het_grad_mean``, which follows the opposite
sign convention (see its docstring).  The Het family estimates the expected
softmax under Gaussian logit noise by Monte Carlo with reparametrized draws,
so losses and gradients can share the same noise (common random numbers).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Row-stable log-softmax; accepts (K,) or (n, K)."""
    z = np.asarray(logits, dtype=np.float64)
    m = z.max(axis=-1, keepdims=True)
    shifted = z - m
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-stable softmax; accepts (K,) or (n, K)."""
    z = np.asarray(logits, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _target_vector(target, num_classes: int) -> np.ndarray:
    """Coerce an int label or a (possibly unnormalized) target vector."""
    if np.isscalar(target) or np.ndim(target) == 0:
        label = int(target)
        if not 0 <= label < num_classes:
            raise ValueError(f"label {label} outside [0, {num_classes})")
        t = np.zeros(num_classes)
        t[label] = 1.0
        return t
    t = np.asarray(target, dtype=np.float64)
    if t.shape != (num_classes,):
        raise ValueError(f"target must have shape ({num_classes},), got {t.shape}")
    if not np.all(np.isfinite(t)):
        raise ValueError("target has non-finite entries")
    return t


def ce_loss(logits, target) -> float:
    """Cross entropy -sum_k t_k log softmax(z)_k.

    ``target`` is an int label or a target vector; vectors need not be
    normalized (the NAN baseline feeds noisy, unnormalized targets).
    """
    z = np.asarray(logits, dtype=np.float64)
    t = _target_vector(target, z.size)
    return float(-(t * log_softmax(z)).sum())


def ce_grad(logits, target) -> np.ndarray:
    """dLoss/dlogits for :func:`ce_loss`: softmax(z) * sum(t) - t."""
    z = np.asarray(logits, dtype=np.float64)
    t = _target_vector(target, z.size)
    return softmax(z) * t.sum() - t


def ls_target(label: int, num_classes: int, smoothing: float) -> np.ndarray:
    """Smoothed one-hot: (1 - s) * onehot + s / K."""
    if not 0.0 <= smoothing < 1.0:
        raise ValueError(f"smoothing must lie in [0, 1), got {smoothing!r}")
    t = _target_vector(int(label), num_classes) * (1.0 - smoothing)
    return t + smoothing / num_classes


def ls_loss(logits, label: int, smoothing: float) -> float:
    """Cross entropy against the smoothed one-hot."""
    z = np.asarray(logits, dtype=np.float64)
    return ce_loss(z, ls_target(label, z.size, smoothing))


def ls_grad(logits, label: int, smoothing: float) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    return ce_grad(z, ls_target(label, z.size, smoothing))


def gce_loss(logits, label: int, q: float) -> float:
    """Generalized cross entropy (1 - p_label^q) / q with q in (0, 1].

    q = 1 is exactly 1 - p_label (mean absolute error on the probability);
    q -> 0 recovers CE.
    """
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must lie in (0, 1], got {q!r}")
    z = np.asarray(logits, dtype=np.float64)
    label = int(label)
    if not 0 <= label < z.size:
        raise ValueError(f"label {label} outside [0, {z.size})")
    p = float(np.exp(log_softmax(z)[label]))
    return (1.0 - p**q) / q


def gce_grad(logits, label: int, q: float) -> np.ndarray:
    """dLoss/dlogits for :func:`gce_loss`: -p_label^q * (onehot - softmax)."""
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must lie in (0, 1], got {q!r}")
    z = np.asarray(logits, dtype=np.float64)
    label = int(label)
    onehot = _target_vector(label, z.size)
    p = softmax(z)
    return -(p[label] ** q) * (onehot - p)


def nan_target(label: int, num_classes: int, noise_std: float, rng: np.random.Generator) -> np.ndarray:
    """One-hot target plus isotropic Gaussian noise (left unnormalized)."""
    if noise_std < 0:
        raise ValueError(f"noise_std must be >= 0, got {noise_std!r}")
    t = _target_vector(int(label), num_classes)
    return t + noise_std * rng.standard_normal(num_classes)


def nan_targets(labels: np.ndarray, num_classes: int, noise_std: float, rng: np.random.Generator) -> np.ndarray:
    """Batch of noisy targets, shape (n, K); drawn fresh on every call."""
    labels = np.asarray(labels)
    t = np.zeros((labels.size, num_classes))
    t[np.arange(labels.size), labels] = 1.0
    return t + noise_std * rng.standard_normal((labels.size, num_classes))


def ce_batch_loss_grads(logits: np.ndarray, targets: np.ndarray):
    """Vectorized CE against per-row target vectors.

    Returns per-example losses (n,) and dLoss/dlogits (n, K).
    """
    z = np.asarray(logits, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    logp = log_softmax(z)
    losses = -(t * logp).sum(axis=1)
    grads = softmax(z) * t.sum(axis=1, keepdims=True) - t
    return losses, grads


def gce_batch_loss_grads(logits: np.ndarray, labels: np.ndarray, q: float):
    """Vectorized GCE; returns per-example losses and dLoss/dlogits."""
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must lie in (0, 1], got {q!r}")
    z = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    idx = np.arange(z.shape[0])
    p = softmax(z)
    p_label = p[idx, labels]
    losses = (1.0 - p_label**q) / q
    grads = p * (p_label**q)[:, None]
    grads[idx, labels] -= p_label**q
    return losses, grads


# ---------------------------------------------------------------------------
# Het family: Monte Carlo expectation of the softmax under logit noise.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HetConfig:
    """Monte Carlo and tempering settings for the Het losses.

    temperature : tau > 0; samples are tempered as softmax((mean + eps)/tau).
    num_samples : M, Monte Carlo draws per example per step.
    rank : number of low-rank factors on top of the diagonal (0 = diagonal).
    """

    temperature: float = 1.0
    num_samples: int = 100
    rank: int = 0

    def __post_init__(self) -> None:
        if not (np.isfinite(self.temperature) and self.temperature > 0):
            raise ValueError(f"temperature must be finite and > 0, got {self.temperature!r}")
        if self.num_samples < 1:
            raise ValueError(f"num_samples must be >= 1, got {self.num_samples!r}")
        if self.rank < 0:
            raise ValueError(f"rank must be >= 0, got {self.rank!r}")

    def head_dim(self, num_classes: int) -> int:
        """Raw covariance head width: K diagonal entries plus rank*K factors."""
        return num_classes * (1 + self.rank)


@dataclass(frozen=True)
class HetNoiseParams:
    """Per-example logit-noise covariance: eps = diag_std * n + factors^T m.

    The implied covariance is diag(diag_std^2) + factors^T factors.
    """

    diag_std: np.ndarray
    factors: np.ndarray | None = None

    def __post_init__(self) -> None:
        s = np.array(self.diag_std, dtype=np.float64)
        if s.ndim != 1 or np.any(s < 0) or not np.all(np.isfinite(s)):
            raise ValueError("diag_std must be a 1-D vector of finite nonnegative values")
        s.setflags(write=False)
        object.__setattr__(self, "diag_std", s)
        if self.factors is not None:
            f = np.array(self.factors, dtype=np.float64)
            if f.ndim != 2 or f.shape[1] != s.size or not np.all(np.isfinite(f)):
                raise ValueError(f"factors must have shape (R, {s.size}) with finite entries")
            f.setflags(write=False)
            object.__setattr__(self, "factors", f)


def sample_het_noise(noise: HetNoiseParams, num_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Draw (M, K) noise: diagonal part plus optional low-rank part."""
    k = noise.diag_std.size
    eps = rng.standard_normal((num_samples, k)) * noise.diag_std
    if noise.factors is not None:
        eps = eps + rng.standard_normal((num_samples, noise.factors.shape[0])) @ noise.factors
    return eps


def het_loss(mean, noise: HetNoiseParams | None, label: int, cfg: HetConfig,
             rng: np.random.Generator | None = None, eps: np.ndarray | None = None) -> float:
    """-log of the MC estimate of E[softmax((mean + eps)/tau)]_label.

    Pass ``eps`` explicitly to share draws with :func:`het_grad_mean`
    (common random numbers); otherwise draws cfg.num_samples from ``rng``.
    """
    mean = np.asarray(mean, dtype=np.float64)
    label = int(label)
    if not 0 <= label < mean.size:
        raise ValueError(f"label {label} outside [0, {mean.size})")
    if eps is None:
        if rng is None or noise is None:
            raise ValueError("need either eps or (noise, rng) to draw it")
        eps = sample_het_noise(noise, cfg.num_samples, rng)
    probs = softmax((mean[None, :] + eps) / cfg.temperature)
    return float(-np.log(probs[:, label].mean()))


def het_grad_mean(mean, label: int, cfg: HetConfig, eps: np.ndarray) -> np.ndarray:
    """MC estimate of -dLoss/dmean with the same draws as the loss.

    (1/tau) * (onehot_label - sum_m S_m * S_m[label] / sum_m S_m[label]) with
    S_m = softmax((mean + eps_m)/tau).  Note the sign: this is the *negative*
    loss gradient; it sums to zero across classes.
    """
    mean = np.asarray(mean, dtype=np.float64)
    label = int(label)
    s = softmax((mean[None, :] + eps) / cfg.temperature)
    s_label = s[:, label]
    weighted = (s * s_label[:, None]).sum(axis=0) / s_label.sum()
    onehot = np.zeros(mean.size)
    onehot[label] = 1.0
    return (onehot - weighted) / cfg.temperature


def softplus(x: np.ndarray) -> np.ndarray:
    """Numerically stable log(1 + exp(x))."""
    x = np.asarray(x, dtype=np.float64)
    return np.logaddexp(0.0, x)


def split_het_head(cov_raw: np.ndarray, num_classes: int, cfg: HetConfig):
    """Raw head (n, K*(1+rank)) -> (diag_std (n, K), factors (n, rank, K)).

    The diagonal standard deviations go through a softplus so they are
    positive with a nonzero gradient everywhere; factor entries are used
    directly (their sign is irrelevant to the covariance).
    """
    cov_raw = np.asarray(cov_raw, dtype=np.float64)
    n = cov_raw.shape[0]
    if cov_raw.shape != (n, cfg.head_dim(num_classes)):
        raise ValueError(f"cov head must have shape ({n}, {cfg.head_dim(num_classes)}), got {cov_raw.shape}")
    diag_std = softplus(cov_raw[:, :num_classes])
    factors = cov_raw[:, num_classes:].reshape(n, cfg.rank, num_classes)
    return diag_std, factors


def het_batch_loss_grads(mean: np.ndarray, cov_raw: np.ndarray, labels: np.ndarray,
                         cfg: HetConfig, rng: np.random.Generator):
    """Vectorized Het loss and gradients through both heads.

    Draws the base noise from ``rng`` and delegates to
    :func:`het_loss_grads_with_noise`; one call per batch per step keeps the
    loss and its gradients on common random numbers.
    """
    mean = np.asarray(mean, dtype=np.float64)
    n, k = mean.shape
    n_diag = rng.standard_normal((n, cfg.num_samples, k))
    n_fact = rng.standard_normal((n, cfg.num_samples, cfg.rank)) if cfg.rank > 0 else None
    return het_loss_grads_with_noise(mean, cov_raw, labels, cfg, n_diag, n_fact)


def het_loss_grads_with_noise(mean: np.ndarray, cov_raw: np.ndarray, labels: np.ndarray,
                              cfg: HetConfig, n_diag: np.ndarray, n_fact: np.ndarray | None):
    """Het loss and gradients with the base noise passed in explicitly.

    eps_m = diag_std * n_m + factors^T m_m with reparametrized draws, so the
    loss is differentiable in the raw head outputs.  Returns per-example
    losses (n,), dLoss/dmean (n, K), dLoss/dcov_raw (n, head_dim).
    """
    mean = np.asarray(mean, dtype=np.float64)
    labels = np.asarray(labels)
    n, k = mean.shape
    diag_std, factors = split_het_head(cov_raw, k, cfg)
    m = cfg.num_samples
    eps = n_diag * diag_std[:, None, :]
    if cfg.rank > 0:
        eps = eps + np.einsum("nmr,nrk->nmk", n_fact, factors)
    s = softmax((mean[:, None, :] + eps) / cfg.temperature)  # (n, m, k)
    idx = np.arange(n)
    s_label = s[idx, :, labels]  # (n, m)
    p_bar = s_label.mean(axis=1)
    losses = -np.log(p_bar)
    # dLoss/ds_label_m = -1/(m * p_bar); chain through the tempered softmax.
    # dLoss/d(logit_{m,j}) = -(1/(m * p_bar * tau)) * s_label_m * (onehot_j - s_{m,j})
    coef = -(s_label / (m * p_bar[:, None] * cfg.temperature))  # (n, m)
    g_logits = coef[:, :, None] * (-s)  # the -s_{m,j} part
    g_logits[idx, :, labels] += coef
    d_mean = g_logits.sum(axis=1)
    d_diag = (g_logits * n_diag).sum(axis=1)  # dLoss/ddiag_std
    d_diag_raw = d_diag / (1.0 + np.exp(-np.asarray(cov_raw, dtype=np.float64)[:, :k]))  # softplus'
    if cfg.rank > 0:
        d_fact = np.einsum("nmk,nmr->nrk", g_logits, n_fact)
        d_cov = np.concatenate([d_diag_raw, d_fact.reshape(n, cfg.rank * k)], axis=1)
    else:
        d_cov = d_diag_raw
    return losses, d_mean, d_cov
