"""Softmax-centered simplex bijections and target-logit construction.

These maps connect the open probability simplex to an unconstrained logit
space.  ``softmax_centered`` appends a fixed zero logit before the softmax,
which makes the map a bijection between R^d and the open simplex with d+1
components; the tempered variants divide the logits by a temperature first.
``target_logits`` turns a class label into the logit-space regression target
used by the logistic-normal training loss: smooth the one-hot on the simplex,
optionally over one extra never-labeled "dummy" class, then pull back through
the tempered inverse map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Components below this count as sitting on the simplex boundary and are
# rejected rather than clamped.
PROB_FLOOR = 1e-300
# |sum(probs) - 1| tolerance for accepting a point as on the simplex.
SUM_TOL = 1e-12


class SimplexBoundaryError(ValueError):
    """Point sits on (or numerically past) the simplex boundary."""


@dataclass(frozen=True)
class BijectorConfig:
    """Geometry of the logit space.

    Attributes
    ----------
    num_real_classes : int
        K >= 2, the classes a label can actually take.
    temperature : float
        tau > 0; logits are divided by tau on the way to the simplex, so the
        inverse map multiplies by tau.
    dummy_class : bool
        If True, one extra class is appended that is never used as a label.
        It only receives smoothing mass, which makes every real class target
        have the same norm.
    smoothing : float
        t in (0, 1); fraction of probability mass spread uniformly over all
        effective classes when building targets.
    """

    num_real_classes: int
    temperature: float = 1.0
    dummy_class: bool = True
    smoothing: float = 0.01

    def __post_init__(self) -> None:
        if int(self.num_real_classes) != self.num_real_classes or self.num_real_classes < 2:
            raise ValueError(f"num_real_classes must be an int >= 2, got {self.num_real_classes!r}")
        if not (np.isfinite(self.temperature) and self.temperature > 0):
            raise ValueError(f"temperature must be finite and > 0, got {self.temperature!r}")
        if not (0.0 < self.smoothing < 1.0):
            raise ValueError(f"smoothing must lie in (0, 1), got {self.smoothing!r}")

    @property
    def effective_classes(self) -> int:
        """Number of simplex components: K plus the dummy class if enabled."""
        return self.num_real_classes + (1 if self.dummy_class else 0)

    @property
    def logit_dim(self) -> int:
        """Dimension d of the unconstrained logit space (one less than the simplex)."""
        return self.effective_classes - 1


@dataclass(frozen=True)
class SimplexPoint:
    """A point in the open simplex: strictly positive components summing to one."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        p = np.array(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size < 2:
            raise ValueError(f"simplex point must be a 1-D vector of length >= 2, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("simplex point has non-finite components")
        if np.any(p < PROB_FLOOR):
            raise SimplexBoundaryError(
                f"simplex point touches the boundary (min component {p.min():.3g} < {PROB_FLOOR:g})"
            )
        total = p.sum()
        if abs(total - 1.0) > SUM_TOL:
            raise ValueError(f"simplex point components sum to {total!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def __len__(self) -> int:
        return self.probs.size


@dataclass(frozen=True)
class LogitVector:
    """An unconstrained vector in logit space."""

    values: np.ndarray

    def __post_init__(self) -> None:
        z = np.array(self.values, dtype=np.float64)
        if z.ndim != 1 or z.size < 1:
            raise ValueError(f"logit vector must be a 1-D vector of length >= 1, got shape {z.shape}")
        if not np.all(np.isfinite(z)):
            raise ValueError("logit vector has non-finite components")
        z.setflags(write=False)
        object.__setattr__(self, "values", z)

    def __len__(self) -> int:
        return self.values.size


def _as_logits(z) -> np.ndarray:
    if isinstance(z, LogitVector):
        return z.values
    return LogitVector(np.atleast_1d(np.asarray(z, dtype=np.float64))).values


def _as_simplex(q) -> np.ndarray:
    if isinstance(q, SimplexPoint):
        return q.probs
    return SimplexPoint(np.asarray(q, dtype=np.float64)).probs


def softmax_centered(z) -> SimplexPoint:
    """Map logits z in R^d to the simplex via softmax([z, 0]).

    The appended zero pins the last component, making the map invertible.
    """
    z = _as_logits(z)
    full = np.concatenate([z, [0.0]])
    full = full - full.max()
    e = np.exp(full)
    return SimplexPoint(e / e.sum())


def softmax_centered_inverse(q) -> LogitVector:
    """Inverse of :func:`softmax_centered`: z_k = log(q_k / q_last)."""
    p = _as_simplex(q)
    logp = np.log(p)
    return LogitVector(logp[:-1] - logp[-1])


def tempered_forward(z, cfg: BijectorConfig) -> SimplexPoint:
    """softmax_centered(z / tau) with the config's dimension check."""
    z = _as_logits(z)
    if z.size != cfg.logit_dim:
        raise ValueError(f"expected logits of dimension {cfg.logit_dim}, got {z.size}")
    return softmax_centered(z / cfg.temperature)


def tempered_inverse(q, cfg: BijectorConfig) -> LogitVector:
    """tau * softmax_centered_inverse(q) with the config's dimension check."""
    p = _as_simplex(q)
    if p.size != cfg.effective_classes:
        raise ValueError(f"expected simplex point with {cfg.effective_classes} components, got {p.size}")
    return LogitVector(cfg.temperature * softmax_centered_inverse(p).values)


def inverse_log_det_jacobian(q) -> float:
    """log |det J| of the simplex -> logits map at q, equal to -sum_k log q_k.

    The sum runs over all components of q (the last one enters through the
    sum-to-one constraint).
    """
    p = _as_simplex(q)
    return float(-np.log(p).sum())


def tempered_inverse_log_det_jacobian(q, cfg: BijectorConfig) -> float:
    """log |det J| of the full tempered inverse map, d*log(tau) - sum_k log q_k."""
    p = _as_simplex(q)
    if p.size != cfg.effective_classes:
        raise ValueError(f"expected simplex point with {cfg.effective_classes} components, got {p.size}")
    return cfg.logit_dim * float(np.log(cfg.temperature)) + inverse_log_det_jacobian(p)


def target_logits(label: int, cfg: BijectorConfig) -> LogitVector:
    """Logit-space regression target for a class label.

    The one-hot over the effective classes is mixed with the uniform
    distribution (weight ``cfg.smoothing``) and pulled back through the
    tempered inverse map.  With the dummy class enabled the result has a
    single nonzero component, tau * log(((1-t)*K_eff + t)/t) at the label
    index, so every real class target has exactly the same norm.
    """
    label = int(label)
    if not 0 <= label < cfg.num_real_classes:
        raise ValueError(f"label {label} outside [0, {cfg.num_real_classes})")
    k = cfg.effective_classes
    t = cfg.smoothing
    p = np.full(k, t / k)
    p[label] += 1.0 - t
    return tempered_inverse(p, cfg)


def target_matrix(cfg: BijectorConfig) -> np.ndarray:
    """Stack of target logits for every real class, shape (K, logit_dim)."""
    rows = [target_logits(i, cfg).values for i in range(cfg.num_real_classes)]
    return np.stack(rows, axis=0)
