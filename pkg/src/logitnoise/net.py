"""Minimal fully-connected network with hand-written reverse mode.

Everything is float64 and deterministic.  The network is a shared backbone of
dense layers plus two linear heads: a mean head and an optional covariance
head.  Parameters live in a flat dict keyed ``w0/b0, w1/b1, ..., w_mean,
b_mean, w_cov, b_cov``; ``flatten``/``unflatten`` give the canonical vector
layout used by the finite-difference checks and checkpoints.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

ACTIVATIONS = ("relu", "tanh")
OPTIMIZER_KINDS = ("sgd", "nesterov", "adam")

# The covariance head starts with weights this much smaller than the backbone
# so training begins close to the floored-identity covariance, but not *at*
# it: the loss is even in the factor output, so an exactly-zero head sits on
# a saddle with an exactly-zero gradient and would never move.
COV_HEAD_INIT_SCALE = 0.1


@dataclass(frozen=True)
class MLPSpec:
    """Architecture: input width, hidden widths, two head widths, activation."""

    input_dim: int
    hidden: tuple[int, ...]
    mean_dim: int
    cov_dim: int = 0
    activation: str = "relu"

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1 or self.mean_dim < 1 or self.cov_dim < 0:
            raise ValueError("dimensions must be positive (cov_dim may be zero)")
        if any(h < 1 for h in self.hidden):
            raise ValueError(f"hidden widths must be positive, got {self.hidden}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")


def param_keys(spec: MLPSpec) -> list[str]:
    """Canonical parameter ordering."""
    keys = []
    for i in range(len(spec.hidden)):
        keys += [f"w{i}", f"b{i}"]
    keys += ["w_mean", "b_mean"]
    if spec.cov_dim > 0:
        keys += ["w_cov", "b_cov"]
    return keys


def param_shapes(spec: MLPSpec) -> dict[str, tuple[int, ...]]:
    """Shape of every parameter in canonical order."""
    shapes: dict[str, tuple[int, ...]] = {}
    fan_in = spec.input_dim
    for i, width in enumerate(spec.hidden):
        shapes[f"w{i}"] = (fan_in, width)
        shapes[f"b{i}"] = (width,)
        fan_in = width
    shapes["w_mean"] = (fan_in, spec.mean_dim)
    shapes["b_mean"] = (spec.mean_dim,)
    if spec.cov_dim > 0:
        shapes["w_cov"] = (fan_in, spec.cov_dim)
        shapes["b_cov"] = (spec.cov_dim,)
    return shapes


def init_params(spec: MLPSpec, seed: int) -> dict[str, np.ndarray]:
    """Fan-in-scaled uniform init, zero biases, damped covariance head."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    params: dict[str, np.ndarray] = {}
    for k, shape in param_shapes(spec).items():
        if k.startswith("b"):
            params[k] = np.zeros(shape)
            continue
        bound = 1.0 / np.sqrt(shape[0])
        params[k] = rng.uniform(-bound, bound, size=shape)
        if k == "w_cov":
            params[k] *= COV_HEAD_INIT_SCALE
    return params


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    return np.maximum(z, 0.0) if kind == "relu" else np.tanh(z)


def _act_grad(z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    return (z > 0).astype(np.float64) if kind == "relu" else 1.0 - a * a


def forward(spec: MLPSpec, params: dict[str, np.ndarray], x: np.ndarray):
    """Batch forward pass.

    Returns (mean (n, mean_dim), cov (n, cov_dim), cache); the cache feeds
    :func:`backward`.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ValueError(f"input must have shape (n, {spec.input_dim}), got {x.shape}")
    h = x
    pre, act = [], [x]
    for i in range(len(spec.hidden)):
        z = h @ params[f"w{i}"] + params[f"b{i}"]
        h = _act(z, spec.activation)
        pre.append(z)
        act.append(h)
    mean = h @ params["w_mean"] + params["b_mean"]
    if spec.cov_dim > 0:
        cov = h @ params["w_cov"] + params["b_cov"]
    else:
        cov = np.zeros((x.shape[0], 0))
    return mean, cov, (pre, act)


def backward(spec: MLPSpec, params: dict[str, np.ndarray], cache, d_mean: np.ndarray, d_cov: np.ndarray):
    """Backpropagate head gradients to parameter gradients.

    ``d_mean``/``d_cov`` are dLoss/dhead for the batch; the returned dict
    matches the parameter layout.
    """
    pre, act = cache
    h_last = act[-1]
    grads: dict[str, np.ndarray] = {
        "w_mean": h_last.T @ d_mean,
        "b_mean": d_mean.sum(axis=0),
    }
    d_h = d_mean @ params["w_mean"].T
    if spec.cov_dim > 0:
        grads["w_cov"] = h_last.T @ d_cov
        grads["b_cov"] = d_cov.sum(axis=0)
        d_h = d_h + d_cov @ params["w_cov"].T
    for i in reversed(range(len(spec.hidden))):
        d_z = d_h * _act_grad(pre[i], act[i + 1], spec.activation)
        grads[f"w{i}"] = act[i].T @ d_z
        grads[f"b{i}"] = d_z.sum(axis=0)
        d_h = d_z @ params[f"w{i}"].T
    return grads


def flatten(spec: MLPSpec, params: dict[str, np.ndarray]) -> np.ndarray:
    """Concatenate parameters in canonical order."""
    return np.concatenate([params[k].ravel() for k in param_keys(spec)])


def unflatten(spec: MLPSpec, vec: np.ndarray) -> dict[str, np.ndarray]:
    """Inverse of :func:`flatten`."""
    shapes = param_shapes(spec)
    out: dict[str, np.ndarray] = {}
    pos = 0
    for k in param_keys(spec):
        size = int(np.prod(shapes[k]))
        out[k] = np.asarray(vec[pos : pos + size], dtype=np.float64).reshape(shapes[k]).copy()
        pos += size
    if pos != np.size(vec):
        raise ValueError(f"vector has {np.size(vec)} entries, spec needs {pos}")
    return out


@dataclass(frozen=True)
class OptimizerSpec:
    """Update rule plus loop bookkeeping (batching, epochs).

    Weight decay is decoupled (applied directly to weight matrices, never to
    biases, and never routed through momentum or Adam statistics).
    batch_size = 0 means full batch.
    """

    kind: str = "sgd"
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 0
    epochs: int = 100

    def __post_init__(self) -> None:
        if self.kind not in OPTIMIZER_KINDS:
            raise ValueError(f"optimizer kind must be one of {OPTIMIZER_KINDS}, got {self.kind!r}")
        if not (np.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ValueError(f"learning_rate must be finite and > 0, got {self.learning_rate!r}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay!r}")
        if self.batch_size < 0 or self.epochs < 1:
            raise ValueError("batch_size must be >= 0 and epochs >= 1")


def init_opt_state(opt: OptimizerSpec, params: dict[str, np.ndarray]) -> dict:
    """Zeroed optimizer slots for the given parameters."""
    state: dict = {"t": 0}
    if opt.kind == "nesterov":
        state["momentum"] = {k: np.zeros_like(v) for k, v in params.items()}
    elif opt.kind == "adam":
        state["m"] = {k: np.zeros_like(v) for k, v in params.items()}
        state["v"] = {k: np.zeros_like(v) for k, v in params.items()}
    return state


def step(opt: OptimizerSpec, state: dict, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
    """One in-place parameter update."""
    state["t"] += 1
    t = state["t"]
    lr = opt.learning_rate
    for k in params:
        g = grads[k]
        if opt.kind == "sgd":
            update = g
        elif opt.kind == "nesterov":
            buf = state["momentum"][k]
            buf *= opt.momentum
            buf += g
            update = g + opt.momentum * buf
        else:  # adam
            m, v = state["m"][k], state["v"][k]
            m *= opt.beta1
            m += (1.0 - opt.beta1) * g
            v *= opt.beta2
            v += (1.0 - opt.beta2) * g * g
            m_hat = m / (1.0 - opt.beta1**t)
            v_hat = v / (1.0 - opt.beta2**t)
            update = m_hat / (np.sqrt(v_hat) + opt.eps)
        decay = opt.weight_decay if k.startswith("w") else 0.0
        params[k] = params[k] * (1.0 - lr * decay) - lr * update


CHECKPOINT_VERSION = 1


def save_checkpoint(path, spec: MLPSpec, params: dict[str, np.ndarray],
                    opt: OptimizerSpec | None = None, opt_state: dict | None = None) -> None:
    """Versioned binary dump; float64 arrays round-trip bitwise through npz."""
    header = {
        "version": CHECKPOINT_VERSION,
        "spec": asdict(spec),
        "opt": asdict(opt) if opt is not None else None,
        "t": int(opt_state["t"]) if opt_state else 0,
        "slots": sorted(k for k in (opt_state or {}) if k != "t"),
    }
    arrays = {f"param/{k}": v for k, v in params.items()}
    for slot in header["slots"]:
        for k, v in opt_state[slot].items():
            arrays[f"{slot}/{k}"] = v
    np.savez(path, header=json.dumps(header), **arrays)


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`.

    Returns (spec, params, opt_spec_or_None, opt_state_or_None).
    """
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['version']}")
        spec_dict = header["spec"]
        spec_dict["hidden"] = tuple(spec_dict["hidden"])
        spec = MLPSpec(**spec_dict)
        params = {k[len("param/"):]: data[k] for k in data.files if k.startswith("param/")}
        opt = OptimizerSpec(**header["opt"]) if header["opt"] else None
        opt_state = None
        if header["slots"] or header["t"]:
            opt_state = {"t": header["t"]}
            for slot in header["slots"]:
                prefix = f"{slot}/"
                opt_state[slot] = {k[len(prefix):]: data[k] for k in data.files if k.startswith(prefix)}
    return spec, params, opt, opt_state
