"""Experiment harness: training runs, sweeps, residual reports, grad checks.

`run_experiment` is a pure function of its config: datasets, initialization,
batching, and every stochastic loss are seeded from `config.seed` through
fixed offsets, so repeated runs produce bitwise-identical metrics.  The seed
offsets are:

    seed + 1  test-set generation (synthetic data; a fresh clean sample)
    seed + 2  label-noise injection (unless the noise config pins its own)
    seed + 3  train/validation split
    seed + 4  network initialization
    seed + 5  minibatch shuffling
    seed + 6  per-epoch/per-step loss randomness (NAN targets, Het draws)

Training records, at the eval cadence, the accuracy of the clean and
corrupted training subsets separately (both scored against the *noisy*
labels, i.e. "did the model fit what it was shown"), the noisy validation
accuracy used for model selection, the clean test accuracy, and the mean
training loss of the epoch.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from . import baselines, data, logistic_normal as ln, net
from .bijectors import BijectorConfig, target_matrix
from .logistic_normal import SigmaSpec

METHODS = ("ln", "ce", "ls", "gce", "nan", "het", "het_tau", "het_tau_full")
DATA_KINDS = ("two_moons", "circles", "blobs", "mnist")

TEST_SEED_OFFSET = 1
NOISE_SEED_OFFSET = 2
SPLIT_SEED_OFFSET = 3
INIT_SEED_OFFSET = 4
BATCH_SEED_OFFSET = 5
LOSS_SEED_OFFSET = 6

LOSS_GRAD_TOL = 1e-5
E2E_GRAD_TOL = 1e-4

HISTOGRAM_EDGES = np.logspace(-4.0, 4.0, 51)


@dataclass(frozen=True)
class MethodConfig:
    """Which loss to train and its knobs (unused knobs are ignored).

    name: one of METHODS.  "ln" reads temperature/floor/sigma_mode/
    dummy_class/smoothing; "ls" reads ls_smoothing; "gce" reads gce_q; "nan"
    reads nan_std; the Het family reads het_samples plus temperature
    ("het_tau", "het_tau_full") and het_rank ("het_tau_full").
    """

    name: str = "ln"
    temperature: float = 1.0
    floor: float = 0.5
    sigma_mode: str = "full_lowrank"
    dummy_class: bool = True
    smoothing: float = 0.01
    ls_smoothing: float = 0.1
    gce_q: float = 0.7
    nan_std: float = 0.5
    het_samples: int = 100
    het_rank: int = 2

    def __post_init__(self) -> None:
        if self.name not in METHODS:
            raise ValueError(f"method name must be one of {METHODS}, got {self.name!r}")


@dataclass(frozen=True)
class DataConfig:
    """Dataset selection; synthetic test sets are fresh clean samples."""

    kind: str = "two_moons"
    n: int = 1000
    noise_std: float = 0.1
    radius_ratio: float = 0.5
    num_classes: int = 2
    cluster_std: float = 1.0
    radius: float = 10.0
    validation_fraction: float = 0.1
    test_n: int = 0  # 0 -> same size as n
    images_path: str | None = None
    labels_path: str | None = None
    test_images_path: str | None = None
    test_labels_path: str | None = None
    max_n: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in DATA_KINDS:
            raise ValueError(f"data kind must be one of {DATA_KINDS}, got {self.kind!r}")
        if self.kind == "mnist":
            missing = [k for k in ("images_path", "labels_path", "test_images_path", "test_labels_path")
                       if getattr(self, k) is None]
            if missing:
                raise ValueError(f"mnist data config needs {', '.join(missing)}")


@dataclass(frozen=True)
class NoiseConfig:
    """Label-noise recipe applied to the training pool (never the test set)."""

    kind: str = "none"
    rate: float = 0.0
    preset: str | None = None  # "mnist" or "cyclic" asymmetric mappings
    mapping: dict | None = None
    exclude_own_class: bool = False
    seed: int | None = None  # default: experiment seed + NOISE_SEED_OFFSET

    def resolve_mapping(self, num_classes: int) -> dict | None:
        if self.kind != "asymmetric":
            return None
        if self.mapping is not None:
            return dict(self.mapping)
        if self.preset == "mnist":
            return data.mnist_asymmetric_mapping()
        if self.preset == "cyclic":
            return data.cyclic_mapping(num_classes)
        raise ValueError(f"asymmetric noise needs a mapping or a preset, got preset={self.preset!r}")


@dataclass(frozen=True)
class ModelConfig:
    hidden: tuple[int, ...] = (64, 64)
    activation: str = "relu"

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))


@dataclass(frozen=True)
class ExperimentConfig:
    method: MethodConfig = field(default_factory=MethodConfig)
    data: DataConfig = field(default_factory=DataConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    optimizer: net.OptimizerSpec = field(default_factory=net.OptimizerSpec)
    seed: int = 0
    eval_every: int = 10

    def __post_init__(self) -> None:
        if self.eval_every < 1:
            raise ValueError(f"eval_every must be >= 1, got {self.eval_every}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_acc_clean: float
    train_acc_noisy: float
    val_acc: float
    test_acc: float
    mean_loss: float


@dataclass
class RunMetrics:
    records: list[EpochRecord]

    @property
    def final(self) -> EpochRecord:
        return self.records[-1]


METRICS_COLUMNS = ("epoch", "train_acc_clean", "train_acc_noisy", "val_acc", "test_acc", "mean_loss")


def metrics_csv_text(metrics: RunMetrics) -> str:
    """Render metrics as CSV text; float fields use repr (shortest round-trip)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_COLUMNS)
    for r in metrics.records:
        writer.writerow([r.epoch] + [repr(getattr(r, c)) for c in METRICS_COLUMNS[1:]])
    return buf.getvalue()


def write_metrics_csv(metrics: RunMetrics, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(metrics_csv_text(metrics))


# ---------------------------------------------------------------------------
# Dataset and method assembly
# ---------------------------------------------------------------------------


def build_datasets(cfg: ExperimentConfig):
    """(train, validation, test): noisy train/val pools and a clean test set."""
    d = cfg.data
    if d.kind == "mnist":
        pool = data.load_mnist_idx(d.images_path, d.labels_path, d.max_n)
        test = data.load_mnist_idx(d.test_images_path, d.test_labels_path)
    else:
        test_n = d.test_n or d.n
        if d.kind == "two_moons":
            pool = data.two_moons(d.n, d.noise_std, cfg.seed)
            test = data.two_moons(test_n, d.noise_std, cfg.seed + TEST_SEED_OFFSET)
        elif d.kind == "circles":
            pool = data.circles(d.n, d.radius_ratio, d.noise_std, cfg.seed)
            test = data.circles(test_n, d.radius_ratio, d.noise_std, cfg.seed + TEST_SEED_OFFSET)
        else:
            pool = data.gaussian_blobs(d.n, d.num_classes, d.cluster_std, d.radius, cfg.seed)
            test = data.gaussian_blobs(test_n, d.num_classes, d.cluster_std, d.radius,
                                       cfg.seed + TEST_SEED_OFFSET)
    noise_seed = cfg.noise.seed if cfg.noise.seed is not None else cfg.seed + NOISE_SEED_OFFSET
    spec = data.NoiseSpec(
        kind=cfg.noise.kind,
        rate=cfg.noise.rate,
        mapping=cfg.noise.resolve_mapping(pool.num_classes),
        seed=noise_seed,
        exclude_own_class=cfg.noise.exclude_own_class,
    )
    noisy_pool = data.inject_noise(pool, spec)
    train, val = data.split_dataset(noisy_pool, d.validation_fraction, cfg.seed + SPLIT_SEED_OFFSET)
    return train, val, test


@dataclass
class _MethodState:
    kind: str
    mean_dim: int
    cov_dim: int
    bij: BijectorConfig | None = None
    sigma: SigmaSpec | None = None
    het: baselines.HetConfig | None = None
    targets: np.ndarray | None = None  # per-class target rows (ln/ce/ls)
    gce_q: float = 0.7
    nan_std: float = 0.5


def _build_method_state(m: MethodConfig, num_classes: int) -> _MethodState:
    if m.name == "ln":
        bij = BijectorConfig(num_classes, m.temperature, m.dummy_class, m.smoothing)
        sigma = SigmaSpec(m.sigma_mode, m.floor)
        return _MethodState(
            kind="ln",
            mean_dim=bij.logit_dim,
            cov_dim=sigma.head_dim(bij.logit_dim),
            bij=bij,
            sigma=sigma,
            targets=target_matrix(bij),
        )
    if m.name in ("ce", "nan"):
        return _MethodState(kind=m.name, mean_dim=num_classes, cov_dim=0,
                            targets=np.eye(num_classes), nan_std=m.nan_std)
    if m.name == "ls":
        rows = np.stack([baselines.ls_target(i, num_classes, m.ls_smoothing) for i in range(num_classes)])
        return _MethodState(kind="ls", mean_dim=num_classes, cov_dim=0, targets=rows)
    if m.name == "gce":
        return _MethodState(kind="gce", mean_dim=num_classes, cov_dim=0, gce_q=m.gce_q)
    # Het family: "het" is untempered and diagonal; "het_tau" tempers; the
    # full variant adds low-rank factors.
    temperature = 1.0 if m.name == "het" else m.temperature
    rank = m.het_rank if m.name == "het_tau_full" else 0
    het = baselines.HetConfig(temperature=temperature, num_samples=m.het_samples, rank=rank)
    return _MethodState(kind=m.name, mean_dim=num_classes, cov_dim=het.head_dim(num_classes), het=het)


def _batch_loss_grads(state: _MethodState, mean, cov, labels, step_rng, nan_rows):
    if state.kind == "ln":
        return ln.batch_loss_grads(mean, cov, state.targets[labels], state.sigma)
    if state.kind in ("ce", "ls"):
        losses, d_mean = baselines.ce_batch_loss_grads(mean, state.targets[labels])
    elif state.kind == "nan":
        losses, d_mean = baselines.ce_batch_loss_grads(mean, nan_rows)
    elif state.kind == "gce":
        losses, d_mean = baselines.gce_batch_loss_grads(mean, labels, state.gce_q)
    else:
        return baselines.het_batch_loss_grads(mean, cov, labels, state.het, step_rng)
    return losses, d_mean, np.zeros((mean.shape[0], 0))


def _predict_labels(state: _MethodState, mean: np.ndarray) -> np.ndarray:
    if state.kind == "ln":
        return ln.predict_labels(mean, state.bij)
    return np.argmax(mean, axis=1)


def _subset_accuracy(pred: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    """Accuracy on a boolean subset; 0.0 for an empty subset (kept in [0, 1])."""
    if not mask.any():
        return 0.0
    return float(np.mean(pred[mask] == labels[mask]))


@dataclass
class TrainedModel:
    config: ExperimentConfig
    mlp_spec: net.MLPSpec
    params: dict[str, np.ndarray]
    metrics: RunMetrics
    train_set: data.NoisyDataset
    val_set: data.NoisyDataset
    test_set: data.NoisyDataset

    @property
    def method_state(self) -> _MethodState:
        return _build_method_state(self.config.method, self.train_set.num_classes)


def train_model(cfg: ExperimentConfig) -> TrainedModel:
    """Full training run; deterministic in cfg (see module docstring)."""
    train, val, test = build_datasets(cfg)
    state = _build_method_state(cfg.method, train.num_classes)
    mlp = net.MLPSpec(train.inputs.shape[1], cfg.model.hidden, state.mean_dim,
                      state.cov_dim, cfg.model.activation)
    params = net.init_params(mlp, cfg.seed + INIT_SEED_OFFSET)
    opt = cfg.optimizer
    opt_state = net.init_opt_state(opt, params)
    n = train.n
    batch = opt.batch_size if 0 < opt.batch_size < n else n
    shuffle_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed + BATCH_SEED_OFFSET))
    loss_base = cfg.seed + LOSS_SEED_OFFSET

    records: list[EpochRecord] = []
    for epoch in range(1, opt.epochs + 1):
        nan_rows = None
        if state.kind == "nan":
            nan_rng = np.random.default_rng(np.random.SeedSequence((loss_base, epoch)))
            nan_rows = baselines.nan_targets(train.noisy_labels, train.num_classes, state.nan_std, nan_rng)
        order = shuffle_rng.permutation(n) if batch < n else np.arange(n)
        loss_sum = 0.0
        for step_idx, start in enumerate(range(0, n, batch)):
            idx = order[start : start + batch]
            mean, cov, cache = net.forward(mlp, params, train.inputs[idx])
            step_rng = None
            if state.het is not None:
                step_rng = np.random.default_rng(np.random.SeedSequence((loss_base, epoch, step_idx)))
            losses, d_mean, d_cov = _batch_loss_grads(
                state, mean, cov, train.noisy_labels[idx], step_rng,
                None if nan_rows is None else nan_rows[idx],
            )
            loss_sum += float(losses.sum())
            scale = 1.0 / idx.size
            grads = net.backward(mlp, params, cache, d_mean * scale, d_cov * scale)
            net.step(opt, opt_state, params, grads)
        if epoch % cfg.eval_every == 0 or epoch == opt.epochs:
            pred_train = _predict_labels(state, net.forward(mlp, params, train.inputs)[0])
            pred_val = _predict_labels(state, net.forward(mlp, params, val.inputs)[0])
            pred_test = _predict_labels(state, net.forward(mlp, params, test.inputs)[0])
            records.append(
                EpochRecord(
                    epoch=epoch,
                    train_acc_clean=_subset_accuracy(pred_train, train.noisy_labels, ~train.corrupted),
                    train_acc_noisy=_subset_accuracy(pred_train, train.noisy_labels, train.corrupted),
                    val_acc=float(np.mean(pred_val == val.noisy_labels)),
                    test_acc=float(np.mean(pred_test == test.clean_labels)),
                    mean_loss=loss_sum / n,
                )
            )
    return TrainedModel(cfg, mlp, params, RunMetrics(records), train, val, test)


def run_experiment(cfg: ExperimentConfig) -> RunMetrics:
    """Train once and return the metrics table."""
    return train_model(cfg).metrics


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


@dataclass
class SweepResult:
    configs: list[ExperimentConfig]
    val_accs: list[float]
    winner_index: int
    winner: ExperimentConfig
    seed_test_accs: list[float]
    test_mean: float
    test_std: float


def sweep(configs: list[ExperimentConfig], repeats: int = 5) -> SweepResult:
    """Grid search, winner by final noisy validation accuracy.

    Every config is trained once (its own seed); ties break to the lowest
    config index.  The winner is retrained with `repeats` consecutive seeds
    and scored by clean test accuracy, reported as mean +/- sample std.
    """
    if not configs:
        raise ValueError("sweep needs at least one config")
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    val_accs = [run_experiment(c).final.val_acc for c in configs]
    winner_index = int(np.argmax(val_accs))  # argmax takes the first maximum
    winner = configs[winner_index]
    seed_test_accs = [
        run_experiment(replace(winner, seed=winner.seed + i)).final.test_acc for i in range(repeats)
    ]
    mean = float(np.mean(seed_test_accs))
    std = float(np.std(seed_test_accs, ddof=1)) if repeats > 1 else 0.0
    return SweepResult(list(configs), val_accs, winner_index, winner, seed_test_accs, mean, std)


# ---------------------------------------------------------------------------
# Residual reports and the attenuation curve
# ---------------------------------------------------------------------------


@dataclass
class ResidualReport:
    """Per-example Mahalanobis residuals plus a log-spaced histogram.

    values_identity uses Sigma = I (squared distance to the target logits);
    values_learned uses the model's own per-example covariance.  The
    histogram bins `sigma_eval`'s column over HISTOGRAM_EDGES (values are
    clipped into the outer bins so every example is counted), split by the
    corruption flag.
    """

    sigma_eval: str
    values_identity: np.ndarray
    values_learned: np.ndarray
    corrupted: np.ndarray
    bin_edges: np.ndarray
    counts_clean: np.ndarray
    counts_corrupted: np.ndarray


def residual_report(model: TrainedModel, ds: data.NoisyDataset, sigma_eval: str = "learned") -> ResidualReport:
    if sigma_eval not in ("identity", "learned"):
        raise ValueError(f"sigma_eval must be 'identity' or 'learned', got {sigma_eval!r}")
    state = model.method_state
    if state.kind != "ln":
        raise ValueError(f"residual reports require the 'ln' method, got {state.kind!r}")
    mean, cov, _ = net.forward(model.mlp_spec, model.params, ds.inputs)
    targets = state.targets[ds.noisy_labels]
    identity = ln.batch_mahalanobis(mean, cov, targets, SigmaSpec("identity", state.sigma.floor))
    learned = ln.batch_mahalanobis(mean, cov, targets, state.sigma)
    chosen = identity if sigma_eval == "identity" else learned
    lo, hi = HISTOGRAM_EDGES[0], HISTOGRAM_EDGES[-1]
    clipped = np.clip(chosen, lo, hi)
    counts_clean, _ = np.histogram(clipped[~ds.corrupted], bins=HISTOGRAM_EDGES)
    counts_corrupted, _ = np.histogram(clipped[ds.corrupted], bins=HISTOGRAM_EDGES)
    return ResidualReport(sigma_eval, identity, learned, ds.corrupted.copy(),
                          HISTOGRAM_EDGES.copy(), counts_clean, counts_corrupted)


def write_residuals_csv(report: ResidualReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["example_index", "corrupted", "mahalanobis_identity", "mahalanobis_learned"])
        for i in range(report.values_identity.size):
            writer.writerow([i, int(report.corrupted[i]),
                             repr(float(report.values_identity[i])), repr(float(report.values_learned[i]))])


def write_histogram_csv(report: ResidualReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin_lo", "bin_hi", "count_clean", "count_corrupted"])
        for i in range(report.counts_clean.size):
            writer.writerow([repr(float(report.bin_edges[i])), repr(float(report.bin_edges[i + 1])),
                             int(report.counts_clean[i]), int(report.counts_corrupted[i])])


@dataclass
class AttenuationCurve:
    """Loss and mean-gradient magnitude at the per-example optimal variance.

    With the optimal variance sigma* = max(floor^2, r^2): the (doubled,
    log-term-free) quadratic loss term r^2/sigma* rises as (r/floor)^2 and
    saturates at one; the mean gradient -r/sigma* is -r/floor^2 below the
    floor and -1/r beyond it.  Both branches meet exactly at r = floor.
    """

    residuals: np.ndarray
    losses: np.ndarray
    grads: np.ndarray
    floor: float
    include_log_term: bool


def attenuation_curve(floor: float, residuals, include_log_term: bool = False) -> AttenuationCurve:
    if not (np.isfinite(floor) and floor > 0):
        raise ValueError(f"floor must be finite and > 0, got {floor!r}")
    r = np.asarray(residuals, dtype=np.float64)
    sigma_opt = np.maximum(floor**2, r**2)
    losses = r**2 / sigma_opt
    if include_log_term:
        losses = losses + np.log(sigma_opt)
    grads = -r / sigma_opt
    return AttenuationCurve(r, losses, grads, float(floor), include_log_term)


def write_curve_csv(curve: AttenuationCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["residual", "loss", "grad"])
        for r, l, g in zip(curve.residuals, curve.losses, curve.grads):
            writer.writerow([repr(float(r)), repr(float(l)), repr(float(g))])


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = f(x)
        flat[i] = orig - h
        lo = f(x)
        flat[i] = orig
        gf[i] = (hi - lo) / (2.0 * h)
    return g


def _rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max componentwise error relative to max(|a|, |n|, 1)."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    b = np.asarray(numeric, dtype=np.float64).ravel()
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def _ln_trial(rng: np.random.Generator):
    dummy = bool(rng.integers(2))
    num_classes = int(rng.integers(2, 7))
    bij = BijectorConfig(num_classes, float(rng.uniform(0.3, 3.0)), dummy, float(rng.uniform(0.005, 0.2)))
    sigma = SigmaSpec(ln.SIGMA_MODES[rng.integers(4)], float(rng.uniform(0.1, 2.0)))
    d = bij.logit_dim
    h = sigma.head_dim(d)
    mean = rng.standard_normal(d)
    raw = rng.standard_normal(h)
    label = int(rng.integers(num_classes))
    y = target_matrix(bij)[label]

    def f(x):
        losses, _, _ = ln.batch_loss_grads(x[None, :d], x[None, d:], y[None, :], sigma)
        return float(losses[0])

    _, d_mean, d_cov = ln.batch_loss_grads(mean[None, :], raw[None, :], y[None, :], sigma)
    return f, np.concatenate([mean, raw]), np.concatenate([d_mean[0], d_cov[0]])


def _ce_family_trial(rng: np.random.Generator, method: str):
    k = int(rng.integers(2, 8))
    z = 2.0 * rng.standard_normal(k)
    if method == "ce":
        target = int(rng.integers(k)) if rng.integers(2) else rng.standard_normal(k)
        return (lambda x: baselines.ce_loss(x, target)), z, baselines.ce_grad(z, target)
    if method == "ls":
        label = int(rng.integers(k))
        s = float(rng.uniform(0.0, 0.5))
        return (lambda x: baselines.ls_loss(x, label, s)), z, baselines.ls_grad(z, label, s)
    if method == "gce":
        label = int(rng.integers(k))
        q = 1.0 if rng.integers(4) == 0 else float(rng.uniform(0.05, 1.0))
        return (lambda x: baselines.gce_loss(x, label, q)), z, baselines.gce_grad(z, label, q)
    # nan: CE against a noisy, unnormalized target
    label = int(rng.integers(k))
    target = baselines.nan_target(label, k, float(rng.uniform(0.1, 1.0)), rng)
    return (lambda x: baselines.ce_loss(x, target)), z, baselines.ce_grad(z, target)


def _het_trial(rng: np.random.Generator, method: str):
    k = int(rng.integers(2, 6))
    temperature = 1.0 if method == "het" else float(rng.uniform(0.3, 3.0))
    rank = int(rng.integers(1, 5)) if method == "het_tau_full" else 0
    cfg = baselines.HetConfig(temperature=temperature, num_samples=8, rank=rank)
    mean = rng.standard_normal(k)
    raw = rng.standard_normal(cfg.head_dim(k))
    label = int(rng.integers(k))
    labels = np.array([label])
    n_diag = rng.standard_normal((1, cfg.num_samples, k))
    n_fact = rng.standard_normal((1, cfg.num_samples, rank)) if rank > 0 else None

    def f(x):
        losses, _, _ = baselines.het_loss_grads_with_noise(
            x[None, :k], x[None, k:], labels, cfg, n_diag, n_fact)
        return float(losses[0])

    _, d_mean, d_cov = baselines.het_loss_grads_with_noise(mean[None, :], raw[None, :], labels, cfg, n_diag, n_fact)
    return f, np.concatenate([mean, raw]), np.concatenate([d_mean[0], d_cov[0]])


def _loss_trial(method: str, rng: np.random.Generator):
    if method == "ln":
        return _ln_trial(rng)
    if method in ("ce", "ls", "gce", "nan"):
        return _ce_family_trial(rng, method)
    return _het_trial(rng, method)


def _e2e_trial(method: str, rng: np.random.Generator):
    """Random small network + batch; returns (f(flat)->mean loss, flat0, analytic)."""
    n, input_dim = 4, 3
    num_classes = int(rng.integers(2, 5))
    m = MethodConfig(
        name=method,
        temperature=float(rng.uniform(0.5, 2.0)),
        floor=float(rng.uniform(0.2, 1.5)),
        sigma_mode=ln.SIGMA_MODES[rng.integers(4)],
        dummy_class=bool(rng.integers(2)),
        het_samples=8,
        het_rank=int(rng.integers(1, 3)),
    )
    state = _build_method_state(m, num_classes)
    mlp = net.MLPSpec(input_dim, (6, 5), state.mean_dim, state.cov_dim, "relu")
    for _attempt in range(50):
        x = rng.standard_normal((n, input_dim))
        params = net.init_params(mlp, int(rng.integers(1 << 30)))
        pre, _act = net.forward(mlp, params, x)[2]
        if min(float(np.abs(z).min()) for z in pre) > 1e-3:  # keep FD away from the relu kinks
            break
    labels = rng.integers(0, num_classes, size=n)
    nan_rows = baselines.nan_targets(labels, num_classes, m.nan_std, rng) if method == "nan" else None
    n_diag = n_fact = None
    if state.het is not None:
        n_diag = rng.standard_normal((n, state.het.num_samples, num_classes))
        if state.het.rank > 0:
            n_fact = rng.standard_normal((n, state.het.num_samples, state.het.rank))

    def batch_losses(mean, cov):
        if state.het is not None:
            return baselines.het_loss_grads_with_noise(mean, cov, labels, state.het, n_diag, n_fact)
        return _batch_loss_grads(state, mean, cov, labels, None, nan_rows)

    def f(flat):
        p = net.unflatten(mlp, flat)
        mean, cov, _ = net.forward(mlp, p, x)
        losses, _, _ = batch_losses(mean, cov)
        return float(losses.mean())

    flat0 = net.flatten(mlp, params)
    mean, cov, cache = net.forward(mlp, params, x)
    _, d_mean, d_cov = batch_losses(mean, cov)
    grads = net.backward(mlp, params, cache, d_mean / n, d_cov / n)
    return f, flat0, net.flatten(mlp, {k: grads[k] for k in net.param_keys(mlp)})


@dataclass
class MethodGradCheck:
    method: str
    loss_trials: int
    e2e_trials: int
    max_err_loss: float
    max_err_e2e: float

    def passed(self, loss_tol: float, e2e_tol: float) -> bool:
        return self.max_err_loss < loss_tol and self.max_err_e2e < e2e_tol


@dataclass
class GradCheckReport:
    checks: list[MethodGradCheck]
    loss_tol: float = LOSS_GRAD_TOL
    e2e_tol: float = E2E_GRAD_TOL

    @property
    def passed(self) -> bool:
        return all(c.passed(self.loss_tol, self.e2e_tol) for c in self.checks)

    def summary_lines(self) -> list[str]:
        lines = []
        for c in self.checks:
            status = "ok" if c.passed(self.loss_tol, self.e2e_tol) else "FAIL"
            lines.append(
                f"{c.method:>12}: loss max rel err {c.max_err_loss:.3e} "
                f"({c.loss_trials} trials), end-to-end {c.max_err_e2e:.3e} "
                f"({c.e2e_trials} nets) [{status}]"
            )
        return lines


def gradcheck(methods=None, trials: int = 200, seed: int = 0, e2e_trials: int = 8,
              perturbation: float = 0.0) -> GradCheckReport:
    """Compare analytic gradients with central finite differences.

    `perturbation` adds a constant to every analytic gradient (a negative
    control: a nonzero value must make the check fail).
    """
    methods = list(methods) if methods else list(METHODS)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; valid: {METHODS}")
    checks = []
    for mi, method in enumerate(methods):
        rng = np.random.default_rng(np.random.SeedSequence((seed, mi)))
        worst_loss = 0.0
        for _ in range(trials):
            f, x0, analytic = _loss_trial(method, rng)
            numeric = central_difference(f, x0.copy())
            worst_loss = max(worst_loss, _rel_err(analytic + perturbation, numeric))
        worst_e2e = 0.0
        for _ in range(e2e_trials):
            f, x0, analytic = _e2e_trial(method, rng)
            numeric = central_difference(f, x0.copy())
            worst_e2e = max(worst_e2e, _rel_err(analytic + perturbation, numeric))
        checks.append(MethodGradCheck(method, trials, e2e_trials, worst_loss, worst_e2e))
    return GradCheckReport(checks)
