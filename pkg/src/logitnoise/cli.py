"""Command-line interface.

Subcommands: train, sweep, gradcheck, hist, curve, datagen.  Experiments are
described by a YAML config file with the sections below (all keys optional;
unknown sections or keys are rejected by name):

    experiment:   seed, eval_every
    method:       name, temperature, floor, sigma_mode, dummy_class,
                  smoothing, ls_smoothing, gce_q, nan_std, het_samples,
                  het_rank
    model:        hidden, activation
    optimizer:    kind, learning_rate, weight_decay, momentum, beta1, beta2,
                  eps, batch_size, epochs
    data:         kind, n, noise_std, radius_ratio, num_classes, cluster_std,
                  radius, validation_fraction, test_n, images_path,
                  labels_path, test_images_path, test_labels_path, max_n
    noise:        kind, rate, preset, mapping, exclude_own_class, seed
    sweep:        grid (dotted key -> list of values), repeats

Dotted overrides (`--set section.key=value`, value parsed as YAML) are
applied before validation.  Output goes to --out, else
$LOGITNOISE_OUT/<config stem>, else ./runs/<config stem>.

Exit codes: 0 success; 1 invalid usage/config (the message names the
offending key) or a failed grad check; 2 runtime/IO errors such as a missing
config file (the message includes the path).
"""

from __future__ import annotations

import argparse
import itertools
import os
import sys
from dataclasses import fields as dataclass_fields, replace

import numpy as np
import yaml

from . import harness, net
from .data import export_csv

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class ConfigError(ValueError):
    """Invalid CLI usage or config contents (exit code 1)."""


_SECTIONS = {
    "method": harness.MethodConfig,
    "data": harness.DataConfig,
    "noise": harness.NoiseConfig,
    "model": harness.ModelConfig,
    "optimizer": net.OptimizerSpec,
}
_EXPERIMENT_KEYS = ("seed", "eval_every")
_SWEEP_KEYS = ("grid", "repeats")


def _build_section(name: str, cls, mapping: dict):
    valid = {f.name for f in dataclass_fields(cls)}
    for key in mapping:
        if key not in valid:
            raise ConfigError(f"unknown key '{name}.{key}' (valid keys: {', '.join(sorted(valid))})")
    try:
        return cls(**mapping)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{name}] config: {exc}") from exc


def _validate_raw(raw: dict) -> harness.ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping of sections")
    known = set(_SECTIONS) | {"experiment", "sweep"}
    for section in raw:
        if section not in known:
            raise ConfigError(f"unknown section '{section}' (valid sections: {', '.join(sorted(known))})")
        if raw[section] is not None and not isinstance(raw[section], dict):
            raise ConfigError(f"section '{section}' must be a mapping")
    exp = raw.get("experiment") or {}
    for key in exp:
        if key not in _EXPERIMENT_KEYS:
            raise ConfigError(f"unknown key 'experiment.{key}' (valid keys: {', '.join(_EXPERIMENT_KEYS)})")
    for key in raw.get("sweep") or {}:
        if key not in _SWEEP_KEYS:
            raise ConfigError(f"unknown key 'sweep.{key}' (valid keys: {', '.join(_SWEEP_KEYS)})")
    parts = {name: _build_section(name, cls, dict(raw.get(name) or {})) for name, cls in _SECTIONS.items()}
    try:
        return harness.ExperimentConfig(
            method=parts["method"],
            data=parts["data"],
            noise=parts["noise"],
            model=parts["model"],
            optimizer=parts["optimizer"],
            seed=int(exp.get("seed", 0)),
            eval_every=int(exp.get("eval_every", 10)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [experiment] config: {exc}") from exc


def _apply_override(raw: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"override '{assignment}' must look like section.key=value")
    dotted, text = assignment.split("=", 1)
    if "." not in dotted:
        raise ConfigError(f"override key '{dotted}' must look like section.key")
    section, key = dotted.split(".", 1)
    try:
        value = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"could not parse override value {text!r}: {exc}") from exc
    raw.setdefault(section, {})
    if raw[section] is None:
        raw[section] = {}
    raw[section][key] = value


def _load_raw_config(path: str, overrides) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise RuntimeError(f"cannot read config file '{path}': {exc.strerror}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file '{path}' is not valid YAML: {exc}") from exc
    raw = raw or {}
    for assignment in overrides or []:
        _apply_override(raw, assignment)
    return raw


def load_config(path: str, overrides=None) -> harness.ExperimentConfig:
    """Read, override, and validate an experiment config file."""
    return _validate_raw(_load_raw_config(path, overrides))


def _out_dir(args) -> str:
    if args.out:
        out = args.out
    else:
        root = os.environ.get("LOGITNOISE_OUT", "runs")
        stem = os.path.splitext(os.path.basename(getattr(args, "config", "run")))[0]
        out = os.path.join(root, f"{args.command}-{stem}" if args.command != "train" else stem)
    os.makedirs(out, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_train(args) -> int:
    cfg = load_config(args.config, args.set)
    out = _out_dir(args)
    model = harness.train_model(cfg)
    metrics_path = os.path.join(out, "metrics.csv")
    harness.write_metrics_csv(model.metrics, metrics_path)
    net.save_checkpoint(os.path.join(out, "model.npz"), model.mlp_spec, model.params)
    final = model.metrics.final
    print(
        f"train ok: method={cfg.method.name} epochs={cfg.optimizer.epochs} "
        f"test_acc={final.test_acc:.4f} val_acc={final.val_acc:.4f} -> {metrics_path}"
    )
    return EXIT_OK


def _expand_grid(cfg_raw: dict) -> tuple[list[dict], int]:
    sweep_section = dict(cfg_raw.get("sweep") or {})
    grid = sweep_section.get("grid") or {}
    repeats = int(sweep_section.get("repeats", 5))
    if not isinstance(grid, dict) or not all(isinstance(v, list) for v in grid.values()):
        raise ConfigError("sweep.grid must map dotted keys to lists of values")
    keys = list(grid)
    combos = list(itertools.product(*[grid[k] for k in keys])) if keys else [()]
    raws = []
    for combo in combos:
        raw = {k: dict(v) if isinstance(v, dict) else v for k, v in cfg_raw.items() if k != "sweep"}
        for key, value in zip(keys, combo):
            _apply_override(raw, f"{key}={yaml.safe_dump(value).strip()}")
        raws.append(raw)
    return raws, repeats


def _cmd_sweep(args) -> int:
    cfg_raw = _load_raw_config(args.config, args.set)
    raws, repeats = _expand_grid(cfg_raw)
    if args.repeats:
        repeats = args.repeats
    configs = [_validate_raw(raw) for raw in raws]
    result = harness.sweep(configs, repeats)
    out = _out_dir(args)
    sweep_path = os.path.join(out, "sweep.csv")
    with open(sweep_path, "w", newline="") as fh:
        fh.write("config_index,val_acc,is_winner\n")
        for i, acc in enumerate(result.val_accs):
            fh.write(f"{i},{acc!r},{int(i == result.winner_index)}\n")
    seeds_path = os.path.join(out, "winner_seeds.csv")
    with open(seeds_path, "w", newline="") as fh:
        fh.write("seed,test_acc\n")
        for i, acc in enumerate(result.seed_test_accs):
            fh.write(f"{result.winner.seed + i},{acc!r}\n")
    print(
        f"sweep ok: {len(configs)} configs, winner index {result.winner_index}, "
        f"test_acc {result.test_mean:.4f} +/- {result.test_std:.4f} over {repeats} seeds -> {sweep_path}"
    )
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    methods = args.methods.split(",") if args.methods else None
    try:
        report = harness.gradcheck(methods=methods, trials=args.trials, seed=args.seed,
                                   perturbation=args.perturbation)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    lines = report.summary_lines()
    for line in lines:
        print(line)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "gradcheck.txt"), "w") as fh:
            fh.write("\n".join(lines) + "\n")
    if report.passed:
        print(f"gradcheck ok: tolerances loss<{report.loss_tol:g} end-to-end<{report.e2e_tol:g}")
        return EXIT_OK
    print("gradcheck FAILED", file=sys.stderr)
    return EXIT_USAGE


def _cmd_hist(args) -> int:
    cfg = load_config(args.config, args.set)
    if cfg.method.name != "ln":
        raise ConfigError(f"hist requires method.name=ln, got {cfg.method.name!r}")
    out = _out_dir(args)
    model = harness.train_model(cfg)
    report = harness.residual_report(model, model.train_set, args.sigma_eval)
    residuals_path = os.path.join(out, "residuals.csv")
    harness.write_residuals_csv(report, residuals_path)
    harness.write_histogram_csv(report, os.path.join(out, "histogram.csv"))
    n_corr = int(report.corrupted.sum())
    print(
        f"hist ok: {report.values_identity.size} examples ({n_corr} corrupted), "
        f"sigma_eval={args.sigma_eval} -> {residuals_path}"
    )
    return EXIT_OK


def _cmd_curve(args) -> int:
    if args.r_min <= 0 or args.r_max <= args.r_min:
        raise ConfigError("curve needs 0 < r-min < r-max")
    residuals = np.geomspace(args.r_min, args.r_max, args.points)
    try:
        curve = harness.attenuation_curve(args.floor, residuals, include_log_term=args.log_term)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = _out_dir(args)
    path = os.path.join(out, "curve.csv")
    harness.write_curve_csv(curve, path)
    print(f"curve ok: floor={args.floor} over [{args.r_min}, {args.r_max}] ({args.points} points) -> {path}")
    return EXIT_OK


def _cmd_datagen(args) -> int:
    cfg = load_config(args.config, args.set)
    train, val, test = harness.build_datasets(cfg)
    out = _out_dir(args)
    paths = {}
    for name, ds in (("train", train), ("val", val), ("test", test)):
        paths[name] = os.path.join(out, f"{name}.csv")
        export_csv(ds, paths[name])
    print(
        f"datagen ok: train={train.n} ({int(train.corrupted.sum())} corrupted) "
        f"val={val.n} test={test.n} -> {out}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); route to exit code 1
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="logitnoise", description="Label-noise robustness experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_cmd(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", default=[],
                       help="override a config value (repeatable)")
        p.set_defaults(fn=fn)
        return p

    add_config_cmd("train", _cmd_train, "train one model and write metrics.csv")
    p = add_config_cmd("sweep", _cmd_sweep, "grid search from the config's sweep section")
    p.add_argument("--repeats", type=int, default=0, help="override sweep.repeats")
    p = add_config_cmd("hist", _cmd_hist, "train and write residual histograms")
    p.add_argument("--sigma-eval", choices=("identity", "learned"), default="learned")
    add_config_cmd("datagen", _cmd_datagen, "generate and export the configured datasets")

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--methods", default="", help="comma-separated method names (default: all)")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--perturbation", type=float, default=0.0,
                   help="add a constant to analytic gradients (negative control)")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("curve", help="attenuation curve table")
    p.add_argument("--floor", type=float, required=True)
    p.add_argument("--r-min", type=float, default=1e-3)
    p.add_argument("--r-max", type=float, default=1e2)
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--log-term", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_curve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except ValueError as exc:  # includes ConfigError and config-value errors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
