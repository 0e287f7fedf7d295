"""End-to-end experiment orchestration shared by the CLI and tests.

A run resolves a nested config (file plus overrides) into: load or
generate the raw table, correlation-filter, undersample to 50-50,
stratified split, fit encodings on the training rows, train the
classifier with the selected negative-phase sampler, evaluate per
epoch, and write the artifacts (best-epoch model, preprocessing specs,
trace CSV/JSON, best-epoch metrics, run manifest). The manifest embeds
the fully resolved config, so a run can be reproduced from it alone.
"""

from __future__ import annotations

import copy
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import product
from pathlib import Path

import numpy as np
import pandas as pd

from . import metrics as metrics_mod
from . import pipeline, training
from .errors import DomainError
from .model import RbmModel, UnitKind, copy_model, initialize_model, save_model
from .samplers import AnnealConfig

MANIFEST_FORMAT = "annealrbm-manifest/1"

CONFIG_SKELETON = {
    "data": {},
    "pipeline": {
        "correlation_threshold": 0.95,
        "balance_seed": 11,
        "split_fraction": 0.8,
        "split_seed": 13,
        "keep_columns": None,
    },
    "model": {
        "n_hidden": 16,
        "init_seed": 17,
        "init_scale": 1.0,
    },
    "train": {
        "epochs": 50,
        "batch_size": 64,
        "gibbs_k": 1,
        "seed": 19,
        "shuffle": True,
        "lr": {"kind": "exp-to-zero", "initial": 0.1},
        "sampler": {"kind": "pcd-gibbs"},
    },
}

SAMPLER_DEFAULTS = {
    "reads": 100,
    "sweeps": 100,
    "beta_initial": 0.1,
    "beta_final": 1.0,
    "interpolation": "linear",
    "client": "mock",
}


def deep_merge(base: dict, override: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def resolve_config(user: dict) -> dict:
    config = deep_merge(CONFIG_SKELETON, user)
    data = config["data"]
    has_synth = bool(data.get("synth"))
    has_csv = bool(data.get("csv"))
    if has_synth == has_csv:
        raise DomainError(
            "config needs exactly one data source: data.synth or data.csv")
    if has_csv:
        if not data.get("kinds"):
            raise DomainError("data.csv requires data.kinds")
        for key in ("csv", "kinds"):
            if not Path(data[key]).exists():
                raise DomainError(f"data.{key} path does not exist: {data[key]}")
    sampler = dict(SAMPLER_DEFAULTS)
    sampler.update(config["train"]["sampler"])
    kind = sampler.get("kind")
    if kind not in ("pcd-gibbs", "simulated-anneal", "annealer-client"):
        raise DomainError(f"unknown sampler kind {kind!r}")
    if kind == "annealer-client":
        client = sampler.get("client", "mock")
        if client.startswith("replay:"):
            replay = client.split(":", 1)[1]
            if not Path(replay).exists():
                raise DomainError(f"replay file does not exist: {replay}")
        elif client != "mock":
            raise DomainError(f"unknown annealer client {client!r}")
    config["train"]["sampler"] = sampler
    return config


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _lr_schedule(spec: dict, epochs: int) -> training.LrSchedule:
    kind = spec.get("kind", "exp-to-zero")
    if kind == "exp-to-zero":
        return training.ExpToZero(spec.get("initial", 0.1), epochs)
    if kind == "smooth-exp":
        return training.SmoothExp(spec.get("eta0", 0.1),
                                  spec.get("lambda", 0.1),
                                  spec.get("etaf", 0.01))
    if kind == "constant":
        return training.Constant(spec.get("value", 0.01))
    raise DomainError(f"unknown lr schedule kind {kind!r}")


def _negative_spec(sampler: dict) -> training.NegativeSpec:
    kind = sampler["kind"]
    if kind == "pcd-gibbs":
        return training.GibbsNegative()
    anneal = AnnealConfig(
        num_reads=sampler["reads"], sweeps=sampler["sweeps"],
        beta_initial=sampler["beta_initial"], beta_final=sampler["beta_final"],
        interpolation=sampler["interpolation"])
    if kind == "simulated-anneal":
        return training.SamplerNegative("simulated-anneal", anneal,
                                        sampler["reads"])
    client = sampler.get("client", "mock")
    if client == "mock":
        return training.SamplerNegative("annealer-mock", anneal,
                                        sampler["reads"])
    return training.SamplerNegative("annealer-replay", anneal,
                                    sampler["reads"],
                                    replay_path=client.split(":", 1)[1])


def build_train_config(config: dict) -> training.TrainConfig:
    section = config["train"]
    return training.TrainConfig(
        epochs=section["epochs"],
        batch_size=section["batch_size"],
        lr=_lr_schedule(section["lr"], section["epochs"]),
        gibbs_k=section["gibbs_k"],
        negative=_negative_spec(section["sampler"]),
        seed=section["seed"],
        shuffle=section["shuffle"],
    )


def load_table(config: dict):
    data = config["data"]
    if data.get("synth"):
        synth = data["synth"]
        table = pipeline.synth_generate(
            synth["n_rows"], synth["n_numeric"], synth["n_categorical"],
            synth["class_sep"], synth["fraud_rate"], synth["seed"])
        kinds = pipeline.synth_kinds(synth["n_numeric"],
                                     synth["n_categorical"])
    else:
        table = pd.read_csv(data["csv"])
        kinds = pipeline.load_kinds(data["kinds"])
    return table, kinds


@dataclass
class PreparedData:
    train_visible: np.ndarray       # features plus one-hot labels
    train_features: np.ndarray
    train_labels: np.ndarray
    test_features: np.ndarray
    test_labels: np.ndarray
    specs: tuple
    feature_names: tuple
    unit_kinds: tuple
    correlation_drops: list


def prepare_data(config: dict) -> PreparedData:
    table, kinds = load_table(config)
    pipe = config["pipeline"]
    label_col = [c for c, k in kinds.items() if k == "label"][0]
    keep = pipe.get("keep_columns")
    if keep:
        dropped = [c for c in table.columns
                   if c != label_col and c not in keep]
        table = table.drop(columns=dropped)
        kinds = {c: k for c, k in kinds.items() if c in table.columns}
    table, drops = pipeline.correlation_filter(
        table, kinds, pipe["correlation_threshold"])
    kinds = {c: k for c, k in kinds.items() if c in table.columns}
    table = pipeline.undersample_balance(table, label_col,
                                         pipe["balance_seed"])
    train_table, test_table = pipeline.split(
        table, label_col, pipe["split_fraction"], pipe["split_seed"])
    train_ds, specs = pipeline.fit_encode(train_table, kinds)
    test_ds = pipeline.transform(test_table, specs)

    unit_kinds = []
    for spec in specs:
        if spec.kind == "numerical":
            unit_kinds.append(UnitKind.GAUSSIAN)
        elif spec.kind == "categorical":
            unit_kinds.extend([UnitKind.BERNOULLI] * len(spec.categories))
    onehot = np.zeros((len(train_ds.labels), 2))
    onehot[np.arange(len(train_ds.labels)), train_ds.labels] = 1.0
    train_visible = np.hstack([train_ds.features, onehot])
    unit_kinds.extend([UnitKind.BERNOULLI, UnitKind.BERNOULLI])
    return PreparedData(train_visible, train_ds.features, train_ds.labels,
                        test_ds.features, test_ds.labels, specs,
                        train_ds.feature_names, tuple(unit_kinds),
                        [d.__dict__ for d in drops])


@dataclass
class RunSummary:
    out_dir: Path
    config: dict
    config_hash: str
    best_epoch: int
    best_report: metrics_mod.MetricsReport
    traces: list
    total_wall_time_s: float
    n_visible: int
    n_hidden: int


def run_experiment(user_config: dict, out_dir) -> RunSummary:
    config = resolve_config(user_config)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()

    data = prepare_data(config)
    n_features = data.train_features.shape[1]
    visible_means = data.train_visible.mean(axis=0)
    model = initialize_model(
        data.unit_kinds, config["model"]["n_hidden"],
        config["model"]["init_seed"], config["model"]["init_scale"],
        visible_means, label_span=(n_features, 2))

    best = {"epoch": 0, "f1": -1.0, "report": None, "model": None}

    def eval_hook(current: RbmModel, epoch: int):
        report = metrics_mod.evaluate(current, data.test_features,
                                      data.test_labels)
        if report.f1 > best["f1"]:
            best.update(epoch=epoch, f1=report.f1, report=report,
                        model=copy_model(current))
        return report

    train_config = build_train_config(config)
    final_model, traces = training.train(model, data.train_visible,
                                         train_config, eval_hook)
    total = time.perf_counter() - started

    best_model = best["model"] if best["model"] is not None else final_model
    save_model(best_model, out_dir / "model.json")
    pipeline.specs_to_json(data.specs, out_dir / "specs.json",
                           {"feature_names": list(data.feature_names)})
    training.traces_to_csv(traces, out_dir / "trace.csv")
    training.traces_to_json(traces, out_dir / "trace.json")
    metrics_mod.write_metrics_json(best["report"], out_dir / "metrics.json",
                                   epoch=best["epoch"])
    digest = config_hash(config)
    manifest = {
        "format": MANIFEST_FORMAT,
        "config": config,
        "config_hash": digest,
        "sampler": config["train"]["sampler"]["kind"],
        "n_visible": best_model.n_visible,
        "n_hidden": best_model.n_hidden,
        "feature_names": list(data.feature_names),
        "correlation_drops": data.correlation_drops,
        "best_epoch": best["epoch"],
        "best_f1": best["f1"],
        "epoch_wall_times_ms": [t.wall_time_ms for t in traces],
        "total_wall_time_s": total,
        "artifacts": {
            "model": "model.json",
            "specs": "specs.json",
            "trace_csv": "trace.csv",
            "trace_json": "trace.json",
            "metrics": "metrics.json",
        },
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    return RunSummary(out_dir, config, digest, best["epoch"], best["report"],
                      traces, total, best_model.n_visible,
                      best_model.n_hidden)


def config_from_manifest(path) -> dict:
    with open(path) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != MANIFEST_FORMAT:
        raise DomainError(f"{path}: not an annealrbm manifest")
    return manifest["config"]


COMPARISON_COLUMNS = ("method", "accuracy", "precision", "recall", "f1",
                      "total_time_s")


def write_comparison_table(rows, path):
    """Table-style comparison: one row per training method."""
    lines = [",".join(COMPARISON_COLUMNS)]
    for row in rows:
        lines.append(",".join([
            str(row["method"]), repr(float(row["accuracy"])),
            repr(float(row["precision"])), repr(float(row["recall"])),
            repr(float(row["f1"])), repr(float(row["total_time_s"]))]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def comparison_row(method: str, summary: RunSummary) -> dict:
    report = summary.best_report
    return {"method": method, "accuracy": report.accuracy,
            "precision": report.precision, "recall": report.recall,
            "f1": report.f1, "total_time_s": summary.total_wall_time_s}


def set_by_path(config: dict, dotted_key: str, value):
    node = config
    parts = dotted_key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


def _run_cell(args):
    base_config, overrides, out_dir = args
    config = copy.deepcopy(base_config)
    for key, value in overrides.items():
        set_by_path(config, key, value)
    summary = run_experiment(config, out_dir)
    report = summary.best_report
    return {
        "overrides": overrides,
        "out_dir": str(out_dir),
        "best_epoch": summary.best_epoch,
        "accuracy": report.accuracy,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
        "total_time_s": summary.total_wall_time_s,
    }


def grid_search(base_config: dict, grid: dict, out_dir, workers: int = 1):
    """Cartesian grid over dotted config keys, ranked by best-epoch F1.

    Ties break by precision, then recall. Returns the ranked row list
    and writes ``results.csv`` under ``out_dir``.
    """
    if not grid:
        raise DomainError("empty grid")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    axes = list(grid.items())
    cells = []
    for i, values in enumerate(product(*(vals for _, vals in axes))):
        overrides = {key: val for (key, _), val in zip(axes, values)}
        cells.append((base_config, overrides, out_dir / f"cell_{i:03d}"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_cell, cells))
    else:
        rows = [_run_cell(cell) for cell in cells]
    rows.sort(key=lambda r: (-r["f1"], -r["precision"], -r["recall"]))
    header = (["rank"] + [key for key, _ in axes]
              + ["best_epoch", "accuracy", "precision", "recall", "f1",
                 "total_time_s", "out_dir"])
    lines = [",".join(header)]
    for rank, row in enumerate(rows, start=1):
        cells_out = [str(rank)]
        cells_out += [str(row["overrides"][key]) for key, _ in axes]
        cells_out += [str(row["best_epoch"]), repr(row["accuracy"]),
                      repr(row["precision"]), repr(row["recall"]),
                      repr(row["f1"]), repr(row["total_time_s"]),
                      row["out_dir"]]
        lines.append(",".join(cells_out))
    (out_dir / "results.csv").write_text("\n".join(lines) + "\n")
    return rows
