"""Command-line front end: train, eval, gridsearch, sample, synth.

Flags mirror the experiment config fields and override values loaded
from ``--config``. ``ANNEALRBM_OUTDIR`` supplies the default output
directory root; no other behavior is environment-driven (kernel backend
selection aside, see ``_kernels``).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import pandas as pd

from . import experiment, metrics as metrics_mod, pipeline
from .errors import DivergenceError, DomainError, PipelineError
from .model import load_model
from .qubo import ISING_HEADER, qubo_to_ising, read_ising_file, read_qubo_file
from .samplers import (AnnealConfig, MockAnnealer, ReplayAnnealer,
                       simulated_anneal, write_sample_set)

OUTDIR_ENV_VAR = "ANNEALRBM_OUTDIR"


def _default_out_root() -> Path:
    return Path(os.environ.get(OUTDIR_ENV_VAR, "runs"))


def _load_config(args) -> dict:
    if args.from_manifest:
        return experiment.config_from_manifest(args.from_manifest)
    if args.config:
        with open(args.config) as fh:
            return json.load(fh)
    return {}


def _apply_train_flags(config: dict, args) -> dict:
    flag_map = {
        "synth_rows": ("data.synth.n_rows", int),
        "synth_numeric": ("data.synth.n_numeric", int),
        "synth_categorical": ("data.synth.n_categorical", int),
        "class_sep": ("data.synth.class_sep", float),
        "fraud_rate": ("data.synth.fraud_rate", float),
        "synth_seed": ("data.synth.seed", int),
        "csv": ("data.csv", str),
        "kinds": ("data.kinds", str),
        "corr_threshold": ("pipeline.correlation_threshold", float),
        "balance_seed": ("pipeline.balance_seed", int),
        "split_fraction": ("pipeline.split_fraction", float),
        "split_seed": ("pipeline.split_seed", int),
        "n_hidden": ("model.n_hidden", int),
        "init_seed": ("model.init_seed", int),
        "epochs": ("train.epochs", int),
        "batch_size": ("train.batch_size", int),
        "gibbs_k": ("train.gibbs_k", int),
        "seed": ("train.seed", int),
        "sampler": ("train.sampler.kind", str),
        "client": ("train.sampler.client", str),
        "reads": ("train.sampler.reads", int),
        "sweeps": ("train.sampler.sweeps", int),
        "beta_initial": ("train.sampler.beta_initial", float),
        "beta_final": ("train.sampler.beta_final", float),
        "lr_kind": ("train.lr.kind", str),
        "lr_initial": ("train.lr.initial", float),
        "lr_eta0": ("train.lr.eta0", float),
        "lr_lambda": ("train.lr.lambda", float),
        "lr_etaf": ("train.lr.etaf", float),
        "lr_value": ("train.lr.value", float),
    }
    for flag, (path, cast) in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            experiment.set_by_path(config, path, cast(value))
    return config


def _add_train_flags(parser):
    parser.add_argument("--config", help="JSON experiment config")
    parser.add_argument("--from-manifest", dest="from_manifest",
                        help="re-run the config embedded in a run manifest")
    parser.add_argument("--out", help="output directory")
    for flag in ("--synth-rows", "--synth-numeric", "--synth-categorical",
                 "--synth-seed", "--n-hidden", "--init-seed", "--epochs",
                 "--batch-size", "--gibbs-k", "--seed", "--reads", "--sweeps",
                 "--balance-seed", "--split-seed"):
        parser.add_argument(flag, type=int)
    for flag in ("--class-sep", "--fraud-rate", "--corr-threshold",
                 "--split-fraction", "--beta-initial", "--beta-final",
                 "--lr-initial", "--lr-eta0", "--lr-lambda", "--lr-etaf",
                 "--lr-value"):
        parser.add_argument(flag, type=float)
    parser.add_argument("--csv")
    parser.add_argument("--kinds")
    parser.add_argument("--sampler", choices=["pcd-gibbs", "simulated-anneal",
                                              "annealer-client"])
    parser.add_argument("--client", help="annealer client: mock or replay:PATH")
    parser.add_argument("--lr-kind", choices=["exp-to-zero", "smooth-exp",
                                              "constant"])


def cmd_train(args) -> int:
    config = _apply_train_flags(_load_config(args), args)
    resolved = experiment.resolve_config(config)
    out_dir = Path(args.out) if args.out else (
        _default_out_root() / experiment.config_hash(resolved)[:12])
    summary = experiment.run_experiment(config, out_dir)
    report = summary.best_report
    print(f"run written to {summary.out_dir}")
    print(f"best epoch {summary.best_epoch} by F1:")
    print(f"  accuracy  {report.accuracy:.4f}")
    print(f"  precision {report.precision:.4f}")
    print(f"  recall    {report.recall:.4f}")
    print(f"  f1        {report.f1:.4f}")
    print(f"total wall time {summary.total_wall_time_s:.1f} s")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.model)
    specs = pipeline.specs_from_json(args.specs)
    table = pd.read_csv(args.data)
    if len(table) == 0:
        raise PipelineError(f"{args.data}: no rows to evaluate")
    dataset = pipeline.transform(table, specs)
    if dataset.features.shape[1] + 2 != model.n_visible:
        raise DomainError(
            f"specs encode {dataset.features.shape[1]} features but the model "
            f"expects {model.n_visible - 2}")
    report = metrics_mod.evaluate(model, dataset.features, dataset.labels)
    print(json.dumps(report.to_dict(), indent=1))
    if args.out:
        metrics_mod.write_metrics_json(report, args.out)
    return 0


def cmd_gridsearch(args) -> int:
    with open(args.grid) as fh:
        grid = json.load(fh)
    config = _load_config(args)
    out_dir = Path(args.out) if args.out else (
        _default_out_root() / "gridsearch")
    rows = experiment.grid_search(config, grid, out_dir,
                                  workers=args.workers)
    print(f"ranked results in {out_dir / 'results.csv'}")
    best = rows[0]
    print(f"best cell: {best['overrides']} f1={best['f1']:.4f}")
    return 0


def cmd_sample(args) -> int:
    text = Path(args.problem).read_text()
    if text.startswith(ISING_HEADER):
        problem = read_ising_file(args.problem)
    else:
        problem = qubo_to_ising(read_qubo_file(args.problem))
    anneal = AnnealConfig(num_reads=args.reads, sweeps=args.sweeps,
                          beta_initial=args.beta_initial,
                          beta_final=args.beta_final, seed=args.seed)
    if args.client == "mock":
        samples = MockAnnealer(anneal).submit(problem, args.reads, args.seed)
    elif args.client and args.client.startswith("replay:"):
        samples = ReplayAnnealer(args.client.split(":", 1)[1]).submit(
            problem, args.reads)
    else:
        samples = simulated_anneal(problem, anneal)
    write_sample_set(samples, args.out)
    print(f"{samples.total_reads} reads over {samples.configurations.shape[0]} "
          f"distinct configurations -> {args.out}")
    print(f"lowest energy {samples.energies.min()}")
    return 0


def cmd_synth(args) -> int:
    table = pipeline.synth_generate(args.rows, args.numeric, args.categorical,
                                    args.class_sep, args.fraud_rate, args.seed)
    table.to_csv(args.out, index=False)
    kinds = pipeline.synth_kinds(args.numeric, args.categorical)
    kinds_path = args.kinds_out or str(Path(args.out).with_suffix(".kinds.json"))
    with open(kinds_path, "w") as fh:
        json.dump(kinds, fh, indent=1)
        fh.write("\n")
    print(f"wrote {len(table)} rows to {args.out}; kinds in {kinds_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="annealrbm",
        description="Train and evaluate RBM classifiers with Gibbs, "
                    "simulated-annealing, or annealer-client sampling.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run the full experiment")
    _add_train_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a saved model on a CSV")
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--specs", required=True,
                        help="preprocessing specs JSON saved by train")
    p_eval.add_argument("--data", required=True, help="CSV with raw columns")
    p_eval.add_argument("--out", help="metrics JSON output path")
    p_eval.set_defaults(func=cmd_eval)

    p_grid = sub.add_parser("gridsearch", help="Cartesian hyperparameter scan")
    p_grid.add_argument("--config", help="base JSON experiment config")
    p_grid.add_argument("--from-manifest", dest="from_manifest")
    p_grid.add_argument("--grid", required=True,
                        help="JSON mapping dotted config keys to value lists")
    p_grid.add_argument("--out")
    p_grid.add_argument("--workers", type=int, default=1)
    p_grid.set_defaults(func=cmd_gridsearch)

    p_sample = sub.add_parser("sample", help="sample a problem file directly")
    p_sample.add_argument("--problem", required=True,
                          help="ising or qubo text file")
    p_sample.add_argument("--out", required=True, help="sample set output")
    p_sample.add_argument("--client",
                          help="mock or replay:PATH (default: direct SA)")
    p_sample.add_argument("--reads", type=int, default=100)
    p_sample.add_argument("--sweeps", type=int, default=1000)
    p_sample.add_argument("--beta-initial", type=float, default=0.1)
    p_sample.add_argument("--beta-final", type=float, default=1.0)
    p_sample.add_argument("--seed", type=int, default=0)
    p_sample.set_defaults(func=cmd_sample)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset")
    p_synth.add_argument("--rows", type=int, required=True)
    p_synth.add_argument("--numeric", type=int, default=6)
    p_synth.add_argument("--categorical", type=int, default=4)
    p_synth.add_argument("--class-sep", type=float, default=2.0)
    p_synth.add_argument("--fraud-rate", type=float, default=0.3)
    p_synth.add_argument("--seed", type=int, default=7)
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--kinds-out", dest="kinds_out")
    p_synth.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DomainError, PipelineError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
