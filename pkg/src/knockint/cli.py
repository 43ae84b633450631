"""Command-line interface.

Subcommands mirror the pipeline stages (simulate, knockoff, train, score,
select, evaluate) plus ``run`` for the full experiment. Output paths are
resolved against the ``KNOCKINT_OUTPUT_ROOT`` environment variable when it
is set. Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import harness
from .exceptions import KnockintError
from .fdr import build_gamma, interaction_threshold, write_selection_csv, write_selection_json
from .importance import AttributionConfig, compute_scores, read_scores_csv, write_scores_csv
from .knockoff import (fit_gaussian, knockoff_diagnostics, read_augmented_csv,
                       sample_knockoffs, save_model, write_augmented_csv)
from .metrics import evaluate
from .network import TrainConfig, init_network, load_network, save_network, train
from .simsuite import SimulationSpec, generate, read_dataset_csv, write_dataset_csv


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _out(path) -> Path:
    root = os.environ.get("KNOCKINT_OUTPUT_ROOT")
    path = Path(path)
    if root and not path.is_absolute():
        out = Path(root) / path
    else:
        out = path
    out.parent.mkdir(parents=True, exist_ok=True)
    return out


def _manifest_for(data_path: Path) -> Path:
    return data_path.with_suffix(".manifest.json")


def cmd_simulate(args):
    spec = SimulationSpec(function_id=args.function, n=args.n, p=args.p,
                          seed=args.seed, train_fraction=args.train_fraction)
    dataset = generate(spec)
    out = _out(args.out)
    manifest = _out(args.manifest) if args.manifest else _manifest_for(out)
    write_dataset_csv(out, dataset, manifest, spec)
    print(f"wrote {out} ({spec.n} rows, p={spec.p}) and {manifest}")


def cmd_knockoff(args):
    manifest = Path(args.manifest) if args.manifest else _manifest_for(Path(args.data))
    dataset = read_dataset_csv(args.data, manifest if manifest.exists() else None)
    X_fit = dataset.train[0]
    model = fit_gaussian(X_fit, ridge=args.ridge, s_scale=args.s_scale)
    X_ko = sample_knockoffs(dataset.X, model, seed=args.seed)
    aug_out = _out(args.augmented_out)
    write_augmented_csv(aug_out, dataset.X, X_ko)
    model_out = _out(args.model_out)
    save_model(model, model_out)
    print(f"wrote {aug_out} and {model_out}")
    if args.diagnostics:
        diag = knockoff_diagnostics(dataset.X, X_ko, model)
        print(json.dumps({k: diag[k] for k in
                          ("max_dev_cov_knockoff", "max_dev_cross_cov")}, indent=2))


def cmd_train(args):
    manifest = Path(args.manifest) if args.manifest else _manifest_for(Path(args.data))
    dataset = read_dataset_csv(args.data, manifest if manifest.exists() else None)
    X_aug = read_augmented_csv(args.augmented)
    k = dataset.n_train if dataset.n_train is not None else len(dataset.y)
    p = X_aug.shape[1] // 2
    hidden = tuple(int(h) for h in args.hidden.split(","))
    net = init_network(p, hidden_sizes=hidden, task=dataset.task,
                       seed=args.seed, coupling=(args.coupling == "on"))
    cfg = TrainConfig(learning_rate=args.learning_rate, epochs=args.epochs,
                      batch_size=args.batch_size, seed=args.seed,
                      l1_filter_penalty=args.l1_filter_penalty,
                      l1_mlp_penalty=args.l1_mlp_penalty,
                      grad_clip=args.grad_clip,
                      validation_fraction=args.validation_fraction)
    net, trace = train(net, X_aug[:k], dataset.y[:k], cfg)
    net_out = _out(args.net_out)
    save_network(net, net_out)
    if args.trace_out:
        with open(_out(args.trace_out), "w") as fh:
            json.dump(trace, fh, sort_keys=True)
    print(f"wrote {net_out} (final train loss {trace['train_loss'][-1]:.6g})")


def cmd_score(args):
    net = load_network(args.net)
    X_aug = read_augmented_csv(args.augmented)
    if args.manifest:
        with open(args.manifest) as fh:
            k = json.load(fh).get("n_train")
        if k is not None:
            X_aug = X_aug[k:] if len(X_aug) > k else X_aug
    cfg = AttributionConfig(alpha_steps=args.alpha_steps, beta_steps=args.beta_steps,
                            sample_cap=args.sample_cap)
    scores = compute_scores(net, args.method, X_aug, cfg)
    out = _out(args.out)
    write_scores_csv(out, scores)
    print(f"wrote {out}")


def cmd_select(args):
    scores = read_scores_csv(args.scores)
    S = np.abs(scores.s2d) if args.use_raw else scores.calibrated
    gamma = build_gamma(S)
    result = interaction_threshold(gamma, args.q)
    json_out = _out(args.json_out)
    write_selection_json(json_out, result)
    if args.csv_out:
        write_selection_csv(_out(args.csv_out), gamma, result)
    status = (f"T={result.threshold:.6g}, {len(result.selected)} pairs"
              if result.feasible else "none-feasible")
    print(f"wrote {json_out} ({status})")


def cmd_evaluate(args):
    with open(args.selection) as fh:
        selection = json.load(fh)
    with open(args.manifest) as fh:
        manifest = json.load(fh)
    pairs = manifest.get("ground_truth_pairs")
    if not pairs:
        raise KnockintError("manifest carries no ground-truth pairs")
    truth = {tuple(pr) for pr in pairs}
    scores = read_scores_csv(args.scores)
    p = scores.calibrated.shape[0] // 2
    score_map = harness.oo_score_map(scores.calibrated, p)
    selected = harness.selected_original_pairs(
        [tuple(pr) for pr in selection["selected"]], p)
    report = evaluate(score_map, selected, truth)
    out = _out(args.out)
    with open(out, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {out} (auroc={report.auroc:.3f}, fdp={report.fdp:.3f}, "
          f"power={report.power:.3f})")


def cmd_run(args):
    if args.config:
        with open(args.config) as fh:
            cfg = harness.ExperimentConfig.from_dict(json.load(fh))
        if args.out:
            cfg.output_dir = str(_out(args.out))
    else:
        train_cfg = TrainConfig(learning_rate=args.learning_rate, epochs=args.epochs,
                                batch_size=args.batch_size,
                                l1_filter_penalty=args.l1_filter_penalty,
                                l1_mlp_penalty=args.l1_mlp_penalty,
                                grad_clip=args.grad_clip)
        cfg = harness.ExperimentConfig(
            functions=args.functions.split(","),
            n=args.n, p=args.p, q=args.q, repetitions=args.repetitions,
            method=args.method, calibration=args.calibration,
            coupling=args.coupling, train=train_cfg, seed=args.seed,
            s_scale=args.s_scale,
            output_dir=str(_out(args.out or "experiment_out")),
            save_intermediates=not args.no_intermediates,
        )
        if args.dataset:
            cfg.dataset = args.dataset
            cfg.response_column = args.response_column
            cfg.task = args.task
        if args.paper_scale:
            cfg.n = 20000
            cfg.repetitions = 20
    report = harness.run_experiment(cfg)
    n_err = len(report["errors"])
    print(f"wrote {cfg.output_dir}/report.json "
          f"({len(report['results'])} functions, {n_err} failed repetitions)")


def build_parser() -> _Parser:
    parser = _Parser(prog="knockint", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a benchmark dataset CSV")
    p.add_argument("--function", required=True)
    p.add_argument("--n", type=int, default=20000)
    p.add_argument("--p", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-fraction", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("knockoff", help="fit a Gaussian model and sample knockoffs")
    p.add_argument("--data", required=True)
    p.add_argument("--manifest")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ridge", type=float, default=1e-6)
    p.add_argument("--s-scale", type=float, default=0.2,
                   help="shrink factor for the knockoff gap vector, in (0, 1]")
    p.add_argument("--augmented-out", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--diagnostics", action="store_true")
    p.set_defaults(func=cmd_knockoff)

    p = sub.add_parser("train", help="train the coupling-layer network")
    p.add_argument("--data", required=True)
    p.add_argument("--manifest")
    p.add_argument("--augmented", required=True)
    p.add_argument("--hidden", default="64,32,16")
    p.add_argument("--coupling", choices=("on", "off"), default="on")
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--l1-filter-penalty", type=float, default=1e-4)
    p.add_argument("--l1-mlp-penalty", type=float, default=5e-4)
    p.add_argument("--grad-clip", type=float, default=1.0)
    p.add_argument("--validation-fraction", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--net-out", required=True)
    p.add_argument("--trace-out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="compute importance scores from a trained net")
    p.add_argument("--net", required=True)
    p.add_argument("--augmented", required=True)
    p.add_argument("--manifest")
    p.add_argument("--method", choices=("model_based", "instance_based"),
                   default="model_based")
    p.add_argument("--alpha-steps", type=int, default=32)
    p.add_argument("--beta-steps", type=int, default=32)
    p.add_argument("--sample-cap", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("select", help="apply the knockoff-aware interaction threshold")
    p.add_argument("--scores", required=True)
    p.add_argument("--q", type=float, default=0.2)
    p.add_argument("--use-raw", action="store_true",
                   help="threshold uncalibrated |2D| scores (calibration off)")
    p.add_argument("--json-out", required=True)
    p.add_argument("--csv-out")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("evaluate", help="score a selection against ground truth")
    p.add_argument("--selection", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="full pipeline with repetitions")
    p.add_argument("--config", help="JSON experiment config (overrides flags)")
    p.add_argument("--functions", default="F1")
    p.add_argument("--dataset", help="external CSV instead of simulation")
    p.add_argument("--response-column")
    p.add_argument("--task", choices=("regression", "binary"), default="regression")
    p.add_argument("--n", type=int, default=4000)
    p.add_argument("--p", type=int, default=30)
    p.add_argument("--q", type=float, default=0.2)
    p.add_argument("--repetitions", type=int, default=10)
    p.add_argument("--method", choices=("model_based", "instance_based", "both"),
                   default="model_based")
    p.add_argument("--calibration", choices=("on", "off", "both"), default="on")
    p.add_argument("--coupling", choices=("on", "off", "both"), default="on")
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--l1-filter-penalty", type=float, default=1e-4)
    p.add_argument("--l1-mlp-penalty", type=float, default=5e-4)
    p.add_argument("--grad-clip", type=float, default=1.0)
    p.add_argument("--s-scale", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--paper-scale", action="store_true",
                   help="n=20000 and 20 repetitions")
    p.add_argument("--no-intermediates", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (KnockintError, OSError, FloatingPointError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
