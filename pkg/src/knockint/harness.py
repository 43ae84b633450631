"""Experiment orchestration: simulate -> knockoff -> train -> score ->
select -> evaluate, with repetition management and report emission.

Each repetition runs in its own subdirectory of the output directory and
communicates between stages only through serialized files, so every stage
can also be run standalone from the CLI. Per-repetition seeds are derived
by hashing (master seed, function, repetition), making repetitions
independent and individually rerunnable.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import ConfigurationError, ValidationError
from .fdr import build_gamma, interaction_threshold, write_selection_csv, write_selection_json
from .importance import (AttributionConfig, ImportanceScores, compute_scores,
                         read_scores_csv, write_scores_csv)
from .knockoff import (fit_gaussian, read_augmented_csv, sample_knockoffs,
                       save_model, write_augmented_csv)
from .metrics import EvalReport, aggregate, evaluate
from .network import TrainConfig, init_network, save_network, train
from .simsuite import (Dataset, SimulationSpec, generate, read_dataset_csv,
                       write_dataset_csv)

KNOCKOFF_SUBSTITUTION_NOTE = (
    "Knockoffs are second-order Gaussian constructions fitted to empirical "
    "moments (features are not Gaussian); reported FDP is empirical."
)

TRAINING_NOTE = (
    "No dropout, weight decay, or early stopping; L1 penalties on the "
    "coupling-layer filter weights and on the MLP weight matrices, plus "
    "global gradient-norm clipping."
)


def default_train_config() -> TrainConfig:
    """Experiment-protocol training defaults (heavier than the CLI stage defaults)."""
    return TrainConfig(epochs=300, l1_filter_penalty=1e-4,
                       l1_mlp_penalty=5e-4, grad_clip=1.0)


def _expand(value, allowed):
    if value == "both":
        return list(allowed)
    if value not in allowed:
        raise ConfigurationError(f"expected one of {allowed + ('both',)}, got {value!r}")
    return [value]


@dataclass
class ExperimentConfig:
    functions: list = field(default_factory=lambda: ["F1"])
    dataset: str | None = None          # external CSV instead of simulation
    response_column: str | None = None
    task: str = "regression"
    n: int = 4000
    p: int = 30
    q: float = 0.2
    repetitions: int = 10
    method: str = "model_based"         # model_based | instance_based | both
    calibration: str = "on"             # on | off | both
    coupling: str = "on"                # on | off | both
    hidden_sizes: tuple = (64, 32, 16)
    train: TrainConfig = field(default_factory=lambda: default_train_config())
    attribution: AttributionConfig = field(default_factory=AttributionConfig)
    ridge: float = 1e-6
    # Shrinks the knockoff gap vector so each knockoff stays correlated with
    # its original; keeps knockoff-involving pairs competitive in the
    # selection scan at the cost of some power.
    s_scale: float = 0.2
    seed: int = 0
    output_dir: str = "experiment_out"
    save_intermediates: bool = True

    def validate(self):
        if not 0 < self.q < 1:
            raise ConfigurationError("q must lie in (0, 1)")
        if self.repetitions < 1:
            raise ConfigurationError("repetitions must be >= 1")
        if not 0 < self.s_scale <= 1:
            raise ConfigurationError("s_scale must lie in (0, 1]")
        self.train.validate()
        self.attribution.validate()
        _expand(self.method, ("model_based", "instance_based"))
        _expand(self.calibration, ("on", "off"))
        _expand(self.coupling, ("on", "off"))

    def to_dict(self):
        d = asdict(self)
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "train" in d and isinstance(d["train"], dict):
            d["train"] = TrainConfig(**d["train"])
        if "attribution" in d and isinstance(d["attribution"], dict):
            d["attribution"] = AttributionConfig(**d["attribution"])
        if "hidden_sizes" in d:
            d["hidden_sizes"] = tuple(d["hidden_sizes"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)


def derive_seed(master_seed: int, *parts) -> int:
    """Stable 32-bit stream seed from the master seed and a label tuple."""
    key = ":".join([str(master_seed)] + [str(p) for p in parts])
    digest = hashlib.sha256(key.encode()).digest()
    return int.from_bytes(digest[:4], "little")


def ingest_csv(path, response_column: str, task: str = "regression") -> Dataset:
    """Load a header-named CSV into a Dataset, validating cell by cell."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file")
        if response_column not in header:
            raise ValidationError(
                f"{path}: response column {response_column!r} not found; "
                f"available columns: {header}")
        y_col = header.index(response_column)
        feature_names = [h for k, h in enumerate(header) if k != y_col]
        X_rows, y_rows = [], []
        for rownum, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValidationError(f"{path}: row {rownum} has {len(row)} cells, "
                                      f"expected {len(header)}")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise ValidationError(f"{path}: non-numeric or missing cell in row {rownum}")
            y_val = vals[y_col]
            if task == "binary" and y_val not in (0.0, 1.0):
                raise ValidationError(f"{path}: binary response must be 0/1, "
                                      f"got {y_val} in row {rownum}")
            X_rows.append([v for k, v in enumerate(vals) if k != y_col])
            y_rows.append(y_val)
    if not X_rows:
        raise ValidationError(f"{path}: no data rows")
    X = np.asarray(X_rows, dtype=float)
    y = np.asarray(y_rows, dtype=float)
    n_train = int(round(0.5 * len(y)))
    ds = Dataset(X=X, y=y, task=task, ground_truth=None, n_train=n_train)
    ds.feature_names = feature_names
    return ds


def selected_original_pairs(selected, p: int) -> set:
    """Map selected 0-based augmented OO index pairs to 1-based feature pairs."""
    return {(i + 1, j + 1) for i, j in selected if i < p and j < p}


def oo_score_map(S: np.ndarray, p: int) -> dict:
    """Upper-triangle original-original scores keyed by 1-based pairs."""
    return {(i + 1, j + 1): float(S[i, j])
            for i in range(p) for j in range(i + 1, p)}


def run_repetition(cfg: ExperimentConfig, function_id: str, rep: int,
                   rep_dir: Path | None = None) -> dict:
    """Full pipeline for one (function, repetition) cell; returns arm results."""
    seed_data = derive_seed(cfg.seed, function_id, rep, "data")
    seed_ko = derive_seed(cfg.seed, function_id, rep, "knockoff")

    if cfg.dataset is not None:
        dataset = ingest_csv(cfg.dataset, cfg.response_column, cfg.task)
    else:
        spec = SimulationSpec(function_id=function_id, n=cfg.n, p=cfg.p,
                              seed=seed_data)
        dataset = generate(spec)
    p = dataset.X.shape[1]

    X_train, y_train = dataset.train
    model = fit_gaussian(X_train, ridge=cfg.ridge, s_scale=cfg.s_scale)
    X_ko = sample_knockoffs(dataset.X, model, seed=seed_ko)
    X_aug = np.hstack([dataset.X, X_ko])
    k = dataset.n_train
    aug_train, aug_test = X_aug[:k], X_aug[k:]

    if rep_dir is not None:
        rep_dir.mkdir(parents=True, exist_ok=True)
        if cfg.dataset is None:
            write_dataset_csv(rep_dir / "dataset.csv", dataset,
                              rep_dir / "manifest.json", spec)
        save_model(model, rep_dir / "knockoff_model.npz")
        write_augmented_csv(rep_dir / "augmented.csv", dataset.X, X_ko)

    methods = _expand(cfg.method, ("model_based", "instance_based"))
    calibrations = _expand(cfg.calibration, ("on", "off"))
    couplings = _expand(cfg.coupling, ("on", "off"))

    results = {}
    for coupling in couplings:
        seed_net = derive_seed(cfg.seed, function_id, rep, "net", coupling)
        net = init_network(p, hidden_sizes=cfg.hidden_sizes, task=dataset.task,
                          seed=seed_net, coupling=(coupling == "on"))
        train_cfg = TrainConfig(**{**asdict(cfg.train), "seed": seed_net})
        net, trace = train(net, aug_train, y_train, train_cfg)
        if rep_dir is not None:
            save_network(net, rep_dir / f"net_coupling_{coupling}.npz")
            with open(rep_dir / f"trace_coupling_{coupling}.json", "w") as fh:
                json.dump(trace, fh, sort_keys=True)

        for method in methods:
            attribution_data = aug_test if len(aug_test) else aug_train
            scores = compute_scores(net, method, attribution_data, cfg.attribution)
            if rep_dir is not None:
                write_scores_csv(
                    rep_dir / f"scores_{method}_coupling_{coupling}.csv", scores)
            for calibration in calibrations:
                S = scores.calibrated if calibration == "on" else np.abs(scores.s2d)
                gamma = build_gamma(S)
                selection = interaction_threshold(gamma, cfg.q)
                arm = f"{method}|calibration_{calibration}|coupling_{coupling}"
                entry = {"selection": selection.to_dict(),
                         "trace_final_loss": trace["train_loss"][-1]}
                if rep_dir is not None:
                    stem = f"selection_{method}_cal_{calibration}_coupling_{coupling}"
                    write_selection_json(rep_dir / f"{stem}.json", selection)
                    write_selection_csv(rep_dir / f"{stem}.csv", gamma, selection)
                if dataset.ground_truth is not None:
                    report = evaluate(oo_score_map(S, p),
                                      selected_original_pairs(selection.selected, p),
                                      dataset.ground_truth)
                    entry["eval"] = report.to_dict()
                results[arm] = entry
    return results


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Execute every (function, repetition) cell and write the report files.

    A failing repetition is logged into the report and the run continues.
    """
    cfg.validate()
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)

    function_ids = cfg.functions if cfg.dataset is None else ["external"]
    report = {
        "config": cfg.to_dict(),
        "software_version": __version__,
        "notes": [KNOCKOFF_SUBSTITUTION_NOTE, TRAINING_NOTE],
        "results": {},
        "errors": [],
    }

    for function_id in function_ids:
        per_arm = {}
        for rep in range(cfg.repetitions):
            rep_dir = (outdir / f"{function_id}_rep{rep:03d}"
                       if cfg.save_intermediates else None)
            try:
                rep_results = run_repetition(cfg, function_id, rep, rep_dir)
            except Exception as exc:  # keep remaining repetitions running
                report["errors"].append({
                    "function": function_id, "repetition": rep,
                    "error": f"{type(exc).__name__}: {exc}",
                })
                continue
            for arm, entry in rep_results.items():
                per_arm.setdefault(arm, []).append({"repetition": rep, **entry})
        report["results"][function_id] = {}
        for arm, entries in per_arm.items():
            arm_report = {"repetitions": entries}
            evals = [EvalReport(**e["eval"]) for e in entries if "eval" in e]
            if evals:
                arm_report["aggregate"] = aggregate(evals)
            report["results"][function_id][arm] = arm_report

    _write_report(outdir, report)
    return report


def _write_report(outdir: Path, report: dict):
    with open(outdir / "report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")

    with open(outdir / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["function", "method", "calibration", "coupling", "q",
                         "repetition", "auroc", "fdp", "power", "n_selected",
                         "threshold"])
        q = report["config"]["q"]
        for function_id, arms in sorted(report["results"].items()):
            for arm, arm_report in sorted(arms.items()):
                method, cal, coup = arm.split("|")
                for entry in arm_report["repetitions"]:
                    ev = entry.get("eval", {})
                    writer.writerow([
                        function_id, method,
                        cal.removeprefix("calibration_"),
                        coup.removeprefix("coupling_"), q,
                        entry["repetition"],
                        ev.get("auroc", ""), ev.get("fdp", ""),
                        ev.get("power", ""), ev.get("n_selected", ""),
                        entry["selection"]["threshold"],
                    ])

    # Plot-ready aggregates (bar data per metric, mirroring the panel layout).
    with open(outdir / "aggregate.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["function", "method", "calibration", "coupling",
                         "metric", "mean", "ci_low", "ci_high"])
        for function_id, arms in sorted(report["results"].items()):
            for arm, arm_report in sorted(arms.items()):
                agg = arm_report.get("aggregate")
                if not agg:
                    continue
                method, cal, coup = arm.split("|")
                for metric in ("auroc", "fdp", "power"):
                    stats = agg[metric]
                    writer.writerow([
                        function_id, method,
                        cal.removeprefix("calibration_"),
                        coup.removeprefix("coupling_"),
                        metric, repr(float(stats["mean"])),
                        repr(float(stats["ci95"][0])), repr(float(stats["ci95"][1])),
                    ])
