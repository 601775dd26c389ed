"""Experiment orchestration: configs, multi-seed runs, ablations, reports.

A config is a single JSON document (schema-versioned, lossless round
trip).  Reports never promote assignment-protocol or best-test numbers to
the headline: those stay behind explicit ``prior-knowledge-assisted`` and
``diagnostic`` labels, and the headline is always the final-epoch standard
protocol.
"""

from __future__ import annotations

import traceback
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .containers import atomic_write_text, canonical_json
from .curves import emit_curves
from .data import (EegDataset, SplitSpec, SyntheticSpec, generate_synthetic,
                   load_dataset, split_train_val, synthetic_eval_set)
from .encoder import EncoderConfig, save_checkpoint
from .errors import ConfigurationError, EegretError, ParameterError
from .features import load_bank
from .retrieval import PROTOCOLS, evaluate_retrieval
from .training import TrainConfig, config_hash, record_to_csv, train_one

SCHEMA_VERSION = 1

STREAM_SETS = {
    "none": ("blur_k1",),
    "blur_only": ("blur_k1", "blur_k3", "blur_k15", "blur_k21",
                  "blur_k33", "blur_k45", "blur_k57", "blur_k63"),
    "evnet_only": ("evnet",),
    "both": ("blur_k1", "blur_k3", "blur_k15", "blur_k21",
             "blur_k33", "blur_k45", "blur_k57", "blur_k63", "evnet"),
}

ABLATION_ORDER = ("none", "evnet_only", "blur_only", "both")

REPORT_LABELS = {
    "hungarian": "prior-knowledge-assisted (assumes one-to-one test structure)",
    "best_test_diagnostic": "diagnostic only (test-set over-selection bias)",
    "headline": "final_epoch.standard",
}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    data: dict = field(default_factory=lambda: {"kind": "synthetic", "spec": {
        "class_count": 200, "samples_per_class": 10, "latent_dim": 64,
        "noise_sigma": 0.1, "seed": 0}})
    streams: str = "both"
    train: TrainConfig = TrainConfig()
    encoder: dict = field(default_factory=dict)   # EncoderConfig overrides
    protocols: tuple[str, ...] = ("standard", "hungarian")
    val_fraction: float = 0.0
    split_seed: int = 0
    queries_per_class: int = 1
    make_curves: bool = True

    def __post_init__(self):
        if self.streams not in STREAM_SETS:
            raise ParameterError(f"streams must be one of {sorted(STREAM_SETS)}")
        for p in self.protocols:
            if p not in PROTOCOLS:
                raise ParameterError(f"unknown protocol {p!r}")
        if not (0.0 <= self.val_fraction < 1.0):
            raise ParameterError("val_fraction must be in [0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema_version"] = SCHEMA_VERSION
        return d

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        d = dict(d)
        version = d.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigurationError(f"config schema_version {version} unsupported")
        if "train" in d:
            t = dict(d["train"])
            for key in ("seeds", "betas"):
                if key in t:
                    t[key] = tuple(t[key])
            d["train"] = TrainConfig(**t)
        if "protocols" in d:
            d["protocols"] = tuple(d["protocols"])
        return ExperimentConfig(**d)


def _prepare_data(cfg: ExperimentConfig):
    """Returns (train_ds, test_ds, bank) for the enabled stream set."""
    kind = cfg.data.get("kind")
    if kind == "synthetic":
        spec = SyntheticSpec(**cfg.data["spec"])
        train_ds, bank, _ = generate_synthetic(spec)
        test_ds = synthetic_eval_set(spec, cfg.queries_per_class)
    elif kind == "paths":
        train_ds = load_dataset(cfg.data["train"])
        test_ds = load_dataset(cfg.data["test"]) if "test" in cfg.data else None
        bank = load_bank(cfg.data["bank"])
    else:
        raise ConfigurationError(f"unknown data kind {kind!r}")
    bank = bank.select(STREAM_SETS[cfg.streams])
    return train_ds, test_ds, bank


def _encoder_config(cfg: ExperimentConfig, train_ds, bank) -> EncoderConfig:
    from .training import default_encoder_config

    return default_encoder_config(train_ds, bank, **cfg.encoder)


def aggregate(values) -> dict:
    """Sample mean and (n-1) std; degenerate n == 1 reports std 0."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise ParameterError("nothing to aggregate")
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return {"mean": mean, "std": std, "n": int(arr.size),
            "formatted": f"{100 * mean:.2f}% ± {100 * std:.2f}%"}


def run_experiment(cfg: ExperimentConfig, out_dir) -> dict:
    """Train/evaluate every seed, persist artifacts, return the report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "config.json", canonical_json(cfg.to_dict()))

    train_ds, test_ds, bank = _prepare_data(cfg)
    val_ds = None
    if cfg.val_fraction > 0:
        train_ds, val_ds = split_train_val(
            train_ds, SplitSpec(train_fraction=1.0 - cfg.val_fraction, seed=cfg.split_seed))
    enc_cfg = _encoder_config(cfg, train_ds, bank)

    per_seed, records, failures = [], [], []
    for seed in cfg.train.seeds:
        seed_dir = out / f"seed_{seed}"
        seed_dir.mkdir(parents=True, exist_ok=True)
        try:
            result = train_one(train_ds, bank, cfg.train, seed,
                               test_data=test_ds, val_data=val_ds, encoder_cfg=enc_cfg)
            atomic_write_text(seed_dir / "record.csv", record_to_csv(result.record))
            atomic_write_text(seed_dir / "timing.txt",
                              f"{result.record.wall_time_s:.3f}\n")
            evals = {}
            for policy, snap in sorted(result.snapshots.items()):
                save_checkpoint(seed_dir / f"checkpoint_{policy}.ckpt", snap,
                                meta={"seed": seed, "policy": policy,
                                      "epoch": result.record.selected_checkpoint
                                      if policy == cfg.train.selection else None})
                if test_ds is not None:
                    evals[policy] = {
                        proto: evaluate_retrieval(snap, test_ds, bank, proto)
                        for proto in cfg.protocols}
            atomic_write_text(seed_dir / "eval.json", canonical_json(evals))
            per_seed.append({"seed": seed, "metrics": evals,
                             "selected_checkpoint": result.record.selected_checkpoint})
            records.append(result.record)
        except EegretError as exc:
            failures.append({"seed": seed, "error": f"{type(exc).__name__}: {exc}"})
        except Exception as exc:  # noqa: BLE001 - recorded, not swallowed silently
            failures.append({"seed": seed,
                             "error": f"{type(exc).__name__}: {exc}",
                             "trace": traceback.format_exc(limit=4)})

    agg = {}
    if per_seed:
        policies = sorted(per_seed[0]["metrics"].keys())
        for policy in policies:
            for proto in cfg.protocols:
                for metric in ("top1", "top5"):
                    vals = [s["metrics"][policy][proto][metric] for s in per_seed
                            if policy in s["metrics"]]
                    agg[f"{policy}.{proto}.{metric}"] = aggregate(vals)

    report = {
        "schema_version": SCHEMA_VERSION,
        "name": cfg.name,
        "config": cfg.to_dict(),
        "config_hash": config_hash(cfg.to_dict()),
        "streams": cfg.streams,
        "n_seeds": len(per_seed),
        "per_seed": per_seed,
        "aggregate": agg,
        "labels": REPORT_LABELS,
        "incomplete_seeds": failures,
    }
    atomic_write_text(out / "report.json", canonical_json(report))
    atomic_write_text(out / "report.txt", format_report_table(report))
    if cfg.make_curves and records and records[0].epochs and \
            records[0].epochs[0].top1 is not None:
        emit_curves(records, out / "curves.svg")
    return report


def format_report_table(report: dict) -> str:
    """Plain-text summary with the headline separated from labeled extras."""
    lines = [f"experiment: {report['name']}  (streams={report['streams']}, "
             f"seeds={report['n_seeds']})"]
    agg = report["aggregate"]
    headline = REPORT_LABELS["headline"]
    for key in sorted(agg):
        policy, proto, metric = key.split(".")
        tags = []
        if proto == "hungarian":
            tags.append("prior-knowledge-assisted")
        if policy == "best_test_diagnostic":
            tags.append("diagnostic")
        if f"{policy}.{proto}" == headline:
            tags.append("HEADLINE")
        suffix = f"  [{', '.join(tags)}]" if tags else ""
        lines.append(f"  {key:<40s} {agg[key]['formatted']}{suffix}")
    for f in report["incomplete_seeds"]:
        lines.append(f"  INCOMPLETE seed {f['seed']}: {f['error']}")
    return "\n".join(lines) + "\n"


def run_ablation(base: ExperimentConfig, out_dir) -> dict:
    """The four stream-enable states, each as a full experiment."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = {}
    for mode in ABLATION_ORDER:
        cfg = replace(base, streams=mode, name=f"{base.name}/{mode}")
        reports[mode] = run_experiment(cfg, out / mode)
    combined = {
        "schema_version": SCHEMA_VERSION,
        "name": base.name,
        "order": list(ABLATION_ORDER),
        "rows": {mode: reports[mode]["aggregate"] for mode in ABLATION_ORDER},
        "incomplete": {mode: reports[mode]["incomplete_seeds"] for mode in ABLATION_ORDER},
        "labels": REPORT_LABELS,
    }
    atomic_write_text(out / "ablation.json", canonical_json(combined))
    atomic_write_text(out / "ablation.txt", format_ablation_table(combined))
    return combined


def format_ablation_table(combined: dict) -> str:
    key = "final_epoch.standard.top1"
    lines = [f"ablation: {combined['name']}  (headline metric: {key})"]
    for mode in combined["order"]:
        agg = combined["rows"][mode].get(key)
        cell = agg["formatted"] if agg else "(no complete seeds)"
        lines.append(f"  {mode:<12s} {cell}")
    lines.append("  ordering of means is reported, not asserted")
    return "\n".join(lines) + "\n"
