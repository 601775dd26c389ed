"""Command-line entry points.

Verbs: ``data synth|import``, ``features synth|import``, ``train``,
``eval``, ``ablate``, ``metrics score``, ``curves``.  Exit code is 0 only
when every requested seed completed.
"""

from __future__ import annotations

import json
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from .containers import atomic_write_text, canonical_json, read_npy
from .data import (SyntheticSpec, generate_synthetic, import_npy_dataset,
                   load_dataset, synthetic_eval_set, write_dataset)
from .encoder import load_checkpoint
from .errors import EegretError
from .experiments import ExperimentConfig, run_ablation, run_experiment
from .features import FeatureBank, cache_features, load_bank
from .images import read_png
from .metrics import score_image_pairs
from .retrieval import evaluate_retrieval
from .training import record_from_csv


def _fail(exc: Exception) -> None:
    click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
    sys.exit(2)


@click.group()
def main():
    """Desk-scale EEG-to-image retrieval toolkit."""


@main.group()
def data():
    """Dataset generation and import."""


@data.command("synth")
@click.option("--classes", type=int, default=200, show_default=True)
@click.option("--samples-per-class", type=int, default=10, show_default=True)
@click.option("--latent-dim", type=int, default=64, show_default=True)
@click.option("--noise-sigma", type=float, default=0.1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--queries-per-class", type=int, default=1, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def data_synth(classes, samples_per_class, latent_dim, noise_sigma, seed,
               queries_per_class, out_dir):
    """Generate the synthetic benchmark world (train, test, feature bank)."""
    try:
        spec = SyntheticSpec(class_count=classes, samples_per_class=samples_per_class,
                             latent_dim=latent_dim, noise_sigma=noise_sigma, seed=seed)
        train_ds, bank, _ = generate_synthetic(spec)
        test_ds = synthetic_eval_set(spec, queries_per_class)
        out = Path(out_dir)
        write_dataset(out / "train", train_ds)
        write_dataset(out / "test", test_ds)
        cache_features(bank, out / "bank")
        click.echo(f"wrote train ({train_ds.n_samples}), test ({test_ds.n_samples}), "
                   f"bank ({bank.n_images} x {len(bank.stream_names)} streams) under {out}")
    except EegretError as exc:
        _fail(exc)


@data.command("import")
@click.option("--npy", "npy_path", type=click.Path(exists=True), required=True)
@click.option("--labels", "labels_path", type=click.Path(exists=True), required=True,
              help="JSON list of integer class labels, one per sample.")
@click.option("--class-count", type=int, required=True)
@click.option("--split", type=click.Choice(["train", "val", "test"]), default="train")
@click.option("--out", "out_dir", type=click.Path(), required=True)
def data_import(npy_path, labels_path, class_count, split, out_dir):
    """Convert an NPY v1.0 tensor plus labels into the native container."""
    try:
        labels = json.loads(Path(labels_path).read_text())
        ds = import_npy_dataset(npy_path, labels, class_count, split)
        write_dataset(out_dir, ds)
        click.echo(f"imported {ds.n_samples} samples -> {out_dir}")
    except EegretError as exc:
        _fail(exc)


@main.group()
def features():
    """Feature-bank generation and import."""


@features.command("synth")
@click.option("--classes", type=int, required=True)
@click.option("--latent-dim", type=int, default=64, show_default=True)
@click.option("--feature-dim", type=int, default=1024, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--streams", default="both",
              help="Stream set name (none/blur_only/evnet_only/both) or comma list.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
def features_synth(classes, latent_dim, feature_dim, seed, streams, out_dir):
    """Deterministic synthetic features for every class id."""
    from .experiments import STREAM_SETS
    from .features import ProviderSpec, provide_features

    try:
        names = STREAM_SETS.get(streams) or tuple(s.strip() for s in streams.split(","))
        spec = ProviderSpec(kind="synthetic", source=seed, streams=names,
                            feature_dim=feature_dim, latent_dim=latent_dim,
                            class_count=classes)
        bank = provide_features(spec, list(range(classes)))
        cache_features(bank, out_dir)
        click.echo(f"wrote bank {bank.n_images} x {len(names)} x {feature_dim} -> {out_dir}")
    except EegretError as exc:
        _fail(exc)


@features.command("import")
@click.option("--npy", "npy_path", type=click.Path(exists=True), required=True,
              help="NPY tensor [images, streams, dim] or [images, dim].")
@click.option("--streams", required=True, help="Comma-separated stream names.")
@click.option("--provider", default="external", show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def features_import(npy_path, streams, provider, out_dir):
    """Wrap externally computed features (any frozen backbone) as a bank."""
    try:
        arr = read_npy(npy_path)
        if arr.ndim == 2:
            arr = arr[:, None, :]
        names = tuple(s.strip() for s in streams.split(","))
        bank = FeatureBank(features=arr, stream_names=names,
                           image_ids=tuple(f"img{i:05d}" for i in range(arr.shape[0])),
                           provider_tag=provider)
        cache_features(bank, out_dir)
        click.echo(f"imported bank {arr.shape} -> {out_dir}")
    except EegretError as exc:
        _fail(exc)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--seed", type=int, default=None, help="Run only this seed.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
def train(config_path, seed, out_dir):
    """Run the multi-seed training experiment described by a config file."""
    try:
        cfg = ExperimentConfig.from_dict(json.loads(Path(config_path).read_text()))
        if seed is not None:
            cfg = replace(cfg, train=replace(cfg.train, seeds=(seed,)))
        report = run_experiment(cfg, out_dir)
    except EegretError as exc:
        _fail(exc)
    click.echo((Path(out_dir) / "report.txt").read_text().rstrip())
    if report["incomplete_seeds"]:
        sys.exit(1)


@main.command("eval")
@click.option("--checkpoint", "ckpt_path", type=click.Path(exists=True), required=True)
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--bank", "bank_dir", type=click.Path(exists=True), required=True)
@click.option("--streams", default="both", show_default=True)
@click.option("--protocol", type=click.Choice(["standard", "hungarian", "both"]),
              default="both", show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
def eval_cmd(ckpt_path, data_dir, bank_dir, streams, protocol, out_path):
    """Evaluate a checkpoint; emits both protocols side by side by default."""
    from .experiments import STREAM_SETS

    try:
        params, _ = load_checkpoint(ckpt_path)
        ds = load_dataset(data_dir)
        bank = load_bank(bank_dir).select(STREAM_SETS.get(streams) or
                                          tuple(streams.split(",")))
        protos = ("standard", "hungarian") if protocol == "both" else (protocol,)
        results = [evaluate_retrieval(params, ds, bank, p) for p in protos]
    except EegretError as exc:
        _fail(exc)
    text = canonical_json(results)
    if out_path:
        atomic_write_text(out_path, text)
    click.echo(text.rstrip())


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def ablate(config_path, out_dir):
    """Run the four stream-configuration ablation."""
    try:
        cfg = ExperimentConfig.from_dict(json.loads(Path(config_path).read_text()))
        combined = run_ablation(cfg, out_dir)
    except EegretError as exc:
        _fail(exc)
    click.echo((Path(out_dir) / "ablation.txt").read_text().rstrip())
    if any(combined["incomplete"].values()):
        sys.exit(1)


@main.group()
def metrics():
    """Reconstruction-quality scoring."""


@metrics.command("score")
@click.option("--gen", "gen_dir", type=click.Path(exists=True), required=True)
@click.option("--gt", "gt_dir", type=click.Path(exists=True), required=True)
@click.option("--feats", multiple=True,
              help="NAME=GEN.npy:GT.npy feature-bank pair (repeatable).")
@click.option("--out", "out_dir", type=click.Path(), required=True)
def metrics_score(gen_dir, gt_dir, feats, out_dir):
    """Score generated images (and optional feature banks) against ground truth."""
    try:
        gen_paths = sorted(Path(gen_dir).glob("*.png"))
        gt_paths = sorted(Path(gt_dir).glob("*.png"))
        if [p.name for p in gen_paths] != [p.name for p in gt_paths]:
            raise EegretError("generated/ground-truth PNG filenames do not match")
        banks = {}
        for item in feats:
            name, _, pair = item.partition("=")
            gen_f, _, gt_f = pair.partition(":")
            banks[name] = (read_npy(gen_f), read_npy(gt_f))
        result = score_image_pairs([read_png(p) for p in gen_paths],
                                   [read_png(p) for p in gt_paths], banks)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out / "metrics.json", canonical_json(result))
        rows = ["metric,mean,std,n,direction"]
        for name, s in sorted(result["summary"].items()):
            rows.append(f"{name},{s['mean']!r},{s['std']!r},{s['n']},{s['direction']}")
        atomic_write_text(out / "metrics.csv", "\n".join(rows) + "\n")
    except EegretError as exc:
        _fail(exc)
    click.echo(canonical_json(result["summary"]).rstrip())


@main.command()
@click.option("--records", "record_paths", type=click.Path(exists=True),
              multiple=True, required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def curves(record_paths, out_path):
    """Render Top-1/loss training curves from record CSVs to SVG."""
    from .curves import emit_curves

    try:
        records = [record_from_csv(Path(p).read_text()) for p in record_paths]
        emit_curves(records, out_path)
    except EegretError as exc:
        _fail(exc)
    click.echo(f"wrote {out_path}")


if __name__ == "__main__":
    main()
