"""Command-line entry point (``gwr-hoi``).

Failures exit nonzero and print one JSON object with ``error`` and
``message`` keys on stderr.
"""

from __future__ import annotations

import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import click

from .data import load_dataset, save_dataset
from .evaluation import cross_validate, ensure_dir, write_confusion_csv, write_metrics_csv
from .labeling import UnclassifiableError
from .persistence import load_model, save_model
from .pipeline import (
    ArchitectureConfig,
    activation_trace,
    classify_activity,
    make_incongruent,
    train_architecture,
)
from .synth import SynthSpec, default_spec, synth_generate


def _load_config(path, seed) -> ArchitectureConfig:
    config = ArchitectureConfig() if path is None else ArchitectureConfig.from_dict(json.loads(Path(path).read_text()))
    if seed is None:
        return config
    return replace(
        config,
        pose=replace(config.pose, rng_seed=seed),
        objects=replace(config.objects, rng_seed=seed + 1),
        integration=replace(config.integration, rng_seed=seed + 2),
        codebook_seed=seed,
    )


def _echo_json(obj) -> None:
    click.echo(json.dumps(obj, indent=1))


@click.group()
@click.option("--seed", type=int, default=None, help="Override every random seed.")
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
@click.pass_context
def cli(ctx, seed, verbose):
    """Hierarchical GWR human-object interaction recognition."""
    logging.basicConfig(level=logging.INFO if verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    ctx.obj = {"seed": seed}


@cli.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.pass_context
def synth(ctx, spec_path, out):
    """Generate a synthetic dataset directory."""
    spec = default_spec() if spec_path is None else SynthSpec.load(spec_path)
    if ctx.obj["seed"] is not None:
        spec = replace(spec, seed=ctx.obj["seed"])
    manifest, records = synth_generate(spec)
    save_dataset(out, manifest, records)
    spec.save(Path(out) / "synth_spec.json")
    _echo_json({"sequences": len(records), "out": str(out)})


@cli.command()
@click.option("--data", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.pass_context
def train(ctx, data, config_path, out):
    """Train all three layers on a dataset and write a model file."""
    manifest, records = load_dataset(data)
    config = _load_config(config_path, ctx.obj["seed"])
    model = train_architecture(records, config, manifest.n_categories, manifest.n_activities)
    save_model(model, out)
    _echo_json(model.summary())


@cli.command()
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--data", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def classify(model_path, data, out):
    """Classify every sequence of a dataset; writes one CSV row per sequence."""
    model = load_model(model_path)
    manifest, records = load_dataset(data)
    correct = 0
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["sequence_id", "true_activity", "predicted_activity", "predicted_name", "status"])
        for r in records:
            try:
                label, _ = classify_activity(model, r)
                status = "ok"
            except UnclassifiableError:
                label, status = None, "unclassifiable"
            correct += label == r.activity
            name = manifest.activities[label] if label is not None else ""
            w.writerow([r.sequence_id, r.activity, "" if label is None else label, name, status])
    _echo_json({"sequences": len(records), "accuracy": correct / len(records)})


@cli.command(name="eval")
@click.option("--model-config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--data", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--strategy", type=click.Choice(["loso", "kfold"]), default="loso", show_default=True)
@click.option("--k", type=int, default=None, help="Fold count for k-fold.")
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.pass_context
def eval_cmd(ctx, config_path, data, strategy, k, out):
    """Cross-validate the architecture; writes metrics, confusion and predictions."""
    manifest, records = load_dataset(data)
    config = _load_config(config_path, ctx.obj["seed"])
    seed = ctx.obj["seed"] or 0
    result = cross_validate(records, config, strategy, k, seed, manifest.n_categories, manifest.n_activities)
    root = ensure_dir(out)
    folds = [(f.name, f.metrics) for f in result.folds] + [("pooled", result.pooled_metrics)]
    write_metrics_csv(root / "metrics.csv", folds, manifest.activities)
    write_confusion_csv(root / "confusion.csv", result.pooled_confusion, manifest.activities)
    with open(root / "predictions.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["fold", "sequence_id", "true_activity", "predicted_activity"])
        for f in result.folds:
            for sid, t, p in zip(f.test_ids, f.true, f.predicted):
                w.writerow([f.name, sid, t, "" if p is None else p])
    summary = {"strategy": strategy, "folds": len(result.folds), "pooled": result.pooled_metrics.as_dict(),
               "fold_mean": result.mean_metrics()}
    (root / "summary.json").write_text(json.dumps(summary, indent=1), encoding="utf-8")
    _echo_json(summary)


def _incongruent_pool(manifest, records, spec: SynthSpec | None):
    """For each activity, the categories whose objects make it incongruent."""
    if spec is not None:
        return {a: set(spec.incongruent_categories(a)) for a in range(manifest.n_activities)}
    seen = {a: set() for a in range(manifest.n_activities)}
    for r in records:
        seen[r.activity].update(r.categories)
    return {a: set(range(manifest.n_categories)) - cats for a, cats in seen.items()}


@cli.command()
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--data", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Synthetic spec used to pick objects never seen with each body motion.")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def congruence(model_path, data, spec_path, out):
    """Activation traces for each sequence and an object-swapped copy."""
    model = load_model(model_path)
    manifest, records = load_dataset(data)
    if spec_path is None and (Path(data) / "synth_spec.json").is_file():
        spec_path = Path(data) / "synth_spec.json"
    spec = SynthSpec.load(spec_path) if spec_path else None
    pool = _incongruent_pool(manifest, records, spec)
    higher, pairs = 0, 0
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["sequence_id", "donor_id", "condition", "segment", "frame", "activation", "bmu_id"])
        for r in records:
            donor = next((d for d in records if d.categories and set(d.categories) <= pool[r.activity]), None)
            if donor is None:
                continue
            swapped = make_incongruent(r, donor)
            means = []
            for condition, rec in (("congruent", r), ("incongruent", swapped)):
                trace = activation_trace(model, rec)
                for u, (a, b, f) in enumerate(zip(trace.activation, trace.bmu_id, trace.frame_index)):
                    w.writerow([r.sequence_id, donor.sequence_id, condition, u, int(f), float(a), int(b)])
                means.append(trace.activation.mean())
            pairs += 1
            higher += means[0] > means[1]
    if not pairs:
        raise click.ClickException("no sequence has an incongruent object donor")
    _echo_json({"pairs": pairs, "fraction_congruent_higher": higher / pairs})


@cli.command()
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), required=True)
def inspect(model_path):
    """Print network sizes, the dimensional chain and the stored config."""
    model = load_model(model_path)
    model.check_chain()
    _echo_json({"summary": model.summary(), "chain_ok": True, "config": model.config.to_dict()})


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="gwr-hoi", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        click.echo(json.dumps({"error": type(exc).__name__, "message": exc.format_message()}), err=True)
        return exc.exit_code or 2
    except click.exceptions.Abort:
        click.echo(json.dumps({"error": "Abort", "message": "aborted"}), err=True)
        return 1
    except Exception as exc:  # noqa: BLE001 - every failure becomes one JSON line
        click.echo(json.dumps({"error": type(exc).__name__, "message": str(exc)}), err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
