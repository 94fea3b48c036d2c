"""Command-line surface.

Subcommands: fit-target (desk-scale helper), train, explain, eval,
transfer, viz. Every command writes a manifest.json into its output
directory sufficient to re-run it via --from-manifest. Exit codes:
0 success, 2 usage/config error, 3 data/format error, 4 numerical
failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np
import torch

from . import baselines, evaluation, viz
from .datasets import SampleSet, load_dataset
from .errors import ConfigError, DataFormatError, NumericalError, PathgenError
from .generator import (
    GeneratorConfig,
    PathwayGenerator,
    generate_pathway,
    load_generator,
    save_generator,
)
from .instrument import TargetModel
from .manifest import RunConfig, read_manifest, write_manifest
from .maskfile import read_mask, write_mask
from .masks import PathwayMask
from .training import TrainConfig, train
from .zoo import build_model, load_checkpoint, save_checkpoint, fit_target

METHODS = ("genpath", "taylor", "intgrad", "magnitude", "random", "greedy")


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _str_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pathgen", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, dataset: bool = True):
        p.add_argument("--seed", type=int, default=None, help="global seed (env PATHGEN_SEED)")
        p.add_argument("--out", default=None, help="output directory (env PATHGEN_OUT)")
        p.add_argument("--from-manifest", default=None, help="re-run from a manifest.json")
        if dataset:
            p.add_argument("--dataset", choices=("synthetic", "cifar10", "imagedir"), default="synthetic")
            p.add_argument("--data-path", default=None)
            p.add_argument("--split", default="test")
            p.add_argument("--limit", type=int, default=None, help="cap the number of samples")

    p = sub.add_parser("fit-target", help="train a desk-scale target classifier checkpoint")
    add_common(p)
    p.add_argument("--model", default="toy3")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=1e-3)

    p = sub.add_parser("train", help="train the pathway generator against a frozen target")
    add_common(p)
    p.add_argument("--model", default="toy3")
    p.add_argument("--checkpoint", default=None, help="target model checkpoint")
    p.add_argument("--gen-config", default=None,
                   help="JSON key-value file overriding generator hyperparameters")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=0.005)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=32)

    p = sub.add_parser("explain", help="emit one pathway mask file per sample")
    add_common(p)
    p.add_argument("--model", default="toy3")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--generator", default=None, help="generator checkpoint (method genpath)")
    p.add_argument("--method", choices=METHODS, default="genpath")
    p.add_argument("--sparsity", type=float, default=0.5, help="firing sparsity for score methods")
    p.add_argument("--scope", choices=("per_layer", "global"), default="per_layer")
    p.add_argument("--steps", type=int, default=20, help="integration steps for intgrad")
    p.add_argument("--score-method", choices=("taylor", "intgrad", "magnitude"), default="taylor",
                   help="importance ordering used by greedy")

    p = sub.add_parser("eval", help="score stored masks with the metric suite")
    add_common(p)
    p.add_argument("--model", default="toy3")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--masks", default=None, help="directory produced by explain (or external)")
    p.add_argument("--metrics", default="accuracy,mic,mdc,icr,aciou")
    p.add_argument("--reference", choices=("model", "label"), default="model")
    p.add_argument("--sparsity-grid", default="0.2,0.3,0.4,0.5,0.6,0.7,0.8",
                   help="grid for the roap metric")
    p.add_argument("--method", choices=METHODS, default="genpath", help="scoring method for roap")
    p.add_argument("--generator", default=None)
    p.add_argument("--scope", choices=("per_layer", "global"), default="per_layer")

    p = sub.add_parser("transfer", help="build class pathways and evaluate their transfer")
    add_common(p)
    p.add_argument("--model", default="toy3")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--masks", default=None, help="directory produced by explain")
    p.add_argument("--eps-ss", default="0.4,0.6,0.8", help="sample-sparsity grid")
    p.add_argument("--eps-cn", default="0.1,0.3,0.5,0.7", help="neuron-threshold grid")

    p = sub.add_parser("viz", help="render CAM overlays, saliency, scatter, or curve plots")
    add_common(p)
    p.add_argument("--model", default="toy3")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--mode", choices=("cam", "saliency", "scatter", "curves"), default="cam")
    p.add_argument("--mask", default=None, help="mask file for cam/saliency")
    p.add_argument("--sample", type=int, default=0)
    p.add_argument("--class-index", type=int, default=None)
    p.add_argument("--generator", default=None, help="generator checkpoint for scatter")
    p.add_argument("--layer", type=int, default=0, help="capture layer for scatter")
    p.add_argument("--csv", default=None, help="exported curve rows for mode=curves")
    p.add_argument("--x", default=None)
    p.add_argument("--y", default=None)
    p.add_argument("--series", default=None)
    return parser


# ----------------------------------------------------------------------
# shared plumbing
# ----------------------------------------------------------------------


def _apply_env(args: argparse.Namespace) -> None:
    if args.out is None:
        args.out = os.environ.get("PATHGEN_OUT")
    if args.out is None:
        raise ConfigError("no output directory: pass --out or set PATHGEN_OUT")
    if getattr(args, "seed", None) is None:
        args.seed = int(os.environ.get("PATHGEN_SEED", "0"))
    if args.seed < 0:
        raise ConfigError(f"seed must be non-negative, got {args.seed}")


def _load_target(args) -> TargetModel:
    if args.checkpoint is None:
        raise ConfigError("a target model checkpoint is required: pass --checkpoint")
    net = load_checkpoint(args.checkpoint)
    if net.arch != args.model:
        raise ConfigError(
            f"checkpoint architecture {net.arch!r} does not match --model {args.model!r}"
        )
    return TargetModel(net)


def _load_samples(args) -> SampleSet:
    return load_dataset(
        args.dataset, args.data_path, args.split, seed=args.seed, limit=args.limit
    )


def _runconfig_from_args(args: argparse.Namespace, command: str) -> RunConfig:
    rc = RunConfig(command=command, seed=args.seed, out_dir=args.out)
    for name in (
        "model", "checkpoint", "dataset", "data_path", "split", "limit", "method",
        "sparsity", "scope", "reference", "alpha", "beta", "epochs", "batch_size",
        "masks",
    ):
        if hasattr(args, name):
            value = getattr(args, name)
            if name == "masks":
                rc.masks_dir = value
            elif name == "data_path":
                rc.data_path = value
            else:
                setattr(rc, name, value)
    if hasattr(args, "lr"):
        rc.learning_rate = args.lr
    if hasattr(args, "generator"):
        rc.generator_checkpoint = args.generator
    if hasattr(args, "metrics"):
        rc.metrics = _str_list(args.metrics)
    if hasattr(args, "sparsity_grid"):
        rc.sparsity_grid = _float_list(args.sparsity_grid)
    if hasattr(args, "eps_ss"):
        rc.eps_ss_grid = _float_list(args.eps_ss)
    if hasattr(args, "eps_cn"):
        rc.eps_cn_grid = _float_list(args.eps_cn)
    for name in ("steps", "score_method", "mode", "mask", "sample", "class_index",
                 "layer", "csv", "x", "y", "series", "gen_config"):
        if hasattr(args, name) and getattr(args, name) is not None:
            rc.extra[name] = getattr(args, name)
    return rc


def _args_from_manifest(path: str, parser: argparse.ArgumentParser) -> argparse.Namespace:
    rc = read_manifest(path)
    argv = [rc.command]
    mapping = {
        "model": rc.model, "checkpoint": rc.checkpoint, "dataset": rc.dataset,
        "data-path": rc.data_path, "split": rc.split, "limit": rc.limit,
        "seed": rc.seed, "out": rc.out_dir, "method": rc.method,
        "sparsity": rc.sparsity, "scope": rc.scope, "reference": rc.reference,
        "alpha": rc.alpha, "beta": rc.beta, "lr": rc.learning_rate,
        "epochs": rc.epochs, "batch-size": rc.batch_size,
        "generator": rc.generator_checkpoint, "masks": rc.masks_dir,
        "metrics": ",".join(rc.metrics) if rc.metrics else None,
        "sparsity-grid": ",".join(str(v) for v in rc.sparsity_grid) or None,
        "eps-ss": ",".join(str(v) for v in rc.eps_ss_grid) or None,
        "eps-cn": ",".join(str(v) for v in rc.eps_cn_grid) or None,
    }
    mapping.update({k.replace("_", "-"): v for k, v in rc.extra.items()})
    known = _known_flags(parser, rc.command)
    for key, value in mapping.items():
        if value is None or f"--{key}" not in known:
            continue
        argv += [f"--{key}", str(value)]
    return parser.parse_args(argv)


def _known_flags(parser: argparse.ArgumentParser, command: str) -> set[str]:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            sub = action.choices[command]
            return {opt for a in sub._actions for opt in a.option_strings}
    return set()


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------


def cmd_fit_target(args) -> int:
    ds = _load_samples(args)
    net = build_model(args.model, num_classes=int(ds.labels.max().item()) + 1)
    acc = fit_target(net, ds.images, ds.labels, epochs=args.epochs, lr=args.lr, seed=args.seed)
    out = Path(args.out)
    save_checkpoint(out / "target.pt", net)
    write_manifest(out, _runconfig_from_args(args, "fit-target"),
                   normalization={"mean": ds.mean, "std": ds.std},
                   train_accuracy=acc)
    print(f"target {args.model} trained: accuracy {acc * 100:.2f}%  -> {out / 'target.pt'}")
    return 0


GEN_CONFIG_KEYS = (
    "shared_resolution", "filter_sizes", "scorer_depth",
    "quant_bits", "quant_low", "quant_high", "tau",
)


def _generator_config(args, model: TargetModel) -> GeneratorConfig:
    overrides = {}
    if getattr(args, "gen_config", None):
        path = Path(args.gen_config)
        if not path.exists():
            raise ConfigError(f"generator config file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: invalid generator config JSON: {exc}") from exc
        unknown = set(doc) - set(GEN_CONFIG_KEYS)
        if unknown:
            raise ConfigError(
                f"{path}: unknown generator config keys {sorted(unknown)}; "
                f"valid keys: {list(GEN_CONFIG_KEYS)}"
            )
        overrides = doc
        if "filter_sizes" in overrides:
            overrides["filter_sizes"] = [tuple(f) for f in overrides["filter_sizes"]]
        if "shared_resolution" in overrides:
            overrides["shared_resolution"] = tuple(overrides["shared_resolution"])
    return GeneratorConfig.for_model(model, **overrides)


def cmd_train(args) -> int:
    model = _load_target(args)
    ds = _load_samples(args)
    gen_cfg = _generator_config(args, model)
    torch.manual_seed(args.seed)
    generator = PathwayGenerator(gen_cfg)
    tc = TrainConfig(
        alpha=args.alpha, beta=args.beta, learning_rate=args.lr, epochs=args.epochs,
        batch_size=args.batch_size, seed=args.seed, out_dir=args.out,
    )
    state = train(model, generator, (ds.images, ds.labels), tc)
    out = Path(args.out)
    save_generator(out / "generator.pt", generator, epoch=state.epoch)
    write_manifest(out, _runconfig_from_args(args, "train"),
                   normalization={"mean": ds.mean, "std": ds.std},
                   generator_config=gen_cfg.to_dict(),
                   epochs_run=state.epoch)
    last = state.epoch_means[-1] if state.epoch_means else {}
    print(f"generator trained for {state.epoch} epoch(s) -> {out / 'generator.pt'}")
    if last:
        print(f"final epoch means: kd {last['kd']:.4f}  sparsity {last['sparsity']:.1f}  total {last['total']:.4f}")
    return 0


def _score_field_for(
    method: str, model: TargetModel, ds: SampleSet, i: int, args
) -> baselines.ScoreField:
    x = ds.images[i]
    with torch.no_grad():
        logits, acts = model.capture_activations(x)
    cls = int(logits.argmax().item())
    if method == "taylor":
        return baselines.taylor_importance(model, x, cls)
    if method == "intgrad":
        return baselines.intgrad_importance(model, x, cls, steps=getattr(args, "steps", 20))
    if method == "magnitude":
        return baselines.magnitude_importance(acts)
    if method == "random":
        return baselines.random_scores(model.layer_specs, seed=args.seed * 1_000_003 + i)
    raise ConfigError(f"method {method!r} has no score field")


def cmd_explain(args) -> int:
    model = _load_target(args)
    ds = _load_samples(args)
    out = Path(args.out)
    mask_dir = out / "masks"
    generator = None
    if args.method == "genpath":
        if args.generator is None:
            raise ConfigError("method genpath requires --generator")
        generator, _ = load_generator(args.generator)

    index = []
    for i in range(len(ds)):
        x = ds.images[i]
        with torch.no_grad():
            logits, acts = model.capture_activations(x)
        pred = int(logits.argmax().item())
        if args.method == "genpath":
            mask, _ = generate_pathway(model, x, generator, mode="eval")
        elif args.method == "greedy":
            scores = _score_field_for(args.score_method, model, ds, i, args)
            mask = baselines.greedy_prune(model, x, scores).mask
        else:
            scores = _score_field_for(args.method, model, ds, i, args)
            mask = baselines.threshold_to_mask(scores, args.sparsity, scope=args.scope)
        fname = f"sample_{i:05d}.npwy"
        write_mask(mask_dir / fname, mask)
        index.append(
            {
                "id": i,
                "file": f"masks/{fname}",
                "label": int(ds.labels[i].item()),
                "original_class": pred,
                "firing_sparsity": mask.firing_sparsity(),
            }
        )
    (out / "index.json").write_text(json.dumps(index, indent=2))
    write_manifest(out, _runconfig_from_args(args, "explain"),
                   normalization={"mean": ds.mean, "std": ds.std},
                   samples=len(index))
    mean_sp = float(np.mean([e["firing_sparsity"] for e in index])) if index else 0.0
    print(f"wrote {len(index)} mask file(s) to {mask_dir} (mean firing sparsity {mean_sp:.3f})")
    return 0


def _load_mask_set(masks_dir: str | Path, n_expected: int) -> tuple[list[PathwayMask], list[dict]]:
    root = Path(masks_dir)
    if not root.exists():
        raise DataFormatError(f"masks directory not found: {root}")
    index_path = root / "index.json"
    if index_path.exists():
        entries = json.loads(index_path.read_text())
    else:
        files = sorted(root.glob("**/*.npwy"))
        if not files:
            raise DataFormatError(f"no .npwy mask files under {root}")
        entries = [{"id": i, "file": str(f.relative_to(root))} for i, f in enumerate(files)]
    masks = [read_mask(root / e["file"]) for e in entries]
    if n_expected and len(masks) != n_expected:
        raise DataFormatError(
            f"{len(masks)} masks in {root} but the dataset has {n_expected} samples; "
            "use --limit to align"
        )
    return masks, entries


def cmd_eval(args) -> int:
    model = _load_target(args)
    ds = _load_samples(args)
    metrics = _str_list(args.metrics)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    values: dict[str, float] = {}
    per_layer: dict[str, list[float]] = {}

    needs_masks = any(m in ("accuracy", "mic", "mdc", "icr", "aciou") for m in metrics)
    if needs_masks:
        if args.masks is None:
            raise ConfigError("--masks is required for record-based metrics")
        masks, entries = _load_mask_set(args.masks, len(ds))
        stacked = PathwayMask(
            [torch.stack([m.masks[l] for m in masks]) for l in range(len(masks[0]))]
        )
        records = evaluation.predict_records(model, ds.images, stacked, ds.labels)
        if "accuracy" in metrics:
            values["accuracy"] = evaluation.accuracy(records, reference=args.reference)
        if "mic" in metrics:
            values["mic"] = evaluation.mic(records)
        if "mdc" in metrics:
            values["mdc"] = evaluation.mdc(records)
        if "icr" in metrics:
            values["icr"] = evaluation.icr(records)
        if "aciou" in metrics:
            by_class: dict[int, list[PathwayMask]] = {}
            for i, m in enumerate(masks):
                by_class.setdefault(int(ds.labels[i].item()), []).append(m)
            values["aciou"] = evaluation.aciou(by_class)
            values["aciou_literal"] = evaluation.aciou_literal(by_class)
            per_layer["aciou"] = evaluation.aciou_per_layer(by_class)
        values["mean_firing_sparsity"] = float(
            np.mean([m.firing_sparsity() for m in masks])
        ) * 100.0

    if "roap" in metrics:
        generator = None
        if args.method == "genpath":
            if args.generator is None:
                raise ConfigError("roap with method genpath requires --generator")
            generator, _ = load_generator(args.generator)
        fields = []
        for i in range(len(ds)):
            if args.method == "genpath":
                _, scores = generate_pathway(model, ds.images[i], generator, mode="eval")
                fields.append(baselines.ScoreField(scores.decoded, method="genpath"))
            else:
                fields.append(_score_field_for(args.method, model, ds, i, args))
        grid = _float_list(args.sparsity_grid)
        curve = evaluation.roap(model, ds.images, fields, grid, scope=args.scope)
        with open(out / "roap.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sparsity", "accuracy"])
            w.writerows(curve)
        for s, acc in curve:
            values[f"roap@{s:g}"] = acc

    report = evaluation.MetricReport(
        values=values,
        config=_runconfig_from_args(args, "eval").to_dict(),
        per_layer=per_layer,
    )
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / "report.json")
    write_manifest(out, _runconfig_from_args(args, "eval"),
                   normalization={"mean": ds.mean, "std": ds.std})
    for k in sorted(values):
        print(f"{k}: {values[k]:.4f}")
    return 0


def cmd_transfer(args) -> int:
    model = _load_target(args)
    ds = _load_samples(args)
    if args.masks is None:
        raise ConfigError("--masks is required to build class pathways")
    masks, entries = _load_mask_set(args.masks, len(ds))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    by_class: dict[int, tuple[list[PathwayMask], list[int]]] = {}
    for i, m in enumerate(masks):
        cls = int(ds.labels[i].item())
        by_class.setdefault(cls, ([], []))
        by_class[cls][0].append(m)
        by_class[cls][1].append(i)

    rows = []
    for eps_ss in _float_list(args.eps_ss):
        for eps_cn in _float_list(args.eps_cn):
            pathways = {}
            for cls, (cls_masks, ids) in sorted(by_class.items()):
                cp = evaluation.build_class_pathway(
                    cls_masks, cls, eps_ss, eps_cn, seed=args.seed, sample_ids=ids
                )
                pathways[cls] = cp
                stem = f"class{cls}_ss{eps_ss:g}_cn{eps_cn:g}"
                write_mask(out / f"{stem}.npwy", cp.mask)
                sidecar = {
                    "class_id": cls,
                    "eps_ss": eps_ss,
                    "eps_cn": eps_cn,
                    "seed": args.seed,
                    "sample_ids": cp.sample_ids,
                    "kept_neurons": cp.mask.num_kept(),
                    "firing_sparsity": cp.mask.firing_sparsity(),
                }
                (out / f"{stem}.json").write_text(json.dumps(sidecar, indent=2))
            values, _ = evaluation.transfer_eval(model, ds.images, ds.labels, pathways)
            row = {"eps_ss": eps_ss, "eps_cn": eps_cn, **values,
                   "mean_kept": float(np.mean([p.mask.num_kept() for p in pathways.values()]))}
            rows.append(row)

    with open(out / "transfer.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        w.writeheader()
        w.writerows(rows)
    report = evaluation.MetricReport(
        values={f"transfer_acc@ss{r['eps_ss']:g}_cn{r['eps_cn']:g}": r["accuracy"] for r in rows},
        config=_runconfig_from_args(args, "transfer").to_dict(),
    )
    report.save(out / "report.json")
    write_manifest(out, _runconfig_from_args(args, "transfer"),
                   normalization={"mean": ds.mean, "std": ds.std})
    print(f"wrote {len(rows)} grid row(s) to {out / 'transfer.csv'}")
    return 0


def cmd_viz(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.mode == "curves":
        if not args.csv or not args.x or not args.y:
            raise ConfigError("mode=curves requires --csv, --x, and --y")
        with open(args.csv, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise DataFormatError(f"{args.csv}: no rows")
        target = out / "curves.png"
        viz.plot_curves(target, rows, args.x, args.y, series_key=args.series)
        write_manifest(out, _runconfig_from_args(args, "viz"))
        print(f"wrote {target}")
        return 0

    model = _load_target(args)
    ds = _load_samples(args)

    if args.mode in ("cam", "saliency"):
        if args.mask is None:
            raise ConfigError(f"mode={args.mode} requires --mask")
        mask = read_mask(args.mask)
        x = ds.images[args.sample]
        with torch.no_grad():
            logits, _ = model.capture_activations(x)
        cls = args.class_index if args.class_index is not None else int(logits.argmax().item())
        if args.mode == "cam":
            heat = evaluation.cam_on_pathway(model, x, mask, cls).numpy()
            img = viz.overlay_cam(ds.raw[args.sample], heat)
            target = out / f"cam_sample{args.sample}_class{cls}.png"
        else:
            sal = evaluation.saliency_on_pathway(model, x, mask, cls).numpy()
            img = viz.grayscale_u8(sal)
            target = out / f"saliency_sample{args.sample}_class{cls}.png"
        viz.save_image(target, img)
        write_manifest(out, _runconfig_from_args(args, "viz"))
        print(f"wrote {target}")
        return 0

    # scatter: original features vs generator scores at one layer
    if args.generator is None:
        raise ConfigError("mode=scatter requires --generator")
    generator, _ = load_generator(args.generator)
    feats, scores = [], []
    for i in range(len(ds)):
        with torch.no_grad():
            _, acts = model.capture_activations(ds.images[i])
            _, imp = generate_pathway(model, ds.images[i], generator, mode="eval")
        feats.append(acts.tensors[args.layer].flatten().numpy())
        scores.append(imp.shared[args.layer].flatten().numpy())
    feats_arr = np.stack(feats)
    scores_arr = np.stack(scores)
    labels = ds.labels.numpy()
    within_f, between_f = evaluation.class_variance_stats(feats_arr, labels)
    within_s, between_s = evaluation.class_variance_stats(scores_arr, labels)
    note = (
        f"within: {evaluation.variance_delta(within_f, within_s):+.2f}%  "
        f"between: {evaluation.variance_delta(between_f, between_s):+.2f}%"
    )
    viz.scatter_embeddings(out / f"features_layer{args.layer}.png",
                           viz.project_2d(feats_arr), labels, title="original features")
    viz.scatter_embeddings(out / f"scores_layer{args.layer}.png",
                           viz.project_2d(scores_arr), labels,
                           title="generator scores", annotation=note)
    write_manifest(out, _runconfig_from_args(args, "viz"),
                   variance_deltas={"within_pct": evaluation.variance_delta(within_f, within_s),
                                    "between_pct": evaluation.variance_delta(between_f, between_s)})
    print(f"wrote scatter plots to {out} ({note})")
    return 0


HANDLERS = {
    "fit-target": cmd_fit_target,
    "train": cmd_train,
    "explain": cmd_explain,
    "eval": cmd_eval,
    "transfer": cmd_transfer,
    "viz": cmd_viz,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "from_manifest", None):
        args = _args_from_manifest(args.from_manifest, parser)
    try:
        _apply_env(args)
        return HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except PathgenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
