"""Command-line interface.

Five subcommands cover the pipeline: preprocess fills the feature
cache, train fits and checkpoints a network, eval scores a checkpoint,
predict writes labels for unseen meshes, info inspects meshes and
manifests. Machine-readable JSON goes to stdout, progress and errors
to stderr. Exit codes: 0 success, 1 usage or data error, 2 internal
error. Reruns with identical inputs print identical stdout; nothing
here timestamps or randomizes output.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

from .errors import MeshMlpError
from .features import (
    FeatureConfig,
    Sample,
    load_split,
    mesh_features,
    precompute_features,
)
from .checkpoint import load_checkpoint
from .manifest import load_manifest, subset_training_set
from .mesh import Mesh, parse_mesh, write_labeled_mesh
from .model import face_label_vote
from .geometry import validate_mesh
from .training import TrainConfig, evaluate, predict_sample, train
from . import report as report_mod


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of calling sys.exit(2) on bad flags."""

    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _feature_config(args) -> FeatureConfig:
    try:
        return FeatureConfig.from_names(
            args.features, eigenpairs=args.eigenpairs, hks_scales=args.hks_scales
        )
    except ValueError as exc:
        raise _UsageError(str(exc)) from None


def _load_manifest_arg(args):
    manifest = load_manifest(args.manifest)
    if getattr(args, "subset_divisor", None):
        manifest = subset_training_set(manifest, args.subset_divisor, args.seed)
    return manifest


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2))


def _cmd_preprocess(args) -> int:
    manifest = _load_manifest_arg(args)
    report = precompute_features(
        manifest, _feature_config(args), args.cache, workers=args.workers
    )
    _emit(report)
    return 0


def _cmd_train(args) -> int:
    manifest = _load_manifest_arg(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = TrainConfig(
        epochs=args.epochs,
        lr=args.lr,
        accumulation=args.accum,
        seed=args.seed,
        norm_kind=args.norm,
        features=_feature_config(args),
        eval_every=args.eval_every,
        augment=not args.no_augment,
    )
    checkpoint = out_dir / "checkpoint.mmlpckpt"
    result = train(
        manifest,
        config,
        cache_dir=args.cache,
        checkpoint_path=checkpoint,
        log_path=out_dir / "training_log.jsonl",
        log_stream=sys.stderr,
    )
    written = report_mod.render_report(out_dir, result.metrics, result.records)
    payload = {
        "checkpoint": str(checkpoint),
        "epochs_run": len(result.records),
        "final_train_loss": result.records[-1]["train_loss"],
        "report_files": [str(p) for p in written],
    }
    if result.metrics is not None:
        payload["metrics"] = result.metrics.to_dict()
    _emit(payload)
    return 0


def _cmd_eval(args) -> int:
    manifest = _load_manifest_arg(args)
    state = load_checkpoint(args.checkpoint)
    config = _feature_config(args)
    if config.channels != state.config.input_channels:
        raise _UsageError(
            f"--features gives {config.channels} channels but the checkpoint "
            f"expects {state.config.input_channels}"
        )
    samples = load_split(manifest, args.split, config, args.cache)
    if not samples:
        raise _UsageError(f"manifest has no {args.split!r} entries")
    metrics = evaluate(state, samples)
    if args.report:
        report_mod.render_report(args.report, metrics)
    _emit(metrics.to_dict())
    return 0


def _cmd_predict(args) -> int:
    manifest = _load_manifest_arg(args)
    state = load_checkpoint(args.checkpoint)
    config = _feature_config(args)
    if config.channels != state.config.input_channels:
        raise _UsageError(
            f"--features gives {config.channels} channels but the checkpoint "
            f"expects {state.config.input_channels}"
        )
    out_dir = Path(args.out) if args.out else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    entries = manifest.split_entries(args.split)
    if not entries:
        raise _UsageError(f"manifest has no {args.split!r} entries")
    predictions = []
    for entry in entries:
        mesh_path = manifest.mesh_path(entry)
        feats, _ = mesh_features(mesh_path, config, Path(args.cache) if args.cache else None)
        logits = predict_sample(state, Sample(mesh_id=mesh_path.stem, features=feats))
        item: dict = {"mesh": entry.mesh}
        if state.config.task == "classification":
            item["class"] = int(logits.argmax())
        else:
            mesh = parse_mesh(mesh_path)
            labels = face_label_vote(logits, mesh.faces)
            item["faces"] = int(labels.size)
            if out_dir is not None:
                label_path = out_dir / f"{mesh_path.stem}_pred.txt"
                label_path.write_text("\n".join(str(v) for v in labels) + "\n")
                obj_path = out_dir / f"{mesh_path.stem}_pred.obj"
                write_labeled_mesh(obj_path, Mesh(mesh.vertices, mesh.faces, labels))
                item["labels_file"] = str(label_path)
                item["mesh_file"] = str(obj_path)
        predictions.append(item)
    _emit({"task": state.config.task, "predictions": predictions})
    return 0


def _cmd_info(args) -> int:
    if (args.mesh is None) == (args.manifest is None):
        raise _UsageError("info needs exactly one of --mesh or --manifest")
    if args.mesh is not None:
        report = validate_mesh(parse_mesh(args.mesh)).to_dict()
        report["path"] = str(args.mesh)
        _emit(report)
        return 0
    manifest = load_manifest(args.manifest)
    splits: dict[str, int] = {}
    for entry in manifest.entries:
        splits[entry.split] = splits.get(entry.split, 0) + 1
    _emit(
        {
            "task": manifest.task,
            "num_classes": manifest.num_classes,
            "entries": len(manifest.entries),
            "splits": splits,
        }
    )
    return 0


def _add_feature_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--features",
        default="xyz,normal,dihedral,hks",
        help="comma-separated blocks from: xyz, normal, dihedral, hks",
    )
    parser.add_argument("--eigenpairs", type=int, default=128)
    parser.add_argument("--hks-scales", type=int, default=16)


def _add_manifest_flags(parser: argparse.ArgumentParser, subset: bool = True) -> None:
    parser.add_argument("--manifest", required=True, help="dataset manifest JSON")
    parser.add_argument("--seed", type=int, default=0)
    if subset:
        parser.add_argument(
            "--subset-divisor",
            type=int,
            default=None,
            help="keep ceil(N/divisor) training meshes, seeded by --seed",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="meshmlp", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("preprocess", parents=[], help="fill the feature cache")
    _add_manifest_flags(p)
    _add_feature_flags(p)
    p.add_argument("--cache", required=True, help="feature cache directory")
    p.add_argument("--workers", type=int, default=None, help="defaults to MESHMLP_THREADS")
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("train", help="fit a network and write a checkpoint")
    _add_manifest_flags(p)
    _add_feature_flags(p)
    p.add_argument("--cache", default=None)
    p.add_argument("--out", required=True, help="output directory for checkpoint and report")
    p.add_argument("--norm", default="ln", choices=("ln", "bn", "gn", "in", "grn"))
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--accum", type=int, default=8, help="gradient accumulation batch")
    p.add_argument("--eval-every", type=int, default=10)
    p.add_argument("--no-augment", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a manifest split")
    _add_manifest_flags(p)
    _add_feature_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cache", default=None)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--report", default=None, help="directory for CSV tables and figures")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("predict", help="write predicted labels for a split")
    _add_manifest_flags(p)
    _add_feature_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cache", default=None)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--out", default=None, help="directory for label files and colored meshes")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("info", help="inspect a mesh or manifest")
    p.add_argument("--mesh", default=None)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=_cmd_info)

    return parser


def run_command(argv: list[str]) -> int:
    """Parse and dispatch; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            parser.print_help(sys.stderr)
            return 1
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (MeshMlpError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))
