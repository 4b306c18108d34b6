"""Command-line entry point: make-dataset, train, generate, evaluate.

Every command creates its output directory, writes a run manifest there
BEFORE any long computation, and streams progress to standard error.  Exit
codes: 0 success, 2 usage/config error, 3 data error, 4 numeric failure.
One --seed feeds each component through named hash-derived substreams, so
runs are independently reproducible per stage.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass
from datetime import datetime, timezone

import torch

from . import checkpoint as _ckpt
from .errors import ConfigError, DataError, NumericsError, StoryvisError
from .evaluation import evaluate, write_png
from .seeding import derive_seed
from .story_codec import (SCHEMA_VERSION, StorySpec, Tier, make_story,
                          read_dataset, render, write_dataset)
from .training import Scheduler, TrainConfig, Trainer, story_tokens

PACKAGE_VERSION = "0.1.0"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _progress(msg: str):
    print(msg, file=sys.stderr, flush=True)


# ---------------------------------------------------------------------------
# Run manifests
# ---------------------------------------------------------------------------

@dataclass
class RunManifest:
    command: str
    config: dict
    versions: dict
    seed: int
    started_at: str
    outputs: dict

    def write(self, path: str):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(asdict(self), f, sort_keys=True, indent=1)


def _versions() -> dict:
    return {
        "package": PACKAGE_VERSION,
        "dataset_schema": SCHEMA_VERSION,
        "checkpoint_format": _ckpt.FORMAT_VERSION,
    }


def _start_run(command: str, out_dir: str, config: dict, seed: int,
               outputs: dict, *, force: bool = False,
               require_empty: bool = False) -> RunManifest:
    if require_empty and os.path.isdir(out_dir) and os.listdir(out_dir) and not force:
        raise DataError(
            f"output directory {out_dir!r} is not empty (pass --force to reuse)")
    os.makedirs(out_dir, exist_ok=True)
    manifest = RunManifest(
        command=command, config=config, versions=_versions(), seed=seed,
        started_at=datetime.now(timezone.utc).isoformat(),
        outputs=outputs)
    manifest.write(os.path.join(out_dir, "manifest.json"))
    return manifest


# ---------------------------------------------------------------------------
# Config files: flat key = value lines, # comments
# ---------------------------------------------------------------------------

def _parse_scalar(s: str):
    low = s.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null"):
        return None
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "'\"":
        return s[1:-1]
    for cast in (int, float):
        try:
            return cast(s)
        except ValueError:
            continue
    return s


def parse_kv_config(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        out[key.strip()] = _parse_scalar(val.strip())
    return out


def load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return parse_kv_config(f.read())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None


# ---------------------------------------------------------------------------
# make-dataset
# ---------------------------------------------------------------------------

def parse_tier_mix(text: str) -> tuple[int, int, int]:
    parts = text.split("/")
    if len(parts) != 3:
        raise ConfigError("--tier-mix must be easy/medium/hard, e.g. 40/30/30")
    try:
        weights = tuple(int(p) for p in parts)
    except ValueError:
        raise ConfigError("--tier-mix parts must be integers") from None
    if any(w < 0 for w in weights) or sum(weights) == 0:
        raise ConfigError("--tier-mix weights must be >= 0 and not all zero")
    return weights


def largest_remainder_counts(n: int, weights: tuple[int, ...]) -> list[int]:
    """Apportion n items to weights: floor the quotas, spend the remainder
    on the largest fractional parts, ties to the earliest position."""
    total = sum(weights)
    quotas = [n * w / total for w in weights]
    counts = [int(q) for q in quotas]
    order = sorted(range(len(weights)),
                   key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in range(n - sum(counts)):
        counts[order[i]] += 1
    return counts


def cmd_make_dataset(args) -> int:
    weights = parse_tier_mix(args.tier_mix)
    config = {
        "num_stories": args.num_stories, "tier_mix": args.tier_mix,
        "size": args.size, "frames": args.frames, "seed": args.seed,
    }
    _start_run("make-dataset", args.out, config, args.seed,
               {"dataset": args.out}, force=args.force, require_empty=True)
    counts = largest_remainder_counts(args.num_stories, weights)
    tiers = [t for t, c in zip((Tier.EASY, Tier.MEDIUM, Tier.HARD), counts)
             for _ in range(c)]
    specs, renders = [], []
    for idx, tier in enumerate(tiers):
        spec = make_story(derive_seed(args.seed, f"story/{idx}"), tier,
                          T=args.frames, story_id=idx)
        specs.append(spec)
        renders.append(render(spec, args.size, args.size))
        if (idx + 1) % 50 == 0 or idx + 1 == len(tiers):
            _progress(f"rendered {idx + 1}/{len(tiers)} stories")
    write_dataset(specs, renders, args.out)
    _progress(f"dataset written to {args.out} "
              f"(easy/medium/hard = {counts[0]}/{counts[1]}/{counts[2]})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

_TRAIN_FLAG_KEYS = [
    "profile", "frames", "scheduler", "lr_g", "lr_dim", "lr_dst",
    "beta1", "beta2", "batch_size", "epochs", "decay_every", "warmup_steps",
    "label_smooth", "kl_weight", "seed",
]


def resolve_train_config(args) -> TrainConfig:
    merged: dict = {}
    file_keys: set[str] = set()
    if args.config:
        merged.update(load_config_file(args.config))
        file_keys = set(merged)
    flag_keys = set()
    for key in _TRAIN_FLAG_KEYS:
        value = getattr(args, key)
        if value is not None:
            merged[key] = value
            flag_keys.add(key)
    if args.routing is not None:
        merged["routing_mode"] = args.routing
        flag_keys.add("routing_mode")

    config = TrainConfig.from_mapping(merged)
    if config.scheduler == Scheduler.WARMUP.value:
        explicit_lrs = sorted({"lr_g", "lr_dim", "lr_dst"}
                              & (flag_keys | file_keys))
        if explicit_lrs:
            raise ConfigError(
                "conflicting settings: scheduler=warmup derives one shared "
                f"rate from the step count, but {', '.join(explicit_lrs)} "
                "were set explicitly")
    return config


def cmd_train(args) -> int:
    dataset = read_dataset(args.dataset)
    if args.resume:
        overridden = [k for k in (*_TRAIN_FLAG_KEYS, "routing", "config")
                      if getattr(args, k) is not None]
        if overridden:
            raise ConfigError(
                "--resume restores the run's own config; drop these flags: "
                + ", ".join(sorted(overridden)))
        manifest, _ = _ckpt.read_checkpoint(args.resume)
        config = TrainConfig.from_mapping(manifest["config"])
        _start_run("train", args.out, config.to_dict(), config.seed,
                   {"dataset": args.dataset, "run_dir": args.out,
                    "resumed_from": args.resume})
        trainer = Trainer.load(args.resume, dataset=dataset, run_dir=args.out)
    else:
        config = resolve_train_config(args)
        _start_run("train", args.out, config.to_dict(), config.seed,
                   {"dataset": args.dataset, "run_dir": args.out})
        trainer = Trainer(config, dataset=dataset, run_dir=args.out)

    total = trainer.config.epochs * trainer.steps_per_epoch
    every = max(1, args.log_every)

    def progress(record, total_steps):
        if record.step % every == 0 or record.step + 1 == total_steps:
            _progress(
                f"step {record.step}/{total_steps} epoch {record.epoch} "
                f"loss_g {record.loss_g:.4f} loss_dim {record.loss_dim:.4f} "
                f"loss_dst {record.loss_dst:.4f}")

    _progress(f"training {total} steps "
              f"({trainer.config.epochs} epochs x {trainer.steps_per_epoch})")
    trainer.train(checkpoint_every=args.checkpoint_every, progress=progress)
    _progress(f"final checkpoint: {os.path.join(args.out, 'final.ckpt')}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

def _load_story_spec(args) -> StorySpec:
    if args.spec:
        with open(args.spec, "r", encoding="utf-8") as f:
            return StorySpec.from_json_dict(json.load(f))
    if args.dataset and args.story_id is not None:
        return read_dataset(args.dataset).load_spec(args.story_id)
    raise ConfigError("generate needs either --spec or --dataset with --story-id")


def cmd_generate(args) -> int:
    trainer = Trainer.load(args.checkpoint)
    spec = _load_story_spec(args)
    if spec.n_frames != trainer.profile.frames:
        raise DataError(
            f"story has {spec.n_frames} frames, checkpoint expects "
            f"{trainer.profile.frames}")
    _start_run("generate", args.out,
               {"checkpoint": args.checkpoint, "story_id": spec.story_id,
                "seed": args.seed},
               args.seed, {"frames_dir": args.out})
    rng = torch.Generator()
    rng.manual_seed(derive_seed(args.seed, f"generate/{spec.story_id}"))
    frames = trainer.synthesize(story_tokens(spec).unsqueeze(0), rng)[0].numpy()
    for t in range(spec.n_frames):
        write_png(os.path.join(args.out, f"frame_{t}.png"), frames[t])
    with open(os.path.join(args.out, "spec.json"), "w", encoding="utf-8") as f:
        json.dump(spec.to_json_dict(), f, sort_keys=True, indent=1)
    _progress(f"wrote {spec.n_frames} frames to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def cmd_evaluate(args) -> int:
    if not args.oracle and not args.checkpoint:
        raise ConfigError("evaluate needs --checkpoint (or --oracle)")
    dataset = read_dataset(args.dataset)
    n_stories = args.n_stories if args.n_stories is not None \
        else min(50, len(dataset))
    _start_run("evaluate", args.out,
               {"checkpoint": args.checkpoint, "dataset": args.dataset,
                "n_stories": n_stories, "seed": args.seed,
                "plugin": args.plugin, "oracle": args.oracle},
               args.seed, {"report": os.path.join(args.out, "report.csv")})
    trainer = None
    checkpoint_id = "oracle"
    if not args.oracle:
        trainer = Trainer.load(args.checkpoint)
        checkpoint_id = (os.path.basename(args.checkpoint)
                         + f"@step{trainer.state.step}")
    _progress(f"evaluating {n_stories} stories from {args.dataset}")
    report = evaluate(dataset, n_stories, args.seed, trainer=trainer,
                      plugin=args.plugin, checkpoint_id=checkpoint_id)
    with open(os.path.join(args.out, "report.csv"), "w", encoding="utf-8",
              newline="") as f:
        f.write(report.to_csv())
    sys.stdout.write(report.to_table())
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="storyvis",
        description="Train and evaluate a text-conditioned story-image GAN "
                    "on a synthetic shapes corpus.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-dataset", help="render a synthetic story dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--num-stories", type=int, required=True)
    p.add_argument("--tier-mix", default="40/30/30",
                   help="easy/medium/hard integer weights (default 40/30/30)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=64, help="image height = width")
    p.add_argument("--frames", type=int, default=4, help="frames per story")
    p.add_argument("--force", action="store_true",
                   help="write into a non-empty directory")
    p.set_defaults(func=cmd_make_dataset)

    p = sub.add_parser("train", help="train on a dataset directory")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--checkpoint-every", type=int, default=None,
                   help="write a checkpoint every N steps")
    p.add_argument("--log-every", type=int, default=25,
                   help="progress line cadence (steps)")
    p.add_argument("--routing",
                   choices=["impartial", "separate", "all_grads"], default=None)
    p.add_argument("--scheduler", choices=["step_decay", "warmup"], default=None)
    p.add_argument("--profile", default=None,
                   help="model size preset (desk, small, tiny, paper)")
    p.add_argument("--frames", type=int, default=None)
    p.add_argument("--lr-g", dest="lr_g", type=float, default=None)
    p.add_argument("--lr-dim", dest="lr_dim", type=float, default=None)
    p.add_argument("--lr-dst", dest="lr_dst", type=float, default=None)
    p.add_argument("--beta1", type=float, default=None)
    p.add_argument("--beta2", type=float, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--decay-every", dest="decay_every", type=int, default=None)
    p.add_argument("--warmup-steps", dest="warmup_steps", type=int, default=None)
    p.add_argument("--label-smooth", dest="label_smooth", type=float, default=None)
    p.add_argument("--kl-weight", dest="kl_weight", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="synthesize one story's frames")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--spec", help="story spec JSON file")
    p.add_argument("--dataset", help="dataset to pull --story-id from")
    p.add_argument("--story-id", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score generations against a dataset")
    p.add_argument("--checkpoint")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--n-stories", dest="n_stories", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--plugin",
                   help="metric subprocess: reads 'gen<TAB>ref' PNG path lines "
                        "on stdin, prints one scalar per line")
    p.add_argument("--oracle", action="store_true",
                   help="score the ground truth against itself")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        _progress(f"error: {e}")
        return EXIT_USAGE
    except NumericsError as e:
        _progress(f"numeric failure: {e}")
        return EXIT_NUMERIC
    except (DataError, StoryvisError) as e:
        _progress(f"error: {e}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
