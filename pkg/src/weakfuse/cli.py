"""Command-line interface: one subcommand per pipeline stage.

    weakfuse synth   write a synthetic Gaussian-mixture dataset with label functions
    weakfuse select  entropy-budgeted subset selection on a dataset
    weakfuse train   full joint training; writes a checkpoint and history CSV
    weakfuse label   label-model posteriors and pseudo labels for voted rows
    weakfuse eval    metric report for a checkpoint
    weakfuse gen     class-conditional samples from a checkpoint's generator

Exit codes: 0 success, 1 runtime/domain failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .data import lf_stats, load_dataset, save_checkpoint, save_dataset, synth_dataset
from .errors import WeakFuseError
from .label_model import pseudo_label
from .selection import brute_force_opt, ceg, cosine_kernel, normalized_costs, select_subset
from .selection.core import BRUTE_FORCE_MAX_N
from .train import TrainConfig, TrainState, evaluate, generate, train, write_history

log = logging.getLogger("weakfuse")

PATH_KEYS = ("features", "votes", "gold", "classes", "out", "history", "resume")
CONFIG_KEYS = tuple(f.name for f in dataclasses.fields(TrainConfig))


class UsageError(Exception):
    pass


def _dataset_args(p, gold=True):
    p.add_argument("--features", help="features CSV (one row of floats per sample)")
    p.add_argument("--votes", help="votes CSV (one row of ints per sample, -1 = abstain)")
    if gold:
        p.add_argument("--gold", help="optional gold-label CSV, evaluation only")
    p.add_argument("--classes", type=int, help="number of classes (inferred when omitted)")


def _train_flags(p):
    g = p.add_argument_group("training hyperparameters (override --config)")
    g.add_argument("--epochs", type=int)
    g.add_argument("--refresh-period", type=int, dest="refresh_period")
    g.add_argument("--eta", type=float, help="entropy budget fraction, in (0, 1)")
    g.add_argument("--gamma", type=float, help="graph-cut representativeness weight, >= 2")
    g.add_argument("--delta", type=float, help="decay-loss annealing rate")
    g.add_argument("--alpha", type=float, help="SCE cross-entropy weight")
    g.add_argument("--beta", type=float, help="SCE reverse cross-entropy weight")
    g.add_argument("--lr-g", type=float, dest="lr_g")
    g.add_argument("--lr-d", type=float, dest="lr_d")
    g.add_argument("--lr-lm", type=float, dest="lr_lm")
    g.add_argument("--lr-cls", type=float, dest="lr_cls")
    g.add_argument("--lr-guidance", type=float, dest="lr_guidance")
    g.add_argument("--batch-size", type=int, dest="batch_size")
    g.add_argument("--latent-dim", type=int, dest="latent_dim")
    g.add_argument("--seed", type=int)
    g.add_argument("--unit-cost-budget", action="store_true", default=None, dest="unit_cost_budget",
                   help="uniform greedy run counts every element as cost 1")
    g.add_argument("--no-frechet", action="store_false", default=None, dest="track_frechet",
                   help="skip the per-epoch Frechet-2D score")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")
    parser = argparse.ArgumentParser(prog="weakfuse", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--n", type=int, default=1000, help="number of samples")
    p.add_argument("--dim", type=int, default=2, help="feature dimension")
    p.add_argument("--lfs", type=int, default=8, help="number of label functions")
    p.add_argument("--acc", type=float, default=0.7, help="label-function accuracy")
    p.add_argument("--prop", type=float, default=0.6, help="label-function propensity")
    p.add_argument("--radius", type=float, default=3.0, help="distance of class means from 0")
    p.add_argument("--std", type=float, default=1.0, help="per-class standard deviation")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("select", parents=[common], help="entropy-budgeted subset selection")
    _dataset_args(p)
    p.add_argument("--checkpoint", help="label model to use (fresh initialization when omitted)")
    p.add_argument("--eta", type=float, default=0.8)
    p.add_argument("--gamma", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0, help="seed of a fresh label model")
    p.add_argument("--ratio-mode", choices=("best", "per_cost", "uniform"), default="best",
                   help="best = run both greedy variants and keep the higher utility")
    p.add_argument("--unit-budget", action="store_true",
                   help="uniform run counts every element as cost 1")
    p.add_argument("--oracle", action="store_true",
                   help=f"also enumerate the exact optimum (|D_t| <= {BRUTE_FORCE_MAX_N})")
    p.add_argument("--out", required=True, help="output JSON file")

    p = sub.add_parser("train", parents=[common], help="joint training")
    _dataset_args(p)
    p.add_argument("--config", help="JSON file of training keys and paths; flags win")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--out", help="checkpoint output path")
    p.add_argument("--history", help="per-epoch history CSV")
    _train_flags(p)

    p = sub.add_parser("label", parents=[common], help="pseudo labels for the non-abstained rows")
    _dataset_args(p, gold=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="output CSV")

    p = sub.add_parser("eval", parents=[common], help="metric report for a checkpoint")
    _dataset_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seed", type=int, default=0, help="seed for generated samples")
    p.add_argument("--no-frechet", action="store_true")
    p.add_argument("--out", help="output JSON (stdout when omitted)")

    p = sub.add_parser("gen", parents=[common], help="sample from the generator")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--class", type=int, action="append", dest="classes",
                   help="class to sample (repeatable; all classes when omitted)")
    p.add_argument("--n", type=int, default=100, help="samples per class")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV")
    return parser


def _load(args):
    if not args.features or not args.votes:
        raise UsageError("--features and --votes are required")
    gold = getattr(args, "gold", None)
    return load_dataset(args.features, args.votes, gold, n_classes=args.classes)


def cmd_synth(args):
    if args.lfs < 1:
        raise UsageError("--lfs must be >= 1")
    ds = synth_dataset(args.classes, args.n, args.dim, [(args.acc, args.prop)] * args.lfs,
                       radius=args.radius, std=args.std, seed=args.seed)
    paths = save_dataset(ds, args.out)
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    print(f"non-abstained samples: {ds.dt_indices.size} / {ds.n}")
    for k, (acc, cov) in enumerate(lf_stats(ds)):
        print(f"lf{k}: accuracy {acc:.4f} coverage {cov:.4f}")
    return 0


def _state_for(args, ds):
    if args.checkpoint:
        state = TrainState.from_checkpoint(args.checkpoint)
        want = {"n_features": ds.dim, "n_lfs": ds.n_lfs, "n_classes": ds.n_classes}
        if state.dims != want:
            raise WeakFuseError(f"checkpoint dims {state.dims} do not match dataset {want}")
        return state
    return TrainState(TrainConfig(seed=args.seed), ds.dim, ds.n_lfs, ds.n_classes)


def cmd_select(args):
    ds = _load(args)
    dt = ds.dt_indices
    if dt.size == 0:
        raise WeakFuseError("no sample received a vote; nothing to select")
    state = _state_for(args, ds)
    post = state.lm_posteriors(ds.features[dt], ds.votes[dt])
    costs = normalized_costs(post)
    kernel = cosine_kernel(ds.features[dt])
    if args.ratio_mode == "best":
        res = select_subset(kernel, costs, args.eta, args.gamma, unit_budget=args.unit_budget)
    else:
        if not 0.0 < args.eta < 1.0:
            raise WeakFuseError(f"eta must lie in (0, 1), got {args.eta}")
        res = ceg(kernel, costs, args.eta * costs.costs.sum(), args.gamma, args.ratio_mode,
                  unit_budget=args.unit_budget)
        res.eta = args.eta
    res.seed = args.seed
    record = res.to_dict()
    record["dataset_indices"] = dt[res.indices].tolist()
    record["n_candidates"] = int(dt.size)
    record["cost_fallback"] = costs.fallback
    if args.oracle:
        if dt.size > BRUTE_FORCE_MAX_N:
            print(f"oracle skipped: |D_t| = {dt.size} exceeds {BRUTE_FORCE_MAX_N}", file=sys.stderr)
        else:
            _, opt = brute_force_opt(kernel, costs, res.budget, args.gamma)
            ratio = res.utility / opt if opt > 0 else 1.0
            record["oracle"] = {"opt": opt, "ratio": ratio}
            print(f"OPT {opt:.6f} achieved {res.utility:.6f} ratio {ratio:.4f}")
    Path(args.out).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    print(f"selected {len(res.indices)} of {dt.size} (utility {res.utility:.4f}, "
          f"cost {res.total_cost:.4f} / budget {res.budget:.4f})")
    return 0


def _merged_config(args):
    values = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"{args.config}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise UsageError(f"{args.config}: expected a JSON object")
        for key in raw:
            if key not in CONFIG_KEYS and key not in PATH_KEYS:
                raise UsageError(f"{args.config}: unknown config key {key!r}")
        values.update(raw)
    for key in CONFIG_KEYS + PATH_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    paths = {k: values.pop(k, None) for k in PATH_KEYS}
    return values, paths


def cmd_train(args):
    values, paths = _merged_config(args)
    if not paths["features"] or not paths["votes"]:
        raise UsageError("--features and --votes are required (flag or config)")
    ds = load_dataset(paths["features"], paths["votes"], paths["gold"], n_classes=paths["classes"])
    state = None
    if paths["resume"]:
        state = TrainState.from_checkpoint(paths["resume"])
        config = state.config
        for key, v in values.items():
            if key != "epochs" and TrainConfig.from_dict({**config.to_dict(), key: v}) != config:
                log.warning("--resume keeps the checkpoint's %s; ignoring %r", key, v)
        if "epochs" in values:
            config = dataclasses.replace(config, epochs=values["epochs"])
    else:
        config = TrainConfig(**values)

    def progress(rec):
        log.info("epoch %d  subset %d  sce %.4f  lm %.4f  d %.4f  g %.4f",
                 rec.epoch, rec.subset_size, rec.sce, rec.lm_loss, rec.d_loss, rec.g_adv)

    state, history = train(config, ds, state=state, progress=progress)
    if paths["out"]:
        save_checkpoint(state, paths["out"])
        print(f"wrote checkpoint {paths['out']}")
    if paths["history"]:
        write_history(history, paths["history"])
        print(f"wrote history {paths['history']}")
    if history:
        last = history[-1]
        msg = f"epoch {last.epoch}: subset {last.subset_size}, sce {last.sce:.4f}"
        if last.lm_accuracy is not None:
            msg += f", label-model acc {last.lm_accuracy:.4f} (majority vote {last.mv_accuracy:.4f})"
        print(msg)
    return 0


def cmd_label(args):
    ds = _load(args)
    state = _state_for(args, ds)
    dt = ds.dt_indices
    post = state.lm_posteriors(ds.features[dt], ds.votes[dt]) if dt.size else np.zeros((0, ds.n_classes))
    labels = pseudo_label(post)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "label"] + [f"p{j}" for j in range(ds.n_classes)])
        for i, y, p in zip(dt.tolist(), labels.tolist(), post):
            w.writerow([i, y] + [repr(float(x)) for x in p])
    print(f"wrote {dt.size} pseudo labels to {args.out}")
    return 0


def cmd_eval(args):
    ds = _load(args)
    state = _state_for(args, ds)
    report = evaluate(state, ds, frechet=not args.no_frechet, seed=args.seed)
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_gen(args):
    state = TrainState.from_checkpoint(args.checkpoint)
    C = state.n_classes
    classes = args.classes if args.classes else list(range(C))
    for c in classes:
        if not 0 <= c < C:
            raise WeakFuseError(f"class {c} outside 0..{C - 1}")
    if args.n < 0:
        raise UsageError("--n must be >= 0")
    labels = np.repeat(np.asarray(classes, dtype=np.int64), args.n)
    x = generate(state, labels, args.seed) if labels.size else np.zeros((0, state.dims["n_features"]))
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class"] + [f"f{j}" for j in range(state.dims["n_features"])])
        for c, row in zip(labels.tolist(), x):
            w.writerow([c] + [repr(float(v)) for v in row])
    print(f"wrote {labels.size} samples to {args.out}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "select": cmd_select,
    "train": cmd_train,
    "label": cmd_label,
    "eval": cmd_eval,
    "gen": cmd_gen,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(f"{args.command}: {exc}")
    except (WeakFuseError, OSError) as exc:
        print(f"weakfuse {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
