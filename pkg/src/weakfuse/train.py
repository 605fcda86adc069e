"""End-to-end training loop: subset refresh, then per-batch G, D, label-model
and classifier updates, with one history record per epoch."""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import classifier as clf
from . import gan
from .data import Checkpoint, decode_checkpoint, load_checkpoint
from .errors import ConfigError, WeakFuseError
from .label_model import LabelModel, entropy, majority_vote, pseudo_label
from .metrics import ari, classification_report, frechet2d
from .nn import Adam
from .selection import cosine_kernel, normalized_costs, select_subset

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 200
    refresh_period: int = 1
    eta: float = 0.8
    gamma: float = 3.0
    delta: float = 1.0
    alpha: float = 0.7
    beta: float = 0.3
    lr_g: float = 1e-4
    lr_d: float = 4e-4
    lr_lm: float = 8e-5
    lr_cls: float = 1.8e-4
    lr_guidance: float = 1e-5
    batch_size: int = 64
    latent_dim: int = 8
    seed: int = 0
    trunk_dims: tuple = (64, 32)
    acc_hidden: tuple = (256, 128, 64)
    gen_hidden: tuple = (32, 32)
    align_weight: float = 1.0
    unit_cost_budget: bool = False
    track_frechet: bool = True

    def __post_init__(self):
        self.trunk_dims = tuple(int(x) for x in self.trunk_dims)
        self.acc_hidden = tuple(int(x) for x in self.acc_hidden)
        self.gen_hidden = tuple(int(x) for x in self.gen_hidden)
        self.validate()

    def validate(self):
        for name in ("lr_g", "lr_d", "lr_lm", "lr_cls", "lr_guidance"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 < self.eta < 1.0:
            raise ConfigError(f"eta must lie in (0, 1), got {self.eta}")
        if self.gamma < 2.0:
            raise ConfigError(f"gamma must be >= 2, got {self.gamma}")
        if self.delta <= 0:
            raise ConfigError("delta must be positive")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be nonnegative")
        if self.epochs < 0 or self.refresh_period < 1 or self.batch_size < 1:
            raise ConfigError("epochs >= 0, refresh_period >= 1 and batch_size >= 1 required")
        if self.latent_dim < 1 or not self.trunk_dims:
            raise ConfigError("latent_dim >= 1 and a non-empty trunk required")

    def to_dict(self):
        d = dataclasses.asdict(self)
        for k in ("trunk_dims", "acc_hidden", "gen_hidden"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config key {unknown[0]!r}")
        return cls(**d)


@dataclass
class EpochRecord:
    epoch: int
    subset_size: int
    subset_utility: float
    subset_cost: float
    budget: float
    sce: float
    lm_loss: float
    d_loss: float
    g_adv: float
    g_guidance: float
    mean_entropy: float
    lm_accuracy: float = None
    lm_f1: float = None
    mv_accuracy: float = None
    cls_accuracy: float = None
    cls_ari: float = None
    frechet2d: float = None

    GOLD_FIELDS = ("lm_accuracy", "lm_f1", "mv_accuracy", "cls_accuracy", "cls_ari")


class TrainState:
    """All parameters, optimizer moments, the frozen subset and the RNG."""

    def __init__(self, config, n_features, n_lfs, n_classes):
        self.config = config
        self.dims = {"n_features": int(n_features), "n_lfs": int(n_lfs), "n_classes": int(n_classes)}
        init_seq, train_seq = np.random.SeedSequence(config.seed).spawn(2)
        init_rng = np.random.default_rng(init_seq)
        self.rng = np.random.default_rng(train_seq)

        self.trunk = clf.make_trunk(n_features, config.trunk_dims, rng=init_rng)
        t_dim = config.trunk_dims[-1]
        self.cls_head = clf.make_classifier_head(t_dim, n_classes, rng=init_rng)
        self.d_head = gan.make_discriminator_head(t_dim, rng=init_rng)
        self.generator = gan.make_generator(config.latent_dim, n_classes, n_features,
                                            config.gen_hidden, rng=init_rng)
        self.lm = LabelModel(t_dim, n_lfs, n_classes, config.acc_hidden, rng=init_rng)

        self.parts = gan.GanParts(self.generator, self.trunk, self.d_head, self.cls_head, n_classes)
        g = gan.make_gan_optimizers(self.parts, config.lr_g, config.lr_d, config.lr_guidance)
        self.opts = {
            "g_adv": g.g_adv,
            "d": g.d,
            "lm": Adam(self.lm.params(), lr=config.lr_lm),
            "cls": Adam(self.trunk.params() + self.cls_head.params(), lr=config.lr_cls),
            "g_guidance": g.g_guidance,
        }
        self.gan_opts = g
        self.sampler = gan.LatentSampler(config.latent_dim, n_classes, self.rng)
        self.epoch = 0
        self.subset = None
        # utility/cost/budget/mean entropy of the latest refresh
        self.selection_summary = None

    @property
    def n_classes(self):
        return self.dims["n_classes"]

    def modules(self):
        return {
            "trunk": self.trunk.params(),
            "cls_head": self.cls_head.params(),
            "d_head": self.d_head.params(),
            "generator": self.generator.params(),
            "acc_net": self.lm.acc_net.params(),
            "align": self.lm.align.params(),
        }

    def trunk_features(self, x):
        h, _ = self.trunk.run(x)
        return h

    def classify(self, x):
        return clf.classify(self.trunk, self.cls_head, x)

    def lm_posteriors(self, x, votes):
        return self.lm.posteriors(self.trunk_features(x), votes)

    # -- persistence ------------------------------------------------------------

    def state_dict(self):
        tensors = {}
        for mod, params in self.modules().items():
            for i, p in enumerate(params):
                tensors[f"param.{mod}.{i:02d}"] = p
        opt_meta = {}
        for name, opt in self.opts.items():
            for i, (m, v) in enumerate(zip(opt.m, opt.v)):
                tensors[f"opt.{name}.m.{i:02d}"] = m
                tensors[f"opt.{name}.v.{i:02d}"] = v
            opt_meta[name] = {"t": opt.t, "lr": opt.lr, "beta1": opt.beta1,
                              "beta2": opt.beta2, "eps": opt.eps}
        subset = None
        if self.subset is not None:
            tensors["subset.indices"] = self.subset.indices
            tensors["subset.labels"] = self.subset.labels
            subset = {"epoch": self.subset.epoch}
        header = {
            "kind": "weakfuse.train_state",
            "config": self.config.to_dict(),
            "dims": self.dims,
            "epoch": self.epoch,
            "rng": self.rng.bit_generator.state,
            "optimizers": opt_meta,
            "subset": subset,
            "selection": self.selection_summary,
        }
        return header, tensors

    @classmethod
    def from_checkpoint(cls, ckpt):
        if isinstance(ckpt, (bytes, bytearray)):
            ckpt = decode_checkpoint(bytes(ckpt))
        elif not isinstance(ckpt, Checkpoint):
            ckpt = load_checkpoint(ckpt)
        h, t = ckpt.header, ckpt.tensors
        if h.get("kind") != "weakfuse.train_state":
            raise ConfigError("checkpoint does not hold a training state")
        state = cls(TrainConfig.from_dict(h["config"]), **h["dims"])
        for mod, params in state.modules().items():
            for i, p in enumerate(params):
                p[...] = t[f"param.{mod}.{i:02d}"]
        for name, opt in state.opts.items():
            meta = h["optimizers"][name]
            opt.t = meta["t"]
            opt.lr, opt.beta1, opt.beta2, opt.eps = meta["lr"], meta["beta1"], meta["beta2"], meta["eps"]
            for i in range(len(opt.m)):
                opt.m[i][...] = t[f"opt.{name}.m.{i:02d}"]
                opt.v[i][...] = t[f"opt.{name}.v.{i:02d}"]
        state.rng.bit_generator.state = h["rng"]
        state.epoch = h["epoch"]
        state.selection_summary = h.get("selection")
        if h["subset"] is not None:
            state.subset = clf.TrainingSubset(t["subset.indices"], t["subset.labels"],
                                              state.n_classes, h["subset"]["epoch"])
        return state


def _cycled_batches(pool, batch_size, n_batches, rng):
    """``n_batches`` batches drawn by cycling through ``pool``, reshuffled every pass."""
    pool = np.asarray(pool, dtype=np.int64)
    if pool.size == 0:
        return [None] * n_batches
    need = batch_size * n_batches
    passes = [rng.permutation(pool) for _ in range(math.ceil(need / pool.size))]
    flat = np.concatenate(passes)[:need]
    return [flat[i * batch_size:(i + 1) * batch_size] for i in range(n_batches)]


def refresh_selection(state, dataset, kernel=None):
    """Rebuild the classifier subset from current label-model posteriors on D_t."""
    cfg = state.config
    dt = dataset.dt_indices
    if dt.size == 0:
        raise ConfigError("the non-abstained set is empty; nothing to select from")
    if kernel is None:
        kernel = cosine_kernel(dataset.features[dt])
    post = state.lm_posteriors(dataset.features[dt], dataset.votes[dt])
    costs = normalized_costs(post)
    res = select_subset(kernel, costs, cfg.eta, cfg.gamma, unit_budget=cfg.unit_cost_budget)
    res.seed = cfg.seed
    chosen = np.asarray(res.indices, dtype=np.int64)
    labels = pseudo_label(post[chosen]) if chosen.size else np.zeros(0, dtype=np.int64)
    state.selection_summary = {
        "utility": res.utility,
        "total_cost": res.total_cost,
        "budget": res.budget,
        "mean_entropy": float(entropy(post).mean()),
    }
    return clf.TrainingSubset(dt[chosen], labels, state.n_classes, state.epoch), res


def _record(state, dataset, epoch, losses, frechet):
    """Epoch metrics. The only place (with ``evaluate``) where gold labels are read."""
    sel = state.selection_summary or dict.fromkeys(
        ("utility", "total_cost", "budget", "mean_entropy"), float("nan"))
    rec = EpochRecord(
        epoch=epoch,
        subset_size=len(state.subset) if state.subset is not None else 0,
        subset_utility=sel["utility"],
        subset_cost=sel["total_cost"],
        budget=sel["budget"],
        mean_entropy=sel["mean_entropy"],
        **losses,
    )
    if frechet:
        rec.frechet2d = _frechet_score(state, dataset, epoch)
    if dataset.gold is not None:
        dt = dataset.dt_indices
        lm_post = state.lm_posteriors(dataset.features[dt], dataset.votes[dt])
        rep = classification_report(pseudo_label(lm_post), dataset.gold[dt], state.n_classes)
        rec.lm_accuracy = rep.accuracy
        rec.lm_f1 = rep.macro_f1
        mv = majority_vote(dataset.votes[dt], state.n_classes)
        rec.mv_accuracy = float((mv == dataset.gold[dt]).mean())
        pred = pseudo_label(state.classify(dataset.features))
        rec.cls_accuracy = float((pred == dataset.gold).mean())
        rec.cls_ari = ari(pred, dataset.gold)
    return rec


def generate(state, classes, seed):
    """One generated sample per entry of ``classes`` from an isolated RNG."""
    rng = np.random.default_rng(seed)
    classes = np.asarray(classes, dtype=np.int64)
    z = rng.standard_normal((classes.size, state.config.latent_dim))
    out, _ = state.generator.run(gan.generator_input(z, classes, state.n_classes))
    return out


def _frechet_score(state, dataset, epoch):
    n = min(dataset.n, 1000)
    rng = np.random.default_rng([state.config.seed, epoch, 0xF1D])
    classes = rng.integers(0, state.n_classes, size=n)
    fake = generate(state, classes, [state.config.seed, epoch, 0xF1E])
    return frechet2d(dataset.features, fake)


def train(config, dataset, state=None, progress=None):
    """Run epochs ``state.epoch .. config.epochs - 1``; returns ``(state, history)``.

    ``state`` resumes a previous run: its RNG, moments, subset and
    hyperparameters carry over, and only ``config.epochs`` is read from ``config``.
    Gold labels, when present, only feed the per-epoch metric records.
    """
    if dataset.n_classes < 2:
        raise ConfigError("need at least 2 classes")
    if dataset.dt_indices.size == 0:
        raise ConfigError("no sample received a vote; the label model has nothing to train on")
    if state is None:
        state = TrainState(config, dataset.dim, dataset.n_lfs, dataset.n_classes)
    else:
        want = {"n_features": dataset.dim, "n_lfs": dataset.n_lfs, "n_classes": dataset.n_classes}
        if state.dims != want:
            raise ConfigError(f"checkpoint dims {state.dims} do not match dataset {want}")
        # a resumed run keeps its own hyperparameters; only the target length moves
        state.config = dataclasses.replace(state.config, epochs=config.epochs)
    cfg = state.config
    X, V = dataset.features, dataset.votes
    dt = dataset.dt_indices
    kernel = cosine_kernel(X[dt])
    bs = cfg.batch_size
    n_batches = math.ceil(dataset.n / bs)
    history = []

    while state.epoch < config.epochs:
        epoch = state.epoch
        try:
            if state.subset is None or epoch % cfg.refresh_period == 0:
                state.subset, _ = refresh_selection(state, dataset, kernel)

            order = state.rng.permutation(dataset.n)
            lm_batches = _cycled_batches(dt, bs, n_batches, state.rng)
            cls_batches = _cycled_batches(state.subset.indices, bs, n_batches, state.rng)
            onehot = clf.one_hot(np.arange(state.n_classes), state.n_classes)
            label_of = dict(zip(state.subset.indices.tolist(), state.subset.labels.tolist()))
            sums = dict.fromkeys(("sce", "lm_loss", "d_loss", "g_adv", "g_guidance"), 0.0)
            n_cls = 0

            for b in range(n_batches):
                real = X[order[b * bs:(b + 1) * bs]]
                d_loss, g_adv, g_guid = gan.gan_train_step(state.parts, state.gan_opts, real,
                                                           state.sampler)
                sums["d_loss"] += d_loss
                sums["g_adv"] += g_adv
                sums["g_guidance"] += g_guid

                idx = lm_batches[b]
                feats = state.trunk_features(X[idx])
                probs = state.classify(X[idx])
                sums["lm_loss"] += _lm_step(state, feats, V[idx], probs, epoch)

                idx = cls_batches[b]
                if idx is not None:
                    y = onehot[[label_of[i] for i in idx.tolist()]]
                    sums["sce"] += clf.classifier_train_step(
                        state.trunk, state.cls_head, state.opts["cls"], X[idx], y, cfg.alpha, cfg.beta)
                    n_cls += 1
        except WeakFuseError as exc:
            raise type(exc)(f"epoch {epoch}: {exc}") from exc

        losses = {k: v / n_batches for k, v in sums.items()}
        losses["sce"] = sums["sce"] / n_cls if n_cls else float("nan")
        rec = _record(state, dataset, epoch, losses, cfg.track_frechet)
        history.append(rec)
        state.epoch += 1
        if progress is not None:
            progress(rec)
        log.debug("epoch %d: %s", epoch, rec)
    return state, history


def _lm_step(state, feats, votes, probs, epoch):
    cfg = state.config
    loss, grads = state.lm.loss_and_grads(feats, votes, probs, epoch, cfg.delta, cfg.align_weight)
    state.opts["lm"].step(grads)
    return loss


def evaluate(state, dataset, frechet=True, seed=0):
    """Metric report for a trained state. Supervised entries need gold labels."""
    dt = dataset.dt_indices
    report = {"n_samples": int(dataset.n), "n_non_abstained": int(dt.size)}
    post = None
    if dt.size:
        post = state.lm_posteriors(dataset.features[dt], dataset.votes[dt])
        labels = pseudo_label(post)
        report["lm_mean_entropy"] = float(entropy(post).mean())
        report["lm_label_counts"] = np.bincount(labels, minlength=state.n_classes).tolist()
    cls_pred = pseudo_label(state.classify(dataset.features)) if dataset.n else None
    if frechet and dataset.n >= 2:
        rng = np.random.default_rng(seed)
        fake = generate(state, rng.integers(0, state.n_classes, size=dataset.n), [seed, 1])
        report["frechet2d"] = frechet2d(dataset.features, fake)
    if dataset.gold is None:
        report["supervised"] = False
        return report
    report["supervised"] = True
    if dt.size:
        gold_dt = dataset.gold[dt]
        report["label_model"] = classification_report(pseudo_label(post), gold_dt,
                                                       state.n_classes).to_dict()
        report["majority_vote"] = classification_report(
            majority_vote(dataset.votes[dt], state.n_classes), gold_dt, state.n_classes).to_dict()
    if cls_pred is not None:
        report["classifier"] = classification_report(cls_pred, dataset.gold, state.n_classes).to_dict()
        if dataset.n >= 2:
            report["classifier"]["ari"] = ari(cls_pred, dataset.gold)
    return report


def write_history(history, path):
    fields = [f.name for f in dataclasses.fields(EpochRecord)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for rec in history:
            row = dataclasses.asdict(rec)
            w.writerow({k: "" if v is None else repr(v) if isinstance(v, float) else v
                        for k, v in row.items()})
