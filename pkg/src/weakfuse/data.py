"""Datasets, synthetic benchmarks and the checkpoint container.

CSV layout: ``features`` has one row of ``d`` floats per sample, ``votes``
one row of ``K`` integers (-1 = abstain), ``gold`` one integer per line.
A header row is optional and detected automatically.

Checkpoints are a small binary container::

    b"WFCK" | u32 version | u64 header length | header (sorted JSON, utf-8)
    | per tensor: u64 byte length, raw little-endian payload | u32 crc32

The header lists the tensors (name, dtype, shape) in payload order.
"""
from __future__ import annotations

import csv
import json
import struct
import warnings
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, ParseError
from .label_model import ABSTAIN, non_abstained

MAGIC = b"WFCK"
FORMAT_VERSION = 1
_DTYPES = {"f8": "<f8", "i8": "<i8"}


@dataclass
class WeakDataset:
    features: np.ndarray
    votes: np.ndarray
    n_classes: int
    gold: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.votes = np.asarray(self.votes, dtype=np.int64)
        if self.features.ndim != 2 or self.votes.ndim != 2:
            raise ConfigError("features and votes must be 2-D")
        n = self.features.shape[0]
        if self.votes.shape[0] != n:
            raise ConfigError(f"features have {n} rows but votes have {self.votes.shape[0]}")
        if self.n_classes < 2:
            raise ConfigError("need at least 2 classes")
        bad = (self.votes != ABSTAIN) & ((self.votes < 0) | (self.votes >= self.n_classes))
        if bad.any():
            raise ConfigError(f"vote outside -1..{self.n_classes - 1}")
        if self.gold is not None:
            self.gold = np.asarray(self.gold, dtype=np.int64)
            if self.gold.shape != (n,):
                raise ConfigError(f"features have {n} rows but gold has {self.gold.shape[0]}")
            if self.gold.size and (self.gold.min() < 0 or self.gold.max() >= self.n_classes):
                raise ConfigError(f"gold label outside 0..{self.n_classes - 1}")
        self._dt = non_abstained(self.votes)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def n_lfs(self):
        return self.votes.shape[1]

    @property
    def dt_indices(self):
        """Rows with at least one non-abstain vote."""
        return self._dt

    def without_gold(self):
        return WeakDataset(self.features, self.votes, self.n_classes, None, dict(self.meta))


# -- CSV ---------------------------------------------------------------------


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            yield lineno, [cell.strip() for cell in row]


def _is_number(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _parse_table(path, kind):
    rows = list(_read_rows(path))
    if rows and not all(_is_number(c) for c in rows[0][1]):
        rows = rows[1:]
    out = []
    width = None
    for lineno, cells in rows:
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise ParseError(f"expected {width} columns, got {len(cells)}", path, lineno)
        vals = []
        for cell in cells:
            try:
                x = float(cell)
            except ValueError:
                raise ParseError(f"non-numeric cell {cell!r}", path, lineno) from None
            if kind == "int":
                if not x.is_integer():
                    raise ParseError(f"expected an integer, got {cell!r}", path, lineno)
                x = int(x)
            elif not np.isfinite(x):
                raise ParseError(f"non-finite value {cell!r}", path, lineno)
            vals.append(x)
        out.append((lineno, vals))
    return out, width or 0


def load_dataset(features_path, votes_path, gold_path=None, n_classes=None):
    feats, d = _parse_table(features_path, "float")
    votes, k = _parse_table(votes_path, "int")
    if len(feats) != len(votes):
        raise ParseError(f"row-count mismatch: {len(feats)} feature rows vs {len(votes)} vote rows",
                         votes_path)
    gold_rows = None
    if gold_path is not None:
        gold_rows, gw = _parse_table(gold_path, "int")
        if gw not in (0, 1):
            raise ParseError(f"gold file must have one label per line, got {gw} columns", gold_path)
        if len(gold_rows) != len(feats):
            raise ParseError(f"row-count mismatch: {len(feats)} feature rows vs "
                             f"{len(gold_rows)} gold rows", gold_path)

    for lineno, row in votes:
        for v in row:
            if v < ABSTAIN or (n_classes is not None and v >= n_classes):
                limit = "" if n_classes is None else f" (classes: {n_classes})"
                raise ParseError(f"invalid vote {v}{limit}", votes_path, lineno)
    if gold_rows is not None:
        for lineno, (g,) in gold_rows:
            if g < 0 or (n_classes is not None and g >= n_classes):
                raise ParseError(f"invalid gold label {g}", gold_path, lineno)

    X = np.array([r for _, r in feats], dtype=np.float64).reshape(len(feats), d)
    V = np.array([r for _, r in votes], dtype=np.int64).reshape(len(votes), k)
    gold = None if gold_rows is None else np.array([r[0] for _, r in gold_rows], dtype=np.int64)
    if n_classes is None:
        top = max(int(V.max(initial=-1)), int(gold.max(initial=-1)) if gold is not None else -1)
        n_classes = max(top + 1, 2)
    ds = WeakDataset(X, V, n_classes, gold, meta={
        "features_path": str(features_path),
        "votes_path": str(votes_path),
        "gold_path": None if gold_path is None else str(gold_path),
    })
    if ds.dt_indices.size == 0:
        warnings.warn(f"{votes_path}: every row abstains; the non-abstained set is empty",
                      stacklevel=2)
    return ds


def save_dataset(ds, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"features": out / "features.csv", "votes": out / "votes.csv"}
    with open(paths["features"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{j}" for j in range(ds.dim)])
        w.writerows([[repr(float(x)) for x in row] for row in ds.features])
    with open(paths["votes"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"lf{j}" for j in range(ds.n_lfs)])
        w.writerows(ds.votes.tolist())
    if ds.gold is not None:
        paths["gold"] = out / "gold.csv"
        with open(paths["gold"], "w", newline="", encoding="utf-8") as fh:
            fh.write("label\n")
            fh.writelines(f"{int(g)}\n" for g in ds.gold)
    return paths


# -- synthetic benchmark -------------------------------------------------------


def mixture_means(n_classes, dim, radius=3.0):
    """Class centres evenly spaced on a circle in the first two coordinates."""
    means = np.zeros((n_classes, dim))
    if dim == 1:
        means[:, 0] = radius * (np.arange(n_classes) - (n_classes - 1) / 2.0)
    else:
        ang = 2 * np.pi * np.arange(n_classes) / n_classes
        means[:, 0] = radius * np.cos(ang)
        means[:, 1] = radius * np.sin(ang)
    return means


def synth_dataset(n_classes, n, dim, lf_specs, radius=3.0, std=1.0, seed=0):
    """Gaussian-mixture features with synthetic label functions.

    Each ``(accuracy, propensity)`` spec yields one function that votes on a
    sample with probability ``propensity`` and, when voting, returns the true
    class with probability ``accuracy``, otherwise a uniformly drawn wrong class.
    """
    if n_classes < 2:
        raise ConfigError("need at least 2 classes")
    if n < 0 or dim < 1:
        raise ConfigError("n must be >= 0 and dim >= 1")
    lf_specs = [(float(a), float(p)) for a, p in lf_specs]
    for a, p in lf_specs:
        if not 0.0 < a <= 1.0:
            raise ConfigError(f"accuracy must lie in (0, 1], got {a}")
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"propensity must lie in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    gold = rng.integers(0, n_classes, size=n)
    means = mixture_means(n_classes, dim, radius)
    X = means[gold] + std * rng.standard_normal((n, dim))
    votes = np.full((n, len(lf_specs)), ABSTAIN, dtype=np.int64)
    for k, (acc, prop) in enumerate(lf_specs):
        fires = rng.random(n) < prop
        correct = rng.random(n) < acc
        wrong = (gold + rng.integers(1, n_classes, size=n)) % n_classes
        votes[:, k] = np.where(fires, np.where(correct, gold, wrong), ABSTAIN)
    return WeakDataset(X, votes, n_classes, gold, meta={
        "generator": "gaussian_mixture",
        "lf_specs": lf_specs,
        "radius": radius,
        "std": std,
        "seed": seed,
    })


def lf_stats(ds):
    """Per-function empirical (accuracy on non-abstained votes, coverage); needs gold."""
    out = []
    for k in range(ds.n_lfs):
        fired = ds.votes[:, k] != ABSTAIN
        cov = float(fired.mean()) if ds.n else 0.0
        acc = float((ds.votes[fired, k] == ds.gold[fired]).mean()) if fired.any() else float("nan")
        out.append((acc, cov))
    return out


# -- checkpoint container --------------------------------------------------------


@dataclass
class Checkpoint:
    header: dict
    tensors: dict


def encode_checkpoint(header, tensors):
    manifest = []
    blobs = []
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        kind = "i8" if np.issubdtype(arr.dtype, np.integer) else "f8"
        data = np.ascontiguousarray(arr, dtype=_DTYPES[kind]).tobytes()
        manifest.append({"name": name, "dtype": kind, "shape": list(arr.shape)})
        blobs.append(data)
    head = dict(header)
    head["tensors"] = manifest
    head_bytes = json.dumps(head, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<IQ", FORMAT_VERSION, len(head_bytes)), head_bytes]
    for data in blobs:
        parts.append(struct.pack("<Q", len(data)))
        parts.append(data)
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def decode_checkpoint(buf):
    if len(buf) < 20 or buf[:4] != MAGIC:
        raise FormatError("not a checkpoint (bad magic bytes)")
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    if zlib.crc32(body) != crc:
        raise FormatError("checkpoint is truncated or corrupted (checksum mismatch)")
    version, hlen = struct.unpack_from("<IQ", body, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version} (expected {FORMAT_VERSION})")
    pos = 16
    header = json.loads(body[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    tensors = {}
    for entry in header.pop("tensors"):
        (size,) = struct.unpack_from("<Q", body, pos)
        pos += 8
        dt = np.dtype(_DTYPES[entry["dtype"]])
        if pos + size > len(body) or size != dt.itemsize * int(np.prod(entry["shape"])):
            raise FormatError(f"tensor {entry['name']!r} has an inconsistent length")
        arr = np.frombuffer(body, dtype=dt, count=size // dt.itemsize, offset=pos)
        tensors[entry["name"]] = arr.reshape(entry["shape"]).astype(dt.newbyteorder("="))
        pos += size
    if pos != len(body):
        raise FormatError("trailing bytes after the last tensor")
    return Checkpoint(header, tensors)


def save_checkpoint(state, path):
    """Write ``state.state_dict()`` (a ``(header, tensors)`` pair) to ``path``."""
    header, tensors = state.state_dict()
    data = encode_checkpoint(header, tensors)
    Path(path).write_bytes(data)
    return data


def load_checkpoint(path):
    return decode_checkpoint(Path(path).read_bytes())
