"""Loaders, train/test splits and checkpoint serialisation."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .model import DenseSide, Hyperparams, IdentitySide, SideInfo, SideInfoSet, SparseSide, TuckerModel
from .tensor import SparseTensor, check_shape

__all__ = [
    "DataError",
    "Dataset",
    "Split",
    "load_tensor",
    "save_tensor",
    "load_side_info",
    "save_side_info",
    "parse_side_spec",
    "movielens_ingest",
    "movielens_genres",
    "load_labels",
    "make_split",
    "checkpoint_save",
    "checkpoint_load",
    "CHECKPOINT_VERSION",
    "SECONDS_PER_WEEK",
]

CHECKPOINT_VERSION = 1
SECONDS_PER_WEEK = 604800

MOVIELENS_GENRES = (
    "unknown", "Action", "Adventure", "Animation", "Children's", "Comedy", "Crime",
    "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror", "Musical", "Mystery",
    "Romance", "Sci-Fi", "Thriller", "War", "Western",
)


class DataError(ValueError):
    """Malformed or inconsistent input data."""

    def __init__(self, message: str, path: str | os.PathLike | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


@dataclass
class Dataset:
    tensor: SparseTensor
    side: SideInfoSet
    name: str = ""

    def __post_init__(self) -> None:
        if self.side.dims != tuple(self.tensor.shape):
            raise DataError(f"side information rows {self.side.dims} do not match tensor shape {self.tensor.shape}")


@dataclass
class Split:
    train: SparseTensor
    test: SparseTensor
    missing_pct: float
    seed: int


def _data_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line


def load_tensor(path: str | os.PathLike, shape: Sequence[int]) -> SparseTensor:
    """Read ``i1 i2 ... iN value`` lines (0-based indices, ``#`` comments)."""
    shape = check_shape(shape)
    ndim = len(shape)
    seen: dict[tuple[int, ...], int] = {}
    idx, vals = [], []
    for lineno, line in _data_lines(path):
        parts = line.split()
        if len(parts) != ndim + 1:
            raise DataError(f"expected {ndim + 1} fields, got {len(parts)}", path, lineno)
        try:
            key = tuple(int(p) for p in parts[:ndim])
            value = float(parts[ndim])
        except ValueError as exc:
            raise DataError(f"cannot parse {line!r}: {exc}", path, lineno) from None
        if any(not 0 <= i < d for i, d in zip(key, shape)):
            raise DataError(f"index {key} out of bounds for shape {shape}", path, lineno)
        if key in seen:
            raise DataError(f"duplicate index {key} (first seen on line {seen[key]})", path, lineno)
        seen[key] = lineno
        idx.append(key)
        vals.append(value)
    return SparseTensor(shape, np.array(idx, dtype=np.int64).reshape(len(idx), ndim), np.array(vals))


def save_tensor(t: SparseTensor, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# shape {' '.join(map(str, t.shape))}\n")
        for row, v in zip(t.indices, t.values):
            fh.write(" ".join(map(str, row)) + f" {float(v):.17g}\n")


def parse_side_spec(spec: str) -> SideInfo:
    """``identity:<n>`` or a path to a MatrixMarket / CSV file."""
    spec = spec.strip()
    if spec.startswith("identity:"):
        try:
            n = int(spec.split(":", 1)[1])
        except ValueError:
            raise DataError(f"malformed identity spec {spec!r}") from None
        if n < 1:
            raise DataError(f"identity size must be >= 1 in {spec!r}")
        return IdentitySide(n)
    return load_side_info(spec)


def _load_matrix_market(path) -> SparseSide:
    with open(path, encoding="utf-8") as fh:
        lines = list(enumerate(fh, 1))
    header = lines[0][1].split()
    if len(header) < 5 or header[0] != "%%MatrixMarket" or header[1] != "matrix" or header[2] != "coordinate":
        raise DataError("expected '%%MatrixMarket matrix coordinate <field> <symmetry>' header", path, 1)
    field, symmetry = header[3].lower(), header[4].lower()
    if field not in ("real", "integer", "pattern") or symmetry != "general":
        raise DataError(f"unsupported MatrixMarket field/symmetry {field}/{symmetry}", path, 1)
    body = [(n, l.strip()) for n, l in lines[1:] if l.strip() and not l.lstrip().startswith("%")]
    if not body:
        raise DataError("missing size line", path)
    lineno, size = body[0]
    try:
        rows, cols, nnz = (int(v) for v in size.split())
    except ValueError:
        raise DataError(f"malformed size line {size!r}", path, lineno) from None
    if rows < 1 or cols < 1 or nnz < 0:
        raise DataError(f"invalid dimensions {rows}x{cols} with {nnz} entries", path, lineno)
    entries = body[1:]
    if len(entries) != nnz:
        raise DataError(f"header declares {nnz} entries, found {len(entries)}", path)
    r = np.empty(nnz, dtype=np.int64)
    c = np.empty(nnz, dtype=np.int64)
    v = np.ones(nnz)
    for k, (lineno, line) in enumerate(entries):
        parts = line.split()
        want = 2 if field == "pattern" else 3
        try:
            if len(parts) != want:
                raise ValueError(f"expected {want} fields")
            r[k], c[k] = int(parts[0]) - 1, int(parts[1]) - 1
            if field != "pattern":
                v[k] = float(parts[2])
        except ValueError as exc:
            raise DataError(f"cannot parse {line!r}: {exc}", path, lineno) from None
        if not (0 <= r[k] < rows and 0 <= c[k] < cols):
            raise DataError(f"entry ({r[k] + 1}, {c[k] + 1}) outside {rows}x{cols}", path, lineno)
    return SparseSide(sp.csr_matrix((v, (r, c)), shape=(rows, cols)))


def _load_csv(path) -> DenseSide:
    rows = []
    for lineno, line in _data_lines(path):
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError as exc:
            raise DataError(f"cannot parse {line!r}: {exc}", path, lineno) from None
        if len(rows[-1]) != len(rows[0]):
            raise DataError(f"expected {len(rows[0])} columns, got {len(rows[-1])}", path, lineno)
    if not rows:
        raise DataError("empty side-information file", path)
    return DenseSide(np.array(rows))


def load_side_info(path: str | os.PathLike) -> SideInfo:
    """Load a MatrixMarket coordinate file (sparse) or headerless CSV (dense)."""
    path = Path(path)
    if not path.exists():
        raise DataError("file not found", path)
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    if first.startswith("%%MatrixMarket"):
        return _load_matrix_market(path)
    return _load_csv(path)


def save_side_info(side: SideInfo, path: str | os.PathLike) -> None:
    """Write sparse side information as MatrixMarket, dense as CSV."""
    if isinstance(side, SparseSide):
        m = side.matrix.tocoo()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("%%MatrixMarket matrix coordinate real general\n")
            fh.write(f"{m.shape[0]} {m.shape[1]} {m.nnz}\n")
            for r, c, v in zip(m.row, m.col, m.data):
                fh.write(f"{r + 1} {c + 1} {float(v):.17g}\n")
    else:
        np.savetxt(path, side.to_dense(), delimiter=",", fmt="%.17g")


def movielens_ingest(ratings_path: str | os.PathLike, week_offset: int = 0) -> tuple[SparseTensor, dict]:
    """Build the user x item x week tensor from a MovieLens ``u.data`` file.

    Users and items are mapped to 0-based ids in increasing order of their
    original numeric id. Week ``w = floor((ts - min_ts + week_offset) / 604800)``.

    Returns the tensor and a dict with the id maps (``users``, ``items``:
    original ids in row order) and ``min_timestamp``.
    """
    raw = []
    for lineno, line in _data_lines(ratings_path):
        parts = line.split("\t") if "\t" in line else line.split()
        if len(parts) != 4:
            raise DataError(f"expected 4 tab-separated fields, got {len(parts)}", ratings_path, lineno)
        try:
            raw.append((int(parts[0]), int(parts[1]), float(parts[2]), int(parts[3])))
        except ValueError as exc:
            raise DataError(f"cannot parse {line!r}: {exc}", ratings_path, lineno) from None
    if not raw:
        raise DataError("no ratings found", ratings_path)
    arr = np.array(raw, dtype=object)
    users = np.array(arr[:, 0], dtype=np.int64)
    items = np.array(arr[:, 1], dtype=np.int64)
    ratings = np.array(arr[:, 2], dtype=np.float64)
    ts = np.array(arr[:, 3], dtype=np.int64)
    uids, u = np.unique(users, return_inverse=True)
    iids, i = np.unique(items, return_inverse=True)
    tmin = int(ts.min())
    w = (ts - tmin + week_offset) // SECONDS_PER_WEEK
    shape = (len(uids), len(iids), int(w.max()) + 1)
    try:
        tensor = SparseTensor(shape, np.stack([u, i, w], axis=1), ratings)
    except ValueError as exc:
        raise DataError(str(exc), ratings_path) from None
    return tensor, {"users": uids, "items": iids, "min_timestamp": tmin}


def movielens_genres(item_path: str | os.PathLike, items: Sequence[int] | None = None):
    """Genre indicator matrix (``n_items x 19``) from a MovieLens ``u.item`` file.

    Rows follow ``items`` (original ids, e.g. from :func:`movielens_ingest`);
    by default all items in increasing id order. Returns the side information
    and the label list ``[(row, genre), ...]``.
    """
    flags = {}
    for lineno, line in _data_lines_raw(item_path):
        parts = line.rstrip("\n").split("|")
        if len(parts) < 5 + len(MOVIELENS_GENRES):
            raise DataError(f"expected >= {5 + len(MOVIELENS_GENRES)} '|' fields", item_path, lineno)
        try:
            flags[int(parts[0])] = [int(v) for v in parts[-len(MOVIELENS_GENRES):]]
        except ValueError as exc:
            raise DataError(f"cannot parse genre flags: {exc}", item_path, lineno) from None
    if items is None:
        items = sorted(flags)
    missing = [it for it in items if it not in flags]
    if missing:
        raise DataError(f"{len(missing)} items have no genre row (first: {missing[0]})", item_path)
    mat = np.array([flags[it] for it in items], dtype=np.float64)
    labels = [(r, MOVIELENS_GENRES[g]) for r in range(mat.shape[0]) for g in np.flatnonzero(mat[r])]
    return SparseSide(sp.csr_matrix(mat)), labels


def _data_lines_raw(path):
    # u.item titles may contain '#'; only skip blank lines
    with open(path, encoding="latin-1") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                yield lineno, line


def load_labels(path: str | os.PathLike) -> dict[int, list[str]]:
    """``item_id,category`` lines; an item may appear on several lines."""
    labels: dict[int, list[str]] = {}
    for lineno, line in _data_lines(path):
        parts = [p.strip() for p in line.split(",", 1)]
        if len(parts) != 2 or not parts[1]:
            raise DataError(f"expected 'item_id,category', got {line!r}", path, lineno)
        try:
            item = int(parts[0])
        except ValueError:
            raise DataError(f"item id {parts[0]!r} is not an integer", path, lineno) from None
        labels.setdefault(item, []).append(parts[1])
    if not labels:
        raise DataError("no labels found", path)
    return labels


def make_split(tensor: SparseTensor, missing_pct: float, seed: int) -> Split:
    """Uniform random train/test partition with ``round(missing_pct * nnz)`` test entries."""
    if not 0.0 < missing_pct < 1.0:
        raise ValueError(f"missing_pct must be in (0, 1), got {missing_pct}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(tensor.nnz)
    n_test = int(round(missing_pct * tensor.nnz))
    test_sel = np.sort(perm[:n_test])
    train_sel = np.sort(perm[n_test:])
    return Split(tensor.select(train_sel), tensor.select(test_sel), missing_pct, seed)


def _fmt(a: np.ndarray) -> list[str]:
    return [format(float(v), ".17g") for v in np.asarray(a).ravel()]


def checkpoint_save(model: TuckerModel, hp: Hyperparams, step: int, path: str | os.PathLike) -> None:
    """Write a versioned JSON checkpoint; floats are 17-significant-digit strings."""
    doc = {
        "version": CHECKPOINT_VERSION,
        "step": int(step),
        "ranks": list(model.ranks),
        "feature_dims": [u.shape[0] for u in model.factors],
        "core": _fmt(model.core),
        "factors": [_fmt(u) for u in model.factors],
        "hyperparams": {
            "lambda_g": format(hp.lambda_g, ".17g"),
            "lambda_i": [format(v, ".17g") for v in hp.lambda_i],
            "gamma": format(hp.gamma, ".17g"),
            "inner_steps": hp.inner_steps,
            "nonnegative": hp.nonnegative,
            "seed": hp.seed,
            "stale_core_residual": hp.stale_core_residual,
        },
    }
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def checkpoint_load(path: str | os.PathLike) -> tuple[TuckerModel, Hyperparams, int]:
    """Inverse of :func:`checkpoint_save`."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"corrupt checkpoint: {exc}", path) from None
    if not isinstance(doc, dict) or "version" not in doc:
        raise DataError("corrupt checkpoint: missing version", path)
    if doc["version"] != CHECKPOINT_VERSION:
        raise DataError(f"checkpoint version {doc['version']!r} unsupported (expected {CHECKPOINT_VERSION})", path)
    try:
        ranks = tuple(int(r) for r in doc["ranks"])
        fdims = [int(m) for m in doc["feature_dims"]]
        core = np.array([float(v) for v in doc["core"]]).reshape(ranks)
        factors = [np.array([float(v) for v in f]).reshape(m, r)
                   for f, m, r in zip(doc["factors"], fdims, ranks, strict=True)]
        h = doc["hyperparams"]
        hp = Hyperparams(
            lambda_g=float(h["lambda_g"]),
            lambda_i=tuple(float(v) for v in h["lambda_i"]),
            gamma=float(h["gamma"]),
            inner_steps=int(h["inner_steps"]),
            nonnegative=bool(h["nonnegative"]),
            seed=int(h["seed"]),
            stale_core_residual=bool(h.get("stale_core_residual", False)),
        )
        step = int(doc["step"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"corrupt checkpoint: {exc}", path) from None
    return TuckerModel(core, factors), hp, step
