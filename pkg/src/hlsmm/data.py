"""Dataset ingestion, preprocessing, splitting, and noise injection.

File formats
------------
CSV: comma-separated numeric rows, no header by default, one sample per row
with the label in a designated column.  Accepted label encodings are
{-1, 1}, {0, 1} (0 maps to -1), and {1, 2} (2 maps to -1).  Vector rows
become 1-by-d matrices unless a reshape is requested.

SMM1 (binary, little-endian): magic ``SMM1``, version u32 = 1, counts
m/p/q as u64, m labels as i8 (-1/+1), then m*p*q float64 values,
sample-major then row-major.

All randomized operations (splitting, noise) take an explicit seed and use
numpy's PCG64 generator, so identical seeds reproduce identical results on
any platform.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, InvalidArgumentError
from .model import Dataset

_SMM1_MAGIC = b"SMM1"
_SMM1_VERSION = 1


@dataclass(frozen=True)
class SplitSpec:
    ratio: float
    stratified: bool = True
    seed: int = 0


@dataclass(frozen=True)
class DatasetManifest:
    """Declarative description of how to load and prepare one dataset."""

    format: str                      # "csv" | "smm1"
    path: str
    shape: tuple[int, int] | str = "vector"
    reshape: tuple[int, int] | None = None
    label_column: int = 0            # csv only
    normalization: str = "none"      # "none" | "per_sample_zscore"
    split: SplitSpec | None = None

    def __post_init__(self):
        if self.format not in ("csv", "smm1"):
            raise InvalidArgumentError(f"unknown dataset format {self.format!r}")
        if self.normalization not in ("none", "per_sample_zscore"):
            raise InvalidArgumentError(
                f"unknown normalization {self.normalization!r}")
        if self.split is not None and not 0.0 < self.split.ratio < 1.0:
            raise InvalidArgumentError("split ratio must lie in (0, 1)")

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataError(f"manifest is not valid JSON: {exc}") from exc
        split = raw.get("split")
        return cls(
            format=raw.get("format", "csv"),
            path=raw.get("path", ""),
            shape=tuple(raw["shape"]) if isinstance(raw.get("shape"), list) else raw.get("shape", "vector"),
            reshape=tuple(raw["reshape"]) if raw.get("reshape") else None,
            label_column=int(raw.get("label_column", 0)),
            normalization=raw.get("normalization", "none"),
            split=SplitSpec(ratio=float(split["ratio"]),
                            stratified=bool(split.get("stratified", True)),
                            seed=int(split.get("seed", 0))) if split else None,
        )

    def to_json(self) -> str:
        raw: dict = {
            "format": self.format,
            "path": self.path,
            "shape": list(self.shape) if isinstance(self.shape, tuple) else self.shape,
            "reshape": list(self.reshape) if self.reshape else None,
            "label_column": self.label_column,
            "normalization": self.normalization,
        }
        if self.split is not None:
            raw["split"] = {"ratio": self.split.ratio,
                            "stratified": self.split.stratified,
                            "seed": self.split.seed}
        return json.dumps(raw, indent=2, sort_keys=True)


def _map_labels(raw_labels: list[float], path: str) -> np.ndarray:
    values = set(raw_labels)
    if values <= {-1.0, 1.0}:
        mapped = raw_labels
    elif values <= {0.0, 1.0}:
        mapped = [1.0 if v == 1.0 else -1.0 for v in raw_labels]
    elif values <= {1.0, 2.0}:
        mapped = [1.0 if v == 1.0 else -1.0 for v in raw_labels]
    else:
        raise DataError(
            f"{path}: unknown label encoding {sorted(values)}; expected "
            "{-1,1}, {0,1} or {1,2}")
    return np.array(mapped, dtype=np.int8)


def load_csv(path, label_column: int = 0,
             reshape: tuple[int, int] | None = None,
             has_header: bool = False,
             name: str | None = None) -> Dataset:
    """Load a numeric CSV with one sample per row.

    Raises :class:`DataError` naming the offending line for ragged rows,
    unparseable numbers, unknown label encodings, or a reshape that does not
    match the feature count.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    rows: list[list[float]] = []
    raw_labels: list[float] = []
    width: int | None = None
    with path.open(newline="") as handle:
        reader = csv.reader(handle)
        for line_no, row in enumerate(reader, start=1):
            if has_header and line_no == 1:
                continue
            if not row:
                continue
            if width is None:
                width = len(row)
                if not -width <= label_column < width:
                    raise DataError(
                        f"{path}: label column {label_column} out of range "
                        f"for {width}-field rows")
            if len(row) != width:
                raise DataError(
                    f"{path}, line {line_no}: expected {width} fields, "
                    f"got {len(row)}")
            try:
                numbers = [float(field) for field in row]
            except ValueError as exc:
                raise DataError(f"{path}, line {line_no}: {exc}") from exc
            raw_labels.append(numbers[label_column])
            del numbers[label_column % width]
            rows.append(numbers)
    if not rows:
        raise DataError(f"{path}: no data rows")
    ys = _map_labels(raw_labels, str(path))
    features = np.asarray(rows, dtype=np.float64)
    d = features.shape[1]
    if reshape is not None:
        p, q = reshape
        if p * q != d:
            raise DataError(
                f"{path}: reshape {p}x{q} = {p * q} does not match "
                f"{d} features per row")
        xs = features.reshape(-1, p, q)
        shape_note = f"reshape ({p},{q}) row-major"
    else:
        xs = features.reshape(-1, 1, d)
        shape_note = f"vector rows as 1x{d}"
    return Dataset(xs=xs, ys=ys, name=name or path.stem,
                   provenance=f"csv {path} (label col {label_column}; {shape_note})")


def save_smm1(data: Dataset, path) -> None:
    """Write the binary SMM1 container; byte-deterministic for a given dataset."""
    path = Path(path)
    header = _SMM1_MAGIC + struct.pack("<I", _SMM1_VERSION)
    header += struct.pack("<QQQ", data.m, data.p, data.q)
    labels = data.ys.astype("<i1").tobytes()
    payload = np.ascontiguousarray(data.xs, dtype="<f8").tobytes()
    path.write_bytes(header + labels + payload)


def load_smm1(path, name: str | None = None) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    blob = path.read_bytes()
    if len(blob) < 32 or blob[:4] != _SMM1_MAGIC:
        raise DataError(f"{path}: not an SMM1 file (bad magic)")
    version, = struct.unpack_from("<I", blob, 4)
    if version != _SMM1_VERSION:
        raise DataError(f"{path}: unsupported SMM1 version {version}")
    m, p, q = struct.unpack_from("<QQQ", blob, 8)
    if m == 0:
        raise DataError(f"{path}: empty dataset (m = 0)")
    expected = 32 + m + 8 * m * p * q
    if len(blob) != expected:
        raise DataError(
            f"{path}: truncated or oversized payload "
            f"({len(blob)} bytes, expected {expected})")
    ys = np.frombuffer(blob, dtype="<i1", count=m, offset=32)
    if not np.isin(ys, (-1, 1)).all():
        raise DataError(f"{path}: labels must be -1 or +1")
    xs = np.frombuffer(blob, dtype="<f8", count=m * p * q, offset=32 + m)
    return Dataset(xs=xs.reshape(m, p, q).copy(), ys=ys.copy(),
                   name=name or path.stem, provenance=f"smm1 {path}")


def normalize_per_sample(data: Dataset) -> Dataset:
    """Shift/scale each sample to zero mean and unit (population) variance.

    Samples whose entries are all equal become all-zero matrices.
    """
    flat = data.xs.reshape(data.m, -1)
    mean = flat.mean(axis=1, keepdims=True)
    std = flat.std(axis=1, keepdims=True)
    safe = np.where(std > 0, std, 1.0)
    normalized = np.where(std > 0, (flat - mean) / safe, 0.0)
    return data.replace_xs(normalized.reshape(data.xs.shape), "per-sample zscore")


def standardize_features(train: Dataset, *others: Dataset) -> tuple[Dataset, ...]:
    """Per-entry z-scoring using statistics of ``train`` only.

    The tabular-data counterpart of per-sample normalization: every matrix
    position is centered and scaled by its mean/std across the training
    samples, and the same affine map is applied to the other datasets
    (typically the test split).  Constant positions are left centered.
    """
    flat = train.xs.reshape(train.m, -1)
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    std = np.where(std > 0, std, 1.0)

    def apply(ds: Dataset) -> Dataset:
        scaled = (ds.xs.reshape(ds.m, -1) - mean) / std
        return ds.replace_xs(scaled.reshape(ds.xs.shape),
                             "feature zscore (train stats)")

    return tuple(apply(ds) for ds in (train, *others))


def split(data: Dataset, ratio: float, stratified: bool = True,
          seed: int = 0) -> tuple[Dataset, Dataset]:
    """Deterministic train/test partition; ``ratio`` is the train fraction.

    Stratified mode permutes each class separately and keeps
    ``round(ratio * m_c)`` samples per class, preserving class proportions to
    within one sample.  Indices within each side keep dataset order.
    """
    if not 0.0 < ratio < 1.0:
        raise InvalidArgumentError("split ratio must lie in (0, 1)")
    rng = np.random.Generator(np.random.PCG64(seed))
    train_idx: list[int] = []
    test_idx: list[int] = []
    if stratified:
        data.require_both_labels()
        for label in (1, -1):
            members = np.flatnonzero(data.ys == label)
            perm = members[rng.permutation(members.size)]
            n_train = int(round(ratio * members.size))
            train_idx.extend(perm[:n_train])
            test_idx.extend(perm[n_train:])
    else:
        perm = rng.permutation(data.m)
        n_train = int(round(ratio * data.m))
        train_idx.extend(perm[:n_train])
        test_idx.extend(perm[n_train:])
    if not train_idx or not test_idx:
        raise InvalidArgumentError(
            f"ratio {ratio} leaves an empty side for m={data.m}")
    train_idx.sort()
    test_idx.sort()
    return (data.subset(train_idx, f"train split ratio={ratio} seed={seed}"),
            data.subset(test_idx, f"test split ratio={ratio} seed={seed}"))


def add_gaussian_noise(data: Dataset, level: float, seed: int = 0) -> Dataset:
    """Perturb every entry with N(0, (level * s)^2), s = that sample's entry std.

    After per-sample normalization s = 1, so ``level`` is the noise std in
    data units.  Level 0 returns the input unchanged.
    """
    if level < 0:
        raise InvalidArgumentError("noise level must be non-negative")
    if level == 0:
        return data
    rng = np.random.Generator(np.random.PCG64(seed))
    stds = data.xs.reshape(data.m, -1).std(axis=1)
    noise = rng.standard_normal(data.xs.shape) * (level * stds)[:, None, None]
    return data.replace_xs(data.xs + noise, f"gaussian noise level={level} seed={seed}")


def add_salt_pepper_noise(data: Dataset, level: float, seed: int = 0) -> Dataset:
    """Set a fraction ``level`` of entries per sample to that sample's min or max.

    Per sample, ``round(level * p * q)`` positions are drawn uniformly without
    replacement; each becomes the sample minimum or maximum with probability
    one half.  Level 0 returns the input unchanged.
    """
    if not 0.0 <= level <= 1.0:
        raise InvalidArgumentError("salt-and-pepper level must lie in [0, 1]")
    if level == 0:
        return data
    rng = np.random.Generator(np.random.PCG64(seed))
    entries = data.p * data.q
    n_corrupt = int(round(level * entries))
    if n_corrupt == 0:
        return data.replace_xs(data.xs.copy(),
                               f"salt-pepper noise level={level} seed={seed}")
    flat = data.xs.reshape(data.m, -1).copy()
    for i in range(data.m):
        positions = rng.choice(entries, size=n_corrupt, replace=False)
        salt = rng.integers(0, 2, size=n_corrupt).astype(bool)
        low, high = flat[i].min(), flat[i].max()
        flat[i, positions] = np.where(salt, high, low)
    return data.replace_xs(flat.reshape(data.xs.shape),
                           f"salt-pepper noise level={level} seed={seed}")


def make_lowrank_separable(m: int = 200, p: int = 8, q: int = 6, rank: int = 2,
                           bias: float = 0.1, margin: float = 0.5,
                           seed: int = 0) -> tuple[Dataset, np.ndarray, float]:
    """Synthetic margin-separated data from a planted low-rank direction.

    Draws W* = U V^T with standard normal factors, rescales it to unit
    Frobenius norm so scores are roughly N(0, ||X|| scale) and the ``margin``
    cutoff is meaningful, then samples standard normal matrices, labels them
    by sign(<W*, X> + bias), and rejects draws with |score| < margin.

    Returns (dataset, W*, bias).
    """
    if m < 2:
        raise InvalidArgumentError("need at least two samples")
    rng = np.random.Generator(np.random.PCG64(seed))
    w_star = rng.standard_normal((p, rank)) @ rng.standard_normal((q, rank)).T
    w_star /= np.linalg.norm(w_star)
    xs = np.empty((m, p, q))
    ys = np.empty(m, dtype=np.int8)
    count = 0
    while count < m:
        x = rng.standard_normal((p, q))
        score = float(np.dot(w_star.ravel(), x.ravel())) + bias
        if abs(score) < margin:
            continue
        xs[count] = x
        ys[count] = 1 if score > 0 else -1
        count += 1
    data = Dataset(xs=xs, ys=ys, name="synthetic-lowrank",
                   provenance=(f"planted rank-{rank} direction, m={m}, "
                               f"margin>={margin}, seed={seed}"))
    data.require_both_labels()
    return data, w_star, bias
