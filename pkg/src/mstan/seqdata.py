"""Irregular series containers, record I/O and the preprocessing pipeline."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

DEGENERATE_STD = 1e-8


class RecordError(ValueError):
    """Malformed input record; message carries the line number when known."""


@dataclass(frozen=True)
class IrregularSeries:
    timestamps: np.ndarray  # (T,) hours, strictly increasing
    values: np.ndarray  # (T, d); NaN where missing before imputation
    observed: np.ndarray  # (T, d) bool
    id: str = ""

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=np.float64)
        v = np.asarray(self.values, dtype=np.float64)
        o = np.asarray(self.observed, dtype=bool)
        if t.ndim != 1 or t.size < 1:
            raise ValueError("timestamps must be a nonempty vector")
        if v.ndim != 2 or v.shape[0] != t.size or o.shape != v.shape:
            raise ValueError(f"values {v.shape} / observed {o.shape} do not match T={t.size}")
        if np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "observed", o)

    @property
    def length(self) -> int:
        return self.timestamps.size

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class FeatureStats:
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureStats":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


@dataclass
class Dataset:
    items: List[Tuple[IrregularSeries, int]]
    schema: List[str]
    feature_stats: Optional[FeatureStats] = None

    def __len__(self) -> int:
        return len(self.items)

    @property
    def labels(self) -> np.ndarray:
        return np.array([y for _, y in self.items], dtype=np.int64)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset([self.items[i] for i in indices], list(self.schema), self.feature_stats)


@dataclass
class PaddedBatch:
    values: np.ndarray  # (B, L, d)
    timestamps: np.ndarray  # (B, L)
    seq_mask: np.ndarray  # (B, L) bool
    labels: np.ndarray  # (B,)

    @property
    def lengths(self) -> np.ndarray:
        return self.seq_mask.sum(axis=1)


# ---------------------------------------------------------------------------
# ingestion


def _dedupe_sorted(t: np.ndarray, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    # stable sort keeps file order among equal timestamps; the last one wins
    order = np.argsort(t, kind="stable")
    t, x = t[order], x[order]
    keep = np.ones(t.size, dtype=bool)
    keep[:-1] = t[1:] != t[:-1]
    return t[keep], x[keep]


def _series_from_raw(rid: str, t: Sequence, x: np.ndarray, where: str) -> IrregularSeries:
    t = np.asarray(t, dtype=np.float64)
    if t.size == 0:
        raise RecordError(f"{where}: record has no time steps")
    if not np.all(np.isfinite(t)):
        raise RecordError(f"{where}: non-finite timestamp")
    t, x = _dedupe_sorted(t, x)
    observed = np.isfinite(x)
    return IrregularSeries(t, x, observed, id=rid)


def _parse_value(v, where: str) -> float:
    if v is None:
        return math.nan
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise RecordError(f"{where}: measurement {v!r} is not a number or null")
    if not math.isfinite(v):
        raise RecordError(f"{where}: non-finite measurement {v!r}; use null for missing")
    return float(v)


def _load_jsonl(path: Path, schema: List[str]) -> Dataset:
    d = len(schema)
    items = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(f"{where}: invalid JSON ({exc.msg})") from None
            missing = {"label", "t", "x"} - set(rec)
            if missing:
                raise RecordError(f"{where}: missing keys {sorted(missing)}")
            label = rec["label"]
            if label not in (0, 1) or isinstance(label, bool):
                raise RecordError(f"{where}: label must be 0 or 1, got {label!r}")
            t_raw, x_raw = rec["t"], rec["x"]
            if not isinstance(t_raw, list) or not isinstance(x_raw, list) or len(t_raw) != len(x_raw):
                raise RecordError(f"{where}: 't' and 'x' must be lists of equal length")
            t = []
            for v in t_raw:
                # json.loads accepts the bare NaN/Infinity tokens and we also see them as strings
                try:
                    tv = float(v)
                except (TypeError, ValueError):
                    raise RecordError(f"{where}: timestamp {v!r} is not a number") from None
                if not math.isfinite(tv) or isinstance(v, bool):
                    raise RecordError(f"{where}: non-finite timestamp {v!r}")
                t.append(tv)
            x = np.empty((len(x_raw), d))
            for r, row in enumerate(x_raw):
                if not isinstance(row, list) or len(row) != d:
                    raise RecordError(
                        f"{where}: row {r} has {len(row) if isinstance(row, list) else '?'} "
                        f"values, schema expects {d}"
                    )
                x[r] = [_parse_value(v, where) for v in row]
            series = _series_from_raw(str(rec.get("id", lineno)), t, x, where)
            items.append((series, int(label)))
    return Dataset(items, list(schema))


def _load_csv(path: Path, schema: List[str]) -> Dataset:
    col = {name: j for j, name in enumerate(schema)}
    records: Dict[str, dict] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"id", "t", "feature", "value", "label"}
        if reader.fieldnames is None:
            return Dataset([], list(schema))
        if not required <= set(reader.fieldnames):
            raise RecordError(f"{path}:1: CSV header must contain {sorted(required)}")
        for lineno, row in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            name = row["feature"]
            if name not in col:
                raise RecordError(f"{where}: unknown feature {name!r}")
            try:
                t = float(row["t"])
            except ValueError:
                raise RecordError(f"{where}: timestamp {row['t']!r} is not a number") from None
            if not math.isfinite(t):
                raise RecordError(f"{where}: non-finite timestamp {row['t']!r}")
            raw = row["value"].strip()
            try:
                value = math.nan if raw in ("", "null", "NA") else float(raw)
            except ValueError:
                raise RecordError(f"{where}: value {raw!r} is not a number") from None
            if raw not in ("", "null", "NA") and not math.isfinite(value):
                raise RecordError(f"{where}: non-finite measurement {raw!r}")
            if row["label"] not in ("0", "1"):
                raise RecordError(f"{where}: label must be 0 or 1")
            rec = records.setdefault(row["id"], {"label": int(row["label"]), "rows": {}, "line": lineno})
            if rec["label"] != int(row["label"]):
                raise RecordError(f"{where}: conflicting labels for id {row['id']!r}")
            rec["rows"].setdefault(t, np.full(len(schema), math.nan))[col[name]] = value
    items = []
    for rid, rec in records.items():
        ts = sorted(rec["rows"])
        x = np.stack([rec["rows"][t] for t in ts])
        items.append((_series_from_raw(rid, ts, x, f"{path}:{rec['line']}"), rec["label"]))
    return Dataset(items, list(schema))


def load_records(path, schema: Sequence[str]) -> Dataset:
    """Read a JSONL (or long-format ``.csv``) record file into a Dataset.

    Rows with a repeated timestamp collapse to the last occurrence. Missing
    measurements stay NaN with ``observed`` False until :func:`impute_missing`.
    """
    path = Path(path)
    schema = list(schema)
    if len(set(schema)) != len(schema) or not schema:
        raise RecordError("schema must be a nonempty list of distinct feature names")
    if path.suffix.lower() == ".csv":
        return _load_csv(path, schema)
    return _load_jsonl(path, schema)


def write_records(dataset: Dataset, path) -> None:
    with open(path, "w") as fh:
        for k, (s, y) in enumerate(dataset.items):
            x = [[None if not o else float(v) for v, o in zip(row, orow)]
                 for row, orow in zip(s.values, s.observed)]
            rec = {"id": s.id or str(k), "label": int(y), "t": s.timestamps.tolist(), "x": x}
            fh.write(json.dumps(rec) + "\n")


# ---------------------------------------------------------------------------
# preprocessing


def normalize_time(series: IrregularSeries) -> IrregularSeries:
    return replace(series, timestamps=series.timestamps - series.timestamps[0])


def impute_missing(series: IrregularSeries, feature_mean: Optional[np.ndarray] = None) -> IrregularSeries:
    """Forward-fill each feature; leading gaps take ``feature_mean`` (default 0)."""
    v = series.values.copy()
    T, d = v.shape
    head = np.zeros(d) if feature_mean is None else np.asarray(feature_mean, dtype=np.float64)
    obs = series.observed
    # index of the latest observed row at or before t, -1 if none yet
    idx = np.where(obs, np.arange(T)[:, None], -1)
    np.maximum.accumulate(idx, axis=0, out=idx)
    cols = np.broadcast_to(np.arange(d), (T, d))
    filled = v[np.maximum(idx, 0), cols]
    v = np.where(idx >= 0, filled, head[None, :])
    return replace(series, values=v)


def fit_standardizer(dataset: Dataset) -> FeatureStats:
    """Per-feature population mean/std over observed entries of every item."""
    if len(dataset) == 0:
        raise ValueError("cannot fit a standardizer on an empty dataset")
    d = len(dataset.schema)
    total = np.zeros(d)
    count = np.zeros(d)
    for s, _ in dataset.items:
        total += np.where(s.observed, s.values, 0.0).sum(axis=0)
        count += s.observed.sum(axis=0)
    mean = np.divide(total, count, out=np.zeros(d), where=count > 0)
    sq = np.zeros(d)
    for s, _ in dataset.items:
        sq += np.where(s.observed, (s.values - mean) ** 2, 0.0).sum(axis=0)
    var = np.divide(sq, count, out=np.zeros(d), where=count > 0)
    std = np.sqrt(var)
    std[std < DEGENERATE_STD] = 1.0
    return FeatureStats(mean, std)


def standardize(dataset: Dataset, stats: FeatureStats) -> Dataset:
    d = len(dataset.schema)
    if stats.mean.shape != (d,) or stats.std.shape != (d,):
        raise ValueError(f"standardizer has dimension {stats.mean.shape}, dataset has d={d}")
    items = [(replace(s, values=(s.values - stats.mean) / stats.std), y) for s, y in dataset.items]
    return Dataset(items, list(dataset.schema), stats)


def destandardize(dataset: Dataset, stats: FeatureStats) -> Dataset:
    items = [(replace(s, values=s.values * stats.std + stats.mean), y) for s, y in dataset.items]
    return Dataset(items, list(dataset.schema), None)


def preprocess(dataset: Dataset, stats: Optional[FeatureStats] = None) -> Dataset:
    """Time normalization, standardization and imputation in one pass.

    Standardizing before imputing lets leading gaps fill with 0, i.e. the
    feature mean. ``stats`` defaults to statistics fitted on ``dataset``;
    pass the training-split stats when preparing validation/test data.
    """
    if stats is None:
        stats = fit_standardizer(dataset)
    out = standardize(dataset, stats)
    items = [(impute_missing(normalize_time(s)), y) for s, y in out.items]
    return Dataset(items, list(dataset.schema), stats)


def make_batch(items: Sequence[Tuple[IrregularSeries, int]], L_max: int) -> PaddedBatch:
    """Pad to a common length, keeping the most recent ``L_max`` steps of each item."""
    if not items:
        raise ValueError("make_batch needs at least one item")
    if L_max < 1:
        raise ValueError("L_max must be positive")
    kept = [min(s.length, L_max) for s, _ in items]
    B, L, d = len(items), max(kept), items[0][0].dim
    values = np.zeros((B, L, d))
    times = np.zeros((B, L))
    mask = np.zeros((B, L), dtype=bool)
    labels = np.zeros(B)
    for b, ((s, y), n) in enumerate(zip(items, kept)):
        if s.dim != d:
            raise ValueError("items in a batch must share the feature dimension")
        values[b, :n] = s.values[-n:]
        times[b, :n] = s.timestamps[-n:]
        times[b, n:] = s.timestamps[-1]
        mask[b, :n] = True
        labels[b] = y
    return PaddedBatch(values, times, mask, labels)
