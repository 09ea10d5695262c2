"""Data model, CSV ingestion, standardization and time embeddings."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Optional, Sequence

import numpy as np

from .errors import (
    ConstantTime,
    DegenerateSplit,
    DimensionMismatch,
    EmptyDataset,
    MissingColumn,
    NonNumericCell,
    UnknownKind,
)

DEFAULT_TIME_COLUMN = "t"


class TimedSample(NamedTuple):
    features: np.ndarray
    time: float


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StandardizationParams:
    """Per-feature mean and population standard deviation.

    Constant features are stored with ``std == 1`` and flagged in ``constant``
    so that standardizing them maps every value to zero.
    """

    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "StandardizationParams":
        X = np.asarray(X, dtype=np.float64)
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        scale = np.maximum(np.abs(mean), 1.0)
        constant = std <= 1e-12 * scale
        std = np.where(constant, 1.0, std)
        return cls(_frozen(mean), _frozen(std), np.asarray(constant, dtype=bool))

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def invert(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z, dtype=np.float64) * self.std + self.mean

    def to_dict(self, feature_names: Optional[Sequence[str]] = None) -> dict:
        out = {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "constant": self.constant.tolist(),
        }
        if feature_names is not None:
            out["feature_names"] = list(feature_names)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "StandardizationParams":
        return cls(_frozen(d["mean"]), _frozen(d["std"]),
                   np.asarray(d["constant"], dtype=bool))


@dataclass(frozen=True)
class Dataset:
    """Feature matrix paired with timestamps normalized to [0, 1].

    Raw time is recovered as ``time_origin + t * time_scale``. Rows are kept
    sorted by time (stable, so equal timestamps keep file order).
    """

    X: np.ndarray
    t: np.ndarray
    feature_names: tuple
    time_origin: float = 0.0
    time_scale: float = 1.0
    standardization: Optional[StandardizationParams] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        X = _frozen(self.X)
        t = _frozen(self.t)
        if X.ndim != 2:
            raise DimensionMismatch(f"feature matrix must be 2-D, got shape {X.shape}")
        if t.shape != (X.shape[0],):
            raise DimensionMismatch("time vector length differs from sample count")
        if X.shape[0] == 0:
            raise EmptyDataset("dataset has no samples")
        names = tuple(str(n) for n in self.feature_names)
        if len(names) != X.shape[1]:
            raise DimensionMismatch(
                f"{len(names)} feature names for {X.shape[1]} feature columns")
        if not np.all(np.isfinite(X)):
            raise DimensionMismatch("features contain NaN or infinity")
        if np.any(t < 0.0) or np.any(t > 1.0) or not np.all(np.isfinite(t)):
            raise ValueError("normalized time must lie in [0, 1]")
        if np.any(np.diff(t) < 0):
            raise ValueError("samples must be sorted by time")
        if not self.time_scale > 0:
            raise ValueError("time_scale must be positive")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "feature_names", names)

    @classmethod
    def from_arrays(cls, X, times, feature_names=None, standardize=False, **meta):
        """Build a dataset from raw timestamps, sorting and normalizing them."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        times = np.asarray(times, dtype=np.float64)
        if X.shape[0] == 0:
            raise EmptyDataset("dataset has no samples")
        if feature_names is None:
            feature_names = [f"x{j}" for j in range(X.shape[1])]
        order = np.argsort(times, kind="stable")
        X, times = X[order], times[order]
        lo, hi = float(times[0]), float(times[-1])
        if not hi > lo:
            raise ConstantTime("all timestamps are equal")
        t = np.clip((times - lo) / (hi - lo), 0.0, 1.0)
        ds = cls(X, t, tuple(feature_names), lo, hi - lo, meta=dict(meta))
        return ds.standardized() if standardize else ds

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def raw_time(self) -> np.ndarray:
        return self.time_origin + self.t * self.time_scale

    def __len__(self) -> int:
        return self.X.shape[0]

    def __iter__(self) -> Iterator[TimedSample]:
        for x, t in zip(self.X, self.t):
            yield TimedSample(x, float(t))

    @property
    def samples(self) -> list:
        return list(self)

    def replace(self, **changes) -> "Dataset":
        kw = dict(X=self.X, t=self.t, feature_names=self.feature_names,
                  time_origin=self.time_origin, time_scale=self.time_scale,
                  standardization=self.standardization, meta=dict(self.meta))
        kw.update(changes)
        return Dataset(**kw)

    def subset(self, idx) -> "Dataset":
        idx = np.sort(np.asarray(idx))
        return self.replace(X=self.X[idx], t=self.t[idx])

    def standardized(self) -> "Dataset":
        params = StandardizationParams.fit(self.X)
        return self.replace(X=params.apply(self.X), standardization=params)

    @property
    def constant_features(self) -> np.ndarray:
        if self.standardization is not None:
            return self.standardization.constant.copy()
        return np.ptp(self.X, axis=0) == 0


def standardize(ds: Dataset) -> Dataset:
    return ds.standardized()


def _parse_float(s: str, row: int, col: str) -> float:
    try:
        v = float(s)
    except (TypeError, ValueError):
        raise NonNumericCell(row, col, s) from None
    if not math.isfinite(v):
        raise NonNumericCell(row, col, s)
    return v


def load_csv(path, time_column: str = DEFAULT_TIME_COLUMN,
             standardize: bool = False) -> Dataset:
    """Read a numeric CSV with a header row into a :class:`Dataset`.

    Row numbers in :class:`NonNumericCell` are 1-based data rows (the header
    is row 0).
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyDataset(f"{path} is empty") from None
        if time_column not in header:
            raise MissingColumn(f"time column {time_column!r} not in header {header}")
        t_idx = header.index(time_column)
        feat_idx = [j for j in range(len(header)) if j != t_idx]
        rows, times = [], []
        for r, line in enumerate(reader, start=1):
            if not line or all(not c.strip() for c in line):
                continue
            if len(line) != len(header):
                raise NonNumericCell(r, "<row>", f"expected {len(header)} cells, got {len(line)}")
            times.append(_parse_float(line[t_idx], r, header[t_idx]))
            rows.append([_parse_float(line[j], r, header[j]) for j in feat_idx])
    if not rows:
        raise EmptyDataset(f"{path} has no data rows")
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(feat_idx))
    return Dataset.from_arrays(X, times, [header[j] for j in feat_idx],
                               standardize=standardize, source=str(path))


def write_csv(ds: Dataset, path, time_column: str = DEFAULT_TIME_COLUMN) -> None:
    """Write features plus raw time; floats use ``repr`` so values round-trip."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(ds.feature_names) + [time_column])
        for x, t in zip(ds.X, ds.raw_time):
            w.writerow([repr(float(v)) for v in x] + [repr(float(t))])


def write_standardization(params: StandardizationParams, path, feature_names=None) -> None:
    Path(path).write_text(json.dumps(params.to_dict(feature_names), indent=2), encoding="utf-8")


def read_standardization(path) -> StandardizationParams:
    return StandardizationParams.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class TimeEmbedding:
    """Map from normalized time to regression targets.

    ``kind`` is ``"binary"``, ``"polynomial"`` or ``"fourier"``. The Fourier
    period is in normalized time units.
    """

    kind: str
    change_point: float = 0.5
    degree: int = 1
    period: float = 1.0

    def __post_init__(self):
        if self.kind not in ("binary", "polynomial", "fourier"):
            raise UnknownKind(f"unknown embedding kind {self.kind!r}")
        if self.kind != "binary" and int(self.degree) < 1:
            raise ValueError("embedding degree must be >= 1")
        if self.kind == "fourier" and not self.period > 0:
            raise ValueError("Fourier period must be positive")

    @classmethod
    def binary(cls, change_point: float) -> "TimeEmbedding":
        return cls("binary", change_point=float(change_point))

    @classmethod
    def polynomial(cls, degree: int) -> "TimeEmbedding":
        return cls("polynomial", degree=int(degree))

    @classmethod
    def fourier(cls, degree: int, period: float = 1.0) -> "TimeEmbedding":
        return cls("fourier", degree=int(degree), period=float(period))

    @classmethod
    def parse(cls, text: str, n_samples: Optional[int] = None) -> "TimeEmbedding":
        """Parse ``binary:CP``, ``poly:D`` or ``fourier:D[:P]``.

        The Fourier period ``P`` counts samples; it is converted to normalized
        units as ``P / (n_samples - 1)`` (uniform time grid). Without
        ``n_samples`` it is taken as already normalized.
        """
        parts = text.strip().split(":")
        head = parts[0].lower()
        try:
            if head == "binary":
                return cls.binary(float(parts[1]))
            if head in ("poly", "polynomial"):
                return cls.polynomial(int(parts[1]))
            if head == "fourier":
                degree = int(parts[1])
                period = float(parts[2]) if len(parts) > 2 else None
                if period is None:
                    return cls.fourier(degree, 1.0)
                if n_samples is not None:
                    period = period / max(n_samples - 1, 1)
                return cls.fourier(degree, period)
        except (IndexError, ValueError) as exc:
            raise UnknownKind(f"cannot parse embedding {text!r}: {exc}") from None
        raise UnknownKind(f"unknown embedding {text!r}")

    @property
    def dim(self) -> int:
        if self.kind == "binary":
            return 1
        if self.kind == "polynomial":
            return self.degree
        return 2 * self.degree

    def __call__(self, t) -> np.ndarray:
        return embed_time(t, self)

    def to_dict(self) -> dict:
        if self.kind == "binary":
            return {"kind": "binary", "change_point": self.change_point}
        if self.kind == "polynomial":
            return {"kind": "polynomial", "degree": self.degree}
        return {"kind": "fourier", "degree": self.degree, "period": self.period}

    @classmethod
    def from_dict(cls, d: dict) -> "TimeEmbedding":
        return cls(d["kind"], change_point=d.get("change_point", 0.5),
                   degree=d.get("degree", 1), period=d.get("period", 1.0))

    def __str__(self) -> str:
        if self.kind == "binary":
            return f"binary:{self.change_point:g}"
        if self.kind == "polynomial":
            return f"poly:{self.degree}"
        return f"fourier:{self.degree}:{self.period:g}"


def embed_time(t, emb: TimeEmbedding) -> np.ndarray:
    """Embed a scalar time (-> 1-D vector) or a vector of times (-> n x dim)."""
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if emb.kind == "binary":
        out = (t >= emb.change_point).astype(np.float64)[:, None]
    elif emb.kind == "polynomial":
        out = np.empty((t.size, emb.degree))
        acc = np.ones_like(t)
        for k in range(emb.degree):
            acc = acc * t
            out[:, k] = acc
    else:
        out = np.empty((t.size, 2 * emb.degree))
        for k in range(1, emb.degree + 1):
            arg = 2.0 * np.pi * k * t / emb.period
            out[:, 2 * k - 2] = np.sin(arg)
            out[:, 2 * k - 1] = np.cos(arg)
    return out[0] if scalar else out


def split_at(ds: Dataset, change_point: float):
    """Split into (time < change_point, time >= change_point)."""
    if not 0.0 < change_point < 1.0:
        raise DegenerateSplit(f"change point {change_point} outside (0, 1)")
    k = int(np.searchsorted(ds.t, change_point, side="left"))
    if k == 0 or k == ds.n_samples:
        raise DegenerateSplit(f"change point {change_point} leaves one side empty")
    return ds.subset(np.arange(k)), ds.subset(np.arange(k, ds.n_samples))


def time_histogram(t, bins: int = 10) -> np.ndarray:
    """Counts of times over ``bins`` equal-width bins on [0, 1] (1.0 in the last bin)."""
    t = np.asarray(t, dtype=np.float64)
    idx = np.minimum((t * bins).astype(np.int64), bins - 1)
    return np.bincount(idx, minlength=bins)
