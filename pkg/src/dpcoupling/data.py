"""In-memory datasets and their CSV form (columns f0..f{p-1}, label)."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    name: str = "dataset"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-d array")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError(
                f"{self.features.shape[0]} feature rows but {self.labels.shape} labels"
            )
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.labels))):
            raise ValueError("dataset contains non-finite entries")

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, indices, name=None) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], name or self.name, dict(self.meta))

    @staticmethod
    def concat(parts, name="concat") -> "Dataset":
        parts = list(parts)
        return Dataset(
            np.concatenate([p.features for p in parts]),
            np.concatenate([p.labels for p in parts]),
            name,
            dict(parts[0].meta) if parts else {},
        )


def write_csv(ds: Dataset, path) -> None:
    """Write ``ds`` as CSV; ``meta`` goes to a ``.meta.json`` sidecar when non-empty."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{j}" for j in range(ds.n_features)] + ["label"])
        for x, y in zip(ds.features, ds.labels):
            w.writerow([repr(float(v)) for v in x] + [_fmt_label(y)])
    if ds.meta:
        path.with_suffix(".meta.json").write_text(json.dumps(ds.meta, indent=2, sort_keys=True))


def _fmt_label(y):
    y = float(y)
    return str(int(y)) if y.is_integer() else repr(y)


def read_csv(path, name=None) -> Dataset:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if "label" not in header:
        raise ValueError(f"{path}: no 'label' column")
    fcols = sorted(
        (int(h[1:]), i) for i, h in enumerate(header) if h.startswith("f") and h[1:].isdigit()
    )
    if [k for k, _ in fcols] != list(range(len(fcols))):
        raise ValueError(f"{path}: feature columns must be f0..f{{p-1}}")
    li = header.index("label")
    try:
        X = np.array([[float(r[i]) for _, i in fcols] for r in body], dtype=np.float64)
        y = np.array([float(r[li]) for r in body], dtype=np.float64)
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}: malformed row ({exc})") from exc
    X = X.reshape(len(body), len(fcols))
    meta_path = path.with_suffix(".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return Dataset(X, y, name or path.stem, meta)
