"""Banknote authentication data: 4 wavelet features and a genuine/forged label."""
from __future__ import annotations

import csv
import hashlib
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

ENV_VAR = "SGXSIGNAL_BANKNOTE"
N_SAMPLES = 1372
N_CLASS0 = 762

_HELP = (
    "Banknote dataset not found. Download 'data_banknote_authentication.txt' "
    "(UCI Machine Learning Repository, dataset 267) and pass it with --dataset PATH "
    f"or set {ENV_VAR}=PATH. Expected format: 5 comma-separated columns "
    "(variance, skewness, curtosis, entropy, class)."
)


class DatasetError(Exception):
    pass


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    source: str
    sha256: str
    synthetic: bool = False

    def __len__(self) -> int:
        return self.y.shape[0]


def _resolve(path) -> Optional[Path]:
    if path is not None:
        return Path(path)
    env = os.environ.get(ENV_VAR)
    return Path(env) if env else None


def load_banknote(path=None) -> Dataset:
    """Read the standard CSV; raise :class:`DatasetError` with instructions if absent."""
    p = _resolve(path)
    if p is None or not p.is_file():
        where = f" (looked at {p})" if p is not None else ""
        raise DatasetError(_HELP + where)
    raw = p.read_bytes()
    rows = []
    with p.open(newline="", encoding="utf-8") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or not "".join(rec).strip():
                continue
            try:
                vals = [float(v) for v in rec]
            except ValueError:
                if lineno == 1:
                    continue  # header row
                raise DatasetError(f"{p}:{lineno}: non-numeric field") from None
            if len(vals) != 5:
                raise DatasetError(f"{p}:{lineno}: expected 5 columns, got {len(vals)}")
            rows.append(vals)
    if not rows:
        raise DatasetError(f"{p} holds no samples")
    data = np.asarray(rows)
    labels = data[:, 4]
    if not np.all(np.isin(labels, (0.0, 1.0))):
        raise DatasetError(f"{p}: class column must be 0 or 1")
    return Dataset(data[:, :4].copy(), labels.astype(np.int64), str(p),
                   hashlib.sha256(raw).hexdigest())


# per-class feature means, standard deviations and one shared correlation structure,
# roughly matching the published summary statistics of the real data
_MEANS = np.array([[2.28, 4.26, 0.80, -1.15], [-1.87, -0.99, 2.15, -1.25]])
_STDS = np.array([1.95, 5.2, 4.3, 2.1]) * 0.6
_CORR = np.array([
    [1.00, 0.26, -0.38, 0.28],
    [0.26, 1.00, -0.79, -0.53],
    [-0.38, -0.79, 1.00, 0.32],
    [0.28, -0.53, 0.32, 1.00],
])


def synthetic_banknote(seed: int = 20130808) -> Dataset:
    """Deterministic stand-in with the real dataset's size and class balance."""
    rng = np.random.default_rng(seed)
    cov = np.outer(_STDS, _STDS) * _CORR
    x0 = rng.multivariate_normal(_MEANS[0], cov, size=N_CLASS0)
    x1 = rng.multivariate_normal(_MEANS[1], cov, size=N_SAMPLES - N_CLASS0)
    X = np.round(np.vstack([x0, x1]), 5)
    y = np.concatenate([np.zeros(N_CLASS0, np.int64), np.ones(N_SAMPLES - N_CLASS0, np.int64)])
    digest = hashlib.sha256(X.tobytes() + y.tobytes()).hexdigest()
    return Dataset(X, y, f"synthetic(seed={seed})", digest, synthetic=True)


def load_or_synthesize(path=None) -> Dataset:
    """Real data when a path or the environment variable points to it, else the surrogate."""
    if path is None and not os.environ.get(ENV_VAR):
        return synthetic_banknote()
    return load_banknote(path)
