"""Streaming multivariate normal estimator that discards batches which overflow.

Every call recomputes mean and covariance over all data accepted so far plus
the new batch. If an arithmetic fault surfaces while the update is in
progress, the batch is dropped and the previous mean is restored.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

SITES = ("setUsingData_try_block",)


class ArithmeticException(Exception):
    """Software exception a language runtime raises for an arithmetic fault."""


@dataclass
class StreamingEstimator:
    mean: np.ndarray
    covariance: np.ndarray
    add_count: int = 0
    reverted: int = 0
    accepted: list = field(default_factory=list)

    @classmethod
    def zeros(cls, dim: int) -> "StreamingEstimator":
        return cls(np.zeros(dim), np.zeros((dim, dim)))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def _as_rows(self, batch) -> np.ndarray:
        data = np.asarray(batch, dtype=float)
        if data.ndim == 1:
            data = data.reshape(-1, self.dim) if self.dim > 1 else data.reshape(-1, 1)
        if data.ndim != 2 or data.shape[1] != self.dim:
            raise ValueError(f"batch rows must have {self.dim} features")
        if data.shape[0] == 0:
            raise ValueError("batch must not be empty")
        return data

    def set_using_data(self, batch, fault: Optional[Callable[[], None]] = None) -> bool:
        """Fold ``batch`` into the estimate; returns whether the update stuck.

        ``fault`` runs inside the guarded region, after the new mean was
        assigned. When it raises :class:`ArithmeticException` the old mean
        comes back and the covariance is untouched.
        """
        rows = self._as_rows(batch)
        orig_mean = self.mean
        try:
            data = np.concatenate(self.accepted + [rows]) if self.accepted else rows
            new_mean = data.mean(axis=0)
            cov = np.atleast_2d(np.cov(data, rowvar=False, bias=True))
            self.mean = new_mean
            if fault is not None:
                fault()
            self.covariance = cov
        except ArithmeticException:
            self.mean = orig_mean
            self.reverted += 1
            return False
        self.accepted.append(rows)
        self.add_count += 1
        return True
