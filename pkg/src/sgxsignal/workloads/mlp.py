"""Small tanh MLP trained with per-sample SGD, instrumented at the activation loop.

Each hidden-unit activation is one execution of the ``tanh_loop_body`` site.
When an injected SIGFPE reaches the application's handler, control jumps out
of that iteration and the activation is set to exactly 1.0 instead of tanh.
Because d tanh = 1 - h**2 vanishes at h = 1, the forced unit also passes no
gradient back, which is what stalls learning under attack.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np

from ..attacker import Injector
from .banknote import Dataset

SITES = ("tanh_loop_body",)
SITE = "tanh_loop_body"

# simulated instruction costs, used to lay windows out on a clock for timer sampling
BODY_COST = 24
CALL_COST = 8
OUTPUT_COST = 40
BACKWARD_COST = 400


class InjectionEffect(enum.Enum):
    """What one delivered injection does to the victim."""

    FORCE_ACTIVATION = "force_activation"
    NONE = "none"
    CRASH = "crash"


@dataclass(frozen=True)
class MlpConfig:
    hidden: tuple = (6, 6, 6)
    lr: float = 0.05
    epochs: int = 2000
    seed: int = 0
    init_scale: float = 0.5
    train_size: int = 1096

    def __post_init__(self):
        if len(self.hidden) != 3 or any(h < 1 or h > 6 for h in self.hidden):
            raise ValueError("three hidden layers of 1..6 units are supported")
        if self.epochs < 0 or self.lr <= 0:
            raise ValueError("epochs must be >= 0 and lr > 0")

    @property
    def units(self) -> int:
        return sum(self.hidden)

    def to_dict(self) -> dict:
        return {"hidden": list(self.hidden), "lr": self.lr, "epochs": self.epochs,
                "seed": self.seed, "init_scale": self.init_scale, "train_size": self.train_size}


@dataclass
class MlpResult:
    accuracy: Optional[float]
    train_accuracy: Optional[float]
    loop_iterations: int
    injections: int
    forced: int
    epochs_run: int
    crashed: bool = False
    #: activations of the last epoch's forced units that were not exactly 1.0
    forced_mismatches: int = 0
    weights: list = field(default_factory=list, repr=False)


@numba.njit(cache=True)
def _forward(x, W1, b1, W2, b2, W3, b3, W4, b4, force_row, h):
    n1 = W1.shape[0]
    n2 = W2.shape[0]
    n3 = W3.shape[0]
    for j in range(n1):
        if force_row[j]:
            h[j] = 1.0
        else:
            a = b1[j]
            for i in range(W1.shape[1]):
                a += W1[j, i] * x[i]
            h[j] = np.tanh(a)
    for j in range(n2):
        if force_row[n1 + j]:
            h[n1 + j] = 1.0
        else:
            a = b2[j]
            for i in range(n1):
                a += W2[j, i] * h[i]
            h[n1 + j] = np.tanh(a)
    for j in range(n3):
        if force_row[n1 + n2 + j]:
            h[n1 + n2 + j] = 1.0
        else:
            a = b3[j]
            for i in range(n2):
                a += W3[j, i] * h[n1 + i]
            h[n1 + n2 + j] = np.tanh(a)
    a = b4[0]
    for i in range(n3):
        a += W4[0, i] * h[n1 + n2 + i]
    return 1.0 / (1.0 + np.exp(-a))


@numba.njit(cache=True)
def _train_epoch(X, y, order, W1, b1, W2, b2, W3, b3, W4, b4, force, lr, record):
    n1 = W1.shape[0]
    n2 = W2.shape[0]
    n3 = W3.shape[0]
    h = np.empty(n1 + n2 + n3)
    d1 = np.empty(n1)
    d2 = np.empty(n2)
    d3 = np.empty(n3)
    for k in range(order.shape[0]):
        s = order[k]
        x = X[s]
        o = _forward(x, W1, b1, W2, b2, W3, b3, W4, b4, force[k], h)
        if record.shape[0] > 1:
            for j in range(n1 + n2 + n3):
                record[k, j] = h[j]
        do = (o - y[s]) * o * (1.0 - o)
        for j in range(n3):
            hv = h[n1 + n2 + j]
            d3[j] = W4[0, j] * do * (1.0 - hv * hv)
        for j in range(n2):
            acc = 0.0
            for m in range(n3):
                acc += W3[m, j] * d3[m]
            hv = h[n1 + j]
            d2[j] = acc * (1.0 - hv * hv)
        for j in range(n1):
            acc = 0.0
            for m in range(n2):
                acc += W2[m, j] * d2[m]
            hv = h[j]
            d1[j] = acc * (1.0 - hv * hv)
        for j in range(n3):
            W4[0, j] -= lr * do * h[n1 + n2 + j]
        b4[0] -= lr * do
        for m in range(n3):
            for j in range(n2):
                W3[m, j] -= lr * d3[m] * h[n1 + j]
            b3[m] -= lr * d3[m]
        for m in range(n2):
            for j in range(n1):
                W2[m, j] -= lr * d2[m] * h[j]
            b2[m] -= lr * d2[m]
        for m in range(n1):
            for j in range(x.shape[0]):
                W1[m, j] -= lr * d1[m] * x[j]
            b1[m] -= lr * d1[m]


def predict(weights, X: np.ndarray) -> np.ndarray:
    """Clean forward pass, vectorised; returns P(class 1)."""
    W1, b1, W2, b2, W3, b3, W4, b4 = weights
    h = np.tanh(X @ W1.T + b1)
    h = np.tanh(h @ W2.T + b2)
    h = np.tanh(h @ W3.T + b3)
    return 1.0 / (1.0 + np.exp(-(h @ W4.T + b4)[:, 0]))


def accuracy(weights, X, y) -> float:
    return float(np.mean((predict(weights, X) > 0.5).astype(np.int64) == y))


def split(data: Dataset, cfg: MlpConfig, rng: np.random.Generator):
    n = len(data)
    if cfg.train_size >= n:
        raise ValueError(f"train_size {cfg.train_size} leaves no held-out samples out of {n}")
    perm = rng.permutation(n)
    tr, te = perm[: cfg.train_size], perm[cfg.train_size:]
    mu = data.X[tr].mean(axis=0)
    sd = data.X[tr].std(axis=0)
    sd[sd == 0] = 1.0
    X = (data.X - mu) / sd
    return X[tr], data.y[tr].astype(np.float64), X[te], data.y[te]


def init_weights(cfg: MlpConfig, rng: np.random.Generator) -> list:
    sizes = (4, *cfg.hidden, 1)
    out = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        out.append(rng.uniform(-cfg.init_scale, cfg.init_scale, size=(fan_out, fan_in)))
        out.append(rng.uniform(-cfg.init_scale, cfg.init_scale, size=fan_out))
    return out


def window_layout(cfg: MlpConfig, n_samples: int):
    """Per-epoch start offsets (relative to the epoch) and the epoch length."""
    layer_cost = [CALL_COST + h * BODY_COST for h in cfg.hidden]
    sample_cost = sum(layer_cost) + OUTPUT_COST + BACKWARD_COST
    offsets = []
    base = 0
    for h, cost in zip(cfg.hidden, layer_cost):
        offsets.extend(base + CALL_COST + j * BODY_COST for j in range(h))
        base += cost
    offsets = np.asarray(offsets, dtype=np.int64)
    starts = (np.arange(n_samples, dtype=np.int64)[:, None] * sample_cost + offsets[None, :]).ravel()
    return starts, sample_cost * n_samples


def train_mlp(data: Dataset, cfg: MlpConfig, injector: Optional[Injector] = None,
              effect: InjectionEffect = InjectionEffect.FORCE_ACTIVATION,
              record_last_epoch: bool = False) -> MlpResult:
    rng = np.random.default_rng(cfg.seed)
    Xtr, ytr, Xte, yte = split(data, cfg, rng)
    weights = init_weights(cfg, rng)
    n, units = Xtr.shape[0], cfg.units
    starts, epoch_cost = window_layout(cfg, n)
    no_force = np.zeros((n, units), dtype=np.bool_)
    dummy = np.zeros((1, 1))
    iterations = injections = forced = mismatches = 0
    epochs_run = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        force = no_force
        if injector is not None:
            t0 = epoch * epoch_cost
            mask = injector.plan(SITE, starts + t0, BODY_COST, span=(t0, t0 + epoch_cost))
            hits = int(mask.sum())
            injections += hits
            if hits and effect is InjectionEffect.CRASH:
                # the first delivered injection kills the enclave mid-epoch
                iterations += int(np.argmax(mask)) + 1
                return MlpResult(None, None, iterations, injections, forced, epochs_run, crashed=True)
            if hits and effect is InjectionEffect.FORCE_ACTIVATION:
                force = mask.reshape(n, units)
                forced += hits
        last = record_last_epoch and epoch == cfg.epochs - 1
        record = np.zeros((n, units)) if last else dummy
        _train_epoch(Xtr, ytr, order, *weights, force, cfg.lr, record)
        if last and force is not no_force:
            mismatches = int(np.count_nonzero(record[force] != 1.0))
        iterations += n * units
        epochs_run += 1
    return MlpResult(
        accuracy=accuracy(weights, Xte, yte),
        train_accuracy=accuracy(weights, Xtr, ytr.astype(np.int64)),
        loop_iterations=iterations,
        injections=injections,
        forced=forced,
        epochs_run=epochs_run,
        forced_mismatches=mismatches,
        weights=weights,
    )
