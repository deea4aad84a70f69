"""Normalized HMM filter for the change posterior.

Each step predicts through the augmented chain, weights by the state
densities and renormalizes; the post-change statistic is the posterior
mass on the post-change states. Cost is O(N^2) per observation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from . import _kernels
from .model import AugmentedModel


class FilterUnderflow(FloatingPointError):
    """Every predicted state assigns (numerically) zero density to the observation."""

    def __init__(self, k: int, y):
        self.k = k
        self.y = y
        super().__init__(f"all state densities vanish at observation k={k}, y={y!r}")


@dataclass(frozen=True, eq=False)
class Belief:
    """Filter state after ``k`` observations."""

    z: np.ndarray
    m2: float
    k: int
    log_norm_sum: float = 0.0

    @property
    def m1(self) -> float:
        return 1.0 - self.m2


def filter_init(aug: AugmentedModel) -> Belief:
    z = np.array(aug.initial)
    return Belief(z, 1.0 - float(z[:aug.n_alpha].sum()), 0, 0.0)


def _run(aug: AugmentedModel, z0: np.ndarray, logb: np.ndarray, keep: bool, k0: int, ys):
    T = logb.shape[0]
    m2 = np.empty(T)
    lognorm = np.empty(T)
    z_out = np.empty((T if keep else 0, aug.n))
    z_last, _, failed = _kernels.filter_loglik(aug.a, np.ascontiguousarray(z0, dtype=float),
                                               np.ascontiguousarray(logb), aug.n_alpha, m2, lognorm, z_out)
    if failed >= 0:
        raise FilterUnderflow(k0 + failed + 1, ys[failed])
    return m2, lognorm, (z_out if keep else z_last)


def filter_step(belief: Belief, y, aug: AugmentedModel) -> Belief:
    """One filter update with observation ``y``."""
    y = aug.obs.as_batch(y)[:1]
    logb = aug.obs.log_likelihoods(y)
    m2, lognorm, z = _run(aug, belief.z, logb, True, belief.k, y)
    return Belief(z[0], float(m2[0]), belief.k + 1, belief.log_norm_sum + float(lognorm[0]))


def filter_run(aug: AugmentedModel, ys, callback: Callable[[Belief], None] | None = None,
               keep: bool = True) -> list[Belief]:
    """Filter a whole sequence.

    Returns ``[initial belief, belief after y_1, ..., belief after y_T]``.
    With ``keep=False`` only the initial and final beliefs are returned;
    ``callback`` still sees every step.
    """
    b0 = filter_init(aug)
    ys = aug.obs.as_batch(ys)
    if ys.shape[0] == 0:
        return [b0]
    logb = aug.obs.log_likelihoods(ys)
    store = keep or callback is not None
    m2, lognorm, z = _run(aug, b0.z, logb, store, 0, ys)
    out = [b0]
    if not store:
        out.append(Belief(z, float(m2[-1]), len(ys), float(lognorm[-1])))
        return out
    for t in range(len(ys)):
        b = Belief(z[t], float(m2[t]), t + 1, float(lognorm[t]))
        if callback is not None:
            callback(b)
        if keep:
            out.append(b)
    if not keep:
        out.append(b)
    return out


def change_statistic(aug: AugmentedModel, ys) -> np.ndarray:
    """Post-change posterior trace ``[M2_0, M2_1, ..., M2_T]`` (M2_0 = 0)."""
    b0 = filter_init(aug)
    ys = aug.obs.as_batch(ys)
    m2, _, _ = _run(aug, b0.z, aug.obs.log_likelihoods(ys), False, 0, ys)
    return np.concatenate([[b0.m2], m2])


def log_likelihood(aug: AugmentedModel, ys) -> float:
    """Marginal log-density of the observation sequence under the model."""
    beliefs = filter_run(aug, ys, keep=False)
    return beliefs[-1].log_norm_sum


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_trace_csv(path_or_file, ys, beliefs: Iterable[Belief]) -> None:
    """Trace CSV with columns ``k, y..., zhat_1..zhat_N, m2``; one row per observation."""
    beliefs = [b for b in beliefs if b.k > 0]
    ys = np.asarray(ys, dtype=float)
    ys = ys.reshape(len(beliefs), -1) if len(beliefs) else ys.reshape(0, 1)
    ny = ys.shape[1]
    n = beliefs[0].z.size if beliefs else 0
    ycols = ["y"] if ny == 1 else [f"y{j + 1}" for j in range(ny)]
    header = ["k", *ycols, *[f"zhat_{i + 1}" for i in range(n)], "m2"]

    def _write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for b, y in zip(beliefs, ys):
            w.writerow([b.k, *map(_fmt, y), *map(_fmt, b.z), _fmt(b.m2)])

    if hasattr(path_or_file, "write"):
        _write(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            _write(fh)


def read_observations_csv(path) -> np.ndarray:
    """Read an observation CSV with header ``k, y...``; returns ``(T,)`` or ``(T, d)``."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header is None or header[0].strip() != "k" or len(header) < 2:
            raise ValueError(f"{path}: expected header 'k, y...'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                vals = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
            if len(vals) != len(header) - 1 or not all(math.isfinite(v) for v in vals):
                raise ValueError(f"{path}: line {lineno}: bad observation row")
            rows.append(vals)
    y = np.array(rows, dtype=float).reshape(len(rows), len(header) - 1)
    return y[:, 0] if y.shape[1] == 1 else y
