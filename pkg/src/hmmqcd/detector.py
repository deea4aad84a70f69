"""Threshold stopping rule, Bayesian cost estimators and false-alarm bound.

The alarm is raised at the first ``k >= 0`` whose post-change posterior
strictly exceeds ``h``. The Bayesian cost of an alarm time is
``c * (tau - nu)^+ + 1{tau < nu}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class DetectorConfig:
    h: float
    c: float = 0.001
    max_horizon: int = 10_000

    def __post_init__(self):
        if not 0.0 <= self.h <= 1.0:
            raise ValueError(f"threshold h must lie in [0, 1], got {self.h}")
        if not self.c > 0:
            raise ValueError(f"delay penalty c must be positive, got {self.c}")
        if int(self.max_horizon) < 1:
            raise ValueError(f"max_horizon must be >= 1, got {self.max_horizon}")


@dataclass(frozen=True)
class DetectionOutcome:
    """Result of one detection run.

    ``nu`` is the change time, or None when no change was observed up to
    the alarm (so ``nu > tau``). A censored run never alarmed and carries
    ``tau = max_horizon``. ``m2_before`` optionally stores the sum of the
    statistic over ``k < tau`` for the mode-form cost estimator.
    """

    tau: int
    nu: int | None
    m2_at_tau: float
    censored: bool = False
    m2_before: float | None = None

    @property
    def false_alarm(self) -> bool:
        return self.nu is None or self.tau < self.nu

    @property
    def delay(self) -> int:
        return 0 if self.nu is None else max(0, self.tau - self.nu)


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float
    n: int

    def __iter__(self):
        yield self.value
        yield self.se


def _estimate(x: Sequence[float]) -> Estimate:
    x = np.asarray(x, dtype=float)
    n = x.size
    if n == 0:
        raise ValueError("cannot estimate from an empty collection")
    mean = math.fsum(x) / n
    if n < 2:
        return Estimate(mean, 0.0, n)
    var = math.fsum((x - mean) ** 2) / (n - 1)
    return Estimate(mean, math.sqrt(var / n), n)


def stopping_time(m2_trace: Sequence[float], h: float) -> int | None:
    """First index whose statistic strictly exceeds ``h``, or None."""
    over = np.flatnonzero(np.asarray(m2_trace, dtype=float) > h)
    return int(over[0]) if over.size else None


def stopping_times(m2_trace: np.ndarray, thresholds: Sequence[float]) -> list[int | None]:
    """``stopping_time`` for several thresholds over one trace, via the running maximum."""
    m2_trace = np.asarray(m2_trace, dtype=float)
    if m2_trace.size == 0:
        return [None for _ in thresholds]
    running = np.maximum.accumulate(m2_trace)
    out = []
    for h in thresholds:
        k = int(np.searchsorted(running, h, side="right"))
        out.append(k if k < running.size else None)
    return out


def outcome_from_trace(m2_trace: np.ndarray, h: float, nu: int | None, horizon: int) -> DetectionOutcome:
    """Apply the stopping rule to ``[M2_0, ..., M2_T]``, censoring at ``horizon``."""
    m2_trace = np.asarray(m2_trace, dtype=float)
    tau = stopping_time(m2_trace[:horizon + 1], h)
    censored = tau is None
    if censored:
        tau = min(horizon, m2_trace.size - 1)
    return DetectionOutcome(int(tau), nu, float(m2_trace[tau]), censored,
                            math.fsum(m2_trace[:tau]))


def empirical_cost(outcomes: Iterable[DetectionOutcome], c: float) -> Estimate:
    """Mean of ``c * delay + 1{false alarm}`` with its standard error."""
    outcomes = list(outcomes)
    return _estimate([c * o.delay + float(o.false_alarm) for o in outcomes])


def mode_form_cost(m2_traces: Sequence[Sequence[float]], taus: Sequence[int], c: float) -> Estimate:
    """Cost estimated from the filter statistics: ``c * sum_{l<tau} M2_l + M1_tau``."""
    if len(m2_traces) != len(taus):
        raise ValueError("need one trace per stopping time")
    vals = []
    for trace, tau in zip(m2_traces, taus):
        trace = np.asarray(trace, dtype=float)
        if tau < 0 or tau >= trace.size:
            raise ValueError(f"trace of length {trace.size} does not cover tau={tau}")
        vals.append(c * math.fsum(trace[:tau]) + (1.0 - trace[tau]))
    return _estimate(vals)


def mode_form_cost_from_outcomes(outcomes: Iterable[DetectionOutcome], c: float) -> Estimate:
    outcomes = list(outcomes)
    if any(o.m2_before is None for o in outcomes):
        raise ValueError("outcomes lack the statistic sums needed for the mode-form cost")
    return _estimate([c * o.m2_before + (1.0 - o.m2_at_tau) for o in outcomes])


def pfa_bound(h: float) -> float:
    """Upper bound on the false-alarm probability of the threshold rule."""
    if not 0.0 <= h <= 1.0:
        raise ValueError(f"threshold h must lie in [0, 1], got {h}")
    return 1.0 - h


def empirical_pfa(outcomes) -> tuple[Estimate, Estimate]:
    """Two false-alarm estimates: the fraction of early alarms and ``1 - mean(M2_tau)``.

    Accepts DetectionOutcome objects, or bare ``M2_tau`` floats (then only
    the statistic estimate is meaningful and the fraction is NaN).
    """
    items = list(outcomes)
    if not items:
        raise ValueError("cannot estimate PFA from an empty collection")
    if isinstance(items[0], DetectionOutcome):
        frac = _estimate([float(o.false_alarm) for o in items])
        stat = _estimate([1.0 - o.m2_at_tau for o in items])
    else:
        stat = _estimate([1.0 - float(m) for m in items])
        frac = Estimate(float("nan"), float("nan"), stat.n)
    return frac, stat


def average_delay(outcomes: Iterable[DetectionOutcome]) -> tuple[Estimate, Estimate | None]:
    """Unconditional ADD and ADD conditioned on ``tau >= nu`` (None when no run qualifies)."""
    outcomes = list(outcomes)
    add = _estimate([o.delay for o in outcomes])
    cond = [o.delay for o in outcomes if not o.false_alarm]
    return add, (_estimate(cond) if cond else None)


def summarize(outcomes: Sequence[DetectionOutcome], h: float, c: float, failed: int = 0) -> dict:
    """One report row: ADD, PFA (both estimators), cost, censoring counts."""
    outcomes = list(outcomes)
    add, add_cond = average_delay(outcomes)
    frac, stat = empirical_pfa(outcomes)
    cost = empirical_cost(outcomes, c)
    row = {
        "h": float(h),
        "runs": len(outcomes),
        "add": add.value,
        "add_se": add.se,
        "add_cond": add_cond.value if add_cond else float("nan"),
        "pfa_frac": frac.value,
        "pfa_stat": stat.value,
        "pfa_se": stat.se,
        "pfa_frac_se": frac.se,
        "cost": cost.value,
        "cost_se": cost.se,
        "censored": sum(o.censored for o in outcomes),
        "failed": failed,
    }
    if all(o.m2_before is not None for o in outcomes):
        mf = mode_form_cost_from_outcomes(outcomes, c)
        row["cost_mode"] = mf.value
        row["cost_mode_se"] = mf.se
    return row
