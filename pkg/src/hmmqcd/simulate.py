"""Trajectory simulation, Monte Carlo evaluation and threshold tuning.

Randomness: run ``r`` of an experiment with master seed ``s`` draws from its
own Philox stream keyed by ``(s, *key, r)``, so results do not depend on run
order or on how runs are split across worker processes.

Trajectories are generated in fixed-size chunks. A Monte Carlo run stops
generating once every threshold of interest has been crossed; because the
chunk size is fixed, the generated prefix is identical to the one a full
``sample_trajectory`` call would produce from the same stream.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit, logit

from . import _kernels
from .detector import DetectionOutcome, outcome_from_trace, summarize
from .filter import FilterUnderflow
from .model import AugmentedModel

CHUNK = 512


def run_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for one run, keyed by the master seed and integer indices."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, key)])))


def _as_rng(rng) -> tuple[np.random.Generator, int | None]:
    if isinstance(rng, np.random.Generator):
        return rng, None
    return run_rng(int(rng)), int(rng)


def _cumulative(a: np.ndarray) -> np.ndarray:
    """Column-wise CDF; entries from each column's last positive row are set to +inf
    so a uniform draw can never land on a zero-probability state."""
    cum = np.cumsum(a, axis=0)
    for j in range(a.shape[1]):
        last = np.flatnonzero(a[:, j] > 0)[-1]
        cum[last:, j] = np.inf
    return cum


_CUM_CACHE: dict[int, tuple[AugmentedModel, np.ndarray, np.ndarray]] = {}


def _chain_tables(aug: AugmentedModel) -> tuple[np.ndarray, np.ndarray]:
    hit = _CUM_CACHE.get(id(aug))
    if hit is None or hit[0] is not aug:
        init = aug.initial.reshape(-1, 1)
        hit = (aug, _cumulative(aug.a), _cumulative(init)[:, 0])
        _CUM_CACHE.clear()
        _CUM_CACHE[id(aug)] = hit
    return hit[1], hit[2]


@dataclass(eq=False)
class Trajectory:
    """One simulated run.

    ``states[k-1]`` and ``y[k-1]`` belong to time ``k = 1..T`` (0-based state
    indices); ``x0`` is the initial pre-change state. ``nu`` is the first time
    in a post-change state, None if the change did not happen within the
    horizon. ``m2`` is the filter statistic ``[M2_0, ..., M2_T]``.
    """

    x0: int
    states: np.ndarray
    y: np.ndarray
    nu: int | None
    m2: np.ndarray
    log_likelihood: float
    seed: int | None = None

    @property
    def horizon(self) -> int:
        return int(self.states.size)


def _simulate(aug: AugmentedModel, rng: np.random.Generator, horizon: int,
              stop_above: float | None = None, keep_path: bool = True):
    cum, cum0 = _chain_tables(aug)
    x0 = int(np.argmax(rng.random() < cum0))
    s = x0
    z = np.array(aug.initial)
    states, ys, m2s = [], [], [np.zeros(1)]
    nu = None
    lognorm = 0.0
    empty = np.empty((0, aug.n))
    t = 0
    while t < horizon:
        n = min(CHUNK, horizon - t)
        st = np.empty(n, dtype=np.int64)
        s = _kernels.walk_chain(cum, s, rng.random(n), st)
        y = aug.obs.sample(st, rng)
        logb = aug.obs.log_likelihoods(y)
        m2 = np.empty(n)
        ln = np.empty(n)
        z, chunk_norm, failed = _kernels.filter_loglik(aug.a, z, logb, aug.n_alpha, m2, ln, empty)
        if failed >= 0:
            raise FilterUnderflow(t + failed + 1, y[failed])
        lognorm += chunk_norm
        if nu is None:
            post = np.flatnonzero(st >= aug.n_alpha)
            if post.size:
                nu = t + int(post[0]) + 1
        if keep_path:
            states.append(st)
            ys.append(y)
        m2s.append(m2)
        t += n
        if stop_above is not None and m2.max() > stop_above:
            break
    trace = np.concatenate(m2s)
    if not keep_path:
        return x0, None, None, nu, trace, lognorm
    shape = (0,) if aug.obs.dim is None else (0, aug.obs.dim)
    return (x0, np.concatenate(states) if states else np.empty(0, dtype=np.int64),
            np.concatenate(ys) if ys else np.empty(shape), nu, trace, lognorm)


def sample_trajectory(aug: AugmentedModel, horizon: int, rng) -> Trajectory:
    """Simulate ``horizon`` steps of the augmented chain and filter the observations.

    ``rng`` is a Generator or an integer seed.
    """
    if int(horizon) < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    gen, seed = _as_rng(rng)
    x0, states, y, nu, m2, ll = _simulate(aug, gen, int(horizon))
    return Trajectory(x0, states, y, nu, m2, ll, seed)


def sample_change_times(aug: AugmentedModel, n_runs: int, rng, max_steps: int = 1_000_000) -> np.ndarray:
    """Change times of ``n_runs`` independent chain realizations (no observations).

    Entries are 0 for runs still pre-change after ``max_steps`` steps.
    """
    gen, _ = _as_rng(rng)
    cum, cum0 = _chain_tables(aug)
    out = np.zeros(int(n_runs), dtype=np.int64)
    block = 4096
    for r in range(int(n_runs)):
        s = int(np.argmax(gen.random() < cum0))
        done = 0
        while done < max_steps:
            n = min(block, max_steps - done)
            k, s = _kernels.steps_to_absorption(cum, s, aug.n_alpha, gen.random(n))
            if k > 0:
                out[r] = done + k
                break
            done += n
    return out


def sigmoid(phi):
    """Logistic map from the real line onto (0, 1)."""
    return expit(phi)


def inverse_sigmoid(h):
    h = np.asarray(h, dtype=float)
    if np.any((h <= 0) | (h >= 1)):
        raise ValueError(f"inverse_sigmoid needs h strictly inside (0, 1), got {h}")
    out = logit(h)
    return float(out) if out.ndim == 0 else out


# -- Monte Carlo ---------------------------------------------------------------

def _run_block(aug, thresholds, seed, key, runs, horizon):
    """Outcomes for a block of runs; returns (list of per-run outcome lists or None)."""
    stop = max(thresholds)
    stop = None if stop >= 1.0 else stop
    out = []
    for r in runs:
        try:
            _, _, _, nu, trace, _ = _simulate(aug, run_rng(seed, *key, r), horizon, stop, keep_path=False)
        except FilterUnderflow:
            out.append(None)
            continue
        out.append([outcome_from_trace(trace, h, nu, horizon) for h in thresholds])
    return out


def detection_outcomes(aug: AugmentedModel, thresholds: Sequence[float], n_runs: int, seed: int,
                       horizon: int = 10_000, key: Sequence[int] = (), workers: int = 1,
                       crn: bool = True) -> tuple[dict[float, list[DetectionOutcome]], int]:
    """Simulate runs and apply the stopping rule for every threshold.

    With ``crn`` the same trajectories serve every threshold. Returns the
    outcomes per threshold and the number of runs lost to filter underflow.
    """
    thresholds = [float(h) for h in thresholds]
    if not thresholds:
        raise ValueError("need at least one threshold")
    if int(n_runs) < 1:
        raise ValueError(f"n_runs must be >= 1, got {n_runs}")
    if not crn:
        result, failed = {}, 0
        for i, h in enumerate(thresholds):
            res, f = detection_outcomes(aug, [h], n_runs, seed, horizon, (*key, i + 1), workers, True)
            result.update(res)
            failed += f
        return result, failed
    runs = list(range(int(n_runs)))
    if workers > 1 and len(runs) > 1:
        blocks = [runs[i::workers] for i in range(workers)]
        blocks = [sorted(b) for b in blocks if b]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_block, *zip(*[(aug, thresholds, seed, tuple(key), b, horizon)
                                                     for b in blocks])))
        per_run = [None] * len(runs)
        for b, part in zip(blocks, parts):
            for r, res in zip(b, part):
                per_run[r] = res
    else:
        per_run = _run_block(aug, thresholds, seed, tuple(key), runs, horizon)
    failed = sum(res is None for res in per_run)
    result = {h: [res[i] for res in per_run if res is not None] for i, h in enumerate(thresholds)}
    return result, failed


@dataclass
class MonteCarloReport:
    rows: list[dict]
    seed: int
    model_digest: str
    c: float
    horizon: int
    meta: dict = field(default_factory=dict)

    def row(self, h: float) -> dict:
        for r in self.rows:
            if r["h"] == h:
                return r
        raise KeyError(h)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def header_comment(self) -> str:
        return f"# seed={self.seed} model={self.model_digest} c={self.c!r} horizon={self.horizon}"

    def to_csv(self, path_or_file) -> None:
        write_rows_csv(path_or_file, self.rows, SWEEP_COLUMNS, self.header_comment())

    def to_dict(self) -> dict:
        rows = []
        for r in self.rows:
            d = {"h": r["h"], "c": self.c, "runs": r["runs"], "add": r["add"], "add_se": r["add_se"],
                 "add_conditional": r["add_cond"], "pfa_frac": r["pfa_frac"], "pfa_stat": r["pfa_stat"],
                 "pfa_se": r["pfa_se"], "cost": r["cost"], "cost_se": r["cost_se"],
                 "censored_count": r["censored"], "seed": self.seed}
            for extra in ("tag", "failed", "pfa_frac_se", "cost_mode", "cost_mode_se"):
                if extra in r:
                    d[extra] = r[extra]
            rows.append(d)
        return {"seed": self.seed, "model_digest": self.model_digest, "c": self.c,
                "horizon": self.horizon, **self.meta, "rows": rows}

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(_json_safe(self.to_dict()), fh, indent=2)
            fh.write("\n")


SWEEP_COLUMNS = ["h", "runs", "add", "add_se", "add_cond", "pfa_frac", "pfa_stat", "pfa_se",
                 "cost", "cost_se", "censored"]
OPTIMIZER_COLUMNS = ["n", "phi", "h", "eta", "j_plus", "j_minus", "g_hat"]


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_rows_csv(path_or_file, rows: Sequence[dict], columns: Sequence[str], comment: str | None = None) -> None:
    columns = list(columns)
    if rows and "tag" in rows[0]:
        columns = ["tag", *columns]

    def _write(fh):
        if comment:
            fh.write(comment + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r[c]) for c in columns])

    if hasattr(path_or_file, "write"):
        _write(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            _write(fh)


def monte_carlo(aug: AugmentedModel, thresholds, n_runs: int, seed: int, c: float = 0.001,
                horizon: int = 10_000, key: Sequence[int] = (), workers: int = 1,
                crn: bool = True) -> MonteCarloReport:
    """ADD / PFA / cost estimates for each threshold, one report row per threshold (sorted by h)."""
    if c < 0:
        raise ValueError(f"delay penalty c must be nonnegative, got {c}")
    if np.ndim(thresholds) == 0:
        thresholds = [float(thresholds)]
    thresholds = sorted({float(h) for h in thresholds})
    for h in thresholds:
        if not 0.0 <= h <= 1.0:
            raise ValueError(f"threshold h must lie in [0, 1], got {h}")
    outcomes, failed = detection_outcomes(aug, thresholds, n_runs, seed, horizon, key, workers, crn)
    if failed == n_runs:
        raise FilterUnderflow(-1, None)
    rows = [summarize(outcomes[h], h, c, failed) for h in thresholds]
    return MonteCarloReport(rows, int(seed), aug.digest(), float(c), int(horizon))


def cost_curve(aug: AugmentedModel, c: float, h_grid, runs_per_h: int, seed: int,
               horizon: int = 10_000, crn: bool = True, workers: int = 1) -> MonteCarloReport:
    """Empirical cost against threshold, for plotting and sensitivity checks."""
    if len(h_grid) == 0:
        raise ValueError("h_grid is empty")
    return monte_carlo(aug, h_grid, runs_per_h, seed, c, horizon, key=(2,), workers=workers, crn=crn)


# -- threshold optimizer -------------------------------------------------------

@dataclass(frozen=True)
class OptimizerConfig:
    """Finite-difference threshold search in the unconstrained parameter ``phi``.

    ``sign=-1`` steps against the gradient estimate (minimizes cost);
    ``sign=+1`` applies ``phi + eta * g`` literally.
    """

    n_steps: int = 200
    eta0: float = 3.0
    decay: float = 1.5
    delta: float = 1.0
    samples_per_eval: int = 10
    h0: float = 0.5
    phi0: float | None = None
    sign: int = -1
    crn: bool = True
    horizon: int = 10_000

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.eta0 < 0:
            raise ValueError("eta0 must be nonnegative")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.samples_per_eval < 1:
            raise ValueError("samples_per_eval must be >= 1")
        if self.sign not in (-1, 1):
            raise ValueError("sign must be -1 or +1")

    @property
    def start(self) -> float:
        return float(self.phi0) if self.phi0 is not None else inverse_sigmoid(self.h0)

    def learning_rate(self, n: int) -> float:
        return self.eta0 * math.exp(-self.decay * n / self.n_steps)


@dataclass
class OptimizerResult:
    h_star: float
    phi_star: float
    rows: list[dict]
    seed: int | None = None

    @property
    def phi_trace(self) -> np.ndarray:
        return np.array([r["phi"] for r in self.rows] + [self.phi_star])

    @property
    def cost_trace(self) -> np.ndarray:
        return np.array([0.5 * (r["j_plus"] + r["j_minus"]) for r in self.rows])

    def to_csv(self, path_or_file, comment: str | None = None) -> None:
        write_rows_csv(path_or_file, self.rows, OPTIMIZER_COLUMNS, comment)


def optimize_threshold(aug: AugmentedModel | None, c: float, opt: OptimizerConfig, seed: int = 0,
                       objective: Callable[[float], float] | None = None,
                       workers: int = 1) -> OptimizerResult:
    """Tune the threshold by central finite differences on a simulated cost.

    Each iteration estimates the cost at ``S(phi + delta)`` and
    ``S(phi - delta)`` from ``samples_per_eval`` fresh runs (shared between
    the two when ``opt.crn``), then moves ``phi`` by ``sign * eta_n * g``.
    ``objective(h)`` replaces the simulation when given.
    """
    phi = opt.start
    rows = []
    for n in range(opt.n_steps):
        eta = opt.learning_rate(n)
        hp, hm = float(sigmoid(phi + opt.delta)), float(sigmoid(phi - opt.delta))
        if objective is not None:
            jp, jm = float(objective(hp)), float(objective(hm))
        else:
            jp, jm = _estimated_costs(aug, c, opt, seed, n, hp, hm, workers)
        g = (jp - jm) / (2.0 * opt.delta)
        rows.append({"n": n, "phi": phi, "h": float(sigmoid(phi)), "eta": eta,
                     "j_plus": jp, "j_minus": jm, "g_hat": g})
        phi = phi + opt.sign * eta * g
    return OptimizerResult(float(sigmoid(phi)), phi, rows, seed)


def _estimated_costs(aug, c, opt, seed, n, hp, hm, workers) -> tuple[float, float]:
    ell, horizon = opt.samples_per_eval, opt.horizon
    if opt.crn:
        res, _ = detection_outcomes(aug, [hm, hp], ell, seed, horizon, (1, n), workers)
        plus, minus = res[hp], res[hm]
    else:
        plus = detection_outcomes(aug, [hp], ell, seed, horizon, (1, n, 0), workers)[0][hp]
        minus = detection_outcomes(aug, [hm], ell, seed, horizon, (1, n, 1), workers)[0][hm]
    return _mean_cost(plus, c), _mean_cost(minus, c)


def _mean_cost(outcomes: Sequence[DetectionOutcome], c: float) -> float:
    if not outcomes:
        raise FilterUnderflow(-1, None)
    return math.fsum(c * o.delay + float(o.false_alarm) for o in outcomes) / len(outcomes)
