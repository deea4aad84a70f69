"""Two-regime HMM change problem and its augmented Markov chain.

Convention: all transition matrices are COLUMN-stochastic,
``a[i, j] = P(next = i | current = j)``. Most HMM libraries use the
transpose; convert with ``.T`` before handing matrices to them.

State indices are 0-based in code. Augmented index ``i < n_alpha`` is a
pre-change state, ``i >= n_alpha`` is post-change state ``i - n_alpha``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .observations import ObservationModel

STOCHASTIC_TOL = 1e-12
RHO_EPS = 1e-12


class ModelError(ValueError):
    """Invalid model input (shape, stochasticity, or prior range)."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def check_column_stochastic(a, name: str = "matrix", shape=None, tol: float = STOCHASTIC_TOL) -> np.ndarray:
    """Return ``a`` as a float array, or raise ModelError naming the offending column."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ModelError(f"{name}: expected a 2-d matrix, got shape {a.shape}")
    if shape is not None and a.shape != tuple(shape):
        raise ModelError(f"{name}: expected shape {tuple(shape)}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        i, j = np.argwhere(~np.isfinite(a))[0]
        raise ModelError(f"{name}: non-finite entry at ({i + 1}, {j + 1})")
    bad = np.argwhere((a < 0) | (a > 1))
    if bad.size:
        i, j = bad[0]
        raise ModelError(f"{name}: entry ({i + 1}, {j + 1}) = {a[i, j]!r} outside [0, 1]")
    sums = a.sum(axis=0)
    off = np.flatnonzero(np.abs(sums - 1.0) > tol)
    if off.size:
        j = off[0]
        raise ModelError(f"{name}: column {j + 1} sums to {sums[j]!r}, not 1")
    return a


def _check_probability_vector(p, name: str, n: int) -> np.ndarray:
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.size != n:
        raise ModelError(f"{name}: expected length {n}, got {p.size}")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ModelError(f"{name}: entry {int(np.flatnonzero((p < 0) | ~np.isfinite(p))[0]) + 1} invalid")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ModelError(f"{name}: sums to {p.sum()!r}, not 1")
    return p


def _check_rho(rho, n_alpha: int) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if rho.ndim == 0:
        rho = np.full(n_alpha, float(rho))
    rho = rho.reshape(-1)
    if rho.size != n_alpha:
        raise ModelError(f"rho: expected scalar or length {n_alpha}, got length {rho.size}")
    bad = np.flatnonzero(~((rho >= RHO_EPS) & (rho <= 1.0 - RHO_EPS)))
    if bad.size:
        j = bad[0]
        raise ModelError(f"rho: entry {j + 1} = {rho[j]!r} not inside (0, 1)")
    return rho


@dataclass(frozen=True)
class StateSpacePair:
    n_alpha: int
    n_beta: int
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if int(self.n_alpha) < 1 or int(self.n_beta) < 1:
            raise ModelError(f"state spaces must be nonempty, got n_alpha={self.n_alpha}, n_beta={self.n_beta}")
        if self.labels is not None and len(self.labels) != self.n:
            raise ModelError(f"labels: expected {self.n}, got {len(self.labels)}")

    @property
    def n(self) -> int:
        return self.n_alpha + self.n_beta

    def is_pre_change(self, index) -> np.ndarray | bool:
        return np.asarray(index) < self.n_alpha


@dataclass(frozen=True, eq=False)
class Model:
    """The pre/post-change HMM pair plus the change prior.

    ``rho`` may be a scalar (Shiryaev geometric prior) or one value per
    pre-change state. ``initial_alpha`` defaults to uniform over the
    pre-change states.
    """

    a_alpha: np.ndarray
    a_beta: np.ndarray
    a_nu: np.ndarray
    rho: np.ndarray
    obs: ObservationModel
    initial_alpha: np.ndarray | None = None
    labels: tuple[str, ...] | None = None
    spaces: StateSpacePair = field(init=False)

    def __post_init__(self):
        a_alpha = np.asarray(self.a_alpha, dtype=float)
        a_beta = np.asarray(self.a_beta, dtype=float)
        if a_alpha.ndim != 2 or a_alpha.shape[0] != a_alpha.shape[1]:
            raise ModelError(f"A_alpha: expected a square matrix, got shape {a_alpha.shape}")
        if a_beta.ndim != 2 or a_beta.shape[0] != a_beta.shape[1]:
            raise ModelError(f"A_beta: expected a square matrix, got shape {a_beta.shape}")
        spaces = StateSpacePair(a_alpha.shape[0], a_beta.shape[0], self.labels)
        na, nb = spaces.n_alpha, spaces.n_beta
        set_ = object.__setattr__
        set_(self, "spaces", spaces)
        set_(self, "a_alpha", _frozen(check_column_stochastic(a_alpha, "A_alpha", (na, na))))
        set_(self, "a_beta", _frozen(check_column_stochastic(a_beta, "A_beta", (nb, nb))))
        set_(self, "a_nu", _frozen(check_column_stochastic(self.a_nu, "A_nu", (nb, na))))
        set_(self, "rho", _frozen(_check_rho(self.rho, na)))
        init = np.full(na, 1.0 / na) if self.initial_alpha is None else self.initial_alpha
        set_(self, "initial_alpha", _frozen(_check_probability_vector(init, "initial_alpha", na)))
        if not isinstance(self.obs, ObservationModel):
            set_(self, "obs", ObservationModel(self.obs))
        if len(self.obs) != spaces.n:
            raise ModelError(f"observations: expected {spaces.n} densities, got {len(self.obs)}")

    @property
    def constant_rho(self) -> bool:
        """True when the prior is Shiryaev's geometric prior (no state dependence)."""
        return bool(np.all(self.rho == self.rho[0]))


@dataclass(frozen=True, eq=False)
class AugmentedModel:
    """The N-state chain over pre- and post-change states, with densities."""

    a: np.ndarray
    spaces: StateSpacePair
    obs: ObservationModel
    initial: np.ndarray

    @property
    def n(self) -> int:
        return self.spaces.n

    @property
    def n_alpha(self) -> int:
        return self.spaces.n_alpha

    def digest(self) -> str:
        """Short content hash, used to tag output files."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.a).tobytes())
        h.update(np.ascontiguousarray(self.initial).tobytes())
        h.update(str(self.spaces.n_alpha).encode())
        try:
            h.update(json.dumps(self.obs.to_list(), sort_keys=True).encode())
        except TypeError:
            h.update(repr(self.obs.densities).encode())
        return h.hexdigest()[:16]


def build_augmented(model: Model) -> AugmentedModel:
    """Compile a Model into the augmented chain.

    Blocks: top-left ``(1 - rho_j) * A_alpha[i, j]``, bottom-left
    ``rho_j * A_nu[i, j]``, bottom-right ``A_beta``, top-right zero, where
    ``j`` is the current (column) pre-change state.
    """
    na, nb = model.spaces.n_alpha, model.spaces.n_beta
    rho_mat = np.broadcast_to(model.rho, (nb, na))
    rho_bar = np.broadcast_to(1.0 - model.rho, (na, na))
    a = np.zeros((na + nb, na + nb))
    a[:na, :na] = rho_bar * model.a_alpha
    a[na:, :na] = rho_mat * model.a_nu
    a[na:, na:] = model.a_beta
    check_column_stochastic(a, "augmented A")
    initial = np.zeros(na + nb)
    initial[:na] = model.initial_alpha
    return AugmentedModel(_frozen(a), model.spaces, model.obs, _frozen(initial))


def constant_rho_matrix(a_alpha, a_beta, a_nu, rho: float) -> np.ndarray:
    """Augmented matrix for a constant prior, using scalar block factors."""
    a_alpha, a_beta, a_nu = (np.asarray(m, dtype=float) for m in (a_alpha, a_beta, a_nu))
    return np.block([[(1.0 - rho) * a_alpha, np.zeros((a_alpha.shape[0], a_beta.shape[0]))],
                     [rho * a_nu, a_beta]])


def mode_marginal(belief, spaces: StateSpacePair, tol: float = 1e-9) -> tuple[float, float]:
    """Posterior mode probabilities ``(pre-change, post-change)``."""
    belief = np.asarray(belief, dtype=float)
    if belief.shape != (spaces.n,):
        raise ModelError(f"belief: expected length {spaces.n}, got shape {belief.shape}")
    if abs(belief.sum() - 1.0) > tol:
        raise ModelError(f"belief sums to {belief.sum()!r}, not 1")
    m1 = float(belief[:spaces.n_alpha].sum())
    return m1, 1.0 - m1


def constant_rho_mode_chain(rho: float) -> np.ndarray:
    """Two-state pre/post mode chain for a constant change probability."""
    rho = float(rho)
    if not RHO_EPS <= rho <= 1.0 - RHO_EPS:
        raise ModelError(f"rho = {rho!r} not inside (0, 1)")
    return np.array([[1.0 - rho, 0.0], [rho, 1.0]])


# -- JSON model document -------------------------------------------------
# Matrices are stored as arrays of columns; indices are implicit (1-based
# order of the arrays).

def _columns(a: np.ndarray) -> list[list[float]]:
    return [col.tolist() for col in np.asarray(a).T]


def _from_columns(cols, name: str) -> np.ndarray:
    try:
        a = np.array(cols, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelError(f"{name}: not a rectangular numeric array of columns") from exc
    if a.ndim != 2:
        raise ModelError(f"{name}: expected an array of column arrays")
    return a.T


def model_to_dict(model: Model) -> dict:
    rho = float(model.rho[0]) if model.constant_rho else model.rho.tolist()
    return {
        "n_alpha": model.spaces.n_alpha,
        "n_beta": model.spaces.n_beta,
        "A_alpha": _columns(model.a_alpha),
        "A_beta": _columns(model.a_beta),
        "A_nu": _columns(model.a_nu),
        "rho": rho,
        "initial_alpha": model.initial_alpha.tolist(),
        "observations": model.obs.to_list(),
    }


def model_from_dict(d: dict) -> Model:
    from .observations import density_from_dict

    try:
        obs = ObservationModel([density_from_dict(o) for o in d["observations"]])
        model = Model(
            a_alpha=_from_columns(d["A_alpha"], "A_alpha"),
            a_beta=_from_columns(d["A_beta"], "A_beta"),
            a_nu=_from_columns(d["A_nu"], "A_nu"),
            rho=d["rho"],
            obs=obs,
            initial_alpha=d.get("initial_alpha"),
        )
    except KeyError as exc:
        raise ModelError(f"model document missing field {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise ModelError(str(exc)) from exc
    for key in ("n_alpha", "n_beta"):
        if key in d and int(d[key]) != getattr(model.spaces, key):
            raise ModelError(f"{key} = {d[key]} disagrees with matrix dimensions ({getattr(model.spaces, key)})")
    return model


def save_model(model: Model, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")


def load_model(path) -> Model:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
