"""Structured detection problems compiled into the two-regime HMM form.

* periodic: pre/post-change densities cycle with periods ``t1`` / ``t2``;
* moving target: one sensor at a time is affected, the affected sensor
  follows a Markov chain;
* sensor array: the disruption starts at sensor 1 and spreads to sensor
  ``i + 1`` with probability ``rho_chain[i]`` per step;
* multistream: an unknown nonempty subset of streams changes at once.

Multistream post-change state ``i`` (1-based) encodes the subset whose
bitmask is ``i``: stream ``j`` (1-based) is bit ``j - 1``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .model import Model, ModelError, check_column_stochastic
from .observations import Density, Gaussian, density_from_dict, product_of

MULTISTREAM_MAX_STREAMS = 12


def _prob_vector(p, name: str, n: int | None = None) -> np.ndarray:
    p = np.asarray(p, dtype=float).reshape(-1)
    if n is not None and p.size != n:
        raise ModelError(f"{name}: expected length {n}, got {p.size}")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ModelError(f"{name}: not a probability vector")
    return p


def cyclic_shift(n: int) -> np.ndarray:
    """Deterministic cycle 1 -> 2 -> ... -> n -> 1 as a column-stochastic matrix."""
    return np.roll(np.eye(n), 1, axis=0)


@dataclass
class PeriodicSpec:
    f: Sequence[Density]
    g: Sequence[Density]
    p_g: Sequence[float]
    rho: float

    @property
    def t1(self) -> int:
        return len(self.f)

    @property
    def t2(self) -> int:
        return len(self.g)


@dataclass
class MovingTargetSpec:
    f_alpha: Sequence[Density]
    f_beta: Sequence[Density]
    p_l: Sequence[float]
    a_target: np.ndarray
    rho: float

    @property
    def l(self) -> int:
        return len(self.f_alpha)


@dataclass
class SensorArraySpec:
    f_alpha: Sequence[Density]
    f_beta: Sequence[Density]
    rho: float
    rho_chain: Sequence[float]

    @property
    def l(self) -> int:
        return len(self.f_alpha)


@dataclass
class MultistreamSpec:
    f_alpha: Sequence[Density]
    f_beta: Sequence[Density]
    p_subset: Mapping[int, float]
    rho: float
    a_beta: np.ndarray | None = None
    max_streams: int = field(default=MULTISTREAM_MAX_STREAMS)

    @property
    def d(self) -> int:
        return len(self.f_alpha)


def _pairs(f_alpha, f_beta, what: str):
    if len(f_alpha) != len(f_beta) or not f_alpha:
        raise ModelError(f"{what}: need matching nonempty f_alpha/f_beta lists, got {len(f_alpha)} and {len(f_beta)}")


def _same_density(f: Density, g: Density) -> bool:
    try:
        return f.to_dict() == g.to_dict()
    except TypeError:
        return f is g


def build_periodic(spec: PeriodicSpec) -> Model:
    t1, t2 = spec.t1, spec.t2
    if t1 < 1 or t2 < 1:
        raise ModelError("periodic: both periods must be >= 1")
    p_g = _prob_vector(spec.p_g, "p_g", t2)
    if t1 == t2 and all(_same_density(f, g) for f, g in zip(spec.f, spec.g)):
        warnings.warn("periodic: post-change densities equal pre-change densities; the change is undetectable",
                      stacklevel=2)
    a_nu = np.repeat(p_g[:, None], t1, axis=1)
    return Model(cyclic_shift(t1), cyclic_shift(t2), a_nu, spec.rho, [*spec.f, *spec.g])


def moving_target_density(f_alpha: Sequence[Density], f_beta: Sequence[Density], affected: int | None) -> Density:
    """Joint density with sensor ``affected`` (0-based) under its post-change law, or none if None."""
    return product_of([fb if i == affected else fa for i, (fa, fb) in enumerate(zip(f_alpha, f_beta))])


def build_moving_target(spec: MovingTargetSpec) -> Model:
    _pairs(spec.f_alpha, spec.f_beta, "moving_target")
    l = spec.l
    p_l = _prob_vector(spec.p_l, "p_l", l)
    a_target = check_column_stochastic(spec.a_target, "a_target", (l, l))
    dens = [moving_target_density(spec.f_alpha, spec.f_beta, None)]
    dens += [moving_target_density(spec.f_alpha, spec.f_beta, i) for i in range(l)]
    return Model(np.ones((1, 1)), a_target, p_l[:, None], spec.rho, dens)


def sensor_array_density(f_alpha, f_beta, m: int) -> Density:
    """Joint density when the first ``m`` sensors are affected."""
    return product_of([fb if i < m else fa for i, (fa, fb) in enumerate(zip(f_alpha, f_beta))])


def sensor_array_transition(rho_chain: Sequence[float]) -> np.ndarray:
    rho_chain = np.asarray(rho_chain, dtype=float).reshape(-1)
    l = rho_chain.size + 1
    a = np.zeros((l, l))
    for i, r in enumerate(rho_chain):
        a[i, i] = 1.0 - r
        a[i + 1, i] = r
    a[l - 1, l - 1] = 1.0
    return a


def build_sensor_array(spec: SensorArraySpec) -> Model:
    _pairs(spec.f_alpha, spec.f_beta, "sensor_array")
    l = spec.l
    rho_chain = np.asarray(spec.rho_chain, dtype=float).reshape(-1)
    if rho_chain.size != l - 1:
        raise ModelError(f"rho_chain: expected length {l - 1}, got {rho_chain.size}")
    bad = np.flatnonzero(~((rho_chain > 0) & (rho_chain < 1)))
    if bad.size:
        raise ModelError(f"rho_chain: entry {bad[0] + 1} = {rho_chain[bad[0]]!r} not inside (0, 1)")
    a_nu = np.zeros((l, 1))
    a_nu[0, 0] = 1.0
    dens = [sensor_array_density(spec.f_alpha, spec.f_beta, 0)]
    dens += [sensor_array_density(spec.f_alpha, spec.f_beta, m) for m in range(1, l + 1)]
    return Model(np.ones((1, 1)), sensor_array_transition(rho_chain), a_nu, spec.rho, dens)


def subset_of_state(i: int, d: int) -> frozenset[int]:
    """Affected streams (1-based) encoded by post-change state ``i`` (1-based)."""
    if not 1 <= i < 2 ** d:
        raise ValueError(f"state {i} outside 1..{2 ** d - 1}")
    return frozenset(j + 1 for j in range(d) if i >> j & 1)


def state_of_subset(subset, d: int) -> int:
    """Inverse of ``subset_of_state``."""
    subset = set(subset)
    if not subset or not subset <= set(range(1, d + 1)):
        raise ValueError(f"subset {sorted(subset)} is not a nonempty subset of 1..{d}")
    return sum(1 << (j - 1) for j in subset)


def multistream_density(f_alpha, f_beta, subset) -> Density:
    return product_of([fb if i + 1 in subset else fa for i, (fa, fb) in enumerate(zip(f_alpha, f_beta))])


def build_multistream(spec: MultistreamSpec) -> Model:
    _pairs(spec.f_alpha, spec.f_beta, "multistream")
    d = spec.d
    if d > spec.max_streams:
        raise ModelError(f"multistream: d={d} exceeds the cap of {spec.max_streams} streams")
    nb = 2 ** d - 1
    p = np.zeros(nb)
    for mask, prob in spec.p_subset.items():
        mask = int(mask)
        if mask == 0:
            raise ModelError("p_subset: probability mass on the empty subset")
        if not 1 <= mask <= nb:
            raise ModelError(f"p_subset: bitmask {mask} outside 1..{nb}")
        p[mask - 1] += float(prob)
    p = _prob_vector(p, "p_subset")
    a_beta = np.eye(nb) if spec.a_beta is None else spec.a_beta
    dens = [multistream_density(spec.f_alpha, spec.f_beta, frozenset())]
    dens += [multistream_density(spec.f_alpha, spec.f_beta, subset_of_state(i, d)) for i in range(1, nb + 1)]
    return Model(np.ones((1, 1)), a_beta, p[:, None], spec.rho, dens)


# -- JSON specs --------------------------------------------------------------

_DENSITY_SCHEMA = {
    "type": "object",
    "properties": {"kind": {"const": "gaussian"}, "mean": {"type": "number"},
                   "variance": {"type": "number", "exclusiveMinimum": 0}},
    "required": ["kind", "mean", "variance"],
    "additionalProperties": False,
}
_DENSITIES = {"type": "array", "items": _DENSITY_SCHEMA, "minItems": 1}
_PROBS = {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}, "minItems": 1}
_RHO = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}


def _schema(kind: str, props: dict, required: list[str]) -> dict:
    return {
        "type": "object",
        "properties": {"kind": {"const": kind}, **props},
        "required": ["kind", *required],
        "additionalProperties": False,
    }


SPEC_SCHEMAS = {
    "periodic": _schema("periodic", {"f": _DENSITIES, "g": _DENSITIES, "p_g": _PROBS, "rho": _RHO},
                        ["f", "g", "p_g", "rho"]),
    "moving_target": _schema("moving_target", {
        "f_alpha": _DENSITIES, "f_beta": _DENSITIES, "p_l": _PROBS,
        "a_target": {"type": "array", "items": _PROBS}, "rho": _RHO},
        ["f_alpha", "f_beta", "p_l", "a_target", "rho"]),
    "sensor_array": _schema("sensor_array", {
        "f_alpha": _DENSITIES, "f_beta": _DENSITIES, "rho": _RHO,
        "rho_chain": {"type": "array", "items": _RHO}},
        ["f_alpha", "f_beta", "rho", "rho_chain"]),
    "multistream": _schema("multistream", {
        "f_alpha": _DENSITIES, "f_beta": _DENSITIES, "rho": _RHO,
        "p_subset": {"type": "object", "patternProperties": {"^[0-9]+$": {"type": "number", "minimum": 0}},
                     "additionalProperties": False, "minProperties": 1},
        "A_beta": {"type": "array", "items": _PROBS}},
        ["f_alpha", "f_beta", "rho", "p_subset"]),
}


def _dens(items) -> list[Density]:
    return [density_from_dict(d) for d in items]


def spec_from_dict(d: dict):
    """Validate a problem spec document and return the matching spec object."""
    import jsonschema

    kind = d.get("kind") if isinstance(d, dict) else None
    if kind not in SPEC_SCHEMAS:
        raise ModelError(f"/kind: unknown problem kind {kind!r}; expected one of {sorted(SPEC_SCHEMAS)}")
    try:
        jsonschema.validate(d, SPEC_SCHEMAS[kind])
    except jsonschema.ValidationError as exc:
        pointer = "/" + "/".join(str(p) for p in exc.absolute_path)
        raise ModelError(f"{pointer}: {exc.message}") from None
    if kind == "periodic":
        return PeriodicSpec(_dens(d["f"]), _dens(d["g"]), d["p_g"], d["rho"])
    if kind == "moving_target":
        return MovingTargetSpec(_dens(d["f_alpha"]), _dens(d["f_beta"]), d["p_l"],
                                np.array(d["a_target"], dtype=float).T, d["rho"])
    if kind == "sensor_array":
        return SensorArraySpec(_dens(d["f_alpha"]), _dens(d["f_beta"]), d["rho"], d["rho_chain"])
    a_beta = None if "A_beta" not in d else np.array(d["A_beta"], dtype=float).T
    return MultistreamSpec(_dens(d["f_alpha"]), _dens(d["f_beta"]),
                           {int(k): v for k, v in d["p_subset"].items()}, d["rho"], a_beta)


_BUILDERS = {
    PeriodicSpec: build_periodic,
    MovingTargetSpec: build_moving_target,
    SensorArraySpec: build_sensor_array,
    MultistreamSpec: build_multistream,
}


def build(spec) -> Model:
    """Compile any structured problem spec (object or JSON dict) into a Model."""
    if isinstance(spec, dict):
        spec = spec_from_dict(spec)
    try:
        return _BUILDERS[type(spec)](spec)
    except KeyError:
        raise TypeError(f"not a problem spec: {type(spec).__name__}") from None


__all__ = [
    "Gaussian", "PeriodicSpec", "MovingTargetSpec", "SensorArraySpec", "MultistreamSpec",
    "build", "build_periodic", "build_moving_target", "build_sensor_array", "build_multistream",
    "spec_from_dict", "subset_of_state", "state_of_subset", "cyclic_shift", "SPEC_SCHEMAS",
]
