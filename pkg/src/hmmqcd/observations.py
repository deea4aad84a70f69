"""Per-state observation densities.

Every density works on a batch of observations: scalar densities take an
array of shape ``(T,)`` and vector densities an array of shape ``(T, d)``.
``logpdf`` returns shape ``(T,)``; ``sample`` draws ``size`` observations.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

_LOG_2PI = math.log(2.0 * math.pi)


class Density:
    """Base class for a state-conditional observation density."""

    dim: int | None = None  # None for scalar observations

    def logpdf(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def pdf(self, y) -> np.ndarray:
        return np.exp(self.logpdf(y))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise TypeError(f"{type(self).__name__} cannot be serialized")


class Gaussian(Density):
    """Scalar normal density with the given mean and variance."""

    def __init__(self, mean: float, variance: float = 1.0):
        mean, variance = float(mean), float(variance)
        if not math.isfinite(mean):
            raise ValueError(f"gaussian mean must be finite, got {mean}")
        if not (variance > 0 and math.isfinite(variance)):
            raise ValueError(f"gaussian variance must be positive, got {variance}")
        self.mean = mean
        self.variance = variance

    def logpdf(self, y):
        y = np.asarray(y, dtype=float)
        return -0.5 * (_LOG_2PI + math.log(self.variance)) - (y - self.mean) ** 2 / (2.0 * self.variance)

    def sample(self, rng, size):
        return self.mean + math.sqrt(self.variance) * rng.standard_normal(size)

    def to_dict(self):
        return {"kind": "gaussian", "mean": self.mean, "variance": self.variance}

    def __repr__(self):
        return f"Gaussian(mean={self.mean!r}, variance={self.variance!r})"


class ProductGaussian(Density):
    """Independent normal components over a vector observation."""

    def __init__(self, means: Sequence[float], variances: Sequence[float]):
        self.means = np.asarray(means, dtype=float).reshape(-1)
        self.variances = np.asarray(variances, dtype=float).reshape(-1)
        if self.means.shape != self.variances.shape:
            raise ValueError("product_gaussian means and variances differ in length")
        if not np.all(np.isfinite(self.means)):
            raise ValueError("product_gaussian means must be finite")
        if not np.all((self.variances > 0) & np.isfinite(self.variances)):
            raise ValueError("product_gaussian variances must be positive")
        self.dim = self.means.size

    def logpdf(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        r = (y - self.means) ** 2 / self.variances
        return -0.5 * (self.dim * _LOG_2PI + np.log(self.variances).sum() + r.sum(axis=1))

    def sample(self, rng, size):
        return self.means + np.sqrt(self.variances) * rng.standard_normal((size, self.dim))

    def to_dict(self):
        return {"kind": "product_gaussian", "means": self.means.tolist(),
                "variances": self.variances.tolist()}

    def __repr__(self):
        return f"ProductGaussian(means={self.means.tolist()!r}, variances={self.variances.tolist()!r})"


class LogDensity(Density):
    """User-supplied log-density callback.

    ``fn`` maps an observation batch to log-densities. ``sampler(rng, size)``
    is only needed when the model is simulated.
    """

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray],
                 sampler: Callable[[np.random.Generator, int], np.ndarray] | None = None,
                 dim: int | None = None):
        self.fn = fn
        self.sampler = sampler
        self.dim = dim

    def logpdf(self, y):
        return np.asarray(self.fn(np.asarray(y, dtype=float)), dtype=float)

    def sample(self, rng, size):
        if self.sampler is None:
            raise TypeError("LogDensity has no sampler; cannot simulate observations")
        return np.asarray(self.sampler(rng, size), dtype=float)


class IndependentProduct(Density):
    """Product of scalar densities, one per component of a vector observation."""

    def __init__(self, factors: Sequence[Density]):
        self.factors = tuple(factors)
        if any(f.dim is not None for f in self.factors):
            raise ValueError("IndependentProduct factors must be scalar densities")
        self.dim = len(self.factors)

    def logpdf(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        out = np.zeros(y.shape[0])
        for j, f in enumerate(self.factors):
            out += f.logpdf(y[:, j])
        return out

    def sample(self, rng, size):
        return np.column_stack([f.sample(rng, size) for f in self.factors])


def product_of(factors: Sequence[Density]) -> Density:
    """Product density over vector observations; collapses to ProductGaussian when possible."""
    if all(isinstance(f, Gaussian) for f in factors):
        return ProductGaussian([f.mean for f in factors], [f.variance for f in factors])
    return IndependentProduct(factors)


def density_from_dict(d: dict) -> Density:
    kind = d.get("kind")
    if kind == "gaussian":
        return Gaussian(d["mean"], d.get("variance", 1.0))
    if kind == "product_gaussian":
        return ProductGaussian(d["means"], d["variances"])
    raise ValueError(f"unknown density kind {kind!r}")


class ObservationModel:
    """One density per augmented state, in augmented index order.

    When every density is a scalar Gaussian (or every density is a
    ProductGaussian of equal dimension) the batch operations are vectorized
    over states; otherwise they fall back to a loop over densities.
    """

    def __init__(self, densities: Sequence[Density]):
        self.densities = tuple(densities)
        if not self.densities:
            raise ValueError("observation model needs at least one density")
        dims = {d.dim for d in self.densities}
        if len(dims) != 1:
            raise ValueError(f"densities disagree on observation dimension: {sorted(map(str, dims))}")
        self.dim = dims.pop()
        self._means = self._variances = None
        if all(isinstance(d, Gaussian) for d in self.densities):
            self._means = np.array([d.mean for d in self.densities])
            self._variances = np.array([d.variance for d in self.densities])
        elif all(isinstance(d, ProductGaussian) for d in self.densities):
            self._means = np.stack([d.means for d in self.densities])
            self._variances = np.stack([d.variances for d in self.densities])
        if self._means is not None:
            self._means.setflags(write=False)
            self._variances.setflags(write=False)

    def __len__(self):
        return len(self.densities)

    def __getitem__(self, i):
        return self.densities[i]

    def as_batch(self, y) -> np.ndarray:
        """Coerce observations to ``(T,)`` (scalar) or ``(T, d)`` (vector)."""
        y = np.asarray(y, dtype=float)
        if self.dim is None:
            return y.reshape(-1)
        return y.reshape(-1, self.dim)

    def log_likelihoods(self, y) -> np.ndarray:
        """Log-density table of shape ``(T, N)``: entry (t, i) is log b_i(y_t)."""
        y = self.as_batch(y)
        if not np.all(np.isfinite(y)):
            bad = int(np.flatnonzero(~np.isfinite(y.reshape(y.shape[0], -1)).any(axis=1))[0])
            raise ValueError(f"non-finite observation at row {bad}")
        if self._means is not None:
            mu, var = self._means, self._variances
            if self.dim is None:
                r = (y[:, None] - mu) ** 2 / var
                return -0.5 * (_LOG_2PI + np.log(var)) - 0.5 * r
            r = ((y[:, None, :] - mu) ** 2 / var).sum(axis=2)
            return -0.5 * (self.dim * _LOG_2PI + np.log(var).sum(axis=1)) - 0.5 * r
        return np.column_stack([d.logpdf(y) for d in self.densities])

    def likelihoods(self, y_single) -> np.ndarray:
        """Density vector b(y) for one observation (the diagonal of B(y))."""
        return np.exp(self.log_likelihoods(self.as_batch(y_single)[:1])[0])

    def sample(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw one observation per entry of the 0-based ``states`` array."""
        states = np.asarray(states, dtype=np.intp)
        n = states.size
        if self._means is not None:
            mu, sd = self._means[states], np.sqrt(self._variances[states])
            shape = (n,) if self.dim is None else (n, self.dim)
            return mu + sd * rng.standard_normal(shape)
        out = np.empty((n,) if self.dim is None else (n, self.dim))
        for i in np.unique(states):
            mask = states == i
            out[mask] = self.densities[i].sample(rng, int(mask.sum()))
        return out

    def to_list(self) -> list[dict]:
        return [d.to_dict() for d in self.densities]

    @classmethod
    def from_list(cls, items: Sequence[dict]) -> "ObservationModel":
        return cls([density_from_dict(d) for d in items])
