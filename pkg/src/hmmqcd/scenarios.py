"""Ready-made models: a 2-state HMM that switches to a 3-state HMM.

Observations are scalar Gaussians whose mean depends on the hidden state.
``FRONTIER_ROWS`` lists eight mean/variance configurations used to trace the
delay-vs-false-alarm frontier; the ``variance`` column is a variance, not a standard deviation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Model
from .observations import Gaussian

A_ALPHA = np.array([[0.99, 0.01],
                    [0.01, 0.99]])
A_BETA = np.array([[0.9, 0.0, 0.1],
                   [0.1, 0.9, 0.9],
                   [0.0, 0.1, 0.0]])
A_NU = np.array([[0.999, 0.999],
                 [0.0005, 0.0005],
                 [0.0005, 0.0005]])
RHO = 0.0005
DELAY_PENALTY = 0.001
HORIZON = 10_000


@dataclass(frozen=True)
class FrontierRow:
    means_alpha: tuple[float, float]
    means_beta: tuple[float, float, float]
    variance: float
    symbol: str

    @property
    def tag(self) -> str:
        return self.symbol.replace(" ", "_")


FRONTIER_ROWS = (
    FrontierRow((0.5, 1.0), (0.5, 1.0, 0.75), 1.0, "blue x"),
    FrontierRow((0.5, 1.0), (0.5, 1.0, 0.75), 0.5, "blue dot"),
    FrontierRow((0.5, 1.0), (1.5, 0.5, 1.25), 1.0, "red x"),
    FrontierRow((0.5, 1.0), (1.5, 0.5, 1.25), 0.5, "red dot"),
    FrontierRow((0.5, 1.0), (1.5, 2.0, 1.0), 1.0, "black x"),
    FrontierRow((0.5, 1.0), (1.5, 2.0, 1.0), 0.5, "black dot"),
    FrontierRow((1.0, 2.0), (3.0, 4.0, 5.0), 1.0, "green x"),
    FrontierRow((1.0, 2.0), (3.0, 4.0, 5.0), 0.5, "green dot"),
)


def illustrative_model(means_alpha=(0.5, 1.0), means_beta=(0.5, 1.0, 0.75),
                       variance: float = 1.0, rho: float = RHO) -> Model:
    """The 5-state example model; defaults match the first frontier row."""
    obs = [Gaussian(m, variance) for m in (*means_alpha, *means_beta)]
    return Model(A_ALPHA, A_BETA, A_NU, rho, obs)


def frontier_model(row: FrontierRow, rho: float = RHO) -> Model:
    return illustrative_model(row.means_alpha, row.means_beta, row.variance, rho)
