"""Baseline SOM trainer: Gaussian neighborhood, exponential annealing.

This is the "plain SOM" used as the comparison baseline: learning rate and
neighborhood size both decay by a constant factor per iteration, so the
update magnitude depends on the iteration number and not on how well the
map currently fits the data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import Lattice, WeightMatrix, grid_distances_from

# Neighborhood widths below this are numerically indistinguishable from a
# winner-only update; flooring avoids division by zero in very long runs.
BETA_FLOOR = 1e-6


@dataclass(frozen=True)
class SomParams:
    """Annealing constants for the plain SOM.

    alpha0 : initial learning rate, in (0, 1].
    beta0 : initial neighborhood size, > 0.
    delta_alpha, delta_beta : per-iteration decay factors, in (0, 1).
    """

    alpha0: float = 0.9
    beta0: float = 10.0
    delta_alpha: float = 0.99995
    delta_beta: float = 0.99995

    def __post_init__(self):
        if not 0.0 < self.alpha0 <= 1.0:
            raise ValueError(f"alpha0 must be in (0, 1], got {self.alpha0}")
        if self.beta0 <= 0.0:
            raise ValueError(f"beta0 must be > 0, got {self.beta0}")
        for name in ("delta_alpha", "delta_beta"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must be in (0, 1), got {v}")

    @classmethod
    def for_run(cls, lattice: Lattice, run_length: int,
                alpha0: float = 0.9, final_fraction: float = 0.01) -> "SomParams":
        """Defaults for a run of known length.

        beta0 is half the larger grid extent; the decay factors are chosen so
        that alpha and beta both reach ``final_fraction`` of their initial
        value after ``run_length`` iterations.
        """
        if run_length < 1:
            raise ValueError("run_length must be >= 1")
        if not 0.0 < final_fraction < 1.0:
            raise ValueError("final_fraction must be in (0, 1)")
        delta = final_fraction ** (1.0 / run_length)
        return cls(alpha0=alpha0, beta0=max(lattice.extents) / 2.0,
                   delta_alpha=delta, delta_beta=delta)


@dataclass
class SomState:
    """Mutable per-run state: iteration counter, current rates, weights."""

    lattice: Lattice
    params: SomParams
    weights: WeightMatrix
    t: int = 0
    alpha: float = None  # type: ignore[assignment]
    beta: float = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.alpha is None:
            self.alpha = self.params.alpha0
        if self.beta is None:
            self.beta = self.params.beta0


def gaussian_neighborhood(d: float, width: float) -> float:
    """exp(-d^2 / width^2): 1 at the winner, decaying with grid distance."""
    if width <= 0.0:
        raise ValueError(f"neighborhood width must be > 0, got {width}")
    return math.exp(-(d * d) / (width * width))


def som_step(state: SomState, x) -> SomState:
    """One training iteration: winner search, neighborhood update, annealing.

    Every node i moves by ``alpha * h(d(i, c)) * (x - w_i)``, then alpha and
    beta decay by their constant factors and t is incremented.  The state is
    updated in place and returned.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"non-finite input component in {x}")
    w = state.weights
    if x.shape != (w.input_dim,):
        raise ValueError(f"input has shape {x.shape}, expected ({w.input_dim},)")
    diff = x - w.values
    d2 = np.einsum("ij,ij->i", diff, diff)
    c = int(np.argmin(d2))
    g = grid_distances_from(state.lattice, c)
    h = np.exp(-(g * g) / (state.beta * state.beta))
    a = state.alpha * h
    w.values += a[:, None] * diff
    # a full-rate update lands on the input exactly, not within rounding
    full = a == 1.0
    if full.any():
        w.values[full] = x
    state.alpha *= state.params.delta_alpha
    state.beta = max(state.beta * state.params.delta_beta, BETA_FLOOR)
    state.t += 1
    return state


def frozen_som_displacement(state: SomState):
    """Single-step displacement field at the current (frozen) SOM state.

    Returns a function x -> (node_count, input_dim) array of hypothetical
    weight updates.  Nothing is mutated; alpha, beta and the weights are the
    snapshot values.
    """
    alpha = state.alpha
    beta = state.beta
    values = state.weights.values.copy()
    lattice = state.lattice

    def displacement(x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        diff = x - values
        d2 = np.einsum("ij,ij->i", diff, diff)
        c = int(np.argmin(d2))
        g = grid_distances_from(lattice, c)
        h = np.exp(-(g * g) / (beta * beta))
        return alpha * h[:, None] * diff

    return displacement
