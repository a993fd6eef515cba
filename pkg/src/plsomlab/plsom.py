"""Parameter-less SOM trainer.

The learning rate and the annealing schedules are replaced by epsilon, the
distance from the input to the winning weight normalized by the running
maximum r of that distance.  The neighborhood width is a function of
epsilon and the constant neighborhood size beta, so a poorly fitted input
produces a large, wide update and a well fitted one barely moves the map.
The update law has no dependence on the iteration number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .lattice import Lattice, WeightMatrix, grid_distances_from

THETA_VARIANTS = ("linear", "affine", "log")

# Guards floating-point underflow in the h exponent when theta_min = 0 and
# epsilon is denormal-small; mathematically theta > 0 already holds then.
THETA_FLOOR = 1e-9


@dataclass(frozen=True)
class PlsomParams:
    """Constant neighborhood size and the epsilon-to-width mapping.

    theta_variant selects how the neighborhood width follows epsilon:
      linear : max(beta * eps, theta_min)
      affine : (beta - theta_min) * eps + theta_min
      log    : (beta - theta_min) * ln(1 + eps * (e - 1)) + theta_min

    theta_min defaults to 1 for linear/affine and 0 for log, the customary
    values for each variant.
    """

    beta: float = 10.0
    theta_min: Optional[float] = None
    theta_variant: str = "affine"

    def __post_init__(self):
        if self.beta <= 0.0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if self.theta_variant not in THETA_VARIANTS:
            raise ValueError(
                f"theta_variant must be one of {THETA_VARIANTS}, got {self.theta_variant!r}"
            )
        if self.theta_min is None:
            object.__setattr__(self, "theta_min",
                               0.0 if self.theta_variant == "log" else 1.0)
        if self.theta_min < 0.0:
            raise ValueError(f"theta_min must be >= 0, got {self.theta_min}")
        if self.beta < self.theta_min:
            raise ValueError(
                f"beta ({self.beta}) must be >= theta_min ({self.theta_min})"
            )


@dataclass
class PlsomState:
    """Mutable per-run state: iteration counter, normalizer r, weights.

    ``r_override``, when set, fixes the epsilon normalizer instead of the
    running maximum (used to reproduce late-training behavior from a fresh
    configuration); r is then never updated.
    """

    lattice: Lattice
    weights: WeightMatrix
    t: int = 0
    r: float = 0.0
    r_override: Optional[float] = None


def epsilon_update(x, w_c, r_prev: float) -> tuple[float, float]:
    """Normalized winner distance and the updated running maximum.

    r_new = max(||x - w_c||, r_prev); epsilon = ||x - w_c|| / r_new, taken
    as 0 in the degenerate all-zero case.  On the first input (r_prev = 0,
    nonzero distance) epsilon is exactly 1.
    """
    if r_prev < 0.0:
        raise ValueError(f"r_prev must be >= 0, got {r_prev}")
    dist = float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(w_c, dtype=float)))
    r_new = max(dist, r_prev)
    eps = dist / r_new if r_new > 0.0 else 0.0
    return eps, r_new


def theta(epsilon: float, params: PlsomParams) -> float:
    """Neighborhood width for a given epsilon; >= theta_min, nondecreasing."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    b, tm = params.beta, params.theta_min
    if params.theta_variant == "linear":
        return max(b * epsilon, tm)
    if params.theta_variant == "affine":
        return (b - tm) * epsilon + tm
    return (b - tm) * math.log(1.0 + epsilon * (math.e - 1.0)) + tm


def plsom_step(state: PlsomState, x, params: PlsomParams) -> PlsomState:
    """One training iteration driven by the fitting error epsilon.

    Winner search, epsilon/r update (or the override normalizer), then every
    node i moves by ``eps * exp(-d(i,c)^2 / theta(eps)^2) * (x - w_i)``.
    eps = 0 leaves the weights untouched.  Updated in place and returned.
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
    dist = math.sqrt(d2[c])
    if state.r_override is not None:
        if state.r_override <= 0.0:
            raise ValueError(f"r_override must be > 0, got {state.r_override}")
        eps = min(dist / state.r_override, 1.0)
    else:
        eps, state.r = epsilon_update(x, w.values[c], state.r)
    if eps > 0.0:
        th = max(theta(eps, params), THETA_FLOOR)
        g = grid_distances_from(state.lattice, c)
        h = np.exp(-(g * g) / (th * th))
        a = eps * h
        w.values += a[:, None] * diff
        # a full-rate update lands on the input exactly, not within rounding
        full = a == 1.0
        if full.any():
            w.values[full] = x
    state.t += 1
    return state


def frozen_plsom_displacement(state: PlsomState, params: PlsomParams):
    """Single-step displacement field at the current (frozen) PLSOM state.

    Returns x -> (node_count, input_dim) hypothetical updates with r held at
    its snapshot value (epsilon clamped to 1 for inputs farther than r, as a
    live step would enforce by raising r).
    """
    r = state.r_override if state.r_override is not None else state.r
    values = state.weights.values.copy()
    lattice = state.lattice

    def displacement(x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        diff = x - values
        d2 = np.einsum("ij,ij->i", diff, diff)
        c = int(np.argmin(d2))
        dist = math.sqrt(d2[c])
        if r > 0.0:
            eps = min(dist / r, 1.0)
        else:
            eps = 1.0 if dist > 0.0 else 0.0
        if eps == 0.0:
            return np.zeros_like(values)
        th = max(theta(eps, params), THETA_FLOOR)
        g = grid_distances_from(lattice, c)
        h = np.exp(-(g * g) / (th * th))
        return eps * h[:, None] * diff

    return displacement
