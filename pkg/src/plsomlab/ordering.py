"""Numerical replication of the 3-node, 1-D ordering argument.

A 3-node map with weights (w0, w1, w2) in the unit cube is unordered, up
to mirrors and inversions, exactly when w0 <= w2 <= w1 with w0 < w1; that
canonical unordered subspace is called U here.  For uniform input on
[0, 1] and the simplified linear-neighborhood update, the expected update
of each node has a closed piecewise-polynomial form.  The verification
sweeps a cubic grid over U and checks that the expected update strictly
shrinks the L1 distance to a fixed attractor in ordered space; combined
with a bound on the gradient of that scalar field, a fine enough grid
certifies negativity on all of U.

Also here: randomized property suites for the no-overshoot, order-
preservation, and ordering-from-constant lemmas, run against the real
trainers.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad

from .lattice import Constant, Lattice, WeightMatrix, init_weights
from .plsom import PlsomParams, PlsomState, plsom_step
from .som import SomParams, SomState, som_step

CONVENTIONS = ("expectation", "as_printed")

DEFAULT_ATTRACTOR = (377.0 / 1000.0, 121.0 / 200.0, 7.0 / 10.0)


def is_ordered(w) -> bool:
    """True iff the 1-D weight list is strictly increasing or decreasing."""
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.size < 2:
        raise ValueError("need at least 2 weights")
    d = np.diff(w)
    return bool(np.all(d > 0.0) or np.all(d < 0.0))


def in_unordered_subspace(w0, w1, w2) -> np.ndarray:
    """Membership mask for the canonical unordered subspace U (vectorized)."""
    w0, w1, w2 = np.broadcast_arrays(np.asarray(w0, float), np.asarray(w1, float),
                                     np.asarray(w2, float))
    return ((w0 <= w2) & (w2 <= w1) & (w0 < w1)
            & (w0 >= 0.0) & (w0 < 1.0)
            & (w1 > 0.0) & (w1 <= 1.0)
            & (w2 >= 0.0) & (w2 <= 1.0))


def simplified_update(x: float, w, n: int, c: int, r: float = 1.0,
                      beta: float = 2.0) -> float:
    """Linear-neighborhood single-input update of node n when c wins.

    f_n(c) = (|x - w_c| / r) * (1 - |c - n| / beta) * (x - w_n).
    """
    if r <= 0.0 or beta <= 0.0:
        raise ValueError("r and beta must be > 0")
    w = np.asarray(w, dtype=float).reshape(3)
    return float(abs(x - w[c]) / r * (1.0 - abs(c - n) / beta) * (x - w[n]))


def _poly_antideriv(x, wc, wn):
    """Antiderivative of (x - wc)(x - wn)."""
    return x**3 / 3.0 - (wc + wn) * x**2 / 2.0 + wc * wn * x


def _abs_integral(a, b, wc, wn):
    """Integral of |x - wc| (x - wn) over [a, b], any relative position of wc."""
    t = np.clip(wc, a, b)
    return (_poly_antideriv(a, wc, wn) + _poly_antideriv(b, wc, wn)
            - 2.0 * _poly_antideriv(t, wc, wn))


def expected_update_components(w0, w1, w2, r: float = 1.0, beta: float = 2.0,
                               convention: str = "expectation"):
    """Closed-form expected update (u0, u1, u2), vectorized over weight arrays.

    The input x is uniform on [0, 1]; the winner is node 0 below the
    w0/w2 midpoint, node 2 between the two midpoints, and node 1 above
    (the region layout of U, where w0 <= w2 <= w1).  ``expectation``
    integrates f_n over each region, i.e. the plain expected update;
    ``as_printed`` additionally multiplies each region integral by the
    region length, reproducing the prefactors of the published formula.
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    w0, w1, w2 = np.broadcast_arrays(np.asarray(w0, float), np.asarray(w1, float),
                                     np.asarray(w2, float))
    m02 = 0.5 * (w0 + w2)
    m21 = 0.5 * (w2 + w1)
    zero = np.zeros_like(w0)
    one = np.ones_like(w0)
    regions = ((zero, m02, w0, 0), (m02, m21, w2, 2), (m21, one, w1, 1))
    weights = (w0, w1, w2)
    out = []
    for n in range(3):
        wn = weights[n]
        total = np.zeros_like(w0)
        for a, b, wc, c in regions:
            eta = 1.0 - abs(c - n) / beta
            contrib = eta * _abs_integral(a, b, wc, wn)
            if convention == "as_printed":
                contrib = contrib * (b - a)
            total = total + contrib
        out.append(total / r)
    return out[0], out[1], out[2]


def _require_in_u(w) -> np.ndarray:
    w = np.asarray(w, dtype=float).reshape(3)
    if not bool(in_unordered_subspace(w[0], w[1], w[2])):
        raise ValueError(f"weights {tuple(w)} are not in the unordered subspace U")
    return w


def expected_update_vector(w, r: float = 1.0, beta: float = 2.0,
                           convention: str = "expectation") -> np.ndarray:
    """Expected update (u0, u1, u2) at a single U point."""
    w = _require_in_u(w)
    u0, u1, u2 = expected_update_components(w[0], w[1], w[2], r, beta, convention)
    return np.array([float(u0), float(u1), float(u2)])


def expected_update_vector_quadrature(w, r: float = 1.0, beta: float = 2.0) -> np.ndarray:
    """Adaptive numeric quadrature of the same expectation (independent route)."""
    w = _require_in_u(w)
    m02 = 0.5 * (w[0] + w[2])
    m21 = 0.5 * (w[2] + w[1])
    regions = ((0.0, m02, 0), (m02, m21, 2), (m21, 1.0, 1))
    u = np.zeros(3)
    for n in range(3):
        total = 0.0
        for a, b, c in regions:
            if b <= a:
                continue
            f = lambda x: abs(x - w[c]) / r * (1.0 - abs(c - n) / beta) * (x - w[n])
            # split at the winner weight where the integrand has a kink
            t = min(max(w[c], a), b)
            for lo, hi in ((a, t), (t, b)):
                if hi > lo:
                    total += quad(f, lo, hi, epsabs=1e-14, epsrel=1e-13)[0]
        u[n] = total
    return u


def expected_update_vector_mc(w, r: float = 1.0, beta: float = 2.0,
                              samples: int = 10_000_000, seed: int = 0
                              ) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo oracle: average f_n over uniform draws, with standard errors.

    The winner of each draw is the node with the nearest weight, ties going
    to the lowest node index.
    """
    w = _require_in_u(w)
    rng = np.random.default_rng(seed)
    x = rng.random(samples)
    dists = np.abs(x[None, :] - w[:, None])  # rows: node 0, 1, 2
    win = np.argmin(dists, axis=0)  # first minimum = lowest node index
    win_dist = dists[win, np.arange(samples)]
    u = np.empty(3)
    se = np.empty(3)
    for n in range(3):
        f = win_dist / r * (1.0 - np.abs(win - n) / beta) * (x - w[n])
        u[n] = f.mean()
        se[n] = f.std(ddof=1) / math.sqrt(samples)
    return u, se


@dataclass(frozen=True)
class VerifierConfig:
    """Sweep configuration for the computer-assisted ordering check.

    ``threshold`` (d, negative) is the largest field value a sample point
    may have; ``gradient_bound`` (G) bounds the field's gradient length.
    The sweep proves negativity on all of U only when the grid is fine
    enough that no point lies farther than |d| / G from a sample, i.e.
    spacing <= 2|d| / (G * sqrt(3)).  Published alongside is the looser
    printed form sqrt(4 d^2 / 3), which omits the division by G; see
    ``admissible_spacing`` / ``paper_spacing_bound`` on the report.
    """

    attractor: tuple[float, float, float] = DEFAULT_ATTRACTOR
    spacing: float = 5e-3
    threshold: float = -2.2e-3
    gradient_bound: float = 16.5
    r: float = 1.0
    beta: float = 2.0
    convention: str = "expectation"
    require_proof: bool = False

    def __post_init__(self):
        if self.spacing <= 0.0:
            raise ValueError(f"spacing must be > 0, got {self.spacing}")
        if self.threshold >= 0.0:
            raise ValueError(f"threshold must be < 0, got {self.threshold}")
        if self.gradient_bound <= 0.0:
            raise ValueError(f"gradient_bound must be > 0, got {self.gradient_bound}")
        if self.r <= 0.0 or self.beta <= 0.0:
            raise ValueError("r and beta must be > 0")
        if len(self.attractor) != 3:
            raise ValueError("attractor must have 3 components")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"convention must be one of {CONVENTIONS}")
        if self.require_proof and self.spacing > self.admissible_spacing:
            raise ValueError(
                f"spacing {self.spacing} too coarse for a proof-grade sweep: "
                f"maximal admissible spacing is {self.admissible_spacing:.6e}"
            )

    @property
    def admissible_spacing(self) -> float:
        """Largest spacing for which all-points-pass implies negativity on U."""
        return 2.0 * abs(self.threshold) / (self.gradient_bound * math.sqrt(3.0))

    @property
    def paper_spacing_bound(self) -> float:
        """The printed spacing formula sqrt(4 d^2 / 3) (no gradient division)."""
        return math.sqrt(4.0 * self.threshold**2 / 3.0)


def field_value(w, cfg: VerifierConfig) -> float:
    """L1 improvement toward the attractor after one expected update.

    Negative means the expected update moves the configuration closer to
    the attractor (and so toward ordered space).
    """
    w = _require_in_u(w)
    u = expected_update_vector(w, cfg.r, cfg.beta, cfg.convention)
    t = np.asarray(cfg.attractor, dtype=float)
    return float(np.abs(w + u - t).sum() - np.abs(w - t).sum())


def _field_values_chunk(w0, w1, w2, cfg: VerifierConfig) -> np.ndarray:
    u0, u1, u2 = expected_update_components(w0, w1, w2, cfg.r, cfg.beta, cfg.convention)
    t0, t1, t2 = cfg.attractor
    return (np.abs(w0 + u0 - t0) + np.abs(w1 + u1 - t1) + np.abs(w2 + u2 - t2)
            - np.abs(w0 - t0) - np.abs(w1 - t1) - np.abs(w2 - t2))


def grid_axis_values(spacing: float) -> np.ndarray:
    """Grid positions k * spacing covering [0, 1], boundary-inclusive."""
    k = int(math.floor((1.0 + 1e-12) / spacing))
    return np.minimum(np.arange(k + 1) * spacing, 1.0)


@dataclass
class VerificationReport:
    points_checked: int
    max_field_value: float
    argmax: tuple[float, float, float]
    violations: list[tuple[float, float, float]]
    violation_count: int
    elapsed: float
    config: VerifierConfig
    implication_holds: bool

    @property
    def passed(self) -> bool:
        return self.violation_count == 0 and self.max_field_value <= self.config.threshold

    def to_dict(self) -> dict:
        return {
            "points_checked": self.points_checked,
            "max_field_value": self.max_field_value,
            "argmax": list(self.argmax),
            "violation_count": self.violation_count,
            "violations": [list(v) for v in self.violations],
            "elapsed_seconds": round(self.elapsed, 3),
            "passed": self.passed,
            "implication_holds": self.implication_holds,
            "admissible_spacing": self.config.admissible_spacing,
            "paper_spacing_bound": self.config.paper_spacing_bound,
            "spacing": self.config.spacing,
            "threshold": self.config.threshold,
            "gradient_bound": self.config.gradient_bound,
            "attractor": list(self.config.attractor),
            "r": self.config.r,
            "beta": self.config.beta,
            "convention": self.config.convention,
        }


@dataclass
class _SlabResult:
    points: int
    max_value: float
    argmax: tuple[float, float, float]
    violations: list[tuple[float, float, float]]
    violation_count: int


def _sweep_slab(i0: int, vals: np.ndarray, cfg: VerifierConfig,
                violation_cap: int, chunk_elems: int = 2_000_000) -> _SlabResult:
    """Evaluate the field on every U grid point with w0 = vals[i0]."""
    k_max = vals.size - 1
    w0 = float(vals[i0])
    best = -np.inf
    best_at = (w0, w0, w0)
    violations: list[tuple[float, float, float]] = []
    count = 0
    points = 0
    row_block = max(1, chunk_elems // (k_max - i0 + 1))
    for i2_start in range(i0, k_max + 1, row_block):
        i2_end = min(i2_start + row_block, k_max + 1)
        i2_block = np.arange(i2_start, i2_end)
        i1_all = np.arange(i0, k_max + 1)
        mesh_i2, mesh_i1 = np.meshgrid(i2_block, i1_all, indexing="ij")
        mask = (mesh_i1 >= mesh_i2) & (mesh_i1 >= i0 + 1)
        if not np.any(mask):
            continue
        w2 = vals[mesh_i2[mask]]
        w1 = vals[mesh_i1[mask]]
        f = _field_values_chunk(np.full_like(w2, w0), w1, w2, cfg)
        points += f.size
        j = int(np.argmax(f))
        if f[j] > best:
            best = float(f[j])
            best_at = (w0, float(w1[j]), float(w2[j]))
        bad = f > cfg.threshold
        nbad = int(bad.sum())
        if nbad:
            count += nbad
            if len(violations) < violation_cap:
                take = min(violation_cap - len(violations), nbad)
                idx = np.flatnonzero(bad)[:take]
                violations.extend((w0, float(a), float(b))
                                  for a, b in zip(w1[idx], w2[idx]))
    return _SlabResult(points, best, best_at, violations, count)


def verify_lemma4(cfg: VerifierConfig, workers: int = 1,
                  checkpoint_path=None, resume: bool = False,
                  progress: Optional[Callable[[int, int], None]] = None,
                  violation_cap: int = 1000,
                  progress_points: int = 10_000_000) -> VerificationReport:
    """Sweep the U grid and report the maximal field value and violations.

    Deterministic and independent of ``workers`` and of checkpointing: slabs
    of constant w0 are reduced in ascending w0 order.  When a checkpoint
    path is given, progress is persisted roughly every ``progress_points``
    evaluated points so a paper-scale sweep can be resumed (``resume=True``).
    At most ``violation_cap`` violating points are stored (the count is
    exact); the stored list is sorted by coordinates.
    """
    t_start = time.monotonic()
    vals = grid_axis_values(cfg.spacing)
    # w0 < 1 excludes a final axis value that equals 1 exactly
    slab_indices = [i for i in range(vals.size) if vals[i] < 1.0]

    start_slab = 0
    points = 0
    best = -np.inf
    best_at: tuple[float, float, float] = (0.0, 0.0, 0.0)
    violations: list[tuple[float, float, float]] = []
    count = 0
    ckpt = Path(checkpoint_path) if checkpoint_path is not None else None
    if ckpt is not None and resume and ckpt.exists():
        state = json.loads(ckpt.read_text())
        if state.get("spacing") != cfg.spacing:
            raise ValueError(f"checkpoint {ckpt} was written for spacing "
                             f"{state.get('spacing')}, not {cfg.spacing}")
        start_slab = int(state["next_slab"])
        points = int(state["points_checked"])
        best = float(state["max_field_value"])
        best_at = tuple(state["argmax"])
        count = int(state["violation_count"])
        violations = [tuple(v) for v in state["violations"]]

    def save_checkpoint(next_slab: int) -> None:
        if ckpt is None:
            return
        ckpt.write_text(json.dumps({
            "spacing": cfg.spacing,
            "next_slab": next_slab,
            "points_checked": points,
            "max_field_value": best if np.isfinite(best) else None,
            "argmax": list(best_at),
            "violation_count": count,
            "violations": [list(v) for v in violations],
        }))

    def reduce_slab(res: _SlabResult) -> None:
        nonlocal points, best, best_at, count
        points += res.points
        if res.max_value > best:
            best = res.max_value
            best_at = res.argmax
        count += res.violation_count
        room = violation_cap - len(violations)
        if room > 0:
            violations.extend(res.violations[:room])

    pending = slab_indices[start_slab:]
    last_checkpoint = points
    if workers <= 1:
        for k, i0 in enumerate(pending):
            reduce_slab(_sweep_slab(i0, vals, cfg, violation_cap))
            if progress is not None:
                progress(points, len(slab_indices))
            if points - last_checkpoint >= progress_points:
                save_checkpoint(start_slab + k + 1)
                last_checkpoint = points
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            batch = max(1, workers)
            for off in range(0, len(pending), batch):
                chunk = pending[off:off + batch]
                futures = [pool.submit(_sweep_slab, i0, vals, cfg, violation_cap)
                           for i0 in chunk]
                for fut in futures:  # reduce in slab order for determinism
                    reduce_slab(fut.result())
                if progress is not None:
                    progress(points, len(slab_indices))
                if points - last_checkpoint >= progress_points:
                    save_checkpoint(start_slab + off + len(chunk))
                    last_checkpoint = points
    save_checkpoint(len(slab_indices))
    violations.sort()
    return VerificationReport(
        points_checked=points,
        max_field_value=float(best),
        argmax=best_at,
        violations=violations,
        violation_count=count,
        elapsed=time.monotonic() - t_start,
        config=cfg,
        implication_holds=cfg.spacing <= cfg.admissible_spacing,
    )


# ---------------------------------------------------------------------------
# Randomized lemma suites, run against the actual trainers.


@dataclass
class LemmaSuiteReport:
    trials: int
    lemma1_violations: list
    lemma2_violations: list
    lemma3_violations: list
    elapsed: float

    @property
    def passed(self) -> bool:
        return not (self.lemma1_violations or self.lemma2_violations
                    or self.lemma3_violations)

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "passed": self.passed,
            "lemma1_violation_count": len(self.lemma1_violations),
            "lemma2_violation_count": len(self.lemma2_violations),
            "lemma3_violation_count": len(self.lemma3_violations),
            "lemma1_examples": self.lemma1_violations[:5],
            "lemma2_examples": self.lemma2_violations[:5],
            "lemma3_examples": self.lemma3_violations[:5],
            "elapsed_seconds": round(self.elapsed, 3),
        }


def _line_lattice(n: int, cache={}) -> Lattice:
    if n not in cache:
        cache[n] = Lattice((n,))
    return cache[n]


def lemma_property_suites(seed: int = 0, trials: int = 100_000,
                          max_examples: int = 10) -> LemmaSuiteReport:
    """Randomized checks of the three ordering lemmas.

    Lemma 1 (no overshoot) is exercised on PLSOM and SOM steps with random
    weights, normalizer and input; Lemma 2 (an ordered 1-D map stays
    ordered) on random strictly monotone maps of 3 to 50 nodes; Lemma 3 on
    constant maps hit by one non-constant input.  Any counterexample is
    recorded verbatim.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    t_start = time.monotonic()
    rng = np.random.default_rng(seed)
    l1: list = []
    l2: list = []
    l3: list = []

    for _ in range(trials):
        n = int(rng.integers(3, 11))
        lat = _line_lattice(n)
        w = rng.random(n)
        beta = float(rng.uniform(1.5, 12.0))
        params = PlsomParams(beta=beta, theta_min=float(rng.uniform(0.0, 1.0)),
                             theta_variant=("linear", "affine", "log")[int(rng.integers(3))])
        r_prev = float(rng.uniform(0.0, 2.0))
        x = float(rng.uniform(-0.25, 1.25))
        before = w.copy()
        state = PlsomState(lat, WeightMatrix(w.reshape(-1, 1)), r=r_prev)
        plsom_step(state, [x], params)
        after = state.weights.values[:, 0]
        gap_before = x - before
        gap_after = x - after
        overshoot = (np.abs(after - before) > np.abs(gap_before) + 1e-12) | \
                    (gap_after * gap_before < -1e-12)
        if np.any(overshoot) and len(l1) < max_examples:
            l1.append({"trainer": "plsom", "weights": before.tolist(),
                       "r": r_prev, "x": x, "after": after.tolist()})

        alpha = float(rng.uniform(0.0, 1.0)) or 0.5
        sp = SomParams(alpha0=alpha, beta0=float(rng.uniform(0.5, 8.0)),
                       delta_alpha=0.999, delta_beta=0.999)
        w2 = rng.random(n)
        before2 = w2.copy()
        sstate = SomState(lat, sp, WeightMatrix(w2.reshape(-1, 1)))
        som_step(sstate, [x])
        after2 = sstate.weights.values[:, 0]
        gap_b = x - before2
        gap_a = x - after2
        overshoot = (np.abs(after2 - before2) > np.abs(gap_b) + 1e-12) | \
                    (gap_a * gap_b < -1e-12)
        if np.any(overshoot) and len(l1) < max_examples:
            l1.append({"trainer": "som", "weights": before2.tolist(),
                       "alpha": alpha, "x": x, "after": after2.tolist()})

    for _ in range(trials):
        n = int(rng.integers(3, 51))
        lat = _line_lattice(n)
        w = np.sort(rng.random(n))
        while np.any(np.diff(w) == 0.0):  # vanishing probability; keeps strictness
            w = np.sort(rng.random(n))
        if rng.random() < 0.5:
            w = w[::-1].copy()
        params = PlsomParams(beta=float(rng.uniform(1.5, 12.0)))
        r_prev = float(rng.uniform(0.0, 2.0))
        x = float(rng.uniform(-0.25, 1.25))
        before = w.copy()
        state = PlsomState(lat, WeightMatrix(w.reshape(-1, 1)), r=r_prev)
        plsom_step(state, [x], params)
        after = state.weights.values[:, 0]
        if not is_ordered(after) and len(l2) < max_examples:
            l2.append({"weights": before.tolist(), "r": r_prev, "x": x,
                       "after": after.tolist()})

    for _ in range(trials):
        n = int(rng.integers(3, 51))
        lat = _line_lattice(n)
        a = float(rng.random())
        x = float(rng.uniform(-0.25, 1.25))
        while abs(x - a) < 1e-3:
            x = float(rng.uniform(-0.25, 1.25))
        # strict monotonicity is a real-arithmetic statement; keep the far
        # nodes' updates h * (x - a) above double rounding so it stays
        # observable: (n-1)^2 / beta^2 <= 25 gives h >= 1.4e-11
        beta_lo = max(1.5, (n - 1) / 5.0)
        params = PlsomParams(beta=float(rng.uniform(beta_lo, 12.0)))
        w = init_weights(lat, 1, seed=0, scheme=Constant(a))
        state = PlsomState(lat, w)
        plsom_step(state, [x], params)
        if not is_ordered(state.weights.values[:, 0]) and len(l3) < max_examples:
            l3.append({"a": a, "x": x, "nodes": n,
                       "after": state.weights.values[:, 0].tolist()})

    return LemmaSuiteReport(trials, l1, l2, l3, time.monotonic() - t_start)
