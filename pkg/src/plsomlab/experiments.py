"""Scripted reproductions of the comparison experiments.

An experiment is a trainer, a lattice, and a schedule of input-distribution
phases consumed from one seeded stream, with map-quality metrics sampled on
a fixed cadence and weight snapshots at phase boundaries and requested
iterations.  Running the same spec twice produces byte-identical result
files; both trainers given the same seed consume the identical input
sequence, which is what makes the side-by-side comparisons meaningful.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .lattice import Lattice, WeightMatrix, rng_streams, write_weights_csv
from .metrics import MetricsSample, sample_metrics, write_metrics_csv
from .plsom import PlsomParams, PlsomState, plsom_step
from .runio import write_manifest, write_summary
from .som import SomParams, SomState, som_step
from .update_field import ClippedGaussian, InputDistribution, UniformBoxDist


@dataclass(frozen=True)
class Phase:
    dist: InputDistribution
    iterations: int

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("phase iteration count must be >= 1")


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to rerun one training experiment bit-for-bit."""

    name: str
    trainer: str  # "som" | "plsom"
    extents: tuple[int, ...] = (20, 20)
    phases: tuple[Phase, ...] = ()
    seed: int = 1
    som_params: Optional[SomParams] = None
    plsom_params: Optional[PlsomParams] = None
    metric_cadence: int = 250
    snapshot_at: tuple[int, ...] = ()
    total_area: float = 1.0
    init_lo: float = 0.4
    init_hi: float = 0.6
    r_override: Optional[float] = None
    initial_weights: Optional[np.ndarray] = None  # overrides the init box

    def __post_init__(self):
        if self.trainer not in ("som", "plsom"):
            raise ValueError(f"trainer must be 'som' or 'plsom', got {self.trainer!r}")
        if not self.phases:
            raise ValueError("at least one phase is required")
        if self.metric_cadence < 1:
            raise ValueError("metric_cadence must be >= 1")

    @property
    def total_iterations(self) -> int:
        return sum(p.iterations for p in self.phases)

    def describe(self) -> dict:
        d = {
            "name": self.name,
            "trainer": self.trainer,
            "extents": list(self.extents),
            "seed": self.seed,
            "metric_cadence": self.metric_cadence,
            "snapshot_at": list(self.snapshot_at),
            "total_area": self.total_area,
            "init_box": [self.init_lo, self.init_hi],
            "phases": [_describe_dist(p.dist) | {"iterations": p.iterations}
                       for p in self.phases],
        }
        if self.trainer == "som":
            p = self.som_params
            d["som_params"] = {"alpha0": p.alpha0, "beta0": p.beta0,
                               "delta_alpha": p.delta_alpha, "delta_beta": p.delta_beta}
        else:
            p = self.plsom_params
            d["plsom_params"] = {"beta": p.beta, "theta_min": p.theta_min,
                                 "theta_variant": p.theta_variant}
            if self.r_override is not None:
                d["r_override"] = self.r_override
        if self.initial_weights is not None:
            d["initial_weights"] = "explicit"
        return d


def _describe_dist(dist: InputDistribution) -> dict:
    if isinstance(dist, UniformBoxDist):
        lo, hi = dist.support
        return {"dist": "uniform", "lo": lo.tolist(), "hi": hi.tolist()}
    lo, hi = dist.support
    return {"dist": "gaussian", "mean": np.broadcast_to(dist.mean, (dist.dim,)).tolist(),
            "sd": dist.sd, "lo": lo.tolist(), "hi": hi.tolist()}


@dataclass
class RunResult:
    spec: ExperimentSpec
    samples: list[MetricsSample]
    snapshots: dict[int, np.ndarray]
    final_weights: WeightMatrix
    summary: dict
    out_dir: Optional[Path] = None


def _default_params(spec: ExperimentSpec) -> ExperimentSpec:
    lattice = Lattice(spec.extents)
    if spec.trainer == "som" and spec.som_params is None:
        spec = replace(spec, som_params=SomParams.for_run(lattice, spec.total_iterations))
    if spec.trainer == "plsom" and spec.plsom_params is None:
        spec = replace(spec, plsom_params=default_plsom_params(lattice))
    return spec


def default_plsom_params(lattice: Lattice) -> PlsomParams:
    """House default: affine width map with the grid diagonal as beta.

    The constant neighborhood size must be large enough that a badly
    ordered input (epsilon near 1) reorders the whole map, so it scales
    with the grid diagonal rather than a single extent.
    """
    diag = float(np.linalg.norm([e - 1 for e in lattice.extents]))
    return PlsomParams(beta=max(diag, 2.0), theta_min=1.0, theta_variant="affine")


def _metrics_possible(spec: ExperimentSpec, input_dim: int) -> bool:
    return (len(spec.extents) == 2 and input_dim == 2
            and min(spec.extents) >= 4)


def run(spec: ExperimentSpec, out_dir=None) -> RunResult:
    """Execute one experiment; optionally write its artifact bundle.

    Stream 0 of ``rng_streams(seed, 2)`` draws the initial weights, stream
    1 the inputs (each phase's samples are drawn in one batch, in phase
    order).  Snapshots are taken at iteration 0 and every phase boundary,
    plus any iterations in ``spec.snapshot_at``.
    """
    t_start = time.monotonic()
    spec = _default_params(spec)
    lattice = Lattice(spec.extents)
    input_dim = spec.phases[0].dist.support[0].size
    for p in spec.phases:
        if p.dist.support[0].size != input_dim:
            raise ValueError("all phases must share one input dimension")

    rng_init, rng_inputs = rng_streams(spec.seed, 2)
    if spec.initial_weights is not None:
        w = WeightMatrix(np.array(spec.initial_weights, dtype=float))
    else:
        w = WeightMatrix(spec.init_lo + (spec.init_hi - spec.init_lo)
                         * rng_init.random((lattice.node_count, input_dim)))

    if spec.trainer == "som":
        state = SomState(lattice, spec.som_params, w)
        step = lambda x: som_step(state, x)
    else:
        state = PlsomState(lattice, w, r_override=spec.r_override)
        step = lambda x: plsom_step(state, x, spec.plsom_params)

    do_metrics = _metrics_possible(spec, input_dim)
    samples: list[MetricsSample] = []
    snapshots: dict[int, np.ndarray] = {}
    boundaries = set(np.cumsum([p.iterations for p in spec.phases]).tolist())
    wanted = set(spec.snapshot_at) | boundaries | {0}

    t = 0
    if do_metrics:
        samples.append(sample_metrics(lattice, state.weights, 0, spec.total_area))
    if 0 in wanted:
        snapshots[0] = state.weights.values.copy()
    for phase in spec.phases:
        draws = phase.dist.sample(rng_inputs, phase.iterations)
        for x in draws:
            step(x)
            t += 1
            if t in wanted:
                snapshots[t] = state.weights.values.copy()
            if do_metrics and (t % spec.metric_cadence == 0 or t == spec.total_iterations):
                samples.append(sample_metrics(lattice, state.weights, t, spec.total_area))

    summary: dict = {"spec": spec.describe(), "iterations": t,
                     "snapshot_iterations": sorted(snapshots)}
    if do_metrics:
        last = samples[-1]
        summary["final_metrics"] = {
            "iteration": last.iteration,
            "unused_space": last.unused_space,
            "avg_skew": last.avg_skew,
            "cell_dev_all": last.cell_dev_all,
            "cell_dev_interior": last.cell_dev_interior,
            "twist_flips": last.twist_flips,
        }
        summary["covered_fraction"] = 1.0 - last.unused_space
        summary["twist_flips"] = last.twist_flips
    if spec.trainer == "plsom":
        summary["final_r"] = state.r if spec.r_override is None else None
        summary["r_override"] = spec.r_override

    result = RunResult(spec, samples, snapshots, state.weights, summary)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        if do_metrics:
            write_metrics_csv(out_dir / "metrics.csv", samples)
        for it in sorted(snapshots):
            write_weights_csv(out_dir / f"weights_iter_{it}.csv",
                              WeightMatrix(snapshots[it]))
        write_weights_csv(out_dir / "weights_final.csv", state.weights)
        write_summary(out_dir, summary)
        write_manifest(out_dir, spec.describe(),
                       {"run": time.monotonic() - t_start})
        result.out_dir = out_dir
    return result


# --- canned specs -----------------------------------------------------------


def uniform_square(lo: float = 0.0, hi: float = 1.0) -> UniformBoxDist:
    return UniformBoxDist(lo, hi, dim=2)


def section_iv_gaussian() -> ClippedGaussian:
    """The warping experiment's input: N(0.5, 0.2^2) per axis, clipped to [0,1]."""
    return ClippedGaussian(mean=0.5, sd=0.2, lo=0.0, hi=1.0, dim=2)


def uniform_comparison_spec(trainer: str, seed: int = 1,
                            iterations: int = 100_000,
                            extents: tuple[int, int] = (20, 20),
                            **kwargs) -> ExperimentSpec:
    return ExperimentSpec(name=f"uniform-{trainer}", trainer=trainer,
                          extents=extents,
                          phases=(Phase(uniform_square(), iterations),),
                          seed=seed, **kwargs)


def plasticity_spec(trainer: str, seed: int = 1, **kwargs) -> ExperimentSpec:
    """Small range first, then the full range: does the map re-expand?"""
    return ExperimentSpec(name=f"plasticity-{trainer}", trainer=trainer,
                          phases=(Phase(uniform_square(0.0, 0.5), 50_000),
                                  Phase(uniform_square(0.0, 1.0), 20_000)),
                          seed=seed, **kwargs)


def memory_spec(trainer: str, seed: int = 1, **kwargs) -> ExperimentSpec:
    """Full range first, then a confined range: is coverage retained?"""
    return ExperimentSpec(name=f"memory-{trainer}", trainer=trainer,
                          phases=(Phase(uniform_square(0.0, 1.0), 50_000),
                                  Phase(uniform_square(0.0, 0.5), 20_000)),
                          seed=seed, **kwargs)


def gaussian_warping_spec(trainer: str, seed: int = 1,
                          extents: tuple[int, int] = (20, 20),
                          iterations: int = 100_000, **kwargs) -> ExperimentSpec:
    return ExperimentSpec(name=f"gaussian-{trainer}-{extents[0]}x{extents[1]}",
                          trainer=trainer, extents=extents,
                          phases=(Phase(section_iv_gaussian(), iterations),),
                          seed=seed, **kwargs)


def gaussian_warping(trainer: str, seed: int = 1,
                     extents: tuple[int, int] = (20, 20),
                     iterations: int = 100_000, out_dir=None,
                     **kwargs) -> RunResult:
    """Run the warping experiment; summary carries covered fraction and twist."""
    return run(gaussian_warping_spec(trainer, seed, extents, iterations, **kwargs),
               out_dir=out_dir)


def fold_initialization(extents: tuple[int, int]) -> np.ndarray:
    """A documented pathological start: the map folded in half onto itself.

    Grid coordinate fractions (u, v) map to the central box [0.4, 0.6]^2,
    but u passes through a tent fold so the two halves of the map coincide
    with opposite orientation.
    """
    m, n = extents
    a, b = np.meshgrid(np.arange(m), np.arange(n), indexing="ij")
    u = a / (m - 1)
    v = b / (n - 1)
    folded = np.where(u <= 0.5, 2.0 * u, 2.0 * (1.0 - u))
    x = 0.4 + 0.2 * folded
    y = 0.4 + 0.2 * v
    return np.stack([x.reshape(-1), y.reshape(-1)], axis=1)


def difficult_init_spec(forced_r: float = 0.65,
                        snapshots: tuple[int, ...] = (0, 400, 480, 650),
                        seed: int = 1, iterations: Optional[int] = None,
                        extents: tuple[int, int] = (8, 8)) -> ExperimentSpec:
    """Folded 8x8 PLSOM, log width map, wide neighborhood, forced normalizer."""
    if forced_r <= 0.0:
        raise ValueError("forced_r must be > 0")
    total = iterations if iterations is not None else max(max(snapshots), 1)
    return ExperimentSpec(
        name="difficult-init", trainer="plsom", extents=extents,
        phases=(Phase(uniform_square(), total),), seed=seed,
        plsom_params=PlsomParams(beta=11.0, theta_min=0.0, theta_variant="log"),
        metric_cadence=50, snapshot_at=tuple(snapshots),
        r_override=forced_r, initial_weights=fold_initialization(extents))


def difficult_init_evolution(forced_r: float = 0.65,
                             snapshots: tuple[int, ...] = (0, 400, 480, 650),
                             seed: int = 1, out_dir=None,
                             iterations: Optional[int] = None) -> RunResult:
    return run(difficult_init_spec(forced_r, snapshots, seed, iterations),
               out_dir=out_dir)


def som_sweep(lattice: Lattice, run_length: int) -> list[tuple[str, SomParams]]:
    """The documented annealing sweep used wherever 'best SOM' is reported."""
    out = []
    for alpha0 in (0.9, 0.5):
        for ff in (0.01, 0.1):
            name = f"a{alpha0}-f{ff}"
            out.append((name, SomParams.for_run(lattice, run_length,
                                                alpha0=alpha0, final_fraction=ff)))
    return out


BUILTIN_EXPERIMENTS = {
    "uniform-plsom": lambda seed: uniform_comparison_spec("plsom", seed),
    "uniform-som": lambda seed: uniform_comparison_spec("som", seed),
    "plasticity-plsom": lambda seed: plasticity_spec("plsom", seed),
    "plasticity-som": lambda seed: plasticity_spec("som", seed),
    "memory-plsom": lambda seed: memory_spec("plsom", seed),
    "memory-som": lambda seed: memory_spec("som", seed),
    "gaussian-plsom": lambda seed: gaussian_warping_spec("plsom", seed),
    "gaussian-som": lambda seed: gaussian_warping_spec("som", seed),
    "gaussian-som-7x7": lambda seed: gaussian_warping_spec("som", seed, extents=(7, 7)),
    "difficult-init": lambda seed: difficult_init_spec(seed=seed),
}

BUILTIN_DESCRIPTIONS = {
    "uniform-plsom": "PLSOM, 20x20, uniform [0,1]^2, 100000 iterations",
    "uniform-som": "plain SOM, 20x20, uniform [0,1]^2, 100000 iterations",
    "plasticity-plsom": "PLSOM, [0,0.5]^2 x50000 then [0,1]^2 x20000",
    "plasticity-som": "plain SOM, [0,0.5]^2 x50000 then [0,1]^2 x20000",
    "memory-plsom": "PLSOM, [0,1]^2 x50000 then [0,0.5]^2 x20000",
    "memory-som": "plain SOM, [0,1]^2 x50000 then [0,0.5]^2 x20000",
    "gaussian-plsom": "PLSOM, 20x20, clipped N(0.5, 0.2^2) input, 100000 iterations",
    "gaussian-som": "plain SOM, 20x20, clipped N(0.5, 0.2^2) input",
    "gaussian-som-7x7": "plain SOM, 7x7, clipped N(0.5, 0.2^2) input",
    "difficult-init": "folded 8x8 PLSOM with forced normalizer r = 0.65",
}


# --- flat text spec files ----------------------------------------------------

SPEC_KEYS = ("name", "trainer", "lattice", "seed", "metric_cadence",
             "snapshot_at", "total_area", "init_lo", "init_hi", "r_override",
             "som_alpha0", "som_beta0", "som_delta_alpha", "som_delta_beta",
             "plsom_beta", "plsom_theta_min", "plsom_theta_variant", "phase")


def parse_experiment_file(path) -> ExperimentSpec:
    """Parse the flat ``key = value`` experiment format.

    Recognized keys: name, trainer (som|plsom), lattice (e.g. 20x20), seed,
    metric_cadence, snapshot_at (space-separated iterations), total_area,
    init_lo, init_hi, r_override, som_alpha0, som_beta0, som_delta_alpha,
    som_delta_beta, plsom_beta, plsom_theta_min, plsom_theta_variant, and
    one ``phase`` line per phase:

        phase = uniform LO HI ITERATIONS
        phase = gaussian MEAN SD LO HI ITERATIONS

    Lines starting with ``#`` are comments.
    """
    path = Path(path)
    kv: dict[str, str] = {}
    phases: list[Phase] = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in SPEC_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        if key == "phase":
            phases.append(_parse_phase(value, f"{path}:{lineno}"))
        else:
            kv[key] = value

    if "trainer" not in kv:
        raise ValueError(f"{path}: missing required key 'trainer'")
    if not phases:
        raise ValueError(f"{path}: at least one 'phase' line is required")
    extents = _parse_extents(kv.get("lattice", "20x20"))
    trainer = kv["trainer"]
    som_params = None
    plsom_params = None
    if trainer == "som" and "som_alpha0" in kv:
        som_params = SomParams(float(kv["som_alpha0"]), float(kv["som_beta0"]),
                               float(kv["som_delta_alpha"]), float(kv["som_delta_beta"]))
    if trainer == "plsom" and "plsom_beta" in kv:
        plsom_params = PlsomParams(
            float(kv["plsom_beta"]),
            float(kv["plsom_theta_min"]) if "plsom_theta_min" in kv else None,
            kv.get("plsom_theta_variant", "affine"))
    return ExperimentSpec(
        name=kv.get("name", path.stem),
        trainer=trainer,
        extents=extents,
        phases=tuple(phases),
        seed=int(kv.get("seed", "1")),
        som_params=som_params,
        plsom_params=plsom_params,
        metric_cadence=int(kv.get("metric_cadence", "250")),
        snapshot_at=tuple(int(v) for v in kv.get("snapshot_at", "").split()),
        total_area=float(kv.get("total_area", "1")),
        init_lo=float(kv.get("init_lo", "0.4")),
        init_hi=float(kv.get("init_hi", "0.6")),
        r_override=float(kv["r_override"]) if "r_override" in kv else None,
    )


def _parse_extents(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.lower().split("x"))
    except ValueError:
        raise ValueError(f"bad lattice spec {text!r}; expected e.g. 20x20") from None


def _parse_phase(value: str, where: str) -> Phase:
    parts = value.split()
    try:
        if parts[0] == "uniform" and len(parts) == 4:
            lo, hi, n = float(parts[1]), float(parts[2]), int(parts[3])
            return Phase(UniformBoxDist(lo, hi, dim=2), n)
        if parts[0] == "gaussian" and len(parts) == 6:
            mean, sd = float(parts[1]), float(parts[2])
            lo, hi, n = float(parts[3]), float(parts[4]), int(parts[5])
            return Phase(ClippedGaussian(mean, sd, lo, hi, dim=2), n)
    except (ValueError, IndexError):
        pass
    raise ValueError(f"{where}: bad phase {value!r}; expected "
                     "'uniform LO HI N' or 'gaussian MEAN SD LO HI N'")
