"""Command-line entry point.

One executable with subcommands for training, map metrics, expected-update
fields, the ordering verification sweep, inverse kinematics, reference-
vector classification, and the canned experiments.  Numeric output is
written at full precision; reports are JSON and series/fields are CSV.
Every output directory also receives a manifest sufficient to reproduce
the run.

Exit codes: 0 success, 1 validation or usage error, 2 check failure in
``--check`` modes.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import classify as cls
from . import experiments as exp
from . import ik as ikmod
from . import ordering
from .lattice import Lattice, WeightMatrix, read_weights_csv, write_weights_csv
from .metrics import sample_metrics
from .plsom import PlsomParams, PlsomState
from .runio import dump_deterministic_json, write_manifest
from .som import SomParams, SomState
from .update_field import (ClippedGaussian, GridQuadrature, MonteCarloQuadrature,
                           UniformBoxDist, expected_displacement_map,
                           integrated_expected_displacement, write_field_csv,
                           write_vector_field_csv)


class _Parser(argparse.ArgumentParser):
    # usage problems are validation errors: exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parse_extents(text: str) -> tuple[int, ...]:
    try:
        ext = tuple(int(p) for p in text.lower().split("x"))
    except ValueError:
        raise ValueError(f"bad lattice {text!r}; expected e.g. 20x20") from None
    if not ext:
        raise ValueError(f"bad lattice {text!r}")
    return ext


def _parse_dist(text: str):
    parts = text.split()
    try:
        if parts[0] == "uniform" and len(parts) == 3:
            return UniformBoxDist(float(parts[1]), float(parts[2]), dim=2)
        if parts[0] == "gaussian" and len(parts) == 5:
            return ClippedGaussian(float(parts[1]), float(parts[2]),
                                   float(parts[3]), float(parts[4]), dim=2)
    except (ValueError, IndexError):
        pass
    raise ValueError(f"bad distribution {text!r}; expected "
                     "'uniform LO HI' or 'gaussian MEAN SD LO HI'")


def _default_out() -> Path:
    return Path(os.environ.get("PLSOMLAB_OUT", "."))


def _out_dir(args) -> Path:
    out = Path(args.out) if args.out else _default_out()
    out.mkdir(parents=True, exist_ok=True)
    return out


def build_parser() -> _Parser:
    p = _Parser(prog="plsomlab",
                description="Parameter-less SOM laboratory: trainers, metrics, "
                            "analyses, and applications.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one map on a single input phase")
    t.add_argument("--trainer", choices=("som", "plsom"), required=True)
    t.add_argument("--lattice", default="20x20")
    t.add_argument("--dist", default="uniform 0 1",
                   help="'uniform LO HI' or 'gaussian MEAN SD LO HI'")
    t.add_argument("--iterations", type=int, default=100_000)
    t.add_argument("--seed", type=int, default=1)
    t.add_argument("--metric-cadence", type=int, default=250)
    t.add_argument("--beta", type=float, help="plsom neighborhood size")
    t.add_argument("--theta-min", type=float)
    t.add_argument("--theta-variant", choices=("linear", "affine", "log"))
    t.add_argument("--alpha0", type=float, help="som initial learning rate")
    t.add_argument("--final-fraction", type=float, default=0.01,
                   help="som: fraction of alpha0/beta0 left at the end")
    t.add_argument("--out", help="output directory (default $PLSOMLAB_OUT or .)")

    m = sub.add_parser("metrics", help="map-quality metrics for a weights CSV")
    m.add_argument("--weights", required=True)
    m.add_argument("--lattice", required=True)
    m.add_argument("--total-area", type=float, default=1.0)
    m.add_argument("--out", help="write the metrics JSON here instead of stdout")

    f = sub.add_parser("expected-field",
                       help="expected-displacement analysis at a frozen state")
    f.add_argument("--weights", required=True)
    f.add_argument("--lattice", required=True)
    f.add_argument("--trainer", choices=("som", "plsom"), required=True)
    f.add_argument("--dist", default="gaussian 0.5 0.2 0 1")
    f.add_argument("--r", type=float, help="plsom frozen normalizer")
    f.add_argument("--beta", type=float, help="plsom beta / som frozen beta")
    f.add_argument("--theta-min", type=float)
    f.add_argument("--theta-variant", choices=("linear", "affine", "log"),
                   default="affine")
    f.add_argument("--alpha", type=float, help="som frozen learning rate")
    f.add_argument("--node", type=int, help="scalar map for this node")
    f.add_argument("--integrated", action="store_true",
                   help="per-node integrated displacement vectors")
    f.add_argument("--resolution", type=int, default=100)
    f.add_argument("--mc", type=int, help="integrate by Monte Carlo instead")
    f.add_argument("--mc-seed", type=int, default=0)
    f.add_argument("--out", required=True, help="output CSV path")

    v = sub.add_parser("verify-ordering",
                       help="grid verification of the 3-node ordering argument")
    v.add_argument("--spacing", type=float, default=5e-3)
    v.add_argument("--threshold", type=float, default=-2.2e-3)
    v.add_argument("--gradient-bound", type=float, default=16.5)
    v.add_argument("--attractor", default=None,
                   help="tx,ty,tz (default 0.377,0.605,0.7)")
    v.add_argument("--r", type=float, default=1.0)
    v.add_argument("--beta", type=float, default=2.0)
    v.add_argument("--convention", choices=ordering.CONVENTIONS,
                   default="expectation")
    v.add_argument("--paper-scale", action="store_true",
                   help="use the proof-grade spacing 1.53959e-4 (long run)")
    v.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    v.add_argument("--checkpoint", help="progress file for resumable sweeps")
    v.add_argument("--resume", action="store_true")
    v.add_argument("--lemma-suites", type=int, metavar="TRIALS",
                   help="also run the randomized lemma suites")
    v.add_argument("--check", action="store_true",
                   help="exit 2 unless the sweep (and suites) pass")
    v.add_argument("--progress", action="store_true", help="print slab progress")
    v.add_argument("--out", help="write the JSON report here instead of stdout")

    ik = sub.add_parser("ik", help="inverse kinematics application")
    iksub = ik.add_subparsers(dest="ik_command", required=True)
    ikt = iksub.add_parser("train", help="train and label an IK map")
    ikt.add_argument("--nodes", required=True, help="lattice extents, e.g. 15x16x15")
    ikt.add_argument("--iterations", type=int, default=30_000)
    ikt.add_argument("--seed", type=int, default=1)
    ikt.add_argument("--beta", type=float, help="plsom neighborhood size")
    ikt.add_argument("--out", required=True, help="map CSV path")
    iks = iksub.add_parser("solve", help="solve a target position")
    iks.add_argument("--map", required=True, dest="map_path")
    iks.add_argument("--target", required=True, help="x,y,z")

    c = sub.add_parser("classify", help="reference-vector k-NN classification")
    csub = c.add_subparsers(dest="classify_command", required=True)
    for name in ("train", "eval"):
        cc = csub.add_parser(name)
        cc.add_argument("--data", required=True,
                        help="TRAIN_PATH or TRAIN_PATH,TEST_PATH")
        cc.add_argument("--grid", default="20x20x20")
        cc.add_argument("--iterations", type=int, default=100_000)
        cc.add_argument("--beta", type=float, default=2.0)
        cc.add_argument("--theta-min", type=float)
        cc.add_argument("--theta-variant", choices=("linear", "affine", "log"),
                        default="affine")
        cc.add_argument("--seed", type=int, default=1)
        cc.add_argument("--holdout", type=float,
                        help="test fraction when only one data file is given")
        if name == "eval":
            cc.add_argument("--k", type=int, default=5)
        cc.add_argument("--out", help="output path (reference CSV / report JSON)")

    e = sub.add_parser("experiment", help="canned experiment reproductions")
    esub = e.add_subparsers(dest="experiment_command", required=True)
    er = esub.add_parser("run")
    g = er.add_mutually_exclusive_group(required=True)
    g.add_argument("--spec", help="flat key=value experiment file")
    g.add_argument("--name", choices=sorted(exp.BUILTIN_EXPERIMENTS),
                   help="builtin experiment name")
    er.add_argument("--seed", type=int, help="override the builtin seed")
    er.add_argument("--out", help="bundle directory")
    esub.add_parser("list")
    return p


def _cmd_train(args) -> int:
    extents = _parse_extents(args.lattice)
    dist = _parse_dist(args.dist)
    lattice = Lattice(extents)
    kwargs = {}
    if args.trainer == "plsom":
        if args.beta is not None or args.theta_variant or args.theta_min is not None:
            params = PlsomParams(
                args.beta if args.beta is not None
                else exp.default_plsom_params(lattice).beta,
                args.theta_min, args.theta_variant or "affine")
            kwargs["plsom_params"] = params
    else:
        kwargs["som_params"] = SomParams.for_run(
            lattice, args.iterations,
            alpha0=args.alpha0 if args.alpha0 is not None else 0.9,
            final_fraction=args.final_fraction)
    spec = exp.ExperimentSpec(
        name=f"train-{args.trainer}", trainer=args.trainer, extents=extents,
        phases=(exp.Phase(dist, args.iterations),), seed=args.seed,
        metric_cadence=args.metric_cadence, **kwargs)
    result = exp.run(spec, out_dir=_out_dir(args))
    print(f"wrote {result.out_dir}")
    return 0


def _cmd_metrics(args) -> int:
    w = read_weights_csv(args.weights)
    lattice = Lattice(_parse_extents(args.lattice))
    s = sample_metrics(lattice, w, 0, args.total_area)
    report = {"unused_space": s.unused_space, "avg_skew": s.avg_skew,
              "cell_dev_all": s.cell_dev_all,
              "cell_dev_interior": s.cell_dev_interior,
              "twist_flips": s.twist_flips,
              "covered_fraction": 1.0 - s.unused_space}
    text = dump_deterministic_json(report)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return 0


def _cmd_expected_field(args) -> int:
    w = read_weights_csv(args.weights)
    lattice = Lattice(_parse_extents(args.lattice))
    if w.node_count != lattice.node_count:
        raise ValueError("weights CSV does not match the lattice size")
    dist = _parse_dist(args.dist)
    if args.trainer == "plsom":
        if args.r is None:
            raise ValueError("--r (frozen normalizer) is required for plsom")
        from .plsom import frozen_plsom_displacement
        params = PlsomParams(args.beta if args.beta is not None else 10.0,
                             args.theta_min, args.theta_variant)
        state = PlsomState(lattice, w, r=args.r)
        fn = frozen_plsom_displacement(state, params)
    else:
        if args.alpha is None or args.beta is None:
            raise ValueError("--alpha and --beta are required for som")
        from .som import frozen_som_displacement
        params = SomParams(alpha0=min(args.alpha, 1.0), beta0=args.beta,
                           delta_alpha=0.5, delta_beta=0.5)
        state = SomState(lattice, params, w, alpha=args.alpha, beta=args.beta)
        fn = frozen_som_displacement(state)
    if args.integrated:
        quad = (MonteCarloQuadrature(args.mc, args.mc_seed) if args.mc
                else GridQuadrature(args.resolution))
        vectors = integrated_expected_displacement(fn, dist, quad)
        write_vector_field_csv(args.out, vectors)
    elif args.node is not None:
        field = expected_displacement_map(args.node, fn, dist, args.resolution)
        write_field_csv(args.out, field)
    else:
        raise ValueError("pass --node I for a scalar map or --integrated")
    print(f"wrote {args.out}")
    return 0


def _cmd_verify_ordering(args) -> int:
    attractor = ordering.DEFAULT_ATTRACTOR
    if args.attractor:
        parts = [float(v) for v in args.attractor.split(",")]
        if len(parts) != 3:
            raise ValueError("--attractor needs three comma-separated values")
        attractor = tuple(parts)
    spacing = 1.53959e-4 if args.paper_scale else args.spacing
    cfg = ordering.VerifierConfig(
        attractor=attractor, spacing=spacing, threshold=args.threshold,
        gradient_bound=args.gradient_bound, r=args.r, beta=args.beta,
        convention=args.convention)
    progress = None
    if args.progress:
        def progress(points, slabs):
            print(f"  checked {points} points", file=sys.stderr)
    t0 = time.monotonic()
    report = ordering.verify_lemma4(cfg, workers=max(1, args.workers),
                                    checkpoint_path=args.checkpoint,
                                    resume=args.resume, progress=progress)
    payload = report.to_dict()
    ok = report.passed
    if args.lemma_suites:
        suites = ordering.lemma_property_suites(seed=0, trials=args.lemma_suites)
        payload["lemma_suites"] = suites.to_dict()
        ok = ok and suites.passed
    payload["total_elapsed_seconds"] = round(time.monotonic() - t0, 3)
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text)
    if args.check and not ok:
        return 2
    return 0


def _cmd_ik(args) -> int:
    if args.ik_command == "train":
        extents = _parse_extents(args.nodes)
        lattice = Lattice(extents)
        arm = ikmod.ArmModel()
        params = (PlsomParams(beta=args.beta) if args.beta is not None
                  else exp.default_plsom_params(lattice))
        ik_map = ikmod.train_ik_map(arm, lattice, params, args.iterations, args.seed)
        ikmod.save_ik_map(args.out, ik_map)
        out = Path(args.out)
        write_manifest(out.parent if out.parent != Path("") else Path("."),
                       {"command": "ik train", "nodes": args.nodes,
                        "iterations": args.iterations, "seed": args.seed,
                        "beta": params.beta}, {})
        print(f"wrote {args.out}")
        return 0
    ik_map = ikmod.load_ik_map(args.map_path)
    target = [float(v) for v in args.target.split(",")]
    if len(target) != 3:
        raise ValueError("--target needs x,y,z")
    joints = ikmod.solve_ik(ik_map, target)
    reached = ikmod.forward_kinematics(ik_map.arm, joints)
    print(json.dumps({
        "joints": [float(v) for v in joints],
        "reached": [float(v) for v in reached],
        "error": float(np.linalg.norm(reached - np.asarray(target))),
    }, indent=2))
    return 0


def _load_split(args) -> cls.SplitDataset:
    paths = args.data.split(",")
    if len(paths) == 2:
        return cls.SplitDataset(cls.load_delimited(paths[0]),
                                cls.load_delimited(paths[1]))
    if len(paths) != 1:
        raise ValueError("--data takes one or two comma-separated paths")
    ds = cls.load_delimited(paths[0])
    frac = args.holdout if args.holdout is not None else 0.25
    if not 0.0 < frac < 1.0:
        raise ValueError("--holdout must be in (0, 1)")
    rng = np.random.default_rng(args.seed)
    n = ds.vectors.shape[0]
    order = rng.permutation(n)
    cut = max(1, int(round(n * frac)))
    test_idx, train_idx = order[:cut], order[cut:]
    return cls.SplitDataset(
        cls.LabeledDataset(ds.vectors[train_idx], ds.labels[train_idx]),
        cls.LabeledDataset(ds.vectors[test_idx], ds.labels[test_idx]))


def _cmd_classify(args) -> int:
    split = _load_split(args)
    config = cls.MapConfig(extents=_parse_extents(args.grid), beta=args.beta,
                           theta_min=args.theta_min,
                           theta_variant=args.theta_variant,
                           iterations=args.iterations)
    if args.classify_command == "train":
        weights = cls.train_classifier_map(config, split.train, args.seed)
        ref = cls.label_and_prune(weights, split.train)
        out = args.out or "reference.csv"
        with Path(out).open("w", newline="") as fh:
            fh.write("node_index,label," +
                     ",".join(f"w_{k}" for k in range(ref.weights.shape[1])) + "\n")
            for i in range(ref.survivor_count):
                row = [str(int(ref.node_indices[i])), str(ref.labels[i])]
                row += [repr(float(v)) for v in ref.weights[i]]
                fh.write(",".join(row) + "\n")
        print(f"wrote {out} ({ref.survivor_count} reference vectors)")
        return 0
    report = cls.evaluate(config, split, k=args.k, seed=args.seed)
    text = dump_deterministic_json(report)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out} (accuracy {report['accuracy']:.4f})")
    else:
        print(text)
    return 0


def _cmd_experiment(args) -> int:
    if args.experiment_command == "list":
        for name in sorted(exp.BUILTIN_EXPERIMENTS):
            print(f"{name:22s} {exp.BUILTIN_DESCRIPTIONS[name]}")
        return 0
    if args.spec:
        spec = exp.parse_experiment_file(args.spec)
        if args.seed is not None:
            from dataclasses import replace
            spec = replace(spec, seed=args.seed)
    else:
        spec = exp.BUILTIN_EXPERIMENTS[args.name](args.seed if args.seed is not None
                                                  else 1)
    out = Path(args.out) if args.out else _default_out() / spec.name
    result = exp.run(spec, out_dir=out)
    print(f"wrote {result.out_dir}")
    return 0


_HANDLERS = {
    "train": _cmd_train,
    "metrics": _cmd_metrics,
    "expected-field": _cmd_expected_field,
    "verify-ordering": _cmd_verify_ordering,
    "ik": _cmd_ik,
    "classify": _cmd_classify,
    "experiment": _cmd_experiment,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _HANDLERS[args.command](args)
    except SystemExit as e:
        return int(e.code or 0)
    except (ValueError, OSError) as e:
        print(f"plsomlab: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
