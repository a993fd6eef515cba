"""Inverse kinematics via a PLSOM lookup table with local linear interpolation.

A 3-D lattice is trained on random joint configurations of a simulated
serial arm; every node is then labelled with the end-effector position of
its joint-space weight vector.  A query position is solved by finding the
node with the nearest label, building three near-orthogonal label-space
difference vectors from lattice neighbors, orthogonalizing them with
Gram-Schmidt, mirroring the same eliminations on the corresponding
joint-space vectors, and expanding the residual target offset in the
orthogonal basis.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .lattice import (Lattice, WeightMatrix, read_weights_csv, rng_streams,
                      write_weights_csv)
from .plsom import PlsomParams, PlsomState, plsom_step

# Relative squared-norm threshold below which a Gram-Schmidt residual is
# snapped to the zero vector (dependent input).
_RANK_EPS = 1e-18


@dataclass(frozen=True)
class ArmModel:
    """Serial arm: a base yaw joint followed by pitch joints, one link each.

    Joint 0 rotates the whole arm about the vertical axis; link 0 extends
    horizontally from the base.  Every further joint pitches in the arm
    plane relative to the previous link.  Angles are radians.
    """

    link_lengths: tuple[float, ...] = (0.4, 0.4, 0.4)
    joint_limits: tuple[tuple[float, float], ...] = (
        (-2.0, 2.0), (-1.0, 1.0), (-2.0, 2.0))

    def __post_init__(self):
        if len(self.link_lengths) != len(self.joint_limits):
            raise ValueError("need one joint limit pair per link")
        if len(self.link_lengths) < 2:
            raise ValueError("arm needs at least 2 joints")
        if any(l <= 0.0 for l in self.link_lengths):
            raise ValueError(f"link lengths must be > 0, got {self.link_lengths}")
        if any(lo >= hi for lo, hi in self.joint_limits):
            raise ValueError(f"bad joint limits {self.joint_limits}")

    @property
    def dof(self) -> int:
        return len(self.link_lengths)

    def limits_lo(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.joint_limits])

    def limits_hi(self) -> np.ndarray:
        return np.array([hi for _, hi in self.joint_limits])

    def clamp(self, joints: np.ndarray) -> np.ndarray:
        return np.clip(joints, self.limits_lo(), self.limits_hi())


def forward_kinematics(arm: ArmModel, joints) -> np.ndarray:
    """End-effector position (x, y, z) for a joint configuration.

    With all joints zero the arm lies along +x at z = 0, so the position is
    (sum of link lengths, 0, 0).  Raises if a joint is outside its limits.
    """
    joints = np.asarray(joints, dtype=float).reshape(-1)
    if joints.shape != (arm.dof,):
        raise ValueError(f"expected {arm.dof} joint angles, got {joints.shape}")
    if np.any(joints < arm.limits_lo() - 1e-9) or np.any(joints > arm.limits_hi() + 1e-9):
        raise ValueError(f"joints {joints} outside limits {arm.joint_limits}")
    yaw = joints[0]
    # planar chain in the (radial, vertical) plane selected by the yaw
    u = arm.link_lengths[0]
    v = 0.0
    pitch = 0.0
    for length, angle in zip(arm.link_lengths[1:], joints[1:]):
        pitch += angle
        u += length * math.cos(pitch)
        v += length * math.sin(pitch)
    return np.array([u * math.cos(yaw), u * math.sin(yaw), v])


def forward_kinematics_batch(arm: ArmModel, joints: np.ndarray) -> np.ndarray:
    """Vectorized forward kinematics over rows of joint configurations."""
    joints = np.asarray(joints, dtype=float)
    u = np.full(joints.shape[0], arm.link_lengths[0])
    v = np.zeros(joints.shape[0])
    pitch = np.zeros(joints.shape[0])
    for k, length in enumerate(arm.link_lengths[1:], start=1):
        pitch = pitch + joints[:, k]
        u = u + length * np.cos(pitch)
        v = v + length * np.sin(pitch)
    yaw = joints[:, 0]
    return np.stack([u * np.cos(yaw), u * np.sin(yaw), v], axis=1)


def gram_schmidt(v1, v2, v3) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Classical Gram-Schmidt without normalization.

    Dependent inputs yield exact zero vectors for the dependent directions.
    """
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    v3 = np.asarray(v3, dtype=float)
    (o1, o2, o3), _ = _gram_schmidt_with_coeffs(v1, v2, v3)
    return o1, o2, o3


def _project_coeff(v: np.ndarray, o: np.ndarray) -> float:
    n2 = float(o @ o)
    return float(v @ o) / n2 if n2 > 0.0 else 0.0


def _snap_zero(o: np.ndarray, v: np.ndarray) -> np.ndarray:
    scale = float(v @ v)
    if float(o @ o) <= _RANK_EPS * max(scale, 1e-300):
        return np.zeros_like(o)
    return o


def _gram_schmidt_with_coeffs(v1, v2, v3):
    """Orthogonalized triple plus the elimination coefficients used."""
    o1 = v1.copy()
    c21 = _project_coeff(v2, o1)
    o2 = _snap_zero(v2 - c21 * o1, v2)
    c31 = _project_coeff(v3, o1)
    c32 = _project_coeff(v3, o2)
    o3 = _snap_zero(v3 - c31 * o1 - c32 * o2, v3)
    return (o1, o2, o3), (c21, c31, c32)


@dataclass
class IkMap:
    """Trained joint-space map with per-node end-effector labels."""

    lattice: Lattice
    arm: ArmModel
    weights: WeightMatrix
    labels: np.ndarray  # (node_count, 3)
    params: PlsomParams

    def refresh_labels(self) -> None:
        self.labels = forward_kinematics_batch(self.arm, self.weights.values)


def train_ik_map(arm: ArmModel, lattice: Lattice, params: PlsomParams,
                 iterations: int, seed: int,
                 checkpoints: Optional[list[int]] = None,
                 on_checkpoint=None) -> IkMap:
    """Train a PLSOM on uniform random joint configurations, then label nodes.

    Weights start in the central fifth of the joint box.  Stream layout:
    stream 0 of ``rng_streams(seed, 2)`` initializes weights, stream 1
    yields the joint samples (one ``uniform`` draw of dof components per
    iteration).
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if lattice.ndim != 3:
        raise ValueError(f"ik map needs a 3-D lattice, got {lattice.ndim}-D")
    if any(e < 2 for e in lattice.extents):
        raise ValueError("ik map needs at least 2 nodes along every axis")
    rng_init, rng_inputs = rng_streams(seed, 2)
    lo, hi = arm.limits_lo(), arm.limits_hi()
    mid, half = (lo + hi) / 2.0, (hi - lo) / 2.0
    w = WeightMatrix(mid - 0.1 * half
                     + 0.2 * half * rng_init.random((lattice.node_count, arm.dof)))
    state = PlsomState(lattice, w)
    marks = sorted(set(checkpoints or []))
    for t in range(1, iterations + 1):
        x = lo + (hi - lo) * rng_inputs.random(arm.dof)
        plsom_step(state, x, params)
        if marks and t == marks[0]:
            marks.pop(0)
            if on_checkpoint is not None:
                on_checkpoint(t, state)
    ik_map = IkMap(lattice, arm, state.weights, None, params)
    ik_map.refresh_labels()
    return ik_map


@dataclass
class SolveInfo:
    node: int
    rank: int
    full_scan: bool


class IkSolver:
    """Stateful solver: warm-started nearest-label search plus interpolation.

    The nearest-node search hill-climbs over lattice neighbors starting
    from the previously used node, which keeps the per-solve cost nearly
    independent of the map size; every ``full_scan_period``-th solve (and
    the first) falls back to an exact scan over all labels.
    """

    def __init__(self, ik_map: IkMap, full_scan_period: int = 5000,
                 max_step: float = 1.5):
        if full_scan_period < 1:
            raise ValueError("full_scan_period must be >= 1")
        if max_step <= 0.0:
            raise ValueError("max_step must be > 0")
        self.map = ik_map
        self.full_scan_period = full_scan_period
        self.max_step = max_step
        self._cursor = 0
        self._prev_cursor = 0
        self._drift = (0.0,) * ik_map.lattice.ndim
        self._solves = 0
        self.reduced_rank_count = 0
        self.last_info: Optional[SolveInfo] = None
        self._axis_steps = _axis_step_table(ik_map.lattice)
        # plain-python copies keep the per-hop cost a few microseconds; the
        # numpy overhead on 6x3 slices would otherwise dominate each solve
        self._label_rows = [tuple(row) for row in ik_map.labels]
        self._nbr_packed = [tuple((int(j), *self._label_rows[int(j)])
                                  for j in row if j >= 0)
                            for row in _neighbor_table(ik_map.lattice)]
        self._coord_rows = [tuple(int(v) for v in c)
                            for c in ik_map.lattice.coords.astype(int)]
        self._extents = ik_map.lattice.extents
        self._strides = tuple(int(np.prod(ik_map.lattice.extents[a + 1:]))
                              for a in range(ik_map.lattice.ndim))

    def _warm_start(self) -> int:
        # predict the next nearest node by smoothed lattice drift; on a
        # steady trajectory this keeps hop counts independent of the
        # lattice resolution, including sub-node-per-solve motion
        a = self._coord_rows[self._cursor]
        b = self._coord_rows[self._prev_cursor]
        drift = tuple(0.7 * d + 0.3 * (ca - cb)
                      for d, ca, cb in zip(self._drift, a, b))
        self._drift = drift
        node = 0
        for ext, stride, ca, d in zip(self._extents, self._strides, a, drift):
            c = int(ca + d + 0.5)
            if c < 0:
                c = 0
            elif c >= ext:
                c = ext - 1
            node += c * stride
        return node

    def _nearest_node(self, target: np.ndarray) -> tuple[int, bool]:
        full = self._solves % self.full_scan_period == 0
        if full:
            labels = self.map.labels
            d2 = np.einsum("ij,ij->i", labels - target, labels - target)
            return int(np.argmin(d2)), True
        tx, ty, tz = float(target[0]), float(target[1]), float(target[2])
        packed = self._nbr_packed
        node = self._warm_start()
        lx, ly, lz = self._label_rows[node]
        best = (lx - tx) ** 2 + (ly - ty) ** 2 + (lz - tz) ** 2
        while True:
            improved = False
            for j, lx, ly, lz in packed[node]:
                d2 = (lx - tx) ** 2 + (ly - ty) ** 2 + (lz - tz) ** 2
                if d2 < best:
                    best = d2
                    node = j
                    improved = True
            if not improved:
                return node, False

    def solve(self, target) -> np.ndarray:
        """Joint configuration whose forward kinematics approximates target."""
        target = np.asarray(target, dtype=float).reshape(3)
        node, full = self._nearest_node(target)
        self._solves += 1
        self._prev_cursor = self._cursor
        self._cursor = node
        lat = self.map.lattice
        labels = self.map.labels
        weights = self.map.weights.values

        label_vecs = []
        joint_vecs = []
        for axis in range(3):
            nbr = self._axis_steps[node, axis]
            label_vecs.append(labels[nbr] - labels[node])
            joint_vecs.append(weights[nbr] - weights[node])
        (o1, o2, o3), (c21, c31, c32) = _gram_schmidt_with_coeffs(*label_vecs)
        p1 = joint_vecs[0]
        p2 = joint_vecs[1] - c21 * p1
        p3 = joint_vecs[2] - c31 * p1 - c32 * p2

        delta = target - labels[node]
        joints = weights[node].copy()
        rank = 0
        for o, p in ((o1, p1), (o2, p2), (o3, p3)):
            n2 = float(o @ o)
            if n2 > 0.0:
                # coefficients are in lattice-step units; clamping bounds the
                # extrapolation when the local basis is poorly conditioned
                a = float(delta @ o) / n2
                joints = joints + np.clip(a, -self.max_step, self.max_step) * p
                rank += 1
        if rank < 3:
            self.reduced_rank_count += 1
        self.last_info = SolveInfo(node, rank, full)
        return self.map.arm.clamp(joints)


def solve_ik(ik_map: IkMap, target) -> np.ndarray:
    """One-shot solve; use IkSolver for repeated queries with warm starts."""
    return IkSolver(ik_map).solve(target)


def _neighbor_table(lattice: Lattice) -> np.ndarray:
    """(node_count, 2*ndim) array of +-1 neighbors per axis, -1 where absent."""
    coords = lattice.coords.astype(int)
    n = lattice.node_count
    table = np.full((n, 2 * lattice.ndim), -1, dtype=int)
    strides = np.array([int(np.prod(lattice.extents[a + 1:]))
                        for a in range(lattice.ndim)])
    for a in range(lattice.ndim):
        has_up = coords[:, a] + 1 < lattice.extents[a]
        table[has_up, 2 * a] = np.arange(n)[has_up] + strides[a]
        has_dn = coords[:, a] > 0
        table[has_dn, 2 * a + 1] = np.arange(n)[has_dn] - strides[a]
    return table


def _axis_step_table(lattice: Lattice) -> np.ndarray:
    """Per node and axis: the +1 lattice neighbor, or -1 at the upper boundary."""
    coords = lattice.coords.astype(int)
    n = lattice.node_count
    strides = np.array([int(np.prod(lattice.extents[a + 1:]))
                        for a in range(lattice.ndim)])
    table = np.empty((n, lattice.ndim), dtype=int)
    for a in range(lattice.ndim):
        up = coords[:, a] + 1 < lattice.extents[a]
        table[:, a] = np.where(up, np.arange(n) + strides[a], np.arange(n) - strides[a])
    return table


# --- map persistence --------------------------------------------------------


def save_ik_map(path, ik_map: IkMap) -> None:
    """Write weights CSV, labels CSV and a sidecar metadata JSON.

    ``path`` names the weights CSV; ``<stem>.labels.csv`` and
    ``<stem>.meta.json`` are written next to it.
    """
    path = Path(path)
    write_weights_csv(path, ik_map.weights)
    labels_path = path.with_suffix(".labels.csv")
    write_weights_csv(labels_path, WeightMatrix(ik_map.labels))
    meta = {
        "extents": list(ik_map.lattice.extents),
        "grid_metric": ik_map.lattice.grid_metric,
        "link_lengths": list(ik_map.arm.link_lengths),
        "joint_limits": [list(lim) for lim in ik_map.arm.joint_limits],
        "beta": ik_map.params.beta,
        "theta_min": ik_map.params.theta_min,
        "theta_variant": ik_map.params.theta_variant,
    }
    path.with_suffix(".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def load_ik_map(path) -> IkMap:
    path = Path(path)
    meta = json.loads(path.with_suffix(".meta.json").read_text())
    lattice = Lattice(tuple(meta["extents"]), meta["grid_metric"])
    arm = ArmModel(tuple(meta["link_lengths"]),
                   tuple(tuple(lim) for lim in meta["joint_limits"]))
    params = PlsomParams(meta["beta"], meta["theta_min"], meta["theta_variant"])
    weights = read_weights_csv(path)
    labels = read_weights_csv(path.with_suffix(".labels.csv")).values
    return IkMap(lattice, arm, weights, labels, params)
