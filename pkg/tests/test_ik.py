import math

import numpy as np
import pytest

from plsomlab.ik import (ArmModel, IkSolver, forward_kinematics,
                         forward_kinematics_batch, gram_schmidt, load_ik_map,
                         save_ik_map, solve_ik, train_ik_map)
from plsomlab.lattice import Lattice
from plsomlab.plsom import PlsomParams


def small_map(seed=1, iterations=8000, extents=(8, 5, 6)):
    arm = ArmModel()
    lat = Lattice(extents)
    diag = float(np.linalg.norm([e - 1 for e in extents]))
    params = PlsomParams(beta=diag, theta_min=1.0, theta_variant="affine")
    return train_ik_map(arm, lat, params, iterations=iterations, seed=seed)


# --- forward kinematics ---------------------------------------------------------

def test_fk_straight_chain():
    arm = ArmModel()
    assert forward_kinematics(arm, [0, 0, 0]) == pytest.approx(
        [sum(arm.link_lengths), 0.0, 0.0])


def test_fk_base_yaw_rotation():
    arm = ArmModel(joint_limits=((-3.2, 3.2), (-1.0, 1.0), (-2.0, 2.0)))
    pos = forward_kinematics(arm, [math.pi / 2, 0, 0])
    assert pos == pytest.approx([0.0, sum(arm.link_lengths), 0.0], abs=1e-12)


def test_fk_matches_homogeneous_transform_oracle():
    # independent oracle: explicit 4x4 transform chain
    def fk_oracle(arm, joints):
        def rz(a):
            return np.array([[math.cos(a), -math.sin(a), 0, 0],
                             [math.sin(a), math.cos(a), 0, 0],
                             [0, 0, 1, 0], [0, 0, 0, 1]])

        def ry(a):
            return np.array([[math.cos(a), 0, math.sin(a), 0],
                             [0, 1, 0, 0],
                             [-math.sin(a), 0, math.cos(a), 0], [0, 0, 0, 1]])

        def tx(d):
            m = np.eye(4)
            m[0, 3] = d
            return m

        m = rz(joints[0]) @ tx(arm.link_lengths[0])
        for length, angle in zip(arm.link_lengths[1:], joints[1:]):
            m = m @ ry(-angle) @ tx(length)
        return m[:3, 3]

    arm = ArmModel()
    rng = np.random.default_rng(4)
    lo, hi = arm.limits_lo(), arm.limits_hi()
    for _ in range(200):
        joints = lo + (hi - lo) * rng.random(3)
        assert forward_kinematics(arm, joints) == pytest.approx(
            fk_oracle(arm, joints), abs=1e-12)


def test_fk_batch_matches_scalar():
    arm = ArmModel()
    rng = np.random.default_rng(9)
    lo, hi = arm.limits_lo(), arm.limits_hi()
    joints = lo + (hi - lo) * rng.random((50, 3))
    batch = forward_kinematics_batch(arm, joints)
    for row, j in zip(batch, joints):
        assert row == pytest.approx(forward_kinematics(arm, j))


def test_fk_rejects_out_of_limit():
    arm = ArmModel()
    with pytest.raises(ValueError):
        forward_kinematics(arm, [5.0, 0.0, 0.0])


def test_arm_validation():
    with pytest.raises(ValueError):
        ArmModel(link_lengths=(0.4, 0.4), joint_limits=((-1, 1),))
    with pytest.raises(ValueError):
        ArmModel(link_lengths=(0.4, -0.1, 0.4))


# --- gram-schmidt ----------------------------------------------------------------

def test_gram_schmidt_orthogonal_inputs_unchanged():
    v1, v2, v3 = np.eye(3) * np.array([[2.0], [3.0], [0.5]])
    o1, o2, o3 = gram_schmidt(v1, v2, v3)
    assert np.array_equal(o1, v1)
    assert np.array_equal(o2, v2)
    assert np.array_equal(o3, v3)


def test_gram_schmidt_parallel_input_gives_zero():
    o1, o2, o3 = gram_schmidt(np.array([1.0, 0, 0]), np.array([2.0, 0, 0]),
                              np.array([0, 0, 1.0]))
    assert np.array_equal(o2, np.zeros(3))


def test_gram_schmidt_textbook_case():
    o1, o2, o3 = gram_schmidt(np.array([1.0, 0, 0]), np.array([1.0, 1, 0]),
                              np.array([1.0, 1, 1]))
    assert o1 == pytest.approx([1, 0, 0])
    assert o2 == pytest.approx([0, 1, 0])
    assert o3 == pytest.approx([0, 0, 1])


def test_gram_schmidt_pairwise_orthogonal():
    rng = np.random.default_rng(12)
    for _ in range(300):
        v = rng.normal(size=(3, 3))
        o = gram_schmidt(*v)
        for a in range(3):
            for b in range(a + 1, 3):
                na, nb = np.linalg.norm(o[a]), np.linalg.norm(o[b])
                assert abs(float(o[a] @ o[b])) <= 1e-10 * max(na * nb, 1e-30)


# --- training ---------------------------------------------------------------------

def test_labels_are_fk_of_weights():
    m = small_map(iterations=500)
    expect = forward_kinematics_batch(m.arm, m.weights.values)
    assert np.array_equal(m.labels, expect)


def test_zero_iterations_labels_initial_weights():
    arm = ArmModel()
    lat = Lattice((4, 4, 4))
    m = train_ik_map(arm, lat, PlsomParams(beta=4.0), iterations=0, seed=3)
    assert np.array_equal(
        m.labels, forward_kinematics_batch(arm, m.weights.values))


def test_training_deterministic():
    a = small_map(seed=5, iterations=1000)
    b = small_map(seed=5, iterations=1000)
    assert np.array_equal(a.weights.values, b.weights.values)


def test_training_reduces_quantization_error():
    # label-space fit to random workspace points improves over training
    arm = ArmModel()
    rng = np.random.default_rng(8)
    lo, hi = arm.limits_lo(), arm.limits_hi()
    probe = forward_kinematics_batch(
        arm, lo + (hi - lo) * rng.random((300, 3)))

    def qe(m):
        d = np.linalg.norm(probe[:, None, :] - m.labels[None, :, :], axis=2)
        return float(d.min(axis=1).mean())

    early = small_map(seed=2, iterations=200)
    late = small_map(seed=2, iterations=8000)
    assert qe(late) < qe(early)


def test_weights_stay_in_joint_limits():
    m = small_map(iterations=3000)
    lo, hi = m.arm.limits_lo(), m.arm.limits_hi()
    assert np.all(m.weights.values >= lo - 1e-12)
    assert np.all(m.weights.values <= hi + 1e-12)


# --- solving ----------------------------------------------------------------------

def test_solve_exact_at_node_labels():
    m = small_map(iterations=5000)
    solver = IkSolver(m)
    for node in (0, 17, m.lattice.node_count - 1):
        joints = solver.solve(m.labels[node])
        assert joints == pytest.approx(m.weights.values[node], abs=1e-12)


def test_solve_roundtrip_interior():
    m = small_map(iterations=8000)
    arm = m.arm
    rng = np.random.default_rng(3)
    mid = (arm.limits_lo() + arm.limits_hi()) / 2
    half = (arm.limits_hi() - arm.limits_lo()) / 2
    targets = forward_kinematics_batch(
        arm, mid + (2.0 * rng.random((200, 3)) - 1.0) * 0.6 * half)
    solver = IkSolver(m)
    errs = [np.linalg.norm(forward_kinematics(arm, solver.solve(t)) - t)
            for t in targets]
    # map cells are coarse (240 nodes); the median should still be small
    assert np.median(errs) < 0.1


def test_solver_warm_start_accuracy_comparable_to_full_scan():
    # greedy descent can stop a node short on a small, imperfectly ordered
    # map; its answers must still track the exact-search answers closely
    m = small_map(iterations=8000)
    rng = np.random.default_rng(6)
    mid = (m.arm.limits_lo() + m.arm.limits_hi()) / 2
    half = (m.arm.limits_hi() - m.arm.limits_lo()) / 2
    walk = np.empty((120, 3))
    state = np.zeros(3)
    for i in range(120):
        state = 0.99 * state + rng.normal(0, 0.05, 3)
        walk[i] = mid + np.clip(state, -1, 1) * 0.7 * half
    targets = forward_kinematics_batch(m.arm, walk)
    warm = IkSolver(m)
    exact = IkSolver(m, full_scan_period=1)
    err_warm = []
    err_exact = []
    for t in targets:
        a = forward_kinematics(m.arm, warm.solve(t))
        b = forward_kinematics(m.arm, exact.solve(t))
        err_warm.append(float(np.linalg.norm(a - t)))
        err_exact.append(float(np.linalg.norm(b - t)))
    assert np.median(err_warm) <= 1.5 * np.median(err_exact) + 1e-9


def test_periodic_full_scan_resynchronizes_cursor():
    m = small_map(iterations=8000)
    solver = IkSolver(m, full_scan_period=4)
    far = m.labels[m.lattice.node_count - 1]
    labels = m.labels
    exact_node = int(np.argmin(np.einsum("ij,ij->i", labels - far, labels - far)))
    found_exact = False
    for _ in range(8):  # at least one of these is a full-scan solve
        solver.solve(far)
        if solver.last_info.full_scan and solver.last_info.node == exact_node:
            found_exact = True
    assert found_exact


def test_reduced_rank_flagged_on_degenerate_labels():
    m = small_map(iterations=200)
    # collapse all labels onto a line: label-space basis is rank deficient
    m.labels = np.zeros_like(m.labels)
    m.labels[:, 0] = np.linspace(0.0, 1.0, m.lattice.node_count)
    solver = IkSolver(m)
    solver.solve([0.5, 0.0, 0.0])
    assert solver.reduced_rank_count >= 1
    assert solver.last_info.rank < 3


def test_solve_ik_one_shot():
    m = small_map(iterations=3000)
    joints = solve_ik(m, m.labels[10])
    assert joints == pytest.approx(m.weights.values[10], abs=1e-12)


def test_map_roundtrip_via_csv(tmp_path):
    m = small_map(iterations=500)
    path = tmp_path / "map.csv"
    save_ik_map(path, m)
    back = load_ik_map(path)
    assert back.lattice.extents == m.lattice.extents
    assert np.array_equal(back.weights.values, m.weights.values)
    assert np.array_equal(back.labels, m.labels)
    assert back.arm == m.arm
    assert back.params == m.params
    joints = IkSolver(back).solve(m.labels[4])
    assert joints == pytest.approx(m.weights.values[4], abs=1e-12)
