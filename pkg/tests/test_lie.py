import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal
from scipy.linalg import expm

from tieekf.lie import (
    Pose,
    UncertainPose,
    adjoint,
    cov_factor,
    dot_op,
    dot_op_batch,
    exp_se3,
    exp_so3,
    hat3,
    hat6,
    left_jacobian_so3,
    log_se3,
    log_so3,
    sample_perturbed,
    vee3,
    vee6,
)

from conftest import poses, random_pose, random_twist, rotation_vectors, twists, vec3


def series_exp(m, terms=30):
    out = np.eye(m.shape[0])
    term = np.eye(m.shape[0])
    for n in range(1, terms + 1):
        term = term @ m / n
        out = out + term
    return out


# hat / vee

def test_hat3_zero():
    assert_array_equal(hat3([0, 0, 0]), np.zeros((3, 3)))


def test_hat3_unit_z_layout():
    assert_array_equal(hat3([0, 0, 1]), [[0, -1, 0], [1, 0, 0], [0, 0, 0]])


def test_hat3_anticommutes(rng):
    for _ in range(100):
        a, b = rng.normal(size=3), rng.normal(size=3)
        assert_allclose(hat3(a) @ b, -hat3(b) @ a, atol=1e-12)
        assert_allclose(hat3(a) @ b, np.cross(a, b), atol=1e-12)


def test_hat6_layout():
    assert_array_equal(hat6(np.zeros(6)), np.zeros((4, 4)))
    m = hat6([1, 0, 0, 0, 0, 0])
    expected = np.zeros((4, 4))
    expected[0, 3] = 1.0
    assert_array_equal(m, expected)


def test_hat6_blocks(rng):
    xi = rng.normal(size=6)
    m = hat6(xi)
    assert_array_equal(m[:3, :3], hat3(xi[3:]))
    assert_array_equal(m[:3, 3], xi[:3])
    assert_array_equal(m[3], np.zeros(4))


@pytest.mark.parametrize("phi", [(0, 0, 0), (0, 0, 1), (0.3, -2.0, 7.5)])
def test_vee3_roundtrip_examples(phi):
    assert_array_equal(vee3(hat3(phi)), phi)


@pytest.mark.parametrize("xi", [np.zeros(6), np.eye(6)[0], np.arange(1.0, 7.0)])
def test_vee6_roundtrip_examples(xi):
    assert_array_equal(vee6(hat6(xi)), xi)


@given(vec3)
def test_vee3_inverts_hat3(phi):
    assert_array_equal(vee3(hat3(phi)), phi)


@given(st.tuples(*[st.floats(-10, 10)] * 6).map(np.array))
def test_vee6_inverts_hat6(xi):
    assert_array_equal(vee6(hat6(xi)), xi)


def test_vee_rejects_malformed():
    with pytest.raises(ValueError):
        vee3(np.eye(3))
    m = hat6(np.ones(6))
    m[3, 3] = 1.0
    with pytest.raises(ValueError):
        vee6(m)
    with pytest.raises(ValueError):
        vee3(np.zeros((2, 2)))


# exp / log on SO(3)

def test_exp_so3_zero():
    assert_array_equal(exp_so3(np.zeros(3)), np.eye(3))


def test_exp_so3_quarter_turn_matches_series():
    C = exp_so3([0, 0, math.pi / 2])
    assert_allclose(C, [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)
    assert_allclose(C, series_exp(hat3([0, 0, math.pi / 2]), 20), atol=1e-12)


def test_exp_so3_inverse_symmetry(rng):
    for _ in range(100):
        phi = random_twist(rng)[3:]
        assert_allclose(exp_so3(phi) @ exp_so3(-phi), np.eye(3), atol=1e-12)


@given(rotation_vectors(max_angle=10.0))
def test_exp_so3_is_rotation(phi):
    assert Pose(exp_so3(phi), np.zeros(3)).is_valid()


def test_log_so3_examples():
    assert_array_equal(log_so3(np.eye(3)), np.zeros(3))
    assert_allclose(log_so3(exp_so3([0.1, -0.2, 0.3])), [0.1, -0.2, 0.3], atol=1e-10)


def test_log_so3_at_pi_sign_convention():
    Cz = np.diag([-1.0, -1.0, 1.0])
    phi = log_so3(Cz)
    assert_allclose(phi, [0, 0, math.pi], atol=1e-12)
    assert_allclose(exp_so3(phi), Cz, atol=1e-12)
    # either sign of the axis gives the same matrix; the positive one is returned
    for axis in ([-1, 0, 0], [0, -1, 0], [0.6, -0.8, 0]):
        a = np.array(axis, float)
        phi = log_so3(exp_so3(math.pi * a))
        assert phi[np.argmax(np.abs(phi))] > 0
        assert_allclose(exp_so3(phi), exp_so3(math.pi * a), atol=1e-12)


@given(rotation_vectors(max_angle=math.pi))
def test_log_so3_norm_and_roundtrip(phi):
    C = exp_so3(phi)
    out = log_so3(C)
    assert np.linalg.norm(out) <= math.pi + 1e-12
    assert_allclose(exp_so3(out), C, atol=1e-9)


@pytest.mark.parametrize("angle", [0.0, 1e-12, 1e-9, 1e-7, 1e-3, math.pi - 1e-3, math.pi - 1e-7])
def test_log_so3_near_singularities(angle):
    phi = angle * np.array([0.48, -0.6, 0.64])
    assert_allclose(log_so3(exp_so3(phi)), phi, atol=1e-9)


def test_small_angle_branch_agrees_with_closed_form():
    phi = np.array([3e-9, -4e-9, 1e-9])
    assert_allclose(exp_so3(phi), expm(hat3(phi)), atol=1e-16)
    assert_allclose(left_jacobian_so3(phi), np.eye(3) + 0.5 * hat3(phi), atol=1e-16)


# exp / log on SE(3)

def test_exp_se3_examples():
    assert exp_se3(np.zeros(6)).allclose(Pose.identity(), atol=0.0)
    T = exp_se3([1, 2, 3, 0, 0, 0])
    assert_array_equal(T.rotation, np.eye(3))
    assert_array_equal(T.translation, [1, 2, 3])


def test_exp_log_se3_roundtrip_1000(rng):
    worst = 0.0
    for _ in range(1000):
        xi = random_twist(rng, max_angle=3.0)
        worst = max(worst, np.abs(log_se3(exp_se3(xi)) - xi).max())
    assert worst < 1e-9


@given(twists())
def test_log_exp_se3_property(xi):
    assert_allclose(log_se3(exp_se3(xi)), xi, atol=1e-9)


@given(twists(max_angle=2.0 / math.sqrt(2), max_trans=2.0 / math.sqrt(3 * 2)))
def test_exp_se3_matches_series(xi):
    assert_allclose(exp_se3(xi).matrix, series_exp(hat6(xi), 30), atol=1e-10)


def test_log_se3_accepts_matrix(rng):
    T = random_pose(rng)
    assert_array_equal(log_se3(T), log_se3(T.matrix))


def test_left_jacobian_against_integral():
    # J = int_0^1 exp(s phi^) ds, evaluated with Gauss-Legendre quadrature
    phi = np.array([0.7, -1.1, 0.4])
    s, w = np.polynomial.legendre.leggauss(40)
    J = sum(wi * 0.5 * exp_so3(0.5 * (si + 1) * phi) for si, wi in zip(s, w))
    assert_allclose(left_jacobian_so3(phi), J, atol=1e-13)


# adjoint and dot operator

def test_adjoint_examples():
    assert_array_equal(adjoint(Pose.identity()), np.eye(6))
    r = np.array([0.5, -1.0, 2.0])
    expected = np.eye(6)
    expected[:3, 3:] = hat3(r)
    assert_array_equal(adjoint(Pose(np.eye(3), r)), expected)


def test_adjoint_identity_100(rng):
    for _ in range(100):
        T, xi = random_pose(rng), random_twist(rng, max_angle=2.0, max_trans=1.0)
        lhs = (T @ exp_se3(xi) @ T.inverse()).matrix
        assert_allclose(lhs, exp_se3(adjoint(T) @ xi).matrix, atol=1e-8)


@given(poses(), twists(max_angle=2.5, max_trans=2.0))
def test_adjoint_identity_property(T, xi):
    lhs = (T @ exp_se3(xi) @ T.inverse()).matrix
    assert_allclose(lhs, exp_se3(adjoint(T) @ xi).matrix, atol=1e-8)


def test_adjoint_of_inverse_is_inverse(rng):
    T = random_pose(rng)
    assert_allclose(adjoint(T.inverse()), np.linalg.inv(adjoint(T)), atol=1e-12)


def test_dot_op_examples():
    out = dot_op([0, 0, 0, 1])
    assert_array_equal(out[:3, :3], np.eye(3))
    assert_array_equal(out[:, 3:], np.zeros((4, 3)))
    assert_array_equal(out[3], np.zeros(6))
    assert_array_equal(dot_op([1, 2, 3, 1])[:3, 3:], -hat3([1, 2, 3]))


@given(st.tuples(*[st.floats(-10, 10)] * 6).map(np.array),
       st.tuples(*[st.floats(-10, 10)] * 4).map(np.array))
def test_dot_op_identity(xi, p):
    assert_allclose(hat6(xi) @ p, dot_op(p) @ xi, rtol=0, atol=1e-12 * max(1.0, np.abs(xi).max() * np.abs(p).max()))


def test_dot_op_batch_matches_single(rng):
    pts = rng.normal(size=(4, 7))
    batch = dot_op_batch(pts)
    for i in range(7):
        assert_array_equal(batch[i], dot_op(pts[:, i])[:3])


# Pose

def test_pose_inverse_composition(rng):
    for _ in range(20):
        T = random_pose(rng)
        assert (T @ T.inverse()).allclose(Pose.identity(), atol=1e-9)


def test_pose_is_immutable(rng):
    T = random_pose(rng)
    with pytest.raises(ValueError):
        T.rotation[0, 0] = 2.0
    with pytest.raises(ValueError):
        T.matrix[0, 3] = 2.0


def test_pose_acts_on_points(rng):
    T = random_pose(rng)
    p = np.array([1.0, 2.0, 3.0, 1.0])
    assert_allclose(T @ p, T.matrix @ p)


# sampling

def test_sample_zero_cov_returns_mean(rng):
    T = random_pose(rng)
    state = rng.bit_generator.state
    assert sample_perturbed(T, np.zeros((6, 6)), rng) is T
    # exactly six normals consumed
    ref = np.random.default_rng()
    ref.bit_generator.state = state
    ref.standard_normal(6)
    assert rng.standard_normal() == ref.standard_normal()


def test_sample_in_plane_translation_std(rng):
    cov = np.diag([0.0004, 0, 0.0004, 0, 0, 0])
    mean = Pose.identity()
    r = np.array([sample_perturbed(mean, cov, rng).translation for _ in range(10_000)])
    assert_array_equal(r[:, 1], 0.0)
    assert_allclose(r[:, [0, 2]].std(axis=0), 0.02, rtol=0.1)


def test_sample_moments_match_cov(rng):
    A = rng.normal(size=(6, 6)) * 0.05
    cov = A @ A.T
    mean = random_pose(rng)
    n = 100_000
    inv = mean.inverse()
    eps = np.array([log_se3(sample_perturbed(mean, cov, rng) @ inv) for _ in range(n)])
    assert_allclose(np.cov(eps.T), cov, atol=0.05 * np.abs(cov).max())
    assert np.linalg.norm(np.cov(eps.T) - cov) < 0.05 * np.linalg.norm(cov)


def test_cov_factor_rank_deficient():
    cov = np.diag([0.0004, 0, 0.0004, 0, 0, 0])
    L = cov_factor(cov)
    assert_allclose(L @ L.T, cov, atol=1e-18)
    cov_neg = cov.copy()
    cov_neg[1, 1] = -1e-12
    assert_allclose(cov_factor(cov_neg) @ cov_factor(cov_neg).T, cov, atol=1e-12)
    cov_neg[1, 1] = -1e-6
    with pytest.raises(ValueError):
        cov_factor(cov_neg)


def test_uncertain_pose_validates():
    with pytest.raises(ValueError):
        UncertainPose(Pose.identity(), -np.eye(6))
    up = UncertainPose(Pose.identity(), np.zeros((6, 6)))
    assert up.sample(np.random.default_rng(0)) is up.mean
