import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from icpcov.errors import DimensionMismatch
from icpcov.geometry import (
    RigidTransform,
    apply_small_motion,
    exp_motion,
    log_motion,
    motion_dim,
    motion_size,
    rotation_action,
    skew,
    split_motion,
)

finite = st.floats(-2.0, 2.0, allow_nan=False)
vec3 = arrays(float, 3, elements=finite)
motion3d = arrays(float, 6, elements=st.floats(-0.5, 0.5))
motion2d = arrays(float, 3, elements=st.floats(-0.5, 0.5))


def test_motion_sizes():
    assert motion_size(2) == 3 and motion_size(3) == 6
    assert motion_dim(np.zeros(3)) == 2 and motion_dim(np.zeros(6)) == 3
    with pytest.raises(DimensionMismatch):
        motion_size(4)
    with pytest.raises(DimensionMismatch):
        motion_dim(np.zeros(5))


def test_split_motion_orders_rotation_first():
    x_R, x_T = split_motion([1, 2, 3, 4, 5, 6])
    np.testing.assert_array_equal(x_R, [1, 2, 3])
    np.testing.assert_array_equal(x_T, [4, 5, 6])
    th, t = split_motion([0.1, 2, 3])
    assert th == 0.1
    np.testing.assert_array_equal(t, [2, 3])


@given(vec3, vec3)
def test_skew_is_cross_product_and_antisymmetric(a, b):
    S = skew(a)
    np.testing.assert_array_equal(S, -S.T)
    np.testing.assert_allclose(S @ b, np.cross(a, b), atol=1e-12)


def test_rotation_action_2d_turns_by_quarter():
    np.testing.assert_allclose(rotation_action(2.0, [1.0, 0.0]), [0.0, 2.0])


def test_apply_small_motion_rejects_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        apply_small_motion(np.zeros(6), np.zeros((4, 2)))


@settings(max_examples=60)
@given(motion3d)
def test_exp_is_rigid_and_log_inverts_3d(x):
    T = exp_motion(x)
    np.testing.assert_allclose(T.rotation.T @ T.rotation, np.eye(3), atol=1e-12)
    assert np.linalg.det(T.rotation) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(log_motion(T), x, atol=1e-10)


@settings(max_examples=60)
@given(motion2d)
def test_exp_is_rigid_and_log_inverts_2d(x):
    T = exp_motion(x)
    np.testing.assert_allclose(T.rotation.T @ T.rotation, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(log_motion(T), x, atol=1e-10)


@settings(max_examples=40)
@given(arrays(float, 6, elements=st.floats(-1.0, 1.0)), vec3)
def test_exp_agrees_with_small_motion_to_second_order(u, p):
    if np.linalg.norm(u) < 1e-3:
        return
    u = u / np.linalg.norm(u)
    errs = []
    for h in (1e-2, 5e-3):
        errs.append(np.linalg.norm(exp_motion(h * u).apply(p) - apply_small_motion(h * u, p)))
    # quadratic remainder: halving the step quarters the error
    assert errs[1] <= errs[0] / 4 * 1.2 + 1e-15


def test_exp_small_angle_series_is_continuous():
    x = np.array([1e-7, 0.0, 0.0, 1.0, 2.0, 3.0])
    T = exp_motion(x)
    np.testing.assert_allclose(T.translation, [1.0, 2.0 - 1.5e-7, 3.0 + 1e-7], atol=1e-12)
    T2 = exp_motion([1e-7, 1.0, 2.0])
    np.testing.assert_allclose(T2.translation, [1.0 - 1e-7, 2.0 + 0.5e-7], atol=1e-12)


def test_log_near_pi():
    x = np.array([np.pi - 1e-8, 0, 0, 0.1, 0.2, 0.3])
    np.testing.assert_allclose(log_motion(exp_motion(x))[:3], x[:3], atol=1e-6)


def test_transform_compose_inverse_and_matrix():
    rng = np.random.default_rng(0)
    A, B = exp_motion(rng.normal(size=6) * 0.3), exp_motion(rng.normal(size=6) * 0.3)
    p = rng.normal(size=(5, 3))
    np.testing.assert_allclose((A @ B).apply(p), A.apply(B.apply(p)), atol=1e-12)
    np.testing.assert_allclose(A.inverse().apply(A.apply(p)), p, atol=1e-12)
    M = A.as_matrix()
    assert M.shape == (4, 4)
    back = RigidTransform.from_matrix(M)
    np.testing.assert_allclose(back.rotation, A.rotation)
    np.testing.assert_allclose(back.translation, A.translation)
    assert RigidTransform.identity(2).dim == 2
