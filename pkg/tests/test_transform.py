import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from handkin.transform import Transform, rot_axis_angle_matrix
from oracles import homogeneous, quat_matrix, rotation_angle_between, rotation_matrix

finite = st.floats(-10, 10, allow_nan=False)
angles = st.floats(-math.pi, math.pi, allow_nan=False)
axes = st.tuples(finite, finite, finite).filter(lambda v: np.linalg.norm(v) > 1e-3)


@st.composite
def transforms(draw):
    return Transform.from_axis_angle(draw(axes), draw(angles), (draw(finite), draw(finite), draw(finite)))


@given(transforms(), transforms(), transforms())
def test_composition_keeps_unit_quaternion(a, b, c):
    q = (a @ b @ c).rotation
    assert abs(math.sqrt(sum(x * x for x in q)) - 1.0) < 1e-9


@given(transforms())
def test_compose_with_inverse_is_identity(t):
    for ident in (t @ t.inverse(), t.inverse() @ t):
        d, ang = ident.distance(Transform())
        assert d < 1e-9 and ang < 1e-9


@given(transforms(), transforms())
def test_compose_matches_matrix_product(a, b):
    Ha = homogeneous(quat_matrix(a.rotation), a.translation)
    Hb = homogeneous(quat_matrix(b.rotation), b.translation)
    np.testing.assert_allclose((a @ b).matrix(), Ha @ Hb, atol=1e-9)


@given(axes, angles)
def test_axis_angle_matches_matrix_exponential(axis, angle):
    unit = np.asarray(axis) / np.linalg.norm(axis)
    R = Transform.from_axis_angle(unit, angle).rotation_matrix()
    np.testing.assert_allclose(R, rotation_matrix(unit, angle), atol=1e-12)
    np.testing.assert_allclose(rot_axis_angle_matrix(unit, angle), rotation_matrix(unit, angle), atol=1e-12)


def test_apply_and_rotate():
    t = Transform.from_axis_angle((0, 0, 1), math.pi / 2, (1.0, 0.0, 0.0))
    np.testing.assert_allclose(t.apply((1.0, 0.0, 0.0)), (1.0, 1.0, 0.0), atol=1e-15)
    np.testing.assert_allclose(t.rotate((1.0, 0.0, 0.0)), (0.0, 1.0, 0.0), atol=1e-15)


def test_rpy_is_fixed_axis_roll_then_pitch_then_yaw():
    roll, pitch, yaw = 0.3, -0.4, 1.1
    expected = rotation_matrix((0, 0, 1), yaw) @ rotation_matrix((0, 1, 0), pitch) @ rotation_matrix((1, 0, 0), roll)
    R = Transform.from_rpy((roll, pitch, yaw)).rotation_matrix()
    np.testing.assert_allclose(R, expected, atol=1e-12)
    np.testing.assert_allclose(Transform.from_rpy((roll, pitch, yaw)).rpy(), (roll, pitch, yaw), atol=1e-12)


@given(transforms())
def test_dict_round_trips(t):
    for enc in ("rpy", "quat"):
        back = Transform.from_dict(t.to_dict(enc))
        assert back.isclose(t, 1e-9)


def test_from_dict_accepts_axis_angle():
    t = Transform.from_dict({"xyz": [0, 0, 1], "axis_angle": [0, 0, 1, math.pi / 2]})
    assert t.isclose(Transform.from_axis_angle((0, 0, 1), math.pi / 2, (0, 0, 1)))


@pytest.mark.parametrize("doc", [
    {"xyz": [0, 0, 0], "rpy": [0, 0, 0], "quat": [1, 0, 0, 0]},
    {"xyz": [0, 0, 0], "euler": [0, 0, 0]},
    {"xyz": [0, 0]},
    {"quat": [0, 0, 0, 0]},
])
def test_from_dict_rejects_bad_documents(doc):
    with pytest.raises(ValueError):
        Transform.from_dict(doc)


def test_quaternion_is_normalized_on_construction():
    t = Transform((2.0, 0.0, 0.0, 0.0))
    assert t.rotation == (1.0, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        Transform((0.0, 0.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        Transform(translation=(math.nan, 0.0, 0.0))


@given(transforms(), transforms())
def test_distance_reports_translation_and_relative_angle(a, b):
    d, ang = a.distance(b)
    assert d == pytest.approx(np.linalg.norm(np.subtract(a.translation, b.translation)), abs=1e-12)
    assert ang == pytest.approx(rotation_angle_between(a.rotation_matrix(), b.rotation_matrix()), abs=1e-6)
