import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ptgan import pose_codec as pc
from ptgan.errors import (
    MalformedDocument,
    NegativeConfidence,
    NoSharedVisibleJoints,
    WrongJointCount,
    ZeroDims,
)


def _doc(triples, h=256, w=128):
    return json.dumps(
        {"pose_keypoints_2d": [v for t in triples for v in t], "image_height": h, "image_width": w}
    )


def _triples(n=25):
    return [(float(i), float(2 * i), 0.5) for i in range(n)]


def test_parse_maps_fields():
    t = _triples()
    t[0] = (64.0, 20.0, 0.95)
    kp = pc.parse_keypoints(_doc(t))
    assert kp.joints[0] == pc.Keypoint(64.0, 20.0, 0.95)
    assert kp.source_dims == (256, 128)
    assert len(kp.joints) == 25


def test_parse_zero_triple_is_undetected():
    t = _triples()
    t[7] = (0, 0, 0)
    kp = pc.parse_keypoints(_doc(t))
    assert kp.joints[7].confidence == 0
    assert not kp.joints[7].visible


def test_parse_wrong_joint_count():
    with pytest.raises(WrongJointCount):
        pc.parse_keypoints(_doc(_triples(18)))


@pytest.mark.parametrize(
    "text",
    ["{not json", "[1, 2]", json.dumps({"pose_keypoints_2d": [0] * 75}),
     json.dumps({"pose_keypoints_2d": ["a"] * 75, "image_height": 1, "image_width": 1}),
     json.dumps({"pose_keypoints_2d": [0] * 75, "image_height": 1.5, "image_width": 1})],
)  # fmt: skip
def test_parse_malformed(text):
    with pytest.raises(MalformedDocument):
        pc.parse_keypoints(text)


def test_parse_negative_confidence():
    t = _triples()
    t[3] = (1.0, 1.0, -0.1)
    with pytest.raises(NegativeConfidence):
        pc.parse_keypoints(_doc(t))


def test_normalize_divides_by_dims():
    t = [(0.0, 0.0, 0.0)] * 25
    t[0] = (64.0, 20.0, 0.95)
    vec = pc.normalize_pose(pc.parse_keypoints(_doc(t, h=256, w=128)))
    np.testing.assert_allclose(vec[:3], [0.5, 0.078125, 0.95], rtol=1e-6)
    assert vec.shape == (75,)


def test_normalize_invisible_joint_is_zero():
    t = _triples()
    t[4] = (100.0, 50.0, 0.0)
    vec = pc.normalize_pose(pc.parse_keypoints(_doc(t)))
    assert list(vec[12:15]) == [0.0, 0.0, 0.0]


def test_normalize_center():
    kp = pc.PoseKeypoints.from_array([[128.0, 128.0, 0.8]] * 25, (256, 256))
    vec = pc.normalize_pose(kp).reshape(25, 3)
    np.testing.assert_allclose(vec[:, :2], 0.5)
    np.testing.assert_allclose(vec[:, 2], 0.8, rtol=1e-6)


def test_normalize_zero_dims():
    kp = pc.PoseKeypoints.from_array(np.ones((25, 3)), (0, 10))
    with pytest.raises(ZeroDims):
        pc.normalize_pose(kp)


def test_pose_condition_drops_confidence():
    vec = np.arange(75, dtype=np.float32)
    assert pc.pose_condition(vec, True).shape == (75,)
    out = pc.pose_condition(vec, False)
    assert out.shape == (50,)
    np.testing.assert_array_equal(out[:4], [0, 1, 3, 4])


def test_pose_distance_examples():
    a = np.tile([0.0, 0.0, 1.0], 25)
    b = np.tile([0.3, 0.4, 1.0], 25)
    assert pc.pose_distance(a, a) == 0.0
    # each joint is a 3-4-5 triangle scaled by 0.1
    assert pc.pose_distance(a, b) == pytest.approx(0.5, abs=1e-12)


def test_pose_distance_disjoint_visibility():
    a = np.zeros((25, 3))
    b = np.zeros((25, 3))
    a[:5] = [0.1, 0.1, 1.0]
    b[20:] = [0.1, 0.1, 1.0]
    with pytest.raises(NoSharedVisibleJoints):
        pc.pose_distance(a.ravel(), b.ravel())


coords = st.floats(0.0, 1.0, allow_nan=False)
pose_st = st.lists(st.tuples(coords, coords), min_size=25, max_size=25).map(
    lambda xy: np.array([[x, y, 1.0] for x, y in xy]).ravel()
)


@settings(max_examples=50, deadline=None)
@given(pose_st, pose_st, pose_st)
def test_pose_distance_metric_properties(a, b, c):
    assert pc.pose_distance(a, b) == pytest.approx(pc.pose_distance(b, a), abs=1e-12)
    assert pc.pose_distance(a, c) <= pc.pose_distance(a, b) + pc.pose_distance(b, c) + 1e-12


raw_st = st.lists(
    st.tuples(st.floats(0, 500, allow_nan=False), st.floats(0, 500, allow_nan=False),
              st.sampled_from([0.0, 0.25, 0.5, 1.0])),
    min_size=25, max_size=25,
)  # fmt: skip


@settings(max_examples=50, deadline=None)
@given(raw_st, st.integers(1, 600), st.integers(1, 600))
def test_roundtrip_and_normalized_range(triples, h, w):
    kp = pc.parse_keypoints(_doc(triples, h, w))
    assert pc.parse_keypoints(pc.serialize_keypoints(kp)) == kp
    vec = pc.normalize_pose(kp).reshape(25, 3)
    assert np.all((vec >= 0) & (vec <= 1))
    assert np.all(vec[vec[:, 2] == 0] == 0)
