"""25-joint pose annotations: parsing, normalization and comparison.

Keypoint files are JSON documents with a flat ``pose_keypoints_2d`` array of
75 numbers ``[x0, y0, c0, ..., x24, y24, c24]`` plus integer ``image_height``
and ``image_width``.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    MalformedDocument,
    NegativeConfidence,
    NoSharedVisibleJoints,
    WrongJointCount,
    ZeroDims,
)

NUM_JOINTS = 25
POSE_DIM = 3 * NUM_JOINTS

BODY25_JOINTS = (
    "Nose", "Neck", "RShoulder", "RElbow", "RWrist", "LShoulder", "LElbow",
    "LWrist", "MidHip", "RHip", "RKnee", "RAnkle", "LHip", "LKnee", "LAnkle",
    "REye", "LEye", "REar", "LEar", "LBigToe", "LSmallToe", "LHeel",
    "RBigToe", "RSmallToe", "RHeel",
)  # fmt: skip

# limb connectivity used for drawing skeletons
BODY25_LIMBS = (
    (1, 8), (1, 2), (2, 3), (3, 4), (1, 5), (5, 6), (6, 7), (8, 9), (9, 10),
    (10, 11), (8, 12), (12, 13), (13, 14), (1, 0), (0, 15), (15, 17), (0, 16),
    (16, 18), (14, 19), (19, 20), (14, 21), (11, 22), (22, 23), (11, 24),
)  # fmt: skip


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    confidence: float

    @property
    def visible(self):
        return self.confidence > 0


@dataclass(frozen=True)
class PoseKeypoints:
    joints: tuple
    source_dims: tuple  # (height, width)

    def __post_init__(self):
        if len(self.joints) != NUM_JOINTS:
            raise WrongJointCount(f"expected {NUM_JOINTS} joints, got {len(self.joints)}")

    def as_array(self):
        return np.array([(k.x, k.y, k.confidence) for k in self.joints], dtype=np.float64)

    @classmethod
    def from_array(cls, arr, source_dims):
        arr = np.asarray(arr, dtype=np.float64).reshape(-1, 3)
        joints = tuple(Keypoint(float(x), float(y), float(c)) for x, y, c in arr)
        return cls(joints, (int(source_dims[0]), int(source_dims[1])))


def parse_keypoints(document):
    """Parse a keypoint document (str, bytes or already-decoded dict)."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except (ValueError, UnicodeDecodeError) as exc:
            raise MalformedDocument(f"not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise MalformedDocument("keypoint document must be a JSON object")
    try:
        flat = document["pose_keypoints_2d"]
        height = document["image_height"]
        width = document["image_width"]
    except KeyError as exc:
        raise MalformedDocument(f"missing field {exc.args[0]!r}") from exc
    if not isinstance(flat, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in flat
    ):
        raise MalformedDocument("pose_keypoints_2d must be a flat list of numbers")
    if isinstance(height, bool) or isinstance(width, bool):
        raise MalformedDocument("image dims must be integers")
    if not isinstance(height, int) or not isinstance(width, int):
        raise MalformedDocument("image dims must be integers")
    if len(flat) % 3 != 0 or len(flat) // 3 != NUM_JOINTS:
        raise WrongJointCount(f"expected {POSE_DIM} numbers (25 triples), got {len(flat)}")
    arr = np.asarray(flat, dtype=np.float64).reshape(NUM_JOINTS, 3)
    if not np.all(np.isfinite(arr)):
        raise MalformedDocument("non-finite keypoint value")
    if np.any(arr[:, 2] < 0):
        raise NegativeConfidence(f"joint {int(np.argmax(arr[:, 2] < 0))} has negative confidence")
    return PoseKeypoints.from_array(arr, (height, width))


def load_keypoints(path):
    return parse_keypoints(Path(path).read_text())


def serialize_keypoints(kp):
    doc = {
        "image_height": int(kp.source_dims[0]),
        "image_width": int(kp.source_dims[1]),
        "pose_keypoints_2d": [float(v) for v in kp.as_array().ravel()],
    }
    return json.dumps(doc)


def normalize_pose(kp):
    """Map pixel keypoints to a flat 75-vector with coords scaled to [0, 1]."""
    height, width = kp.source_dims
    if height == 0 or width == 0:
        raise ZeroDims(f"source_dims {kp.source_dims} contains zero")
    arr = kp.as_array()
    out = np.zeros_like(arr)
    vis = arr[:, 2] > 0
    out[vis, 0] = np.clip(arr[vis, 0] / width, 0.0, 1.0)
    out[vis, 1] = np.clip(arr[vis, 1] / height, 0.0, 1.0)
    out[vis, 2] = np.clip(arr[vis, 2], 0.0, 1.0)
    return out.ravel().astype(np.float32)


def pose_condition(vec, include_confidence=True):
    """Generator input from a pose vector; drops the confidence column if asked."""
    vec = np.asarray(vec, dtype=np.float32)
    if include_confidence:
        return vec
    return vec.reshape(NUM_JOINTS, 3)[:, :2].ravel()


def pose_distance(a, b):
    """Mean Euclidean distance over joints visible in both pose vectors."""
    a = np.asarray(a, dtype=np.float64).reshape(NUM_JOINTS, 3)
    b = np.asarray(b, dtype=np.float64).reshape(NUM_JOINTS, 3)
    shared = (a[:, 2] > 0) & (b[:, 2] > 0)
    if not shared.any():
        raise NoSharedVisibleJoints("poses share no visible joint")
    d = np.hypot(a[shared, 0] - b[shared, 0], a[shared, 1] - b[shared, 1])
    return float(d.mean())
