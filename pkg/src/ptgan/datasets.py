"""Manifests, same-identity training pairs, and a procedural stick-figure dataset.

Manifest format: one line per image, tab separated::

    image_path<TAB>identity_id<TAB>keypoint_path

Relative paths resolve against the manifest's directory. Blank lines and
lines starting with ``#`` are ignored.
"""

from dataclasses import dataclass
from itertools import groupby
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from . import pose_codec
from .errors import MalformedDocument, MissingFile, NoSharedVisibleJoints
from .imageio import read_image_cached, write_image


@dataclass(frozen=True)
class Entry:
    image_path: str
    identity_id: int
    keypoints: pose_codec.PoseKeypoints
    keypoint_path: str = ""


@dataclass(frozen=True)
class DatasetIndex:
    entries: tuple
    num_identities: int

    def __post_init__(self):
        for e in self.entries:
            if not 0 <= e.identity_id < self.num_identities:
                raise ValueError(
                    f"identity {e.identity_id} of {e.image_path} outside [0, {self.num_identities})"
                )

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True)
class TrainingPair:
    source: Entry
    target: Entry

    @property
    def identity(self):
        return self.source.identity_id


@dataclass
class Sample:
    source_img: np.ndarray  # augmented source, storage range
    target_pose: np.ndarray  # 75-float pose vector
    target_img: np.ndarray  # canonical target, storage range
    identity: int


def load_manifest(path, num_identities=None):
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"manifest not found: {path}")
    root = path.parent
    entries = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise MalformedDocument(f"{path}:{lineno}: expected 3 tab-separated fields")
        img, ident, kp = parts
        try:
            ident = int(ident)
        except ValueError as exc:
            raise MalformedDocument(f"{path}:{lineno}: identity must be an integer") from exc
        kp_path = root / kp
        if not kp_path.is_file():
            raise MissingFile(f"keypoint file not found: {kp_path}")
        entries.append(
            Entry(str(root / img), ident, pose_codec.load_keypoints(kp_path), str(kp_path))
        )
    if num_identities is None:
        num_identities = max((e.identity_id for e in entries), default=-1) + 1
    return DatasetIndex(tuple(entries), num_identities)


def write_manifest(path, index, relative_to=None):
    path = Path(path)
    base = Path(relative_to) if relative_to else path.parent
    lines = []
    for e in index.entries:
        img = Path(e.image_path)
        kp = Path(e.keypoint_path)
        lines.append(
            f"{_rel(img, base)}\t{e.identity_id}\t{_rel(kp, base)}"
        )
    path.write_text("\n".join(lines) + "\n")


def _rel(p, base):
    try:
        return str(p.resolve().relative_to(base.resolve()))
    except ValueError:
        return str(p)


def _different_enough(a, b, threshold):
    try:
        return pose_codec.pose_distance(a, b) > threshold
    except NoSharedVisibleJoints:
        # nothing to compare: the poses cannot be shown to coincide
        return True


def build_pairs(index, pair_min_pose_distance=0.0):
    """All ordered same-identity pairs whose poses differ by more than the threshold."""
    entries = sorted(index.entries, key=lambda e: (e.identity_id, e.image_path))
    poses = {id(e): pose_codec.normalize_pose(e.keypoints) for e in entries}
    pairs = []
    for _, group in groupby(entries, key=lambda e: e.identity_id):
        group = list(group)
        for a in group:
            for b in group:
                if a.image_path == b.image_path:
                    continue
                if _different_enough(poses[id(a)], poses[id(b)], pair_min_pose_distance):
                    pairs.append(TrainingPair(a, b))
    return pairs


def write_pairs(path, pairs):
    lines = [f"{p.source.image_path}\t{p.target.image_path}\t{p.identity}" for p in pairs]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_sample(pair, augmenter, sample_index=0, reader=read_image_cached):
    """Augmented source, clean canonical target, and the target's pose vector."""
    src = reader(pair.source.image_path)
    tgt = reader(pair.target.image_path)
    return Sample(
        source_img=augmenter(src, sample_index),
        target_pose=pose_codec.normalize_pose(pair.target.keypoints),
        target_img=augmenter.canonical(tgt),
        identity=pair.target.identity_id,
    )


# --------------------------------------------------------------------------
# synthetic stick-figure persons
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class IdentityStyle:
    torso_color: tuple
    limb_color: tuple
    head_color: tuple
    background: float
    head_scale: float


def _identity_style(rng):
    def color():
        return tuple(int(v) for v in rng.integers(30, 226, size=3))

    return IdentityStyle(
        torso_color=color(),
        limb_color=color(),
        head_color=color(),
        background=float(rng.uniform(0.15, 0.85)),
        head_scale=float(rng.uniform(0.8, 1.3)),
    )


def _polar(origin, length, angle):
    # angle measured from straight down, counter-clockwise in image coords
    return origin + length * np.array([np.sin(angle), np.cos(angle)])


def random_skeleton(rng, dims):
    """25 BODY-25 joints in pixels for a random upright articulated pose."""
    H, W = dims
    u = H / 8.0  # body unit; total figure height is about 6.5u
    cx = W / 2.0 + rng.uniform(-0.1, 0.1) * W
    lean = rng.uniform(-0.15, 0.15)
    mid_hip = np.array([cx, 0.55 * H])
    neck = mid_hip + 2.0 * u * np.array([np.sin(lean), -np.cos(lean)])
    j = np.zeros((25, 2))
    j[8] = mid_hip
    j[1] = neck
    across = np.array([np.cos(lean), np.sin(lean)])
    j[2] = neck - 0.6 * u * across
    j[5] = neck + 0.6 * u * across
    j[9] = mid_hip - 0.35 * u * across
    j[12] = mid_hip + 0.35 * u * across
    # arms: right arm swings toward -x, left toward +x
    for sh, el, wr, side in ((2, 3, 4, -1.0), (5, 6, 7, 1.0)):
        a1 = side * rng.uniform(0.1, 2.6)
        a2 = a1 + side * rng.uniform(-0.3, 1.6)
        j[el] = _polar(j[sh], 1.1 * u, a1)
        j[wr] = _polar(j[el], 1.0 * u, a2)
    for hip, kn, an, side in ((9, 10, 11, -1.0), (12, 13, 14, 1.0)):
        a1 = side * rng.uniform(-0.3, 0.9)
        a2 = a1 - side * rng.uniform(0.0, 0.8)
        j[kn] = _polar(j[hip], 1.3 * u, a1)
        j[an] = _polar(j[kn], 1.3 * u, a2)
    tilt = lean + rng.uniform(-0.3, 0.3)
    up = np.array([np.sin(tilt), -np.cos(tilt)])
    side = np.array([np.cos(tilt), np.sin(tilt)])
    j[0] = neck + 0.8 * u * up
    j[15] = j[0] + 0.2 * u * up - 0.15 * u * side
    j[16] = j[0] + 0.2 * u * up + 0.15 * u * side
    j[17] = j[0] - 0.3 * u * side
    j[18] = j[0] + 0.3 * u * side
    for an, big, small, heel, s in ((14, 19, 20, 21, 1.0), (11, 22, 23, 24, -1.0)):
        j[big] = j[an] + np.array([s * 0.35 * u, 0.15 * u])
        j[small] = j[an] + np.array([s * 0.25 * u, 0.2 * u])
        j[heel] = j[an] + np.array([-s * 0.1 * u, 0.15 * u])
    j[:, 0] = np.clip(j[:, 0], 0.0, W - 1.0)
    j[:, 1] = np.clip(j[:, 1], 0.0, H - 1.0)
    return j


def render_person(joints, style, dims):
    H, W = dims
    u = H / 8.0
    bg = int(round(style.background * 255))
    im = Image.new("RGB", (W, H), (bg, bg, bg))
    draw = ImageDraw.Draw(im)
    width = max(1, int(round(0.25 * u)))

    def seg(a, b, color, w=width):
        draw.line([tuple(joints[a]), tuple(joints[b])], fill=color, width=w)

    for a, b in ((9, 10), (10, 11), (12, 13), (13, 14), (11, 22), (14, 19)):
        seg(a, b, style.limb_color)
    for a, b in ((2, 3), (3, 4), (5, 6), (6, 7)):
        seg(a, b, style.limb_color)
    torso = [tuple(joints[i]) for i in (2, 5, 12, 9)]
    draw.polygon(torso, fill=style.torso_color)
    seg(1, 8, style.torso_color, max(1, int(round(0.7 * u))))
    r = 0.45 * u * style.head_scale
    x, y = joints[0]
    draw.ellipse([x - r, y - r, x + r, y + r], fill=style.head_color)
    return np.asarray(im, dtype=np.float32) / 255.0


@dataclass
class SyntheticDataset:
    index: DatasetIndex
    images: list
    styles: list
    dims: tuple

    def read(self, path):
        """In-memory stand-in for reading an entry's image from disk."""
        for e, img in zip(self.index.entries, self.images):
            if e.image_path == path:
                return img
        raise MissingFile(f"no synthetic image for {path}")


def make_synthetic_dataset(n_identities, images_per_identity, seed, dims=(256, 256),
                           out_dir=None, confidence_range=(0.6, 1.0)):  # fmt: skip
    """Render stick-figure persons with exact keypoints; optionally write to disk."""
    if n_identities < 1 or images_per_identity < 2:
        raise ValueError("need n_identities >= 1 and images_per_identity >= 2")
    root = np.random.SeedSequence(int(seed))
    id_seqs = root.spawn(n_identities)
    H, W = dims
    entries, images, styles = [], [], []
    out = Path(out_dir) if out_dir is not None else None
    for ident, seq in enumerate(id_seqs):
        style_seq, *img_seqs = seq.spawn(images_per_identity + 1)
        style = _identity_style(np.random.default_rng(style_seq))
        styles.append(style)
        for k, iseq in enumerate(img_seqs):
            rng = np.random.default_rng(iseq)
            joints = random_skeleton(rng, dims)
            img = render_person(joints, style, dims)
            conf = np.round(rng.uniform(*confidence_range, size=25), 3)
            kp = pose_codec.PoseKeypoints.from_array(
                np.column_stack([joints, conf]), (H, W)
            )
            name = f"id{ident:03d}_{k:03d}"
            img_path = f"images/{name}.png"
            kp_path = f"keypoints/{name}_keypoints.json"
            if out is not None:
                write_image(out / img_path, img)
                (out / kp_path).parent.mkdir(parents=True, exist_ok=True)
                (out / kp_path).write_text(pose_codec.serialize_keypoints(kp))
                img_path, kp_path = str(out / img_path), str(out / kp_path)
            entries.append(Entry(img_path, ident, kp, kp_path))
            images.append(img)
    index = DatasetIndex(tuple(entries), n_identities)
    if out is not None:
        write_manifest(out / "manifest.tsv", index)
    return SyntheticDataset(index, images, styles, dims)
