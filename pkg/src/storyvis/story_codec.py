"""Synthetic shape-story dataset: generation, rasterization, tokens, disk I/O.

A story is a sequence of T frames over a 2D scene; frame t shows objects
1..t (one object enters per frame, earlier objects persist at their
positions).  Stories carry a difficulty tier determined by how much the
objects of the final frame overlap:

    easy    max pairwise bounding-box IoU == 0
    medium  IoU in (0, 0.3)
    hard    IoU >= 0.3

Rendering is flat-shaded 2D rasterization with painter's-order occlusion
(larger y drawn on top), pixels in [-1, 1].  All functions here are pure
numpy / PIL; no torch.
"""

from __future__ import annotations

import json
import os
import zlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from .errors import (
    CorruptRecordError,
    DataError,
    DatasetNotFoundError,
    SchemaVersionError,
    StoryGenerationError,
)

SCHEMA_VERSION = 1

# tier thresholds on max pairwise bounding-box IoU of the final frame
HARD_IOU = 0.3


class Shape(str, Enum):
    CUBE = "cube"
    SPHERE = "sphere"
    CYLINDER = "cylinder"


class Color(str, Enum):
    GRAY = "gray"
    RED = "red"
    BLUE = "blue"
    GREEN = "green"
    BROWN = "brown"
    PURPLE = "purple"
    CYAN = "cyan"
    YELLOW = "yellow"


class Size(str, Enum):
    SMALL = "small"
    LARGE = "large"


class Tier(str, Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"


COLOR_RGB: dict[Color, tuple[int, int, int]] = {
    Color.GRAY: (87, 87, 87),
    Color.RED: (173, 35, 35),
    Color.BLUE: (42, 75, 215),
    Color.GREEN: (29, 105, 20),
    Color.BROWN: (129, 74, 25),
    Color.PURPLE: (129, 38, 192),
    Color.CYAN: (41, 208, 208),
    Color.YELLOW: (255, 238, 51),
}

BACKGROUND_RGB = (232, 232, 232)

# half side length of an object's bounding box in scene coordinates
HALF_EXTENT = {Size.SMALL: 0.08, Size.LARGE: 0.14}


@dataclass(frozen=True)
class ObjectSpec:
    """One object: shape, color, size and center position in [0,1]^2."""

    shape: Shape
    color: Color
    size: Size
    position: tuple[float, float]

    def __post_init__(self):
        x, y = self.position
        if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
            raise ValueError(f"position {self.position} outside [0,1]^2")

    @property
    def half_extent(self) -> float:
        return HALF_EXTENT[self.size]

    @property
    def bounding_box(self) -> tuple[float, float, float, float]:
        """(x0, y0, x1, y1) in scene coordinates."""
        x, y = self.position
        h = self.half_extent
        return (x - h, y - h, x + h, y + h)


@dataclass
class StorySpec:
    """A T-frame story; frame t holds objects 0..t (cumulative scenes)."""

    story_id: int
    frames: list[tuple[ObjectSpec, ...]]
    tier: Tier

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.frames:
            raise ValueError("story must have at least one frame")
        for t, frame in enumerate(self.frames):
            if len(frame) != t + 1:
                raise ValueError(f"frame {t} has {len(frame)} objects, expected {t + 1}")
            if t > 0 and frame[:t] != self.frames[t - 1]:
                raise ValueError(f"frame {t} does not extend frame {t - 1}")

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    def new_object(self, t: int) -> ObjectSpec:
        """The object that enters the scene in frame t."""
        return self.frames[t][t]

    def to_json_dict(self) -> dict:
        return {
            "story_id": self.story_id,
            "tier": self.tier.value,
            "frames": [
                [
                    {
                        "shape": o.shape.value,
                        "color": o.color.value,
                        "size": o.size.value,
                        "position": [o.position[0], o.position[1]],
                    }
                    for o in frame
                ]
                for frame in self.frames
            ],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "StorySpec":
        frames = [
            tuple(
                ObjectSpec(
                    shape=Shape(o["shape"]),
                    color=Color(o["color"]),
                    size=Size(o["size"]),
                    position=(float(o["position"][0]), float(o["position"][1])),
                )
                for o in frame
            )
            for frame in d["frames"]
        ]
        return cls(story_id=int(d["story_id"]), frames=frames, tier=Tier(d["tier"]))


@dataclass
class RenderedStory:
    """T frames of 3xHxW float32 pixels in [-1, 1], paired with the spec."""

    images: np.ndarray
    spec: StorySpec

    def __post_init__(self):
        if self.images.ndim != 4 or self.images.shape[1] != 3:
            raise ValueError(f"expected (T,3,H,W) images, got {self.images.shape}")
        if self.images.shape[0] != self.spec.n_frames:
            raise ValueError("frame count mismatch between images and spec")


# ---------------------------------------------------------------------------
# Bounding boxes, IoU, tiers
# ---------------------------------------------------------------------------

def box_iou(a: tuple[float, float, float, float], b: tuple[float, float, float, float]) -> float:
    """Intersection-over-union of two axis-aligned boxes (x0,y0,x1,y1)."""
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    if inter == 0.0:
        return 0.0
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


def max_pairwise_iou(objects: Sequence[ObjectSpec]) -> float:
    boxes = [o.bounding_box for o in objects]
    best = 0.0
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            best = max(best, box_iou(boxes[i], boxes[j]))
    return best


def tier_of(spec: StorySpec) -> Tier:
    """Difficulty tier from the max pairwise box IoU of the final frame."""
    iou = max_pairwise_iou(spec.frames[-1])
    if iou == 0.0:
        return Tier.EASY
    if iou < HARD_IOU:
        return Tier.MEDIUM
    return Tier.HARD


# ---------------------------------------------------------------------------
# Story sampling
# ---------------------------------------------------------------------------

def _sample_position(rng: np.random.Generator, half: float) -> np.ndarray:
    return rng.uniform(half, 1.0 - half, size=2)


def make_story(rng_seed: int, tier: Tier, T: int = 4, *,
               max_attempts: int = 5000, story_id: int | None = None) -> StorySpec:
    """Sample a story whose computed tier equals ``tier``.

    Deterministic in ``rng_seed``.  Rejection sampling with proposal bias:
    for medium/hard tiers, later objects are sometimes placed near an
    earlier one so that the requested overlap is actually reachable; every
    accepted story is verified with ``tier_of``.
    """
    tier = Tier(tier)
    if T < 1:
        raise ValueError("T must be >= 1")
    rng = np.random.default_rng(rng_seed)
    sid = rng_seed if story_id is None else story_id

    for _ in range(max_attempts):
        shapes = [Shape(list(Shape)[rng.integers(len(Shape))]) for _ in range(T)]
        colors = [Color(list(Color)[rng.integers(len(Color))]) for _ in range(T)]
        sizes = [Size(list(Size)[rng.integers(len(Size))]) for _ in range(T)]
        halves = [HALF_EXTENT[s] for s in sizes]

        positions: list[np.ndarray] = []
        for k in range(T):
            pos = _sample_position(rng, halves[k])
            if k > 0 and tier is not Tier.EASY:
                # bias toward an anchor so overlapping layouts are reachable
                p_near = 0.6 if tier is Tier.HARD else 0.4
                if rng.random() < p_near:
                    j = int(rng.integers(k))
                    reach = halves[k] + halves[j]
                    if tier is Tier.HARD:
                        offset = rng.uniform(-0.5 * reach, 0.5 * reach, size=2)
                    else:
                        direction = rng.uniform(-1.0, 1.0, size=2)
                        norm = np.linalg.norm(direction)
                        if norm > 0:
                            direction = direction / norm
                        offset = direction * rng.uniform(0.75 * reach, 0.95 * reach)
                    pos = np.clip(positions[j] + offset, halves[k], 1.0 - halves[k])
            positions.append(pos)

        objects = [
            ObjectSpec(shape=shapes[k], color=colors[k], size=sizes[k],
                       position=(float(positions[k][0]), float(positions[k][1])))
            for k in range(T)
        ]
        frames = [tuple(objects[: t + 1]) for t in range(T)]
        candidate = StorySpec(story_id=sid, frames=frames, tier=tier)
        if tier_of(candidate) is tier:
            return candidate

    raise StoryGenerationError(
        f"could not sample a {tier.value} story with T={T} in {max_attempts} attempts"
    )


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _check_render_dims(H: int, W: int):
    for name, v in (("H", H), ("W", W)):
        if v < 16 or (v & (v - 1)) != 0:
            raise ValueError(f"{name}={v} must be a power of two >= 16")


def _object_mask(obj: ObjectSpec, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    x, y = obj.position
    h = obj.half_extent
    if obj.shape is Shape.CUBE:
        return (np.abs(px - x) <= h) & (np.abs(py - y) <= h)
    if obj.shape is Shape.SPHERE:
        return (px - x) ** 2 + (py - y) ** 2 <= h * h
    # cylinder: narrow upright slab inside the box
    return (np.abs(px - x) <= 0.6 * h) & (np.abs(py - y) <= h)


def render_frame_u8(objects: Sequence[ObjectSpec], H: int, W: int) -> np.ndarray:
    """Rasterize one frame to (H, W, 3) uint8."""
    canvas = np.empty((H, W, 3), dtype=np.uint8)
    canvas[:] = BACKGROUND_RGB
    # pixel centers in scene coordinates
    px = (np.arange(W, dtype=np.float64) + 0.5) / W
    py = (np.arange(H, dtype=np.float64) + 0.5) / H
    px, py = np.meshgrid(px, py)
    # painter's order: larger y (closer to the bottom) drawn later / on top
    order = sorted(range(len(objects)), key=lambda i: (objects[i].position[1], i))
    for i in order:
        mask = _object_mask(objects[i], px, py)
        canvas[mask] = COLOR_RGB[objects[i].color]
    return canvas


def u8_to_float(img_u8: np.ndarray) -> np.ndarray:
    """(H,W,3) uint8 -> (3,H,W) float32 in [-1, 1]."""
    f = img_u8.astype(np.float32) / 255.0 * 2.0 - 1.0
    return np.ascontiguousarray(f.transpose(2, 0, 1))


def float_to_u8(img: np.ndarray) -> np.ndarray:
    """(3,H,W) float in [-1, 1] -> (H,W,3) uint8 (exact inverse of u8_to_float)."""
    u8 = np.round((np.clip(img, -1.0, 1.0) + 1.0) / 2.0 * 255.0)
    return np.ascontiguousarray(u8.transpose(1, 2, 0)).astype(np.uint8)


def render(spec: StorySpec, H: int = 64, W: int = 64, render_seed: int = 0) -> RenderedStory:
    """Rasterize every frame of ``spec`` to [-1, 1] float pixels.

    Output is a pure function of the spec; ``render_seed`` is accepted for
    interface stability (reserved for stochastic shading variants) and does
    not currently influence pixels.
    """
    _check_render_dims(H, W)
    images = np.stack([u8_to_float(render_frame_u8(frame, H, W)) for frame in spec.frames])
    return RenderedStory(images=images, spec=spec)


# ---------------------------------------------------------------------------
# Tokenization
# ---------------------------------------------------------------------------

# token layout: [frame index | shape | color | size | position bucket]
MAX_FRAMES = 16
POS_GRID = 8  # position buckets per axis

SHAPE_OFFSET = MAX_FRAMES
COLOR_OFFSET = SHAPE_OFFSET + len(Shape)
SIZE_OFFSET = COLOR_OFFSET + len(Color)
BUCKET_OFFSET = SIZE_OFFSET + len(Size)
VOCAB_SIZE = BUCKET_OFFSET + POS_GRID * POS_GRID

TOKENS_PER_FRAME = 5

_SHAPE_INDEX = {s: i for i, s in enumerate(Shape)}
_COLOR_INDEX = {c: i for i, c in enumerate(Color)}
_SIZE_INDEX = {s: i for i, s in enumerate(Size)}


@dataclass(frozen=True)
class TokenSequence:
    """Fixed-length token ids describing one frame's newly added object."""

    tokens: tuple[int, ...]
    vocab_size: int = VOCAB_SIZE

    def __post_init__(self):
        if len(self.tokens) != TOKENS_PER_FRAME:
            raise ValueError(f"expected {TOKENS_PER_FRAME} tokens, got {len(self.tokens)}")
        if any(t < 0 or t >= self.vocab_size for t in self.tokens):
            raise ValueError("token id out of vocabulary")


def position_bucket(position: tuple[float, float]) -> int:
    bx = min(int(position[0] * POS_GRID), POS_GRID - 1)
    by = min(int(position[1] * POS_GRID), POS_GRID - 1)
    return by * POS_GRID + bx


def tokenize(spec: StorySpec) -> list[TokenSequence]:
    """One TokenSequence per frame, describing the frame's new object."""
    if spec.n_frames > MAX_FRAMES:
        raise ValueError(f"stories longer than {MAX_FRAMES} frames are not encodable")
    out = []
    for t in range(spec.n_frames):
        obj = spec.new_object(t)
        out.append(TokenSequence(tokens=(
            t,
            SHAPE_OFFSET + _SHAPE_INDEX[obj.shape],
            COLOR_OFFSET + _COLOR_INDEX[obj.color],
            SIZE_OFFSET + _SIZE_INDEX[obj.size],
            BUCKET_OFFSET + position_bucket(obj.position),
        )))
    return out


def detokenize(seq: TokenSequence) -> dict:
    """Invert ``tokenize`` for one frame: discrete attributes + bucket."""
    t, s, c, z, b = seq.tokens
    if not (0 <= t < MAX_FRAMES):
        raise ValueError(f"bad frame token {t}")
    if not (SHAPE_OFFSET <= s < COLOR_OFFSET):
        raise ValueError(f"bad shape token {s}")
    if not (COLOR_OFFSET <= c < SIZE_OFFSET):
        raise ValueError(f"bad color token {c}")
    if not (SIZE_OFFSET <= z < BUCKET_OFFSET):
        raise ValueError(f"bad size token {z}")
    if not (BUCKET_OFFSET <= b < VOCAB_SIZE):
        raise ValueError(f"bad bucket token {b}")
    return {
        "frame_index": t,
        "shape": list(Shape)[s - SHAPE_OFFSET],
        "color": list(Color)[c - COLOR_OFFSET],
        "size": list(Size)[z - SIZE_OFFSET],
        "bucket": b - BUCKET_OFFSET,
    }


def vocab_table() -> dict:
    """Human-readable vocabulary layout, stored in dataset metadata."""
    return {
        "tokens_per_frame": TOKENS_PER_FRAME,
        "vocab_size": VOCAB_SIZE,
        "frame_tokens": [0, MAX_FRAMES],
        "shape_tokens": {s.value: SHAPE_OFFSET + i for i, s in enumerate(Shape)},
        "color_tokens": {c.value: COLOR_OFFSET + i for i, c in enumerate(Color)},
        "size_tokens": {s.value: SIZE_OFFSET + i for i, s in enumerate(Size)},
        "bucket_tokens": [BUCKET_OFFSET, BUCKET_OFFSET + POS_GRID * POS_GRID],
        "position_grid": POS_GRID,
    }


# ---------------------------------------------------------------------------
# Dataset I/O
# ---------------------------------------------------------------------------

def _crc32_of_file(path: str) -> int:
    with open(path, "rb") as f:
        return zlib.crc32(f.read()) & 0xFFFFFFFF


def _story_dir(root: str, story_id: int) -> str:
    return os.path.join(root, "stories", str(story_id))


def write_dataset(specs: Sequence[StorySpec], renders: Sequence[RenderedStory],
                  path: str) -> "Dataset":
    """Write stories to ``path`` (PNG frames + JSON specs + checked metadata)."""
    if len(specs) != len(renders):
        raise ValueError("specs and renders must have equal length")
    if not specs:
        raise ValueError("refusing to write an empty dataset")
    T = specs[0].n_frames
    H, W = renders[0].images.shape[2], renders[0].images.shape[3]
    for spec, ren in zip(specs, renders):
        if ren.spec is not spec and ren.spec.story_id != spec.story_id:
            raise ValueError("specs and renders are not aligned")
        if spec.n_frames != T or ren.images.shape[2:] != (H, W):
            raise ValueError("all stories in a dataset must share T, H, W")

    os.makedirs(path, exist_ok=True)
    records = {}
    tier_counts = {t.value: 0 for t in Tier}
    for spec, ren in zip(specs, renders):
        sdir = _story_dir(path, spec.story_id)
        os.makedirs(sdir, exist_ok=True)
        files = {}
        spec_path = os.path.join(sdir, "spec.json")
        with open(spec_path, "w", encoding="utf-8") as f:
            json.dump(spec.to_json_dict(), f, sort_keys=True)
        files[os.path.relpath(spec_path, path)] = _crc32_of_file(spec_path)
        for t in range(T):
            frame_path = os.path.join(sdir, f"frame_{t}.png")
            Image.fromarray(float_to_u8(ren.images[t])).save(frame_path, format="PNG")
            files[os.path.relpath(frame_path, path)] = _crc32_of_file(frame_path)
        records[str(spec.story_id)] = {"tier": spec.tier.value, "files": files}
        tier_counts[spec.tier.value] += 1

    meta = {
        "schema_version": SCHEMA_VERSION,
        "T": T,
        "H": H,
        "W": W,
        "n_stories": len(specs),
        "tier_counts": tier_counts,
        "vocab": vocab_table(),
        "records": records,
    }
    with open(os.path.join(path, "meta.json"), "w", encoding="utf-8") as f:
        json.dump(meta, f, sort_keys=True, indent=1)
    return Dataset(path)


def read_dataset(path: str) -> "Dataset":
    return Dataset(path)


class Dataset:
    """Read handle over a dataset directory; verifies checksums on access."""

    def __init__(self, path: str):
        meta_path = os.path.join(path, "meta.json")
        if not os.path.isfile(meta_path):
            raise DatasetNotFoundError(f"no dataset at {path!r} (missing meta.json)")
        try:
            with open(meta_path, "r", encoding="utf-8") as f:
                self.meta = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise DataError(f"unreadable dataset metadata: {e}") from e
        version = self.meta.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaVersionError(
                f"dataset schema_version {version!r} != supported {SCHEMA_VERSION}"
            )
        self.path = path
        self.story_ids = sorted(int(k) for k in self.meta["records"])

    @property
    def T(self) -> int:
        return self.meta["T"]

    @property
    def H(self) -> int:
        return self.meta["H"]

    @property
    def W(self) -> int:
        return self.meta["W"]

    @property
    def tier_counts(self) -> dict:
        return dict(self.meta["tier_counts"])

    def __len__(self) -> int:
        return len(self.story_ids)

    def _checked_read(self, rel_path: str, expected_crc: int) -> bytes:
        full = os.path.join(self.path, rel_path)
        try:
            with open(full, "rb") as f:
                blob = f.read()
        except FileNotFoundError as e:
            raise CorruptRecordError(f"missing dataset file {rel_path!r}") from e
        if (zlib.crc32(blob) & 0xFFFFFFFF) != expected_crc:
            raise CorruptRecordError(f"checksum mismatch for {rel_path!r}")
        return blob

    def load_spec(self, story_id: int) -> StorySpec:
        record = self.meta["records"].get(str(story_id))
        if record is None:
            raise KeyError(f"story {story_id} not in dataset")
        rel = os.path.relpath(os.path.join(_story_dir(self.path, story_id), "spec.json"), self.path)
        blob = self._checked_read(rel, record["files"][rel])
        return StorySpec.from_json_dict(json.loads(blob.decode("utf-8")))

    def load_story(self, story_id: int) -> RenderedStory:
        import io

        record = self.meta["records"].get(str(story_id))
        if record is None:
            raise KeyError(f"story {story_id} not in dataset")
        spec = self.load_spec(story_id)
        frames = []
        for t in range(self.T):
            rel = os.path.relpath(
                os.path.join(_story_dir(self.path, story_id), f"frame_{t}.png"), self.path
            )
            blob = self._checked_read(rel, record["files"][rel])
            img = np.asarray(Image.open(io.BytesIO(blob)).convert("RGB"))
            frames.append(u8_to_float(img))
        return RenderedStory(images=np.stack(frames), spec=spec)

    def __iter__(self) -> Iterable[RenderedStory]:
        for sid in self.story_ids:
            yield self.load_story(sid)
