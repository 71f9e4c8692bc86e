"""Core domain types shared by every pipeline stage.

All types are immutable after construction and safe to share across
concurrent workers. Frame indices are 0-based internally; user-facing files
use 1-based indices (conversion happens at the file layer only).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .errors import (
    DuplicateHumanId,
    EmptyVideo,
    InconsistentFrameSize,
    NonFiniteInput,
    PromptOutOfBounds,
)

PROMPT_KINDS = ("box", "point", "mask")


@dataclass(frozen=True)
class FrameRef:
    """One video frame: dense index plus an opaque locator and pixel size."""

    index: int
    path_or_id: str
    width: int
    height: int


@dataclass(frozen=True)
class RleMask:
    """Run-length encoded binary mask.

    Counts are row-major alternating run lengths, starting with a background
    run (which may be 0 when the first pixel is foreground). Interior runs
    are strictly positive and counts always sum to width*height.
    """

    width: int
    height: int
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))


@dataclass(frozen=True)
class HumanPrompt:
    """User-supplied pointer at one target human on one frame."""

    human_id: str
    kind: str
    frame_index: int
    box: Optional[tuple[float, float, float, float]] = None
    point: Optional[tuple[float, float]] = None
    point_positive: bool = True
    mask: Optional[RleMask] = None


@dataclass(frozen=True)
class Masklet:
    """Per-identity sequence of optional masks, one slot per frame."""

    human_id: str
    masks: tuple[Optional[RleMask], ...]

    def __len__(self):
        return len(self.masks)

    def present_frames(self) -> list[int]:
        return [t for t, m in enumerate(self.masks) if m is not None]


@dataclass(frozen=True)
class ParamLayout:
    """Channel counts of the mesh parameter vectors, declared by the HMR
    backend at handshake and immutable for the rest of the job.

    ``rotation_channels`` flags pose channels that are angles and must be
    unwrapped before temporal smoothing.
    """

    pose_dim: int
    shape_dim: int
    camera_dim: int
    skeleton_dim: int
    hands_dim: int
    rotation_channels: tuple[int, ...] = ()

    def __post_init__(self):
        for name in ("pose_dim", "shape_dim", "camera_dim", "skeleton_dim", "hands_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        object.__setattr__(
            self, "rotation_channels", tuple(sorted(set(int(c) for c in self.rotation_channels)))
        )
        for c in self.rotation_channels:
            if c < 0 or c >= self.pose_dim:
                raise ValueError("rotation channel out of pose range")

    def to_json(self) -> dict:
        return {
            "pose_dim": self.pose_dim,
            "shape_dim": self.shape_dim,
            "camera_dim": self.camera_dim,
            "skeleton_dim": self.skeleton_dim,
            "hands_dim": self.hands_dim,
            "rotation_channels": list(self.rotation_channels),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ParamLayout":
        return cls(
            pose_dim=int(obj["pose_dim"]),
            shape_dim=int(obj["shape_dim"]),
            camera_dim=int(obj["camera_dim"]),
            skeleton_dim=int(obj["skeleton_dim"]),
            hands_dim=int(obj["hands_dim"]),
            rotation_channels=tuple(obj.get("rotation_channels", ())),
        )


@dataclass(frozen=True)
class MhrParams:
    """One frame's mesh parameters: pose, shape, camera, skeleton plus hand
    channels. All entries must be finite."""

    pose: tuple[float, ...]
    shape: tuple[float, ...]
    camera: tuple[float, ...]
    skeleton: tuple[float, ...]
    hands: tuple[float, ...]

    def __post_init__(self):
        for name in ("pose", "shape", "camera", "skeleton", "hands"):
            vec = tuple(float(v) for v in getattr(self, name))
            object.__setattr__(self, name, vec)
            if not all(math.isfinite(v) for v in vec):
                raise NonFiniteInput(f"non-finite value in {name}")

    def matches_layout(self, layout: ParamLayout) -> bool:
        return (
            len(self.pose) == layout.pose_dim
            and len(self.shape) == layout.shape_dim
            and len(self.camera) == layout.camera_dim
            and len(self.skeleton) == layout.skeleton_dim
            and len(self.hands) == layout.hands_dim
        )

    def to_json(self) -> dict:
        return {
            "pose": list(self.pose),
            "shape": list(self.shape),
            "camera": list(self.camera),
            "skeleton": list(self.skeleton),
            "hands": list(self.hands),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MhrParams":
        return cls(
            pose=tuple(obj["pose"]),
            shape=tuple(obj["shape"]),
            camera=tuple(obj["camera"]),
            skeleton=tuple(obj["skeleton"]),
            hands=tuple(obj["hands"]),
        )


@dataclass(frozen=True)
class MeshTrajectory:
    """Per-identity sequence of optional mesh parameters, one slot per frame.

    A params entry is present exactly where the identity's masklet has a mask
    (one-to-one mask/mesh correspondence).
    """

    human_id: str
    params: tuple[Optional[MhrParams], ...]
    layout: ParamLayout

    def __len__(self):
        return len(self.params)

    def present_frames(self) -> list[int]:
        return [t for t, p in enumerate(self.params) if p is not None]


@dataclass(frozen=True)
class ValidatedJob:
    """Normalized job: dense frames, unique prompts, shared dimensions."""

    frames: tuple[FrameRef, ...]
    prompts: tuple[HumanPrompt, ...]
    width: int
    height: int

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    @property
    def human_count(self) -> int:
        return len(self.prompts)

    @property
    def human_ids(self) -> tuple[str, ...]:
        return tuple(p.human_id for p in self.prompts)


def validate_job(video: list[FrameRef], prompts: list[HumanPrompt]) -> ValidatedJob:
    """Check a raw job and return its normalized form.

    Raises EmptyVideo, InconsistentFrameSize, DuplicateHumanId or
    PromptOutOfBounds on malformed input.
    """
    if not video:
        raise EmptyVideo("video has no frames")
    width, height = video[0].width, video[0].height
    if width <= 0 or height <= 0:
        raise InconsistentFrameSize(f"degenerate frame size {width}x{height}")
    for i, frame in enumerate(video):
        if frame.index != i:
            raise InconsistentFrameSize(f"frame indices not dense at position {i}")
        if frame.width != width or frame.height != height:
            raise InconsistentFrameSize(
                f"frame {i} is {frame.width}x{frame.height}, expected {width}x{height}"
            )
    seen: set[str] = set()
    for prompt in prompts:
        if prompt.human_id in seen:
            raise DuplicateHumanId(f"duplicate human_id {prompt.human_id!r}")
        seen.add(prompt.human_id)
        _check_prompt(prompt, len(video), width, height)
    return ValidatedJob(frames=tuple(video), prompts=tuple(prompts), width=width, height=height)


def _check_prompt(prompt: HumanPrompt, frame_count: int, width: int, height: int) -> None:
    if prompt.kind not in PROMPT_KINDS:
        raise PromptOutOfBounds(f"unknown prompt kind {prompt.kind!r}")
    if not (0 <= prompt.frame_index < frame_count):
        raise PromptOutOfBounds(
            f"prompt for {prompt.human_id!r} references frame {prompt.frame_index}"
        )
    if prompt.kind == "box":
        if prompt.box is None:
            raise PromptOutOfBounds("box prompt without box geometry")
        x1, y1, x2, y2 = prompt.box
        if not (0 <= x1 < x2 <= width and 0 <= y1 < y2 <= height):
            raise PromptOutOfBounds(f"box {prompt.box} outside {width}x{height} frame")
    elif prompt.kind == "point":
        if prompt.point is None:
            raise PromptOutOfBounds("point prompt without point geometry")
        x, y = prompt.point
        if not (0 <= x < width and 0 <= y < height):
            raise PromptOutOfBounds(f"point {prompt.point} outside {width}x{height} frame")
    else:
        if prompt.mask is None:
            raise PromptOutOfBounds("mask prompt without mask payload")
        if prompt.mask.width != width or prompt.mask.height != height:
            raise PromptOutOfBounds("mask prompt dimensions differ from video")
