"""Deterministic scene-scripted mock backends.

A SceneScript is the single source of truth for a synthetic video: per human
and per frame it gives the visible body region and, optionally, the hidden
(occluded) region. The mocks derive everything from it, so every test can
compare engine output against the script.

All mocks are pure functions of (script, request); replaying a request
stream yields identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .backends import CompletionBackend, HmrBackend, SegmentationBackend
from .core import HumanPrompt, MhrParams, ParamLayout, RleMask
from .masks import (
    ProbMask,
    empty_mask,
    mask_from_box,
    rle_decode,
    resample_nearest,
    union,
)
from .protocol import HandshakeInfo, RequestFailure

Box = tuple[float, float, float, float]

DEFAULT_LAYOUT = ParamLayout(
    pose_dim=6, shape_dim=3, camera_dim=3, skeleton_dim=2, hands_dim=4, rotation_channels=()
)


@dataclass(frozen=True)
class HumanScript:
    human_id: str
    visible: tuple[Optional[Box], ...]
    hidden: tuple[Optional[Box], ...]

    def __post_init__(self):
        if len(self.visible) != len(self.hidden):
            raise ValueError("visible and hidden tracks must have equal length")


@dataclass(frozen=True)
class SceneScript:
    width: int
    height: int
    humans: tuple[HumanScript, ...]

    def __post_init__(self):
        lengths = {len(h.visible) for h in self.humans}
        if len(lengths) > 1:
            raise ValueError("all human tracks must cover the same frame count")

    @property
    def frame_count(self) -> int:
        return len(self.humans[0].visible) if self.humans else 0

    def human(self, human_id: str) -> Optional[HumanScript]:
        for h in self.humans:
            if h.human_id == human_id:
                return h
        return None

    def visible_mask(self, human_id: str, t: int) -> Optional[RleMask]:
        h = self.human(human_id)
        if h is None or h.visible[t] is None:
            return None
        return mask_from_box(self.width, self.height, h.visible[t])

    def hidden_mask(self, human_id: str, t: int) -> Optional[RleMask]:
        h = self.human(human_id)
        if h is None or h.hidden[t] is None:
            return None
        return mask_from_box(self.width, self.height, h.hidden[t])

    def prompts(self) -> list[HumanPrompt]:
        """Box prompts at each human's first visible frame."""
        out = []
        for h in self.humans:
            for t, box in enumerate(h.visible):
                if box is not None:
                    out.append(HumanPrompt(human_id=h.human_id, kind="box", frame_index=t, box=box))
                    break
        return out

    def to_json(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "humans": [
                {
                    "id": h.human_id,
                    "visible": [None if b is None else list(b) for b in h.visible],
                    "hidden": [None if b is None else list(b) for b in h.hidden],
                }
                for h in self.humans
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SceneScript":
        humans = tuple(
            HumanScript(
                human_id=h["id"],
                visible=tuple(None if b is None else tuple(b) for b in h["visible"]),
                hidden=tuple(None if b is None else tuple(b) for b in h["hidden"]),
            )
            for h in obj["humans"]
        )
        return cls(width=int(obj["width"]), height=int(obj["height"]), humans=humans)

    @classmethod
    def load(cls, path) -> "SceneScript":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def human_color(human_id: str) -> tuple[int, int, int]:
    digest = hashlib.sha256(human_id.encode("utf-8")).digest()
    return tuple(64 + b % 160 for b in digest[:3])


def render_scene_frame(scene: SceneScript, t: int) -> np.ndarray:
    """Deterministic synthetic RGB frame: textured background, each visible
    human painted in its stable color, hidden regions covered in gray."""
    ys, xs = np.mgrid[0 : scene.height, 0 : scene.width]
    base = (xs * 3 + ys * 5 + t * 7) % 97 + 32
    frame = np.stack([base, (base + 40) % 256, (base + 80) % 256], axis=-1).astype(np.uint8)
    for h in scene.humans:
        if h.visible[t] is not None:
            grid = rle_decode(mask_from_box(scene.width, scene.height, h.visible[t]))
            frame[grid == 1] = human_color(h.human_id)
    for h in scene.humans:
        if h.hidden[t] is not None:
            grid = rle_decode(mask_from_box(scene.width, scene.height, h.hidden[t]))
            frame[grid == 1] = (128, 128, 128)
    return frame


# ---------------------------------------------------------------------------
# segmentation


class MockSegmentationBackend(SegmentationBackend):
    """Returns the script's visible masks, keyed by prompt id, in prompt
    order. With soft=True it emits probability grids to exercise the
    binarization path."""

    def __init__(self, scene: SceneScript, soft: bool = False):
        self.scene = scene
        self.soft = soft
        self._sessions: dict[str, list[str]] = {}
        self._next_session = 0
        self._lock = threading.Lock()

    def hello(self) -> HandshakeInfo:
        caps = ("soft_masks",) if self.soft else ()
        return HandshakeInfo(backend_kind="segmentation", capabilities=caps)

    def start_session(self, frames_meta: dict, prompts: Sequence[HumanPrompt]) -> str:
        with self._lock:
            sid = f"s{self._next_session}"
            self._next_session += 1
            self._sessions[sid] = [p.human_id for p in prompts]
        return sid

    def process_frame(self, session_id, frame_index, image):
        if session_id not in self._sessions:
            raise RequestFailure("no_session", f"unknown session {session_id!r}")
        out = []
        for human_id in self._sessions[session_id]:
            mask = self.scene.visible_mask(human_id, frame_index)
            if mask is None:
                out.append(None)
            elif self.soft:
                grid = rle_decode(mask).astype(np.float64)
                out.append(
                    ProbMask(self.scene.width, self.scene.height, grid * 0.9 + 0.05)
                )
            else:
                out.append(mask)
        return out


# ---------------------------------------------------------------------------
# completion


class MockCompletionBackend(CompletionBackend):
    """Completes a visible mask to visible ∪ scripted-hidden region.

    With an operating resolution set, returned masks are resampled to it,
    exercising the engine's resample-back-to-video path.
    """

    def __init__(self, scene: SceneScript, resolution: Optional[tuple[int, int]] = None):
        self.scene = scene
        self.resolution = resolution

    def hello(self) -> HandshakeInfo:
        return HandshakeInfo(backend_kind="completion", capabilities=("amodal",))

    def _to_operating(self, mask: RleMask) -> RleMask:
        if self.resolution is None:
            return mask
        return resample_nearest(mask, self.resolution[0], self.resolution[1])

    def _completed(self, visible: Optional[RleMask], human_id: str, t: int) -> Optional[RleMask]:
        hidden = self.scene.hidden_mask(human_id, t)
        if visible is None and hidden is None:
            return None
        if visible is None:
            return hidden
        if hidden is None:
            return visible
        return union(visible, hidden)

    def complete(self, frames, visible, human_id):
        out = []
        for (t, _image), vis in zip(frames, visible):
            completed = self._completed(vis, human_id, t)
            out.append(None if completed is None else self._to_operating(completed))
        return out

    def recover(self, frames, visible, human_id, interval):
        color = np.array(human_color(human_id), dtype=np.uint8)
        images, masks = [], []
        for (t, image), vis in zip(frames, visible):
            refined = image.copy()
            hidden = self.scene.hidden_mask(human_id, t)
            if hidden is not None:
                refined[rle_decode(hidden) == 1] = color
            images.append(refined)
            completed = self._completed(vis, human_id, t)
            if completed is None:
                completed = empty_mask(self.scene.width, self.scene.height)
            masks.append(self._to_operating(completed))
        return images, masks


# ---------------------------------------------------------------------------
# mesh recovery


def theta_from_evidence(
    image: np.ndarray, mask: RleMask, layout: ParamLayout = DEFAULT_LAYOUT
) -> MhrParams:
    """The mock regression head: a pure, provenance-carrying function of the
    slot evidence. The digest channel pins the output to the exact mask
    bits, which is what lets tests prove no identity ever swapped."""
    dims = (
        layout.pose_dim,
        layout.shape_dim,
        layout.camera_dim,
        layout.skeleton_dim,
        layout.hands_dim,
    )
    if dims != (6, 3, 3, 2, 4):  # rotation_channels may differ, sizes may not
        raise ValueError("mock head only supports the default channel sizes")
    wh = mask.width * mask.height
    grid = rle_decode(mask)
    a = int(grid.sum())
    if a > 0:
        rows, cols = np.nonzero(grid)
        cx = (float(cols.mean()) + 0.5) / mask.width
        cy = (float(rows.mean()) + 0.5) / mask.height
        pixels = np.asarray(image, dtype=np.float64)[grid == 1]
        intensity = float(pixels.mean()) / 255.0
    else:
        cx = cy = intensity = 0.0
    payload = f"{mask.width}x{mask.height}:" + ",".join(str(c) for c in mask.counts)
    digest = int(hashlib.sha256(payload.encode("ascii")).hexdigest()[:12], 16) / float(16**12)
    frac = a / wh
    return MhrParams(
        pose=(cx, cy, frac, digest, intensity, 0.5 * (cx + cy)),
        shape=(1.0 + digest, cx + cy, (a % 97) / 97.0),
        camera=(2.0 * cx - 1.0, 2.0 * cy - 1.0, 1.0 / (1.0 + frac)),
        skeleton=(2.0 * digest, 0.75),
        hands=(cx * digest, cy * digest, intensity * digest, 0.5 * frac),
    )


class MockHmrBackend(HmrBackend):
    """Slot-wise deterministic mesh head; output depends only on each slot's
    own evidence, so padded-batch and sequential execution agree bitwise."""

    def __init__(self, rotation_channels: tuple[int, ...] = ()):
        self.layout = ParamLayout(
            pose_dim=6,
            shape_dim=3,
            camera_dim=3,
            skeleton_dim=2,
            hands_dim=4,
            rotation_channels=rotation_channels,
        )

    def hello(self) -> HandshakeInfo:
        return HandshakeInfo(
            backend_kind="hmr",
            param_layout=self.layout,
            capabilities=("mask_prompt", "padded_batch"),
        )

    def run_batch(self, slots):
        return [theta_from_evidence(image, mask, self.layout) for image, mask, _valid in slots]


class LatencyHmrBackend(HmrBackend):
    """Wraps an HMR backend with a simulated latency model: a fixed per-call
    overhead plus a per-slot cost, accumulated on a virtual clock."""

    def __init__(self, base: MockHmrBackend, per_call_ms: float = 100.0, per_slot_ms: float = 5.0):
        self.base = base
        self.per_call_ms = per_call_ms
        self.per_slot_ms = per_slot_ms
        self.simulated_ms = 0.0
        self.calls = 0
        self._lock = threading.Lock()

    @property
    def layout(self):
        return self.base.layout

    def hello(self) -> HandshakeInfo:
        return self.base.hello()

    def run_batch(self, slots):
        with self._lock:
            self.simulated_ms += self.per_call_ms + self.per_slot_ms * len(slots)
            self.calls += 1
        return self.base.run_batch(slots)

    def reset(self):
        with self._lock:
            self.simulated_ms = 0.0
            self.calls = 0
