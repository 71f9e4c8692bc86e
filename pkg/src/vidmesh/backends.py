"""Backend interfaces and their wire adapters.

The engine only ever sees the three abstract interfaces below. Deterministic
in-process mocks (vidmesh.mocks) implement them directly; RemoteBackend
subclasses speak the wire protocol to an external server; and
``backend_dispatcher`` exposes any in-process implementation over the wire,
which is how the mock server is built.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Optional, Sequence

import numpy as np

from .core import HumanPrompt, MhrParams, RleMask
from .errors import BackendProtocolError
from .masks import ProbMask
from . import protocol
from .protocol import Connection, Envelope, HandshakeInfo, RequestFailure


class SegmentationBackend(ABC):
    """Segments the prompted humans frame by frame, in temporal order."""

    @abstractmethod
    def hello(self) -> HandshakeInfo: ...

    @abstractmethod
    def start_session(self, frames_meta: dict, prompts: Sequence[HumanPrompt]) -> str: ...

    @abstractmethod
    def process_frame(
        self, session_id: str, frame_index: int, image: np.ndarray
    ) -> list[RleMask | ProbMask | None]:
        """Masks for the session's humans in prompt order; None = not found."""

    def close(self) -> None:
        pass


class CompletionBackend(ABC):
    """Amodal mask completion plus pixel recovery for occluded clips."""

    @abstractmethod
    def hello(self) -> HandshakeInfo: ...

    @abstractmethod
    def complete(
        self,
        frames: Sequence[tuple[int, np.ndarray]],
        visible: Sequence[Optional[RleMask]],
        human_id: str,
    ) -> list[Optional[RleMask]]: ...

    @abstractmethod
    def recover(
        self,
        frames: Sequence[tuple[int, np.ndarray]],
        visible: Sequence[Optional[RleMask]],
        human_id: str,
        interval: tuple[int, int],
    ) -> tuple[list[np.ndarray], list[RleMask]]:
        """Refined images and masks for every frame of the clip."""

    def close(self) -> None:
        pass


class HmrBackend(ABC):
    """Mask-prompted mesh parameter regression over fixed-shape slot batches."""

    @abstractmethod
    def hello(self) -> HandshakeInfo: ...

    @abstractmethod
    def run_batch(self, slots: Sequence[tuple[np.ndarray, RleMask, bool]]) -> list[MhrParams]:
        """One theta per slot, in slot order, padded slots included."""

    def close(self) -> None:
        pass


# ---------------------------------------------------------------------------
# wire clients


def _prompt_to_wire(prompt: HumanPrompt) -> dict:
    obj: dict = {"id": prompt.human_id, "kind": prompt.kind, "frame": prompt.frame_index}
    if prompt.kind == "box":
        obj["box"] = list(prompt.box)
    elif prompt.kind == "point":
        obj["point"] = list(prompt.point)
        obj["positive"] = prompt.point_positive
    else:
        obj["mask"] = protocol.rle_to_wire(prompt.mask)
    return obj


def _frames_to_wire(frames: Sequence[tuple[int, np.ndarray]]) -> list[dict]:
    return [{"index": idx, "image": protocol.image_to_wire(img)} for idx, img in frames]


class RemoteSegmentationBackend(SegmentationBackend):
    def __init__(self, conn: Connection):
        self._conn = conn

    def hello(self) -> HandshakeInfo:
        return HandshakeInfo.from_json(self._conn.request("hello", {}))

    def start_session(self, frames_meta: dict, prompts: Sequence[HumanPrompt]) -> str:
        body = {"frames_meta": frames_meta, "prompts": [_prompt_to_wire(p) for p in prompts]}
        return str(self._conn.request("seg_start", body)["session_id"])

    def process_frame(self, session_id, frame_index, image):
        body = {
            "session_id": session_id,
            "frame_index": frame_index,
            "image": protocol.image_to_wire(image),
        }
        reply = self._conn.request("seg_frame", body)
        return [protocol.mask_from_wire(m) for m in reply["masks"]]

    def close(self) -> None:
        self._conn.close()


class RemoteCompletionBackend(CompletionBackend):
    def __init__(self, conn: Connection):
        self._conn = conn

    def hello(self) -> HandshakeInfo:
        return HandshakeInfo.from_json(self._conn.request("hello", {}))

    def complete(self, frames, visible, human_id):
        body = {
            "frames": _frames_to_wire(frames),
            "visible_masks": [None if m is None else protocol.rle_to_wire(m) for m in visible],
            "human_id": human_id,
        }
        reply = self._conn.request("complete_pass", body)
        masks = reply["completed_masks"]
        if len(masks) != len(frames):
            raise BackendProtocolError(
                f"complete_result arity {len(masks)} != {len(frames)} frames"
            )
        return [None if m is None else protocol.rle_from_wire(m) for m in masks]

    def recover(self, frames, visible, human_id, interval):
        body = {
            "frames": _frames_to_wire(frames),
            "visible_masks": [None if m is None else protocol.rle_to_wire(m) for m in visible],
            "human_id": human_id,
            "interval": {"start": interval[0], "end": interval[1]},
        }
        reply = self._conn.request("recover_clip", body)
        images, masks = reply["refined_images"], reply["refined_masks"]
        if len(images) != len(frames) or len(masks) != len(frames):
            raise BackendProtocolError("recover_result arity does not match clip length")
        return (
            [protocol.image_from_wire(img) for img in images],
            [protocol.rle_from_wire(m) for m in masks],
        )

    def close(self) -> None:
        self._conn.close()


class RemoteHmrBackend(HmrBackend):
    def __init__(self, conn: Connection):
        self._conn = conn

    def hello(self) -> HandshakeInfo:
        return HandshakeInfo.from_json(self._conn.request("hello", {}))

    def run_batch(self, slots):
        body = {
            "slots": [
                {
                    "image": protocol.image_to_wire(image),
                    "mask_prompt": protocol.rle_to_wire(mask),
                    "valid": bool(valid),
                }
                for image, mask, valid in slots
            ]
        }
        reply = self._conn.request("hmr_batch", body)
        thetas = reply["thetas"]
        if len(thetas) != len(slots):
            raise BackendProtocolError(f"hmr_result arity {len(thetas)} != {len(slots)} slots")
        return [MhrParams.from_json(t) for t in thetas]

    def close(self) -> None:
        self._conn.close()


# ---------------------------------------------------------------------------
# server-side dispatch: expose an in-process backend over the wire


def _prompt_from_wire(obj: dict) -> HumanPrompt:
    kind = obj["kind"]
    return HumanPrompt(
        human_id=obj["id"],
        kind=kind,
        frame_index=int(obj["frame"]),
        box=tuple(obj["box"]) if kind == "box" else None,
        point=tuple(obj["point"]) if kind == "point" else None,
        point_positive=bool(obj.get("positive", True)),
        mask=protocol.rle_from_wire(obj["mask"]) if kind == "mask" else None,
    )


def _frames_from_wire(items: list[dict]) -> list[tuple[int, np.ndarray]]:
    return [(int(f["index"]), protocol.image_from_wire(f["image"])) for f in items]


def backend_dispatcher(kind: str, backend) -> "callable":
    """An envelope dispatcher serving one backend of the given kind."""

    def dispatch(env: Envelope) -> tuple[str, dict]:
        mtype, body = env.type, env.body
        try:
            if mtype == "hello":
                return "hello_ack", backend.hello().to_json()
            if kind == "segmentation" and mtype == "seg_start":
                prompts = [_prompt_from_wire(p) for p in body["prompts"]]
                sid = backend.start_session(body["frames_meta"], prompts)
                return "seg_start_ack", {"session_id": sid}
            if kind == "segmentation" and mtype == "seg_frame":
                masks = backend.process_frame(
                    body["session_id"],
                    int(body["frame_index"]),
                    protocol.image_from_wire(body["image"]),
                )
                return "seg_frame_result", {"masks": [protocol.mask_to_wire(m) for m in masks]}
            if kind == "completion" and mtype == "complete_pass":
                completed = backend.complete(
                    _frames_from_wire(body["frames"]),
                    [None if m is None else protocol.rle_from_wire(m) for m in body["visible_masks"]],
                    body["human_id"],
                )
                return "complete_result", {
                    "completed_masks": [
                        None if m is None else protocol.rle_to_wire(m) for m in completed
                    ]
                }
            if kind == "completion" and mtype == "recover_clip":
                images, masks = backend.recover(
                    _frames_from_wire(body["frames"]),
                    [None if m is None else protocol.rle_from_wire(m) for m in body["visible_masks"]],
                    body["human_id"],
                    (int(body["interval"]["start"]), int(body["interval"]["end"])),
                )
                return "recover_result", {
                    "refined_images": [protocol.image_to_wire(img) for img in images],
                    "refined_masks": [protocol.rle_to_wire(m) for m in masks],
                }
            if kind == "hmr" and mtype == "hmr_batch":
                slots = [
                    (
                        protocol.image_from_wire(s["image"]),
                        protocol.rle_from_wire(s["mask_prompt"]),
                        bool(s["valid"]),
                    )
                    for s in body["slots"]
                ]
                thetas = backend.run_batch(slots)
                return "hmr_result", {"thetas": [t.to_json() for t in thetas]}
        except RequestFailure:
            raise
        except KeyError as exc:
            raise RequestFailure("bad_request", f"missing field {exc}") from exc
        raise RequestFailure("bad_request", f"{mtype} not served by a {kind} backend")

    return dispatch
