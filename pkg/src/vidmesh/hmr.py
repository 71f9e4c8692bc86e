"""Stage 3: padded parallel mask-guided mesh recovery.

Visibility over a video is ragged: the number of humans varies per frame.
To batch anyway, frames are partitioned into consecutive chunks of at most
batch_size frames, each chunk is padded to its own maximum human count, and
every chunk goes to the backend as one fixed-shape call. Padding slots carry
a canonical all-background mask plus the chunk's first frame image; their
outputs are discarded. Because every slot is addressed by absolute
(frame, human) coordinates, scattering results is order-independent and the
batched output is bitwise identical to per-slot sequential execution for any
deterministic backend.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .backends import HmrBackend
from .core import Masklet, MeshTrajectory, MhrParams, RleMask
from .errors import BackendProtocolError, LayoutMismatch
from .masks import empty_mask

ImageProvider = Callable[[int], np.ndarray]


@dataclass(frozen=True)
class Slot:
    frame_index: int
    human_id: str
    valid: bool


@dataclass(frozen=True)
class BatchChunk:
    start: int  # first frame index
    end: int  # last frame index, inclusive
    width: int  # human slots per frame
    slots: tuple[tuple[Slot, ...], ...]  # one row per frame

    @property
    def slot_count(self) -> int:
        return len(self.slots) * self.width


@dataclass(frozen=True)
class BatchPlan:
    chunks: tuple[BatchChunk, ...]

    def valid_slots(self) -> list[Slot]:
        return [s for chunk in self.chunks for row in chunk.slots for s in row if s.valid]

    @property
    def padded_slot_count(self) -> int:
        return sum(c.slot_count for c in self.chunks)


@dataclass
class HmrEvidence:
    """Everything one slot needs: refined masklets for prompts, the original
    frames, and per-human refined frame replacements where occlusion
    recovery ran."""

    width: int
    height: int
    human_ids: tuple[str, ...]
    masklets: list[Masklet]
    images: ImageProvider
    refined_images: dict[str, dict[int, np.ndarray]]

    def visibility(self) -> list[list[bool]]:
        frame_count = len(self.masklets[0].masks) if self.masklets else 0
        return [
            [m.masks[t] is not None for m in self.masklets] for t in range(frame_count)
        ]

    def mask_for(self, t: int, human_index: int) -> RleMask:
        return self.masklets[human_index].masks[t]

    def image_for(self, t: int, human_id: str) -> np.ndarray:
        override = self.refined_images.get(human_id)
        if override is not None and t in override:
            return override[t]
        return self.images(t)


def plan_batches(visibility: list[list[bool]], batch_size: int, human_ids: list[str]) -> BatchPlan:
    """Partition frames into chunks of at most batch_size and pad each chunk
    to its own maximum human count. Chunks with no visible humans are
    elided. Valid slots across the plan cover all and only the visible
    (frame, human) pairs."""
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    frame_count = len(visibility)
    chunks: list[BatchChunk] = []
    for start in range(0, frame_count, batch_size):
        end = min(start + batch_size, frame_count) - 1
        width = max((sum(visibility[t]) for t in range(start, end + 1)), default=0)
        if width == 0:
            continue
        rows = []
        for t in range(start, end + 1):
            row = [
                Slot(frame_index=t, human_id=human_ids[i], valid=True)
                for i, present in enumerate(visibility[t])
                if present
            ]
            while len(row) < width:
                row.append(Slot(frame_index=t, human_id="", valid=False))
            rows.append(tuple(row))
        chunks.append(BatchChunk(start=start, end=end, width=width, slots=tuple(rows)))
    return BatchPlan(chunks=tuple(chunks))


def call_count(plan: BatchPlan) -> int:
    """Backend calls the plan will issue; the sequential baseline issues one
    call per valid slot instead."""
    return len(plan.chunks)


def sequential_call_count(plan: BatchPlan) -> int:
    return len(plan.valid_slots())


def _dispatch_chunk(
    chunk: BatchChunk, evidence: HmrEvidence, backend: HmrBackend, layout
) -> dict[tuple[int, str], MhrParams]:
    index_of = {hid: i for i, hid in enumerate(evidence.human_ids)}
    first_image = evidence.images(chunk.start)
    payload = []
    flat: list[Slot] = []
    for row in chunk.slots:
        for slot in row:
            flat.append(slot)
            if slot.valid:
                payload.append(
                    (
                        evidence.image_for(slot.frame_index, slot.human_id),
                        evidence.mask_for(slot.frame_index, index_of[slot.human_id]),
                        True,
                    )
                )
            else:
                payload.append((first_image, empty_mask(evidence.width, evidence.height), False))
    thetas = backend.run_batch(payload)
    if len(thetas) != len(payload):
        raise BackendProtocolError(
            f"backend returned {len(thetas)} thetas for {len(payload)} slots"
        )
    out: dict[tuple[int, str], MhrParams] = {}
    for slot, theta in zip(flat, thetas):
        if not slot.valid:
            continue  # padding output is discarded
        if not theta.matches_layout(layout):
            raise LayoutMismatch(
                f"theta dimensions do not match the handshake layout at frame {slot.frame_index}"
            )
        out[(slot.frame_index, slot.human_id)] = theta
    return out


def run_hmr(
    evidence: HmrEvidence,
    plan: BatchPlan,
    backend: HmrBackend,
    in_flight: int = 1,
) -> list[MeshTrajectory]:
    """Execute a batch plan and scatter results into per-identity
    trajectories aligned one-to-one with the masklets."""
    handshake = backend.hello()
    layout = handshake.param_layout
    if layout is None:
        raise BackendProtocolError("hmr handshake did not include a param layout")

    results: dict[tuple[int, str], MhrParams] = {}
    if in_flight <= 1 or len(plan.chunks) <= 1:
        for chunk in plan.chunks:
            results.update(_dispatch_chunk(chunk, evidence, backend, layout))
    else:
        with ThreadPoolExecutor(max_workers=in_flight) as pool:
            futures = [
                pool.submit(_dispatch_chunk, chunk, evidence, backend, layout)
                for chunk in plan.chunks
            ]
            for fut in futures:
                results.update(fut.result())

    return _gather(evidence, results, layout)


def run_hmr_sequential(evidence: HmrEvidence, backend: HmrBackend) -> list[MeshTrajectory]:
    """Reference schedule: one single-slot backend call per visible
    (frame, human) pair, in temporal order. Used as the equivalence oracle
    and the latency baseline."""
    handshake = backend.hello()
    layout = handshake.param_layout
    if layout is None:
        raise BackendProtocolError("hmr handshake did not include a param layout")
    frame_count = len(evidence.masklets[0].masks) if evidence.masklets else 0
    results: dict[tuple[int, str], MhrParams] = {}
    for t in range(frame_count):
        for i, hid in enumerate(evidence.human_ids):
            if evidence.masklets[i].masks[t] is None:
                continue
            theta = backend.run_batch(
                [(evidence.image_for(t, hid), evidence.mask_for(t, i), True)]
            )[0]
            if not theta.matches_layout(layout):
                raise LayoutMismatch(f"theta dimensions mismatch at frame {t}")
            results[(t, hid)] = theta
    return _gather(evidence, results, layout)


def _gather(evidence: HmrEvidence, results, layout) -> list[MeshTrajectory]:
    frame_count = len(evidence.masklets[0].masks) if evidence.masklets else 0
    trajectories = []
    for i, hid in enumerate(evidence.human_ids):
        params: list[Optional[MhrParams]] = []
        for t in range(frame_count):
            if evidence.masklets[i].masks[t] is None:
                params.append(None)
            else:
                params.append(results[(t, hid)])
        trajectories.append(MeshTrajectory(human_id=hid, params=tuple(params), layout=layout))
    return trajectories
