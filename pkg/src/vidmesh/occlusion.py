"""Stage 2: occlusion-aware masklet refinement.

A frame counts as occluded when amodal completion finds strictly more body
than is visible and the two masks overlap weakly: area(completed) >
area(visible) and IoU(completed, visible) < threshold (default 0.7, strict
inequalities). Flagged frames are grouped into intervals, each interval is
re-fed to the completion backend to recover the hidden pixels, and evidence
is replaced on the flagged frames only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .backends import CompletionBackend
from .core import Masklet, RleMask, ValidatedJob
from .errors import DimensionMismatch, LengthMismatch
from .masks import area, iou, resample_image_nearest, resample_nearest

ImageProvider = Callable[[int], np.ndarray]

DEFAULT_IOU_THRESHOLD = 0.7
DEFAULT_MIN_AREA = 16
DEFAULT_MAX_GAP = 2


@dataclass(frozen=True)
class OcclusionFlags:
    human_id: str
    flags: tuple[bool, ...]

    def flagged_frames(self) -> list[int]:
        return [t for t, f in enumerate(self.flags) if f]


@dataclass(frozen=True)
class OcclusionInterval:
    human_id: str
    start: int
    end: int  # inclusive

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError("interval start after end")

    def frames(self) -> range:
        return range(self.start, self.end + 1)


@dataclass
class RefinedEvidence:
    """Everything the recovery pass returned for one human: per-frame
    refined images and masks, keyed by frame index, covering the union of
    that human's occlusion intervals."""

    human_id: str
    frames: dict[int, np.ndarray] = field(default_factory=dict)
    masks: dict[int, RleMask] = field(default_factory=dict)


def detect_occlusion(
    visible: RleMask, completed: RleMask, iou_threshold: float = DEFAULT_IOU_THRESHOLD
) -> bool:
    """True iff the completed mask is strictly larger and overlaps weakly."""
    if visible.width != completed.width or visible.height != completed.height:
        raise DimensionMismatch("visible and completed masks differ in size")
    return area(completed) > area(visible) and iou(completed, visible) < iou_threshold


def compute_flags(
    masklet: Masklet,
    completed: Masklet,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    min_area: int = DEFAULT_MIN_AREA,
) -> OcclusionFlags:
    """Apply the occlusion predicate frame by frame.

    Where the visible mask is absent the IoU test degenerates; the frame is
    flagged iff completion still found at least min_area pixels of body.
    """
    if len(masklet.masks) != len(completed.masks):
        raise LengthMismatch(
            f"masklet length {len(masklet.masks)} != completed length {len(completed.masks)}"
        )
    flags = []
    for visible, comp in zip(masklet.masks, completed.masks):
        if comp is None:
            flags.append(False)
        elif visible is None:
            flags.append(area(comp) >= min_area)
        else:
            flags.append(detect_occlusion(visible, comp, iou_threshold))
    return OcclusionFlags(human_id=masklet.human_id, flags=tuple(flags))


def group_occluded_frames(flags: OcclusionFlags, max_gap: int = DEFAULT_MAX_GAP) -> list[OcclusionInterval]:
    """Maximal runs of flagged frames; runs separated by at most max_gap
    unflagged frames merge into one interval. Gap frames ride along in the
    recovery clip but their evidence is only replaced if flagged."""
    if max_gap < 0:
        raise ValueError("max_gap must be non-negative")
    flagged = [t for t, f in enumerate(flags.flags) if f]
    if not flagged:
        return []
    intervals: list[OcclusionInterval] = []
    start = prev = flagged[0]
    for t in flagged[1:]:
        if t - prev - 1 <= max_gap:
            prev = t
        else:
            intervals.append(OcclusionInterval(flags.human_id, start, prev))
            start = prev = t
    intervals.append(OcclusionInterval(flags.human_id, start, prev))
    return intervals


@dataclass
class RefineResult:
    evidence: list[RefinedEvidence]
    masklets: list[Masklet]
    flags: list[OcclusionFlags]
    intervals: list[list[OcclusionInterval]]
    backend_calls: int


def refine(
    job: ValidatedJob,
    masklets: list[Masklet],
    backend: CompletionBackend,
    images: ImageProvider,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    min_area: int = DEFAULT_MIN_AREA,
    max_gap: int = DEFAULT_MAX_GAP,
) -> RefineResult:
    """Full refinement: completion pass over the whole video per human,
    flagging, grouping, and per-interval pixel recovery. Humans and frames
    without occlusion pass through untouched."""
    backend.hello()
    calls = 0
    evidence_out: list[RefinedEvidence] = []
    masklets_out: list[Masklet] = []
    flags_out: list[OcclusionFlags] = []
    intervals_out: list[list[OcclusionInterval]] = []

    all_frames = [(t, images(t)) for t in range(job.frame_count)]

    for masklet in masklets:
        completed_raw = backend.complete(all_frames, masklet.masks, masklet.human_id)
        calls += 1
        if len(completed_raw) != job.frame_count:
            raise LengthMismatch("completion pass arity does not match video length")
        completed = Masklet(
            human_id=masklet.human_id,
            masks=tuple(
                None if m is None else resample_nearest(m, job.width, job.height)
                for m in completed_raw
            ),
        )
        flags = compute_flags(masklet, completed, iou_threshold, min_area)
        intervals = group_occluded_frames(flags, max_gap)
        flags_out.append(flags)
        intervals_out.append(intervals)

        evidence = RefinedEvidence(human_id=masklet.human_id)
        if not intervals:
            evidence_out.append(evidence)
            masklets_out.append(masklet)
            continue

        new_masks = list(masklet.masks)
        for interval in intervals:
            clip_frames = [all_frames[t] for t in interval.frames()]
            clip_visible = [masklet.masks[t] for t in interval.frames()]
            images_ref, masks_ref = backend.recover(
                clip_frames, clip_visible, masklet.human_id, (interval.start, interval.end)
            )
            calls += 1
            if len(images_ref) != len(clip_frames) or len(masks_ref) != len(clip_frames):
                raise LengthMismatch("recovery clip arity does not match interval length")
            for offset, t in enumerate(interval.frames()):
                img = resample_image_nearest(images_ref[offset], job.width, job.height)
                msk = resample_nearest(masks_ref[offset], job.width, job.height)
                evidence.frames[t] = img
                evidence.masks[t] = msk
                if flags.flags[t]:
                    new_masks[t] = msk

        evidence_out.append(evidence)
        masklets_out.append(Masklet(human_id=masklet.human_id, masks=tuple(new_masks)))

    return RefineResult(
        evidence=evidence_out,
        masklets=masklets_out,
        flags=flags_out,
        intervals=intervals_out,
        backend_calls=calls,
    )
