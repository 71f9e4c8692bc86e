"""Stage 1: drive the segmentation backend over the video and assemble
identity-consistent masklets.

Frames are streamed strictly in temporal order through one session, so
memory-based video segmenters can propagate identity. The engine itself does
no matching: the backend owns propagation/detection, the engine owns the
bookkeeping that the i-th masklet always belongs to the i-th prompt.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .backends import SegmentationBackend
from .core import Masklet, RleMask, ValidatedJob
from .errors import BackendProtocolError, IdentityCountMismatch
from .masks import ProbMask, binarize

ImageProvider = Callable[[int], np.ndarray]


def generate_masklets(
    job: ValidatedJob,
    backend: SegmentationBackend,
    images: ImageProvider,
    binarize_threshold: float = 0.5,
) -> list[Masklet]:
    """One masklet per prompted human, each of length T, in prompt order.

    Soft masks coming back from the backend are binarized before storage;
    every stored mask must have video dimensions.
    """
    backend.hello()
    frames_meta = {
        "frame_count": job.frame_count,
        "width": job.width,
        "height": job.height,
    }
    session_id = backend.start_session(frames_meta, job.prompts)

    per_human: list[list[Optional[RleMask]]] = [[] for _ in job.prompts]
    for t in range(job.frame_count):
        masks = backend.process_frame(session_id, t, images(t))
        if len(masks) != job.human_count:
            raise IdentityCountMismatch(
                f"frame {t}: backend returned {len(masks)} instances, expected {job.human_count}"
            )
        for i, mask in enumerate(masks):
            per_human[i].append(_normalize_mask(mask, job.width, job.height, t, binarize_threshold))

    return [
        Masklet(human_id=prompt.human_id, masks=tuple(track))
        for prompt, track in zip(job.prompts, per_human)
    ]


def _normalize_mask(
    mask: RleMask | ProbMask | None, width: int, height: int, t: int, threshold: float
) -> Optional[RleMask]:
    if mask is None:
        return None
    if isinstance(mask, ProbMask):
        mask = binarize(mask, threshold)
    if mask.width != width or mask.height != height:
        raise BackendProtocolError(
            f"frame {t}: mask is {mask.width}x{mask.height}, video is {width}x{height}"
        )
    return mask
