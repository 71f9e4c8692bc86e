"""Binary mask algebra: RLE codec, area, IoU, binarization, resampling.

The RLE convention is row-major with alternating run lengths whose first run
is background (a leading 0 means the mask starts with foreground). Counts
always sum to width*height and interior runs are strictly positive. This
layout is normative: masklet files and the wire protocol reuse it bit for
bit.

area and iou work directly on the run lists; decoding is only needed when a
caller wants pixels. All functions are pure and safe for concurrent use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RleMask
from .errors import CorruptRle, DimensionMismatch


@dataclass(frozen=True, eq=False)
class ProbMask:
    """Soft mask with per-pixel foreground probabilities in [0, 1]."""

    width: int
    height: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.height, self.width):
            raise DimensionMismatch(
                f"prob grid {values.shape} does not match {self.height}x{self.width}"
            )
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


def rle_encode(bitmap: np.ndarray) -> RleMask:
    """Encode a binary (H, W) grid into run-length counts."""
    grid = np.asarray(bitmap)
    if grid.ndim != 2 or grid.size == 0:
        raise ValueError("bitmap must be a non-empty 2-D grid")
    height, width = grid.shape
    flat = (grid.reshape(-1) != 0).astype(np.uint8)
    # run boundaries: positions where the value changes
    changes = np.flatnonzero(np.diff(flat)) + 1
    edges = np.concatenate(([0], changes, [flat.size]))
    runs = np.diff(edges)
    counts = list(runs)
    if flat[0] == 1:
        counts = [0] + counts
    return RleMask(width=width, height=height, counts=tuple(int(c) for c in counts))


def validate_rle(mask: RleMask) -> None:
    """Raise CorruptRle unless the mask satisfies the codec invariants."""
    total = 0
    for i, c in enumerate(mask.counts):
        if c < 0:
            raise CorruptRle(f"negative run length at position {i}")
        if c == 0 and i != 0:
            raise CorruptRle(f"zero-length interior run at position {i}")
        total += c
    if total != mask.width * mask.height:
        raise CorruptRle(
            f"counts sum to {total}, expected {mask.width * mask.height}"
        )


def rle_decode(mask: RleMask) -> np.ndarray:
    """Decode to a (H, W) uint8 grid. Inverse of rle_encode."""
    validate_rle(mask)
    out = np.zeros(mask.width * mask.height, dtype=np.uint8)
    pos = 0
    value = 0
    for c in mask.counts:
        if value:
            out[pos : pos + c] = 1
        pos += c
        value ^= 1
    return out.reshape(mask.height, mask.width)


def area(mask: RleMask) -> int:
    """Foreground pixel count, straight from the run lengths."""
    return int(sum(mask.counts[1::2]))


def _foreground_intervals(mask: RleMask) -> list[tuple[int, int]]:
    """Half-open [start, end) foreground intervals in flat row-major order."""
    intervals = []
    pos = 0
    value = 0
    for c in mask.counts:
        if value and c:
            intervals.append((pos, pos + c))
        pos += c
        value ^= 1
    return intervals


def intersection_area(a: RleMask, b: RleMask) -> int:
    """|a ∩ b| via a two-pointer sweep over the foreground runs."""
    ia, ib = _foreground_intervals(a), _foreground_intervals(b)
    i = j = 0
    total = 0
    while i < len(ia) and j < len(ib):
        lo = max(ia[i][0], ib[j][0])
        hi = min(ia[i][1], ib[j][1])
        if lo < hi:
            total += hi - lo
        if ia[i][1] <= ib[j][1]:
            i += 1
        else:
            j += 1
    return total


def iou(a: RleMask, b: RleMask) -> float:
    """Intersection over union in [0, 1]. Two empty masks are identical,
    so iou(empty, empty) is 1.0."""
    if a.width != b.width or a.height != b.height:
        raise DimensionMismatch(
            f"{a.width}x{a.height} vs {b.width}x{b.height}"
        )
    inter = intersection_area(a, b)
    union = area(a) + area(b) - inter
    if union == 0:
        return 1.0
    return inter / union


def binarize(p: ProbMask, threshold: float = 0.5) -> RleMask:
    """Threshold a soft mask; a pixel is foreground iff value >= threshold."""
    if not (0.0 < threshold < 1.0):
        raise ValueError("threshold must lie in (0, 1)")
    return rle_encode(p.values >= threshold)


def empty_mask(width: int, height: int) -> RleMask:
    """The canonical all-background mask, used as the padding payload."""
    return RleMask(width=width, height=height, counts=(width * height,))


def full_mask(width: int, height: int) -> RleMask:
    return RleMask(width=width, height=height, counts=(0, width * height))


def mask_from_box(width: int, height: int, box: tuple[float, float, float, float]) -> RleMask:
    """Rasterize an xyxy pixel box (clipped to the frame) into a mask."""
    x1 = max(0, int(np.floor(box[0])))
    y1 = max(0, int(np.floor(box[1])))
    x2 = min(width, int(np.ceil(box[2])))
    y2 = min(height, int(np.ceil(box[3])))
    grid = np.zeros((height, width), dtype=np.uint8)
    if x1 < x2 and y1 < y2:
        grid[y1:y2, x1:x2] = 1
    return rle_encode(grid)


def union(a: RleMask, b: RleMask) -> RleMask:
    if a.width != b.width or a.height != b.height:
        raise DimensionMismatch("union of masks with different dimensions")
    return rle_encode(np.logical_or(rle_decode(a), rle_decode(b)))


def resample_nearest(mask: RleMask, width: int, height: int) -> RleMask:
    """Nearest-neighbor resample to a new resolution (used to bring
    completion-resolution masks back to video resolution)."""
    if mask.width == width and mask.height == height:
        return mask
    grid = rle_decode(mask)
    rows = (np.arange(height) * mask.height // height).clip(0, mask.height - 1)
    cols = (np.arange(width) * mask.width // width).clip(0, mask.width - 1)
    return rle_encode(grid[np.ix_(rows, cols)])


def resample_image_nearest(image: np.ndarray, width: int, height: int) -> np.ndarray:
    """Nearest-neighbor resample of an (H, W, 3) uint8 image."""
    h, w = image.shape[:2]
    if w == width and h == height:
        return image
    rows = (np.arange(height) * h // height).clip(0, h - 1)
    cols = (np.arange(width) * w // width).clip(0, w - 1)
    return image[np.ix_(rows, cols)]
