"""Independent reference implementations used as test oracles.

Deliberately written against the definitions, not against the engine:
pixel-level mask arithmetic uses plain Python loops over decoded bitmaps,
and the smoother is a textbook matrix-form forward filter plus RTS backward
pass in numpy. Nothing here imports engine internals beyond the data types.
"""

from __future__ import annotations

import numpy as np


def pixel_area(grid) -> int:
    count = 0
    for row in np.asarray(grid):
        for v in row:
            if v:
                count += 1
    return count


def pixel_intersection(a, b) -> int:
    a, b = np.asarray(a), np.asarray(b)
    count = 0
    for ra, rb in zip(a, b):
        for va, vb in zip(ra, rb):
            if va and vb:
                count += 1
    return count


def pixel_iou(a, b) -> float:
    inter = pixel_intersection(a, b)
    union = pixel_area(a) + pixel_area(b) - inter
    if union == 0:
        return 1.0
    return inter / union


def pixel_occlusion(visible_grid, completed_grid, threshold: float = 0.7) -> bool:
    return (
        pixel_area(completed_grid) > pixel_area(visible_grid)
        and pixel_iou(completed_grid, visible_grid) < threshold
    )


def rts_reference(series, q: float, r: float) -> list[float]:
    """Matrix-form constant-velocity Kalman filter + RTS smoother.

    Same model definition as the engine (F=[[1,1],[0,1]], H=[1,0], Q=qI,
    R=r, posterior at t=0 is (z0, 0) with covariance diag(r, 1)) but a
    completely separate implementation.
    """
    series = [float(z) for z in series]
    n = len(series)
    if n == 1:
        return list(series)
    F = np.array([[1.0, 1.0], [0.0, 1.0]])
    H = np.array([[1.0, 0.0]])
    Q = q * np.eye(2)
    R = np.array([[r]])

    means = [np.array([series[0], 0.0])]
    covs = [np.diag([r, 1.0])]
    for z in series[1:]:
        xp = F @ means[-1]
        Pp = F @ covs[-1] @ F.T + Q
        S = H @ Pp @ H.T + R
        K = Pp @ H.T @ np.linalg.inv(S)
        resid = np.array([z]) - H @ xp
        means.append(xp + (K @ resid.reshape(1, 1)).ravel())
        covs.append((np.eye(2) - K @ H) @ Pp)

    sm = [None] * n
    sc = [None] * n
    sm[-1], sc[-1] = means[-1], covs[-1]
    for k in range(n - 2, -1, -1):
        Pp = F @ covs[k] @ F.T + Q
        C = covs[k] @ F.T @ np.linalg.inv(Pp)
        sm[k] = means[k] + C @ (sm[k + 1] - F @ means[k])
        sc[k] = covs[k] + C @ (sc[k + 1] - Pp) @ C.T
    return [float(x[0]) for x in sm]


def random_bitmap(rng: np.random.RandomState, width: int, height: int, density=None) -> np.ndarray:
    if density is None:
        density = rng.uniform(0.0, 1.0)
    return (rng.uniform(size=(height, width)) < density).astype(np.uint8)
