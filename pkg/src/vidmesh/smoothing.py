"""Test-time trajectory stabilization in mesh parameter space.

Pose and hand channels are smoothed with a fixed-interval Kalman smoother
(forward filter plus Rauch-Tung-Striebel backward pass) under a per-channel
constant-velocity model; shape and skeleton vectors are locked to the first
visible frame. Camera channels are never touched.

Model, frozen for reproducibility:
    state            x = [value, velocity]
    transition       F = [[1, 1], [0, 1]]       (unit frame step)
    observation      H = [1, 0], noise variance r
    process noise    Q = q * I2
    initialization   posterior at the segment's first frame is
                     (first observation, zero velocity) with covariance
                     diag(r, 1): the value is trusted like any other
                     observation, the velocity is unknown. The filter
                     consumes observations from the second frame on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .core import MeshTrajectory, MhrParams
from .errors import NonFiniteInput

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SmoothingConfig:
    process_noise: float = 1e-3
    measurement_noise: float = 1e-2
    enabled: bool = True
    unwrap_rotations: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.process_noise) and self.process_noise > 0):
            raise ValueError("process_noise must be finite and positive")
        if not (math.isfinite(self.measurement_noise) and self.measurement_noise > 0):
            raise ValueError("measurement_noise must be finite and positive")

    def to_json(self) -> dict:
        return {
            "process_noise": self.process_noise,
            "measurement_noise": self.measurement_noise,
            "enabled": self.enabled,
            "unwrap_rotations": self.unwrap_rotations,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SmoothingConfig":
        return cls(
            process_noise=float(obj.get("process_noise", 1e-3)),
            measurement_noise=float(obj.get("measurement_noise", 1e-2)),
            enabled=bool(obj.get("enabled", True)),
            unwrap_rotations=bool(obj.get("unwrap_rotations", True)),
        )


def kalman_smooth(series: list[float], config: SmoothingConfig) -> list[float]:
    """Fixed-interval RTS smoothing of one scalar series.

    Output has the same length as the input. A single-element series is
    returned unchanged (nothing to smooth).
    """
    if len(series) == 0:
        raise ValueError("series must be non-empty")
    if not all(math.isfinite(v) for v in series):
        raise NonFiniteInput("series contains non-finite values")
    n = len(series)
    if n == 1:
        return [float(series[0])]

    q = config.process_noise
    r = config.measurement_noise

    # forward pass; state mean (x, v), covariance [[p00, p01], [p01, p11]]
    xs = [0.0] * n
    vs = [0.0] * n
    p00 = [0.0] * n
    p01 = [0.0] * n
    p11 = [0.0] * n

    xs[0], vs[0] = float(series[0]), 0.0
    p00[0], p01[0], p11[0] = r, 0.0, 1.0

    for k in range(1, n):
        # predict
        xp = xs[k - 1] + vs[k - 1]
        vp = vs[k - 1]
        a = p00[k - 1] + 2.0 * p01[k - 1] + p11[k - 1] + q
        b = p01[k - 1] + p11[k - 1]
        c = p11[k - 1] + q
        # update with the scalar observation
        s = a + r
        k0 = a / s
        k1 = b / s
        resid = float(series[k]) - xp
        xs[k] = xp + k0 * resid
        vs[k] = vp + k1 * resid
        p00[k] = (1.0 - k0) * a
        p01[k] = (1.0 - k0) * b
        p11[k] = c - k1 * b

    # RTS backward pass
    sx = [0.0] * n
    sv = [0.0] * n
    s00 = [0.0] * n
    s01 = [0.0] * n
    s11 = [0.0] * n
    sx[n - 1], sv[n - 1] = xs[n - 1], vs[n - 1]
    s00[n - 1], s01[n - 1], s11[n - 1] = p00[n - 1], p01[n - 1], p11[n - 1]

    for k in range(n - 2, -1, -1):
        # predicted covariance from the filtered state at k
        a = p00[k] + 2.0 * p01[k] + p11[k] + q
        b = p01[k] + p11[k]
        c = p11[k] + q
        det = a * c - b * b
        ia, ib, ic = c / det, -b / det, a / det
        # C = P F' inv(P_pred); P F' = [[p00+p01, p01], [p01+p11, p11]]
        f0, f1 = p00[k] + p01[k], p01[k]
        g0, g1 = p01[k] + p11[k], p11[k]
        c00 = f0 * ia + f1 * ib
        c01 = f0 * ib + f1 * ic
        c10 = g0 * ia + g1 * ib
        c11 = g0 * ib + g1 * ic
        dx = sx[k + 1] - (xs[k] + vs[k])
        dv = sv[k + 1] - vs[k]
        sx[k] = xs[k] + c00 * dx + c01 * dv
        sv[k] = vs[k] + c10 * dx + c11 * dv
        d00 = s00[k + 1] - a
        d01 = s01[k + 1] - b
        d11 = s11[k + 1] - c
        s00[k] = p00[k] + c00 * (d00 * c00 + d01 * c01) + c01 * (d01 * c00 + d11 * c01)
        s01[k] = p01[k] + c00 * (d00 * c10 + d01 * c11) + c01 * (d01 * c10 + d11 * c11)
        s11[k] = p11[k] + c10 * (d00 * c10 + d01 * c11) + c11 * (d01 * c10 + d11 * c11)

    return sx


def _unwrap(series: list[float]) -> list[float]:
    """Lift angles onto a continuous branch (numpy.unwrap semantics)."""
    out = [series[0]]
    offset = 0.0
    for prev, cur in zip(series, series[1:]):
        delta = cur + offset - out[-1]
        while delta > math.pi:
            offset -= TWO_PI
            delta -= TWO_PI
        while delta < -math.pi:
            offset += TWO_PI
            delta += TWO_PI
        out.append(cur + offset)
    return out


def _wrap(value: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.fmod(value + math.pi, TWO_PI)
    if w <= 0.0:
        w += TWO_PI
    return w - math.pi


def _visible_segments(present: list[bool]) -> list[tuple[int, int]]:
    """Maximal [start, end] runs of present frames."""
    segments = []
    start = None
    for t, p in enumerate(present):
        if p and start is None:
            start = t
        elif not p and start is not None:
            segments.append((start, t - 1))
            start = None
    if start is not None:
        segments.append((start, len(present) - 1))
    return segments


def smooth_trajectory(traj: MeshTrajectory, config: SmoothingConfig) -> MeshTrajectory:
    """Smooth pose and hand channels per contiguous visible segment.

    Gaps break segments, so absence never leaks information across time.
    Camera, shape and skeleton channels pass through untouched, as does the
    present/absent pattern.
    """
    if not config.enabled:
        return traj
    present = [p is not None for p in traj.params]
    segments = _visible_segments(present)
    if not segments:
        return traj

    rotation = set(traj.layout.rotation_channels) if config.unwrap_rotations else set()
    new_params: list[MhrParams | None] = list(traj.params)
    for start, end in segments:
        window = [traj.params[t] for t in range(start, end + 1)]
        poses = _smooth_block([p.pose for p in window], config, rotation)
        hands = _smooth_block([p.hands for p in window], config, set())
        for offset, t in enumerate(range(start, end + 1)):
            new_params[t] = replace(
                window[offset], pose=tuple(poses[offset]), hands=tuple(hands[offset])
            )
    return MeshTrajectory(human_id=traj.human_id, params=tuple(new_params), layout=traj.layout)


def _smooth_block(
    vectors: list[tuple[float, ...]], config: SmoothingConfig, rotation: set[int]
) -> list[list[float]]:
    n = len(vectors)
    dim = len(vectors[0]) if vectors else 0
    out = [[0.0] * dim for _ in range(n)]
    for ch in range(dim):
        series = [vec[ch] for vec in vectors]
        if ch in rotation:
            smoothed = [_wrap(v) for v in kalman_smooth(_unwrap(series), config)]
        else:
            smoothed = kalman_smooth(series, config)
        for t in range(n):
            out[t][ch] = smoothed[t]
    return out


def lock_shape(traj: MeshTrajectory) -> MeshTrajectory:
    """Propagate the first visible frame's shape and skeleton vectors to
    every present frame, keeping body proportions constant over time."""
    anchor = next((p for p in traj.params if p is not None), None)
    if anchor is None:
        return traj
    new_params = tuple(
        None if p is None else replace(p, shape=anchor.shape, skeleton=anchor.skeleton)
        for p in traj.params
    )
    return MeshTrajectory(human_id=traj.human_id, params=new_params, layout=traj.layout)
