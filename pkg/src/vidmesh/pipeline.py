"""End-to-end orchestration: masklet generation, occlusion refinement,
padded-batch mesh recovery, then shape locking and temporal smoothing.

Stages run strictly in that order (each consumes the previous one's output)
and can also run as separate CLI commands over files; the staged path and
the single-run path share the writers in :mod:`vidmesh.files`, so their
outputs are byte-identical.
"""

from __future__ import annotations

import math
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import files
from .backends import (
    CompletionBackend,
    HmrBackend,
    RemoteCompletionBackend,
    RemoteHmrBackend,
    RemoteSegmentationBackend,
    SegmentationBackend,
)
from .core import MeshTrajectory, ValidatedJob
from .errors import DataError, InsufficientFrames
from .hmr import (
    BatchPlan,
    HmrEvidence,
    call_count,
    plan_batches,
    run_hmr,
    sequential_call_count,
)
from .masklets import generate_masklets
from .mocks import (
    MockCompletionBackend,
    MockHmrBackend,
    MockSegmentationBackend,
    SceneScript,
)
from .occlusion import RefineResult, refine
from .protocol import HttpConnection, StdioConnection
from .smoothing import SmoothingConfig, lock_shape, smooth_trajectory


@dataclass(frozen=True)
class BackendSpec:
    """How to reach one backend: an in-process scene mock, a stdio child
    process, or an HTTP endpoint."""

    mode: str  # mock | stdio | http
    scene: Optional[str] = None
    command: tuple[str, ...] = ()
    url: Optional[str] = None

    def to_json(self) -> dict:
        obj: dict = {"mode": self.mode}
        if self.scene:
            obj["scene"] = self.scene
        if self.command:
            obj["command"] = list(self.command)
        if self.url:
            obj["url"] = self.url
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "BackendSpec":
        return cls(
            mode=obj["mode"],
            scene=obj.get("scene"),
            command=tuple(obj.get("command", ())),
            url=obj.get("url"),
        )


@dataclass(frozen=True)
class PipelineConfig:
    iou_threshold: float = 0.7
    min_area: int = 16
    max_gap: int = 2
    batch_size: int = 32
    completion_width: int = 1024
    completion_height: int = 512
    binarize_threshold: float = 0.5
    refiner_enabled: bool = True
    hmr_in_flight: int = 1
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    backends: dict = field(default_factory=dict)  # kind -> BackendSpec

    def __post_init__(self):
        if not (0.0 < self.iou_threshold < 1.0):
            raise ValueError("iou_threshold must lie in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")

    def to_json(self) -> dict:
        return {
            "iou_threshold": self.iou_threshold,
            "min_area": self.min_area,
            "max_gap": self.max_gap,
            "batch_size": self.batch_size,
            "completion_resolution": [self.completion_width, self.completion_height],
            "binarize_threshold": self.binarize_threshold,
            "refiner_enabled": self.refiner_enabled,
            "hmr_in_flight": self.hmr_in_flight,
            "smoothing": self.smoothing.to_json(),
            "backends": {k: v.to_json() for k, v in sorted(self.backends.items())},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PipelineConfig":
        res = obj.get("completion_resolution", [1024, 512])
        return cls(
            iou_threshold=float(obj.get("iou_threshold", 0.7)),
            min_area=int(obj.get("min_area", 16)),
            max_gap=int(obj.get("max_gap", 2)),
            batch_size=int(obj.get("batch_size", 32)),
            completion_width=int(res[0]),
            completion_height=int(res[1]),
            binarize_threshold=float(obj.get("binarize_threshold", 0.5)),
            refiner_enabled=bool(obj.get("refiner_enabled", True)),
            hmr_in_flight=int(obj.get("hmr_in_flight", 1)),
            smoothing=SmoothingConfig.from_json(obj.get("smoothing", {})),
            backends={
                k: BackendSpec.from_json(v) for k, v in obj.get("backends", {}).items()
            },
        )


@dataclass
class Backends:
    segmentation: Optional[SegmentationBackend] = None
    completion: Optional[CompletionBackend] = None
    hmr: Optional[HmrBackend] = None

    def close(self):
        for backend in (self.segmentation, self.completion, self.hmr):
            if backend is not None:
                backend.close()


def make_backends(
    config: PipelineConfig, kinds: tuple[str, ...] = ("segmentation", "completion", "hmr")
) -> Backends:
    """Instantiate backends from their specs. The mock mode loads a scene
    script and runs fully in-process."""
    built = {}
    for kind in kinds:
        spec = config.backends.get(kind)
        if spec is None or spec.mode == "mock":
            if kind == "hmr":
                built[kind] = MockHmrBackend()
                continue
            if spec is None or not spec.scene:
                raise DataError(f"no backend configured for {kind} (mock mode needs a scene)")
            scene = SceneScript.load(spec.scene)
            if kind == "segmentation":
                built[kind] = MockSegmentationBackend(scene)
            else:
                built[kind] = MockCompletionBackend(
                    scene, resolution=(config.completion_width, config.completion_height)
                )
        elif spec.mode == "stdio":
            conn = StdioConnection(list(spec.command))
            built[kind] = {
                "segmentation": RemoteSegmentationBackend,
                "completion": RemoteCompletionBackend,
                "hmr": RemoteHmrBackend,
            }[kind](conn)
        elif spec.mode == "http":
            conn = HttpConnection(spec.url)
            built[kind] = {
                "segmentation": RemoteSegmentationBackend,
                "completion": RemoteCompletionBackend,
                "hmr": RemoteHmrBackend,
            }[kind](conn)
        else:
            raise DataError(f"unknown backend mode {spec.mode!r} for {kind}")
    return Backends(
        segmentation=built.get("segmentation"),
        completion=built.get("completion"),
        hmr=built.get("hmr"),
    )


# ---------------------------------------------------------------------------
# metrics


def jitter_metric(traj: MeshTrajectory) -> float:
    """Mean first-difference norm of pose+hands over consecutive present
    frames; the scalar the smoothing stage is meant to reduce."""
    present = [p for p in traj.params if p is not None]
    if len(present) < 2:
        raise InsufficientFrames("jitter needs at least two present frames")
    total = 0.0
    for a, b in zip(present, present[1:]):
        sq = sum((x - y) ** 2 for x, y in zip(a.pose + a.hands, b.pose + b.hands))
        total += math.sqrt(sq)
    return total / (len(present) - 1)


def _jitter_or_none(traj: MeshTrajectory) -> Optional[float]:
    try:
        return jitter_metric(traj)
    except InsufficientFrames:
        return None


# ---------------------------------------------------------------------------
# pipeline


@contextmanager
def _stage(name: str):
    """Attach the failing stage's name to engine errors."""
    from .errors import VidmeshError

    try:
        yield
    except VidmeshError as exc:
        if hasattr(exc, "add_note"):  # 3.11+
            exc.add_note(f"stage: {name}")
        else:
            exc.args = (f"[stage {name}] {exc}",)
        raise


@dataclass
class PipelineResult:
    masklets: list
    refined: Optional[RefineResult]
    refined_masklets: list
    plan: BatchPlan
    raw_trajectories: list[MeshTrajectory]
    trajectories: list[MeshTrajectory]
    report: dict


def run_pipeline(
    job: ValidatedJob,
    config: PipelineConfig,
    backends: Backends,
    images: Callable[[int], np.ndarray],
    out_dir: Optional[str] = None,
) -> PipelineResult:
    """Execute all four stages. Output files are written only after every
    stage succeeded, so a failing run leaves no partial outputs."""
    snapshot = config.to_json()
    timings: dict[str, float] = {}
    calls: dict[str, int] = {}

    t0 = time.perf_counter()
    with _stage("segment"):
        masklets = generate_masklets(
            job, backends.segmentation, images, config.binarize_threshold
        )
    timings["segment"] = time.perf_counter() - t0
    calls["segment"] = job.frame_count + 2  # hello + session start + one per frame

    refined: Optional[RefineResult] = None
    if config.refiner_enabled:
        t0 = time.perf_counter()
        with _stage("refine"):
            refined = refine(
                job,
                masklets,
                backends.completion,
                images,
                iou_threshold=config.iou_threshold,
                min_area=config.min_area,
                max_gap=config.max_gap,
            )
        timings["refine"] = time.perf_counter() - t0
        calls["refine"] = refined.backend_calls + 1  # hello
        refined_masklets = refined.masklets
        refined_images = {
            ev.human_id: {
                t: img
                for t, img in ev.frames.items()
                if refined.flags[i].flags[t]
            }
            for i, ev in enumerate(refined.evidence)
        }
    else:
        refined_masklets = masklets
        refined_images = {}

    t0 = time.perf_counter()
    evidence = HmrEvidence(
        width=job.width,
        height=job.height,
        human_ids=job.human_ids,
        masklets=refined_masklets,
        images=images,
        refined_images=refined_images,
    )
    plan = plan_batches(evidence.visibility(), config.batch_size, list(job.human_ids))
    with _stage("hmr"):
        raw_trajectories = run_hmr(evidence, plan, backends.hmr, in_flight=config.hmr_in_flight)
    timings["hmr"] = time.perf_counter() - t0
    calls["hmr"] = call_count(plan) + 1  # hello

    t0 = time.perf_counter()
    with _stage("smooth"):
        trajectories = [
            smooth_trajectory(lock_shape(traj), config.smoothing) for traj in raw_trajectories
        ]
    timings["smooth"] = time.perf_counter() - t0

    report = build_report(
        job, config, refined, plan, raw_trajectories, trajectories, timings, calls
    )

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        files.save_masklets(
            os.path.join(out_dir, files.MASKLETS_FILE), masklets, job.width, job.height, snapshot
        )
        if refined is not None:
            files.save_masklets(
                os.path.join(out_dir, files.REFINED_MASKLETS_FILE),
                refined.masklets,
                job.width,
                job.height,
                snapshot,
            )
            files.save_evidence(out_dir, refined.evidence, refined.flags, refined.intervals, snapshot)
        files.save_trajectories(
            os.path.join(out_dir, files.RAW_TRAJECTORIES_FILE),
            raw_trajectories,
            job.frame_count,
            snapshot,
            smoothed=False,
        )
        files.save_trajectories(
            os.path.join(out_dir, files.TRAJECTORIES_FILE),
            trajectories,
            job.frame_count,
            snapshot,
            smoothed=True,
        )
        files.write_json(os.path.join(out_dir, files.REPORT_FILE), report)

    return PipelineResult(
        masklets=masklets,
        refined=refined,
        refined_masklets=refined_masklets,
        plan=plan,
        raw_trajectories=raw_trajectories,
        trajectories=trajectories,
        report=report,
    )


def build_report(
    job: ValidatedJob,
    config: PipelineConfig,
    refined: Optional[RefineResult],
    plan: BatchPlan,
    raw: list[MeshTrajectory],
    smoothed: list[MeshTrajectory],
    timings: dict[str, float],
    calls: dict[str, int],
) -> dict:
    occl = []
    if refined is not None:
        for fl, ivs in zip(refined.flags, refined.intervals):
            occl.append(
                {
                    "id": fl.human_id,
                    "flagged_frames": [t + 1 for t in fl.flagged_frames()],
                    "intervals": [[iv.start + 1, iv.end + 1] for iv in ivs],
                }
            )
    jitter = {}
    for before, after in zip(raw, smoothed):
        jitter[before.human_id] = {
            "before": _jitter_or_none(before),
            "after": _jitter_or_none(after),
        }
    return {
        "format": "vidmesh.report",
        "version": 1,
        "engine_version": files.ENGINE_VERSION,
        "frame_count": job.frame_count,
        "human_count": job.human_count,
        "config": config.to_json(),
        "stages": {
            name: {"wall_time_s": timings.get(name), "backend_calls": calls.get(name)}
            for name in ("segment", "refine", "hmr", "smooth")
            if name in timings
        },
        "occlusion": occl,
        "hmr": {
            "chunks": call_count(plan),
            "batch_size": config.batch_size,
            "valid_slots": sequential_call_count(plan),
            "padded_slots": plan.padded_slot_count - sequential_call_count(plan),
            "sequential_calls": sequential_call_count(plan),
            "chunk_detail": [
                {
                    "frames": len(chunk.slots),
                    "width": chunk.width,
                    "valid": sum(1 for row in chunk.slots for s in row if s.valid),
                }
                for chunk in plan.chunks
            ],
        },
        "jitter": jitter,
    }
