"""vidmesh: training-free orchestration of temporally consistent human mesh
trajectories from videos, over pluggable segmentation / amodal completion /
mesh recovery backends."""

__version__ = "0.1.0"

from .core import (
    FrameRef,
    HumanPrompt,
    Masklet,
    MeshTrajectory,
    MhrParams,
    ParamLayout,
    RleMask,
    ValidatedJob,
    validate_job,
)
from .masks import ProbMask, area, binarize, iou, rle_decode, rle_encode
from .occlusion import detect_occlusion, compute_flags, group_occluded_frames, refine
from .hmr import BatchPlan, HmrEvidence, Slot, call_count, plan_batches, run_hmr
from .smoothing import SmoothingConfig, kalman_smooth, lock_shape, smooth_trajectory
from .masklets import generate_masklets
from .pipeline import PipelineConfig, jitter_metric, run_pipeline

__all__ = [
    "FrameRef",
    "HumanPrompt",
    "Masklet",
    "MeshTrajectory",
    "MhrParams",
    "ParamLayout",
    "RleMask",
    "ValidatedJob",
    "validate_job",
    "ProbMask",
    "area",
    "binarize",
    "iou",
    "rle_decode",
    "rle_encode",
    "detect_occlusion",
    "compute_flags",
    "group_occluded_frames",
    "refine",
    "BatchPlan",
    "HmrEvidence",
    "Slot",
    "call_count",
    "plan_batches",
    "run_hmr",
    "SmoothingConfig",
    "kalman_smooth",
    "lock_shape",
    "smooth_trajectory",
    "generate_masklets",
    "PipelineConfig",
    "jitter_metric",
    "run_pipeline",
]
