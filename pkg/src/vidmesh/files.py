"""On-disk formats: prompts, masklets, evidence, trajectories, reports.

Every file embeds the config snapshot that produced it, all JSON is written
with sorted keys and a fixed indent so identical data gives identical bytes,
and frame indices in files are 1-based (they are 0-based everywhere in
memory).
"""

from __future__ import annotations

import json
import os
from typing import Callable, Optional

import numpy as np
from PIL import Image

from .core import (
    FrameRef,
    HumanPrompt,
    Masklet,
    MeshTrajectory,
    MhrParams,
    ParamLayout,
    RleMask,
)
from .errors import DataError
from .masks import validate_rle
from .occlusion import OcclusionFlags, OcclusionInterval, RefinedEvidence

ENGINE_VERSION = "0.1.0"

MASKLETS_FILE = "masklets.json"
REFINED_MASKLETS_FILE = "masklets_refined.json"
EVIDENCE_FILE = "evidence.json"
EVIDENCE_DIR = "evidence"
RAW_TRAJECTORIES_FILE = "trajectories_raw.json"
TRAJECTORIES_FILE = "trajectories.json"
REPORT_FILE = "report.json"


def canonical_dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_dumps(obj))


def read_json(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# frames and prompts


def load_frames(directory: str) -> list[FrameRef]:
    """A video is a directory of image frames, ordered by filename."""
    names = sorted(
        f for f in os.listdir(directory) if f.lower().endswith((".png", ".jpg", ".jpeg"))
    )
    if not names:
        raise DataError(f"no image frames found in {directory}")
    refs = []
    for i, name in enumerate(names):
        path = os.path.join(directory, name)
        with Image.open(path) as img:
            width, height = img.size
        refs.append(FrameRef(index=i, path_or_id=path, width=width, height=height))
    return refs


def image_loader(frames: list[FrameRef]) -> Callable[[int], np.ndarray]:
    """Loader with a per-video cache; frames are read once."""
    cache: dict[int, np.ndarray] = {}

    def load(t: int) -> np.ndarray:
        if t not in cache:
            with Image.open(frames[t].path_or_id) as img:
                cache[t] = np.asarray(img.convert("RGB"), dtype=np.uint8)
        return cache[t]

    return load


def save_frames(directory: str, images: list[np.ndarray]) -> list[FrameRef]:
    os.makedirs(directory, exist_ok=True)
    refs = []
    for i, arr in enumerate(images):
        path = os.path.join(directory, f"{i + 1:06d}.png")
        Image.fromarray(np.asarray(arr, dtype=np.uint8)).save(path)
        refs.append(FrameRef(index=i, path_or_id=path, width=arr.shape[1], height=arr.shape[0]))
    return refs


def load_prompts(path: str) -> list[HumanPrompt]:
    """Prompts file: a list of {id, kind, frame, geometry} objects with
    1-based frame indices."""
    data = read_json(path)
    if not isinstance(data, list):
        raise DataError("prompts file must contain a list")
    prompts = []
    for obj in data:
        kind = obj.get("kind", "box")
        prompts.append(
            HumanPrompt(
                human_id=str(obj["id"]),
                kind=kind,
                frame_index=int(obj.get("frame", 1)) - 1,
                box=tuple(obj["box"]) if kind == "box" else None,
                point=tuple(obj["point"]) if kind == "point" else None,
                point_positive=bool(obj.get("positive", True)),
                mask=_rle_from_json(obj["mask"]) if kind == "mask" else None,
            )
        )
    return prompts


def save_prompts(path: str, prompts: list[HumanPrompt]) -> None:
    out = []
    for p in prompts:
        obj: dict = {"id": p.human_id, "kind": p.kind, "frame": p.frame_index + 1}
        if p.kind == "box":
            obj["box"] = list(p.box)
        elif p.kind == "point":
            obj["point"] = list(p.point)
            obj["positive"] = p.point_positive
        else:
            obj["mask"] = _rle_to_json(p.mask)
        out.append(obj)
    write_json(path, out)


# ---------------------------------------------------------------------------
# masklets


def _rle_to_json(mask: RleMask) -> dict:
    return {"width": mask.width, "height": mask.height, "counts": list(mask.counts)}


def _rle_from_json(obj: dict) -> RleMask:
    mask = RleMask(width=int(obj["width"]), height=int(obj["height"]), counts=tuple(obj["counts"]))
    validate_rle(mask)
    return mask


def save_masklets(
    path: str, masklets: list[Masklet], width: int, height: int, config_snapshot: dict
) -> None:
    frame_count = len(masklets[0].masks) if masklets else 0
    obj = {
        "format": "vidmesh.masklets",
        "version": 1,
        "engine_version": ENGINE_VERSION,
        "frame_count": frame_count,
        "width": width,
        "height": height,
        "config": config_snapshot,
        "humans": [
            {
                "id": m.human_id,
                "masks": [None if msk is None else _rle_to_json(msk) for msk in m.masks],
            }
            for m in masklets
        ],
    }
    write_json(path, obj)


def load_masklets(path: str) -> tuple[list[Masklet], int, int, int]:
    """Returns (masklets, frame_count, width, height)."""
    obj = read_json(path)
    if obj.get("format") != "vidmesh.masklets":
        raise DataError(f"{path} is not a masklet file")
    masklets = [
        Masklet(
            human_id=h["id"],
            masks=tuple(None if m is None else _rle_from_json(m) for m in h["masks"]),
        )
        for h in obj["humans"]
    ]
    return masklets, int(obj["frame_count"]), int(obj["width"]), int(obj["height"])


# ---------------------------------------------------------------------------
# refined evidence


def save_evidence(
    out_dir: str,
    evidence: list[RefinedEvidence],
    flags: list[OcclusionFlags],
    intervals: list[list[OcclusionInterval]],
    config_snapshot: dict,
) -> None:
    """evidence.json plus one PNG per recovered frame under evidence/<id>/."""
    humans = []
    for ev, fl, ivs in zip(evidence, flags, intervals):
        frames = []
        for t in sorted(ev.frames):
            rel = os.path.join(EVIDENCE_DIR, ev.human_id, f"{t + 1:06d}.png")
            full = os.path.join(out_dir, rel)
            os.makedirs(os.path.dirname(full), exist_ok=True)
            Image.fromarray(ev.frames[t]).save(full)
            frames.append({"frame": t + 1, "image": rel, "mask": _rle_to_json(ev.masks[t])})
        humans.append(
            {
                "id": ev.human_id,
                "flags": list(fl.flags),
                "intervals": [[iv.start + 1, iv.end + 1] for iv in ivs],
                "frames": frames,
            }
        )
    write_json(
        os.path.join(out_dir, EVIDENCE_FILE),
        {
            "format": "vidmesh.evidence",
            "version": 1,
            "engine_version": ENGINE_VERSION,
            "config": config_snapshot,
            "humans": humans,
        },
    )


def load_evidence(out_dir: str) -> tuple[dict[str, dict[int, np.ndarray]], dict[str, list[bool]]]:
    """Returns (per-human refined images for flagged frames, per-human flags)."""
    path = os.path.join(out_dir, EVIDENCE_FILE)
    obj = read_json(path)
    if obj.get("format") != "vidmesh.evidence":
        raise DataError(f"{path} is not an evidence file")
    images: dict[str, dict[int, np.ndarray]] = {}
    flags: dict[str, list[bool]] = {}
    for h in obj["humans"]:
        flags[h["id"]] = [bool(f) for f in h["flags"]]
        per_frame: dict[int, np.ndarray] = {}
        for rec in h["frames"]:
            t = int(rec["frame"]) - 1
            if not flags[h["id"]][t]:
                continue  # gap frames ride along in clips but never replace evidence
            with Image.open(os.path.join(out_dir, rec["image"])) as img:
                per_frame[t] = np.asarray(img.convert("RGB"), dtype=np.uint8)
        images[h["id"]] = per_frame
    return images, flags


# ---------------------------------------------------------------------------
# trajectories


def save_trajectories(
    path: str,
    trajectories: list[MeshTrajectory],
    frame_count: int,
    config_snapshot: dict,
    smoothed: bool,
) -> None:
    layout = trajectories[0].layout if trajectories else None
    obj = {
        "format": "vidmesh.trajectories",
        "version": 1,
        "engine_version": ENGINE_VERSION,
        "frame_count": frame_count,
        "smoothed": smoothed,
        "layout": layout.to_json() if layout else None,
        "config": config_snapshot,
        "humans": [
            {
                "id": traj.human_id,
                "frames": [
                    {"frame": t + 1, "params": None if p is None else p.to_json()}
                    for t, p in enumerate(traj.params)
                ],
            }
            for traj in trajectories
        ],
    }
    write_json(path, obj)


def load_trajectories(path: str) -> tuple[list[MeshTrajectory], int, dict, bool]:
    """Returns (trajectories, frame_count, config snapshot, smoothed)."""
    obj = read_json(path)
    if obj.get("format") != "vidmesh.trajectories":
        raise DataError(f"{path} is not a trajectory file")
    layout = ParamLayout.from_json(obj["layout"]) if obj.get("layout") else None
    trajectories = []
    for h in obj["humans"]:
        params = []
        for rec in h["frames"]:
            params.append(None if rec["params"] is None else MhrParams.from_json(rec["params"]))
        trajectories.append(
            MeshTrajectory(human_id=h["id"], params=tuple(params), layout=layout)
        )
    return trajectories, int(obj["frame_count"]), obj.get("config", {}), bool(obj["smoothed"])
