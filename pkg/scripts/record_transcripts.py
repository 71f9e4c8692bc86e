#!/usr/bin/env python3
"""Record golden wire transcripts for the adapter's conformance fixtures.

Runs the full pipeline on the standard synthetic occlusion scene with every
backend wrapped in a recording connection, then writes one transcript file
(alternating request/response lines) per backend kind into
adapter/fixtures/. Also writes the scene, prompts and the expected final
trajectory file so the fixtures are self-contained.

Regenerate with:  python3 scripts/record_transcripts.py
"""

import json
import os
import sys

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, os.path.join(ROOT, "src"))

from vidmesh import files
from vidmesh.backends import (
    RemoteCompletionBackend,
    RemoteHmrBackend,
    RemoteSegmentationBackend,
    backend_dispatcher,
)
from vidmesh.core import FrameRef, validate_job
from vidmesh.mocks import (
    HumanScript,
    MockCompletionBackend,
    MockHmrBackend,
    MockSegmentationBackend,
    SceneScript,
    render_scene_frame,
)
from vidmesh.pipeline import Backends, PipelineConfig, run_pipeline
from vidmesh.protocol import InProcessConnection, make_line_handler


def standard_scene() -> SceneScript:
    frame_count = 7
    a_vis, a_hid = [], []
    for t in range(frame_count):
        x = 4.0 + 3.0 * t
        if t in (2, 3, 4):
            a_vis.append((x, 10.0, x + 5.0, 30.0))
            a_hid.append((x + 5.0, 10.0, x + 10.0, 30.0))
        else:
            a_vis.append((x, 10.0, x + 10.0, 30.0))
            a_hid.append(None)
    b_vis = tuple((40.0, 20.0, 56.0, 44.0) for _ in range(frame_count))
    return SceneScript(
        width=64,
        height=48,
        humans=(
            HumanScript("a", tuple(a_vis), tuple(a_hid)),
            HumanScript("b", b_vis, (None,) * frame_count),
        ),
    )


def main() -> int:
    out_dir = os.path.join(ROOT, "adapter", "fixtures")
    os.makedirs(out_dir, exist_ok=True)

    scene = standard_scene()
    frame_count = scene.frame_count
    frames = [FrameRef(t, f"fixture:{t}", scene.width, scene.height) for t in range(frame_count)]
    images = [render_scene_frame(scene, t) for t in range(frame_count)]
    job = validate_job(frames, scene.prompts())
    config = PipelineConfig(
        batch_size=3, completion_width=scene.width, completion_height=scene.height
    )

    tapes: dict[str, list[bytes]] = {"segmentation": [], "completion": [], "hmr": []}

    def recorded(kind, backend):
        handler = make_line_handler(backend_dispatcher(kind, backend))
        return InProcessConnection(handler, tapes[kind])

    backends = Backends(
        segmentation=RemoteSegmentationBackend(
            recorded("segmentation", MockSegmentationBackend(scene))
        ),
        completion=RemoteCompletionBackend(recorded("completion", MockCompletionBackend(scene))),
        hmr=RemoteHmrBackend(recorded("hmr", MockHmrBackend())),
    )
    result = run_pipeline(job, config, backends, lambda t: images[t])

    for kind, tape in tapes.items():
        path = os.path.join(out_dir, f"{kind}.transcript.jsonl")
        with open(path, "wb") as fh:
            fh.writelines(tape)
        print(f"wrote {path} ({len(tape) // 2} request/response pairs)")

    with open(os.path.join(out_dir, "scene.json"), "w", encoding="utf-8") as fh:
        json.dump(scene.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    files.save_prompts(os.path.join(out_dir, "prompts.json"), list(job.prompts))
    files.save_trajectories(
        os.path.join(out_dir, "expected_trajectories.json"),
        result.trajectories,
        frame_count,
        config.to_json(),
        smoothed=True,
    )
    print(f"wrote {os.path.join(out_dir, 'expected_trajectories.json')}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
