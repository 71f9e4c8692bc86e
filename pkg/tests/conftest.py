import json
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))  # for oracles.py

from vidmesh.core import FrameRef, HumanPrompt, validate_job
from vidmesh.files import save_frames, save_prompts
from vidmesh.mocks import HumanScript, SceneScript, render_scene_frame


def make_scene(width=64, height=48, humans=()):
    return SceneScript(width=width, height=height, humans=tuple(humans))


def walking_human(human_id, frame_count, occluded=(), start_x=4, step=3, y=10, w=10, h=20):
    """A box walking right; on occluded frames the right half goes hidden."""
    visible, hidden = [], []
    for t in range(frame_count):
        x = float(start_x + step * t)
        if t in occluded:
            visible.append((x, float(y), x + w / 2, float(y + h)))
            hidden.append((x + w / 2, float(y), x + w, float(y + h)))
        else:
            visible.append((x, float(y), x + w, float(y + h)))
            hidden.append(None)
    return HumanScript(human_id, tuple(visible), tuple(hidden))


def static_human(human_id, frame_count, box, absent=()):
    visible = tuple(None if t in absent else tuple(float(v) for v in box) for t in range(frame_count))
    return HumanScript(human_id, visible, (None,) * frame_count)


@pytest.fixture
def occlusion_scene():
    """One walker occluded on frames 2-4, one static bystander."""
    frame_count = 7
    return make_scene(
        humans=[
            walking_human("a", frame_count, occluded={2, 3, 4}),
            static_human("b", frame_count, (40, 20, 56, 44)),
        ]
    )


@pytest.fixture
def crossing_scene():
    """Two humans of different sizes whose paths cross mid-video."""
    frame_count = 9
    a_vis, b_vis = [], []
    for t in range(frame_count):
        ax = 2.0 + 6.0 * t
        bx = 50.0 - 6.0 * t
        a_vis.append((ax, 8.0, ax + 10.0, 28.0))
        b_vis.append((bx, 12.0, bx + 6.0, 40.0))
    return make_scene(
        humans=[
            HumanScript("a", tuple(a_vis), (None,) * frame_count),
            HumanScript("b", tuple(b_vis), (None,) * frame_count),
        ]
    )


def scene_job(scene):
    """ValidatedJob + in-memory image provider for a scene."""
    frame_count = scene.frame_count
    frames = [FrameRef(t, f"scene:{t}", scene.width, scene.height) for t in range(frame_count)]
    images = [render_scene_frame(scene, t) for t in range(frame_count)]
    prompts = scene.prompts()
    job = validate_job(frames, prompts)
    return job, (lambda t: images[t])


def write_scene_inputs(scene, directory):
    """Materialize a scene as PNG frames + prompts + scene JSON for the CLI."""
    frames_dir = os.path.join(directory, "frames")
    os.makedirs(frames_dir, exist_ok=True)
    save_frames(frames_dir, [render_scene_frame(scene, t) for t in range(scene.frame_count)])
    scene_path = os.path.join(directory, "scene.json")
    with open(scene_path, "w", encoding="utf-8") as fh:
        json.dump(scene.to_json(), fh)
    prompts_path = os.path.join(directory, "prompts.json")
    save_prompts(prompts_path, scene.prompts())
    return frames_dir, prompts_path, scene_path
