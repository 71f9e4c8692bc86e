import numpy as np
import pytest

from conftest import make_scene, scene_job, static_human
from vidmesh.errors import BackendProtocolError, IdentityCountMismatch
from vidmesh.masklets import generate_masklets
from vidmesh.masks import ProbMask, rle_decode
from vidmesh.mocks import HumanScript, MockSegmentationBackend
from vidmesh.protocol import HandshakeInfo


def test_fixed_box_all_frames():
    scene = make_scene(humans=[static_human("a", 4, (8, 8, 16, 16))])
    job, images = scene_job(scene)
    masklets = generate_masklets(job, MockSegmentationBackend(scene), images)
    assert len(masklets) == 1
    assert len(masklets[0].masks) == 4
    assert len({m.counts for m in masklets[0].masks}) == 1  # identical masks
    assert masklets[0].masks[0] == scene.visible_mask("a", 0)


def test_disappearance_passthrough():
    scene = make_scene(humans=[static_human("a", 4, (8, 8, 16, 16), absent={2})])
    job, images = scene_job(scene)
    masklets = generate_masklets(job, MockSegmentationBackend(scene), images)
    assert masklets[0].masks[2] is None
    assert all(masklets[0].masks[t] is not None for t in (0, 1, 3))


def test_crossing_identities_never_swap(crossing_scene):
    job, images = scene_job(crossing_scene)
    masklets = generate_masklets(job, MockSegmentationBackend(crossing_scene), images)
    assert [m.human_id for m in masklets] == list(job.human_ids)
    for masklet in masklets:
        for t, mask in enumerate(masklet.masks):
            assert mask == crossing_scene.visible_mask(masklet.human_id, t)


def test_determinism_byte_identical(occlusion_scene):
    job, images = scene_job(occlusion_scene)
    a = generate_masklets(job, MockSegmentationBackend(occlusion_scene), images)
    b = generate_masklets(job, MockSegmentationBackend(occlusion_scene), images)
    assert a == b


def test_soft_masks_are_binarized():
    scene = make_scene(humans=[static_human("a", 3, (8, 8, 16, 16))])
    job, images = scene_job(scene)
    masklets = generate_masklets(job, MockSegmentationBackend(scene, soft=True), images)
    expected = scene.visible_mask("a", 0)
    for mask in masklets[0].masks:
        assert mask == expected


def test_all_empty_masklet_retained():
    scene = make_scene(
        humans=[
            static_human("a", 3, (8, 8, 16, 16)),
            HumanScript("ghost", (None,) * 3, (None,) * 3),
        ]
    )
    # prompt the ghost by hand since it is never visible
    from vidmesh.core import FrameRef, HumanPrompt, validate_job
    from vidmesh.mocks import render_scene_frame

    frames = [FrameRef(t, f"s:{t}", scene.width, scene.height) for t in range(3)]
    imgs = [render_scene_frame(scene, t) for t in range(3)]
    prompts = [
        HumanPrompt("a", "box", 0, box=(8.0, 8.0, 16.0, 16.0)),
        HumanPrompt("ghost", "box", 0, box=(1.0, 1.0, 4.0, 4.0)),
    ]
    job = validate_job(frames, prompts)
    masklets = generate_masklets(job, MockSegmentationBackend(scene), lambda t: imgs[t])
    assert masklets[1].human_id == "ghost"
    assert all(m is None for m in masklets[1].masks)


class ArityViolatingBackend(MockSegmentationBackend):
    def process_frame(self, session_id, frame_index, image):
        return super().process_frame(session_id, frame_index, image)[:-1] or [None, None]


def test_identity_count_mismatch():
    scene = make_scene(humans=[static_human("a", 3, (8, 8, 16, 16))])
    job, images = scene_job(scene)
    with pytest.raises(IdentityCountMismatch):
        generate_masklets(job, ArityViolatingBackend(scene), images)


class WrongSizeBackend(MockSegmentationBackend):
    def process_frame(self, session_id, frame_index, image):
        from vidmesh.masks import mask_from_box

        return [mask_from_box(16, 16, (0, 0, 4, 4))]


def test_wrong_mask_dimensions_rejected():
    scene = make_scene(humans=[static_human("a", 2, (8, 8, 16, 16))])
    job, images = scene_job(scene)
    with pytest.raises(BackendProtocolError):
        generate_masklets(job, WrongSizeBackend(scene), images)


class OrderProbe(MockSegmentationBackend):
    def __init__(self, scene):
        super().__init__(scene)
        self.seen = []

    def process_frame(self, session_id, frame_index, image):
        self.seen.append(frame_index)
        return super().process_frame(session_id, frame_index, image)


def test_frames_streamed_in_temporal_order(occlusion_scene):
    job, images = scene_job(occlusion_scene)
    probe = OrderProbe(occlusion_scene)
    generate_masklets(job, probe, images)
    assert probe.seen == list(range(job.frame_count))
