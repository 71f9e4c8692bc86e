import numpy as np
import pytest

from conftest import make_scene, scene_job, static_human, walking_human
from oracles import pixel_occlusion, random_bitmap
from vidmesh.core import Masklet
from vidmesh.errors import DimensionMismatch, LengthMismatch
from vidmesh.masks import area, mask_from_box, rle_encode
from vidmesh.mocks import MockCompletionBackend
from vidmesh.occlusion import (
    OcclusionFlags,
    compute_flags,
    detect_occlusion,
    group_occluded_frames,
    refine,
)


def test_identical_masks_not_occluded():
    m = mask_from_box(20, 20, (2, 2, 10, 10))
    assert detect_occlusion(m, m) is False


def test_equal_area_shift_not_occluded():
    # same area, different position: area condition fails regardless of IoU
    a = mask_from_box(20, 20, (0, 0, 5, 5))
    b = mask_from_box(20, 20, (10, 10, 15, 15))
    assert detect_occlusion(a, b) is False
    assert detect_occlusion(b, a) is False


def test_subset_occlusion_detected():
    visible = mask_from_box(20, 20, (0, 0, 10, 5))  # 50 px
    completed = mask_from_box(20, 20, (0, 0, 10, 20))  # 200 px, visible ⊂ completed
    assert area(visible) == 50 and area(completed) == 200
    assert detect_occlusion(visible, completed) is True


def test_iou_exactly_at_threshold_not_occluded():
    # completed ⊃ visible with IoU exactly 0.7: 7x10 inside 10x10
    visible = mask_from_box(20, 20, (0, 0, 7, 10))
    completed = mask_from_box(20, 20, (0, 0, 10, 10))
    assert detect_occlusion(visible, completed) is False
    # just below threshold flips it
    visible2 = mask_from_box(20, 20, (0, 0, 6, 10))
    assert detect_occlusion(visible2, completed) is True


def test_detect_occlusion_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        detect_occlusion(mask_from_box(4, 4, (0, 0, 2, 2)), mask_from_box(5, 4, (0, 0, 2, 2)))


def test_detect_occlusion_agrees_with_pixel_oracle():
    rng = np.random.RandomState(2024)
    cases = 0
    for _ in range(1000):
        w, h = rng.randint(1, 24), rng.randint(1, 24)
        style = rng.randint(4)
        gv = random_bitmap(rng, w, h)
        if style == 0:
            gc = random_bitmap(rng, w, h)
        elif style == 1:
            gc = (gv | random_bitmap(rng, w, h, density=0.3)).astype(np.uint8)  # superset-ish
        elif style == 2:
            gc = gv.copy()  # equal
        else:
            gc = np.zeros_like(gv)  # empty completed
        if rng.randint(5) == 0:
            gv = np.zeros_like(gv)  # empty visible
        got = detect_occlusion(rle_encode(gv), rle_encode(gc))
        assert got == pixel_occlusion(gv, gc), f"w={w} h={h} style={style}"
        cases += 1
    assert cases == 1000


# compute_flags


def masklet_of(masks, human_id="a"):
    return Masklet(human_id=human_id, masks=tuple(masks))


def test_flags_all_false_when_identical():
    m = mask_from_box(8, 8, (0, 0, 4, 4))
    visible = masklet_of([m, m, m])
    flags = compute_flags(visible, visible)
    assert flags.flags == (False, False, False)


def test_flags_single_subset_frame():
    small = mask_from_box(20, 20, (0, 0, 10, 5))
    big = mask_from_box(20, 20, (0, 0, 10, 20))
    visible = masklet_of([big, small, big])
    completed = masklet_of([big, big, big])
    flags = compute_flags(visible, completed)
    assert flags.flags == (False, True, False)


def test_flags_invisible_frame_with_completed_evidence():
    big = mask_from_box(20, 20, (0, 0, 10, 10))  # 100 px >= min_area
    tiny = mask_from_box(20, 20, (0, 0, 3, 5))  # 15 px < default min_area 16
    visible = masklet_of([None, None, None])
    completed = masklet_of([big, tiny, None])
    flags = compute_flags(visible, completed)
    assert flags.flags == (True, False, False)


def test_flags_length_mismatch():
    m = mask_from_box(8, 8, (0, 0, 4, 4))
    with pytest.raises(LengthMismatch):
        compute_flags(masklet_of([m, m]), masklet_of([m]))


# grouping


def flags_of(bools):
    return OcclusionFlags(human_id="a", flags=tuple(bools))


def test_group_runs_no_gap():
    ivs = group_occluded_frames(flags_of([False, True, True, False, False, True]), max_gap=0)
    assert [(iv.start, iv.end) for iv in ivs] == [(1, 2), (5, 5)]


def test_group_merges_across_gap():
    ivs = group_occluded_frames(flags_of([False, True, True, False, False, True]), max_gap=2)
    assert [(iv.start, iv.end) for iv in ivs] == [(1, 5)]


def test_group_all_false():
    assert group_occluded_frames(flags_of([False] * 5), max_gap=2) == []


def test_group_rejects_negative_gap():
    with pytest.raises(ValueError):
        group_occluded_frames(flags_of([True]), max_gap=-1)


# refine


def test_refine_noop_without_occlusion():
    scene = make_scene(humans=[static_human("a", 5, (8, 8, 24, 40))])
    job, images = scene_job(scene)
    masklets = [Masklet("a", tuple(scene.visible_mask("a", t) for t in range(5)))]
    result = refine(job, masklets, MockCompletionBackend(scene), images)
    assert result.masklets == masklets
    assert result.evidence[0].frames == {}
    assert result.intervals == [[]]


def test_refine_scripted_occlusion(occlusion_scene):
    job, images = scene_job(occlusion_scene)
    masklets = [
        Masklet(h.human_id, tuple(occlusion_scene.visible_mask(h.human_id, t) for t in range(7)))
        for h in occlusion_scene.humans
    ]
    result = refine(job, masklets, MockCompletionBackend(occlusion_scene), images)
    # walker "a" is occluded exactly on frames 2-4
    assert result.flags[0].flags == (False, False, True, True, True, False, False)
    assert [(iv.start, iv.end) for iv in result.intervals[0]] == [(2, 4)]
    # masks replaced on flagged frames with the completed (full body) mask
    for t in (2, 3, 4):
        full = area(occlusion_scene.visible_mask("a", 0))
        assert area(result.masklets[0].masks[t]) == full
    # untouched elsewhere
    for t in (0, 1, 5, 6):
        assert result.masklets[0].masks[t] == masklets[0].masks[t]
    # bystander "b" byte-identical, no evidence
    assert result.masklets[1] == masklets[1]
    assert result.evidence[1].frames == {}
    # evidence covers exactly the union of intervals
    assert sorted(result.evidence[0].frames) == [2, 3, 4]
    assert sorted(result.evidence[0].masks) == [2, 3, 4]


def test_refine_monotone_on_flagged_frames(occlusion_scene):
    job, images = scene_job(occlusion_scene)
    masklets = [
        Masklet(h.human_id, tuple(occlusion_scene.visible_mask(h.human_id, t) for t in range(7)))
        for h in occlusion_scene.humans
    ]
    result = refine(job, masklets, MockCompletionBackend(occlusion_scene), images)
    for before, after in zip(masklets, result.masklets):
        for mb, ma in zip(before.masks, after.masks):
            if mb is not None and ma is not None:
                assert area(ma) >= area(mb)


def test_refine_idempotent_when_no_new_flags(occlusion_scene):
    job, images = scene_job(occlusion_scene)
    masklets = [
        Masklet(h.human_id, tuple(occlusion_scene.visible_mask(h.human_id, t) for t in range(7)))
        for h in occlusion_scene.humans
    ]
    backend = MockCompletionBackend(occlusion_scene)
    once = refine(job, masklets, backend, images)
    twice = refine(job, once.masklets, backend, images)
    # completed == refined on previously flagged frames, so nothing new flags
    assert twice.masklets == once.masklets
    assert all(not any(f.flags) for f in twice.flags)


def test_refine_gap_frames_ride_along_but_are_not_replaced():
    # occlusion at frames 1 and 3 with a clean frame 2 between; max_gap=2 merges
    frame_count = 5
    scene = make_scene(
        humans=[walking_human("a", frame_count, occluded={1, 3}, step=0)]
    )
    job, images = scene_job(scene)
    masklets = [Masklet("a", tuple(scene.visible_mask("a", t) for t in range(frame_count)))]
    result = refine(job, masklets, MockCompletionBackend(scene), images, max_gap=2)
    assert [(iv.start, iv.end) for iv in result.intervals[0]] == [(1, 3)]
    assert result.flags[0].flags == (False, True, False, True, False)
    # evidence covers the whole interval including the clean gap frame
    assert sorted(result.evidence[0].frames) == [1, 2, 3]
    # but frame 2's mask is not replaced
    assert result.masklets[0].masks[2] == masklets[0].masks[2]
    assert result.masklets[0].masks[1] != masklets[0].masks[1]


def test_refine_resamples_completion_resolution(occlusion_scene):
    job, images = scene_job(occlusion_scene)
    masklets = [
        Masklet(h.human_id, tuple(occlusion_scene.visible_mask(h.human_id, t) for t in range(7)))
        for h in occlusion_scene.humans
    ]
    native = refine(job, masklets, MockCompletionBackend(occlusion_scene), images)
    # integer multiple of the 64x48 video, so the round trip is exact
    scaled_backend = MockCompletionBackend(occlusion_scene, resolution=(1024, 768))
    scaled = refine(job, masklets, scaled_backend, images)
    assert scaled.masklets == native.masklets
    assert [f.flags for f in scaled.flags] == [f.flags for f in native.flags]
