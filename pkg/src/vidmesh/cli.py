"""Command-line surface.

Subcommands mirror the pipeline stages: ``run`` executes everything,
``segment``/``refine``/``hmr``/``smooth`` run one stage over files, and
``report`` renders metrics (CSV + figures) from a finished run directory.
Configuration precedence is defaults < config file < flags.

Exit codes: 0 success, 1 usage, 2 backend failure, 3 data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import shlex
import sys

from . import files, figures
from .core import validate_job
from .errors import BackendError, DataError, ProtocolError, VidmeshError
from .hmr import HmrEvidence, plan_batches, run_hmr
from .masklets import generate_masklets
from .occlusion import refine as refine_masklets
from .pipeline import (
    Backends,
    BackendSpec,
    PipelineConfig,
    make_backends,
    run_pipeline,
)
from .smoothing import SmoothingConfig, lock_shape, smooth_trajectory


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_backend_spec(text: str) -> BackendSpec:
    if text == "mock":
        return BackendSpec(mode="mock")
    if text.startswith("mock:"):
        return BackendSpec(mode="mock", scene=text[len("mock:") :])
    if text.startswith("stdio:"):
        return BackendSpec(mode="stdio", command=tuple(shlex.split(text[len("stdio:") :])))
    if text.startswith("http://") or text.startswith("https://"):
        return BackendSpec(mode="http", url=text)
    raise DataError(f"cannot parse backend spec {text!r}")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="pipeline config JSON; flags override it")
    p.add_argument("--iou-threshold", type=float, dest="iou_threshold")
    p.add_argument("--min-area", type=int, dest="min_area")
    p.add_argument("--max-gap", type=int, dest="max_gap")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument(
        "--completion-resolution",
        dest="completion_resolution",
        metavar="WxH",
        help="operating resolution of the completion backend, e.g. 1024x512",
    )
    p.add_argument("--binarize-threshold", type=float, dest="binarize_threshold")
    p.add_argument("--in-flight", type=int, dest="hmr_in_flight")
    refiner = p.add_mutually_exclusive_group()
    refiner.add_argument("--refiner", dest="refiner_enabled", action="store_true", default=None)
    refiner.add_argument("--no-refiner", dest="refiner_enabled", action="store_false", default=None)
    p.add_argument("--q", type=float, dest="process_noise", help="smoothing process noise")
    p.add_argument("--r", type=float, dest="measurement_noise", help="smoothing measurement noise")
    p.add_argument("--no-smoothing", dest="smoothing_enabled", action="store_false", default=None)
    p.add_argument("--no-unwrap", dest="unwrap_rotations", action="store_false", default=None)
    p.add_argument("--scene", help="scene script for all mock backends")
    p.add_argument("--seg-backend", dest="seg_backend", help="mock:SCENE | stdio:CMD | http URL")
    p.add_argument("--completion-backend", dest="completion_backend")
    p.add_argument("--hmr-backend", dest="hmr_backend")


def _build_config(args, base: PipelineConfig | None = None) -> PipelineConfig:
    cfg = base or PipelineConfig()
    if getattr(args, "config", None):
        cfg = PipelineConfig.from_json(files.read_json(args.config))
    updates = {}
    for name in ("iou_threshold", "min_area", "max_gap", "batch_size", "binarize_threshold",
                 "refiner_enabled", "hmr_in_flight"):
        value = getattr(args, name, None)
        if value is not None:
            updates[name] = value
    if getattr(args, "completion_resolution", None):
        try:
            w, h = args.completion_resolution.lower().split("x")
            updates["completion_width"], updates["completion_height"] = int(w), int(h)
        except ValueError as exc:
            raise DataError(f"bad --completion-resolution {args.completion_resolution!r}") from exc

    smoothing = cfg.smoothing
    sm_updates = {}
    if getattr(args, "process_noise", None) is not None:
        sm_updates["process_noise"] = args.process_noise
    if getattr(args, "measurement_noise", None) is not None:
        sm_updates["measurement_noise"] = args.measurement_noise
    if getattr(args, "smoothing_enabled", None) is not None:
        sm_updates["enabled"] = args.smoothing_enabled
    if getattr(args, "unwrap_rotations", None) is not None:
        sm_updates["unwrap_rotations"] = args.unwrap_rotations
    if sm_updates:
        updates["smoothing"] = dataclasses.replace(smoothing, **sm_updates)

    backends = dict(cfg.backends)
    if getattr(args, "scene", None):
        for kind in ("segmentation", "completion"):
            backends[kind] = BackendSpec(mode="mock", scene=args.scene)
        backends.setdefault("hmr", BackendSpec(mode="mock"))
    for kind, attr in (("segmentation", "seg_backend"), ("completion", "completion_backend"),
                       ("hmr", "hmr_backend")):
        value = getattr(args, attr, None)
        if value:
            backends[kind] = _parse_backend_spec(value)
    if backends != cfg.backends:
        updates["backends"] = backends
    return dataclasses.replace(cfg, **updates) if updates else cfg


def _load_job(args):
    frames = files.load_frames(args.frames)
    prompts = files.load_prompts(args.prompts) if getattr(args, "prompts", None) else []
    job = validate_job(frames, prompts)
    return job, files.image_loader(frames)


def _cmd_run(args) -> int:
    cfg = _build_config(args)
    job, images = _load_job(args)
    backends = make_backends(cfg)
    try:
        result = run_pipeline(job, cfg, backends, images, out_dir=args.out)
    finally:
        backends.close()
    print(f"wrote {os.path.join(args.out, files.TRAJECTORIES_FILE)}")
    print(f"wrote {os.path.join(args.out, files.REPORT_FILE)}")
    hmr_stats = result.report["hmr"]
    print(
        f"hmr: {hmr_stats['chunks']} batched calls covering "
        f"{hmr_stats['valid_slots']} (frame, human) pairs"
    )
    return 0


def _cmd_segment(args) -> int:
    cfg = _build_config(args)
    job, images = _load_job(args)
    backends = make_backends(cfg, kinds=("segmentation",))
    try:
        masklets = generate_masklets(job, backends.segmentation, images, cfg.binarize_threshold)
    finally:
        backends.close()
    os.makedirs(args.out, exist_ok=True)
    out = os.path.join(args.out, files.MASKLETS_FILE)
    files.save_masklets(out, masklets, job.width, job.height, cfg.to_json())
    print(f"wrote {out}")
    return 0


def _cmd_refine(args) -> int:
    cfg = _build_config(args)
    frames = files.load_frames(args.frames)
    images = files.image_loader(frames)
    masklet_path = args.masklets or os.path.join(args.out, files.MASKLETS_FILE)
    masklets, frame_count, width, height = files.load_masklets(masklet_path)
    if frame_count != len(frames):
        raise DataError(
            f"masklet file covers {frame_count} frames but directory has {len(frames)}"
        )
    if frames and (frames[0].width != width or frames[0].height != height):
        raise DataError(
            f"masklet file is {width}x{height} but frames are "
            f"{frames[0].width}x{frames[0].height}"
        )
    job = validate_job(frames, [])
    backends = make_backends(cfg, kinds=("completion",))
    try:
        result = refine_masklets(
            job,
            masklets,
            backends.completion,
            images,
            iou_threshold=cfg.iou_threshold,
            min_area=cfg.min_area,
            max_gap=cfg.max_gap,
        )
    finally:
        backends.close()
    os.makedirs(args.out, exist_ok=True)
    snapshot = cfg.to_json()
    refined_path = os.path.join(args.out, files.REFINED_MASKLETS_FILE)
    files.save_masklets(refined_path, result.masklets, width, height, snapshot)
    files.save_evidence(args.out, result.evidence, result.flags, result.intervals, snapshot)
    total = sum(len(ivs) for ivs in result.intervals)
    print(f"wrote {refined_path} ({total} occlusion intervals)")
    return 0


def _cmd_hmr(args) -> int:
    cfg = _build_config(args)
    frames = files.load_frames(args.frames)
    images = files.image_loader(frames)
    refined_path = os.path.join(args.out, files.REFINED_MASKLETS_FILE)
    masklet_path = args.masklets or (
        refined_path
        if os.path.exists(refined_path)
        else os.path.join(args.out, files.MASKLETS_FILE)
    )
    masklets, frame_count, width, height = files.load_masklets(masklet_path)
    if frame_count != len(frames):
        raise DataError("masklet file does not match the frame directory")
    refined_images = {}
    if os.path.exists(os.path.join(args.out, files.EVIDENCE_FILE)):
        refined_images, _flags = files.load_evidence(args.out)
    evidence = HmrEvidence(
        width=width,
        height=height,
        human_ids=tuple(m.human_id for m in masklets),
        masklets=masklets,
        images=images,
        refined_images=refined_images,
    )
    plan = plan_batches(evidence.visibility(), cfg.batch_size, [m.human_id for m in masklets])
    backends = make_backends(cfg, kinds=("hmr",))
    try:
        trajectories = run_hmr(evidence, plan, backends.hmr, in_flight=cfg.hmr_in_flight)
    finally:
        backends.close()
    os.makedirs(args.out, exist_ok=True)
    out = os.path.join(args.out, files.RAW_TRAJECTORIES_FILE)
    files.save_trajectories(out, trajectories, frame_count, cfg.to_json(), smoothed=False)
    print(f"wrote {out} ({len(plan.chunks)} backend calls)")
    return 0


def _cmd_smooth(args) -> int:
    trajectories, frame_count, snapshot, _smoothed = files.load_trajectories(args.infile)
    base = PipelineConfig.from_json(snapshot) if snapshot else PipelineConfig()
    cfg = _build_config(args, base=base)
    out_path = args.out
    if out_path is None:
        directory, name = os.path.split(args.infile)
        if name == files.RAW_TRAJECTORIES_FILE:
            out_path = os.path.join(directory, files.TRAJECTORIES_FILE)
        else:
            stem, ext = os.path.splitext(name)
            out_path = os.path.join(directory, f"{stem}_smoothed{ext}")
    smoothed = [smooth_trajectory(lock_shape(t), cfg.smoothing) for t in trajectories]
    files.save_trajectories(out_path, smoothed, frame_count, cfg.to_json(), smoothed=True)
    print(f"wrote {out_path}")
    return 0


def _cmd_report(args) -> int:
    run_dir = args.run_dir
    report_path = os.path.join(run_dir, files.REPORT_FILE)
    if not os.path.exists(report_path):
        raise DataError(f"{run_dir} has no {files.REPORT_FILE}; run the pipeline first")
    csv_path = os.path.join(run_dir, figures.REPORT_CSV)
    rows = figures.write_report_csv(run_dir, csv_path)
    rendered = figures.render_run_figures(run_dir, args.figures_dir)
    report = files.read_json(report_path)
    print(f"wrote {csv_path}")
    for path in rendered:
        print(f"wrote {path}")
    stages = report.get("stages", {})
    for name in ("segment", "refine", "hmr", "smooth"):
        if name not in stages:
            continue
        stage = stages[name]
        calls = "" if stage["backend_calls"] is None else f"{stage['backend_calls']} backend calls, "
        print(f"stage {name}: {calls}{stage['wall_time_s']:.3f}s")
    for h in report.get("occlusion", []):
        ivs = ", ".join(f"[{s}..{e}]" for s, e in h["intervals"]) or "none"
        print(f"occlusion {h['id']}: {ivs}")
    for row in rows:
        print(
            f"jitter {row['human_id']}: before={row['jitter_before'] or 'n/a'} "
            f"after={row['jitter_after'] or 'n/a'}"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vidmesh", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="full pipeline: segment, refine, hmr, smooth")
    p.add_argument("--frames", required=True, help="directory of image frames")
    p.add_argument("--prompts", required=True, help="prompts JSON")
    p.add_argument("--out", required=True, help="run directory for outputs")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("segment", help="stage 1 only: emit the masklet file")
    p.add_argument("--frames", required=True)
    p.add_argument("--prompts", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("refine", help="stage 2 only: occlusion-aware refinement")
    p.add_argument("--frames", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--masklets", help="masklet file (default: OUT/masklets.json)")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_refine)

    p = sub.add_parser("hmr", help="stage 3 only: batched mesh recovery")
    p.add_argument("--frames", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--masklets", help="masklet file override")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_hmr)

    p = sub.add_parser("smooth", help="stage 4 on an existing trajectory file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", help="output trajectory file")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_smooth)

    p = sub.add_parser("report", help="metrics CSV + figures from a run directory")
    p.add_argument("run_dir")
    p.add_argument("--figures-dir", help="where to render figures (default RUN_DIR/figures)")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse help/usage paths
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (DataError,) as exc:
        print(f"vidmesh: data error: {exc}", file=sys.stderr)
        return 3
    except (BackendError, ProtocolError) as exc:
        print(f"vidmesh: backend error: {exc}", file=sys.stderr)
        return 2
    except VidmeshError as exc:
        print(f"vidmesh: error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
