"""Cross-language conformance: the TypeScript adapter in scripted mode must
replay the engine's golden transcripts byte-identically over both transports,
and a full pipeline run against it must equal the in-process-mock run.

Skipped when node or the built adapter is unavailable (build with
``npm install && npm run build`` inside adapter/).
"""

import os
import re
import shutil
import subprocess
import urllib.request

import pytest

from conftest import make_scene, scene_job, static_human, walking_human
from vidmesh.backends import (
    RemoteCompletionBackend,
    RemoteHmrBackend,
    RemoteSegmentationBackend,
    backend_dispatcher,
)
from vidmesh.mocks import (
    MockCompletionBackend,
    MockHmrBackend,
    MockSegmentationBackend,
)
from vidmesh.pipeline import Backends, PipelineConfig, run_pipeline
from vidmesh.protocol import HttpConnection, InProcessConnection, StdioConnection, make_line_handler

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
ADAPTER_MAIN = os.path.join(ROOT, "adapter", "dist", "main.js")

node = shutil.which("node")
pytestmark = pytest.mark.skipif(
    node is None or not os.path.exists(ADAPTER_MAIN),
    reason="node or the built adapter (adapter/dist/main.js) is unavailable",
)


@pytest.fixture
def recorded_run(tmp_path):
    """Run the pipeline on in-process mocks with recording connections and
    return (scene, job, images, config, reference result, tape files)."""
    scene = make_scene(
        humans=[
            walking_human("a", 7, occluded={2, 3, 4}),
            static_human("b", 7, (40, 20, 56, 44)),
        ]
    )
    job, images = scene_job(scene)
    config = PipelineConfig(
        batch_size=3, completion_width=scene.width, completion_height=scene.height
    )
    tapes = {"segmentation": [], "completion": [], "hmr": []}

    def recorded(kind, backend):
        handler = make_line_handler(backend_dispatcher(kind, backend))
        return InProcessConnection(handler, tapes[kind])

    backends = Backends(
        RemoteSegmentationBackend(recorded("segmentation", MockSegmentationBackend(scene))),
        RemoteCompletionBackend(recorded("completion", MockCompletionBackend(scene))),
        RemoteHmrBackend(recorded("hmr", MockHmrBackend())),
    )
    reference = run_pipeline(job, config, backends, images)

    paths = {}
    for kind, tape in tapes.items():
        path = tmp_path / f"{kind}.transcript.jsonl"
        path.write_bytes(b"".join(tape))
        paths[kind] = str(path)
    return scene, job, images, config, reference, paths, tapes


def adapter_cmd(script, transport="stdio", port="0"):
    cmd = [node, ADAPTER_MAIN, "--mode", "scripted", "--script", script]
    if transport != "stdio":
        cmd += ["--transport", transport, "--port", port]
    return cmd


def test_adapter_replays_transcripts_over_stdio(recorded_run):
    _scene, _job, _images, _config, _reference, paths, tapes = recorded_run
    for kind, path in paths.items():
        proc = subprocess.Popen(
            adapter_cmd(path), stdin=subprocess.PIPE, stdout=subprocess.PIPE
        )
        try:
            tape = tapes[kind]
            for request, expected in zip(tape[0::2], tape[1::2]):
                proc.stdin.write(request)
                proc.stdin.flush()
                assert proc.stdout.readline() == expected, f"{kind} diverged"
        finally:
            proc.stdin.close()
            proc.wait(timeout=10)


def test_adapter_replays_transcripts_over_http(recorded_run):
    _scene, _job, _images, _config, _reference, paths, tapes = recorded_run
    for kind, path in paths.items():
        proc = subprocess.Popen(
            adapter_cmd(path, transport="http"),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
        )
        try:
            banner = proc.stderr.readline().decode()
            match = re.search(r"http://127\.0\.0\.1:(\d+)/", banner)
            assert match, f"no port banner from adapter: {banner!r}"
            url = f"http://127.0.0.1:{match.group(1)}/rpc"
            tape = tapes[kind]
            for request, expected in zip(tape[0::2], tape[1::2]):
                req = urllib.request.Request(url, data=request, method="POST")
                with urllib.request.urlopen(req, timeout=10) as resp:
                    assert resp.read() == expected, f"{kind} diverged over http"
        finally:
            proc.kill()
            proc.wait(timeout=10)


def test_full_pipeline_against_scripted_adapter(recorded_run):
    scene, job, images, config, reference, paths, _tapes = recorded_run
    backends = Backends(
        RemoteSegmentationBackend(StdioConnection(adapter_cmd(paths["segmentation"]))),
        RemoteCompletionBackend(StdioConnection(adapter_cmd(paths["completion"]))),
        RemoteHmrBackend(StdioConnection(adapter_cmd(paths["hmr"]))),
    )
    try:
        result = run_pipeline(job, config, backends, images)
    finally:
        backends.close()
    assert result.trajectories == reference.trajectories
    assert result.refined_masklets == reference.refined_masklets
    assert result.report["occlusion"] == reference.report["occlusion"]


def test_full_pipeline_against_adapter_over_http(recorded_run):
    scene, job, images, config, reference, paths, _tapes = recorded_run
    procs, conns = [], {}
    try:
        for kind in ("segmentation", "completion", "hmr"):
            proc = subprocess.Popen(
                adapter_cmd(paths[kind], transport="http"),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
            )
            procs.append(proc)
            banner = proc.stderr.readline().decode()
            match = re.search(r"http://127\.0\.0\.1:(\d+)/", banner)
            assert match
            conns[kind] = HttpConnection(f"http://127.0.0.1:{match.group(1)}/rpc")
        backends = Backends(
            RemoteSegmentationBackend(conns["segmentation"]),
            RemoteCompletionBackend(conns["completion"]),
            RemoteHmrBackend(conns["hmr"]),
        )
        result = run_pipeline(job, config, backends, images)
        assert result.trajectories == reference.trajectories
    finally:
        for proc in procs:
            proc.kill()
            proc.wait(timeout=10)


def test_unscripted_request_yields_protocol_error(recorded_run, tmp_path):
    _scene, job, images, config, _reference, paths, _tapes = recorded_run
    from vidmesh.errors import BackendProtocolError
    from vidmesh.masklets import generate_masklets

    # hand the segmentation stage the hmr script: nothing matches
    backend = RemoteSegmentationBackend(StdioConnection(adapter_cmd(paths["hmr"])))
    try:
        with pytest.raises(BackendProtocolError) as err:
            generate_masklets(job, backend, images)
        assert err.value.code == "unscripted_request"
    finally:
        backend.close()
