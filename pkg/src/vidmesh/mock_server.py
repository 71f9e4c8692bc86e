"""Standalone mock backend server: ``python -m vidmesh.mock_server``.

Serves a scene-scripted mock backend over the wire protocol, on stdio
(default) or HTTP. Used for transport conformance tests and as a stand-in
backend for CLI runs without any model.
"""

from __future__ import annotations

import argparse
import sys

from .backends import backend_dispatcher
from .mocks import (
    MockCompletionBackend,
    MockHmrBackend,
    MockSegmentationBackend,
    SceneScript,
)
from .protocol import make_line_handler, serve_http, serve_stdio


def build_backend(args):
    if args.kind == "hmr":
        rotation = tuple(int(c) for c in args.rotation_channels.split(",") if c != "")
        return MockHmrBackend(rotation_channels=rotation)
    if not args.scene:
        raise SystemExit(f"--scene is required for kind {args.kind}")
    scene = SceneScript.load(args.scene)
    if args.kind == "segmentation":
        return MockSegmentationBackend(scene, soft=args.soft)
    resolution = None
    if args.resolution:
        w, h = args.resolution.lower().split("x")
        resolution = (int(w), int(h))
    return MockCompletionBackend(scene, resolution=resolution)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="vidmesh.mock_server", description=__doc__)
    parser.add_argument("--kind", required=True, choices=("segmentation", "completion", "hmr"))
    parser.add_argument("--scene", help="scene script JSON (segmentation/completion)")
    parser.add_argument("--soft", action="store_true", help="emit soft probability masks")
    parser.add_argument("--resolution", help="completion operating resolution WxH")
    parser.add_argument("--rotation-channels", default="", help="hmr: pose channels flagged angular")
    parser.add_argument("--transport", choices=("stdio", "http"), default="stdio")
    parser.add_argument("--port", type=int, default=0, help="http port (0 = pick free)")
    args = parser.parse_args(argv)

    backend = build_backend(args)
    handler = make_line_handler(backend_dispatcher(args.kind, backend))
    if args.transport == "stdio":
        serve_stdio(handler)
        return 0
    server = serve_http(handler, args.port)
    # announce the bound port on stderr so a parent process can connect
    print(f"listening on http://127.0.0.1:{server.server_address[1]}/", file=sys.stderr, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
