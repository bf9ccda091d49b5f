"""Threaded HTTP service answering point-prompt segmentation requests.

Routes: POST /v1/segment and GET /v1/health.  Masks come from a plugin
callable; the bundled stub plugin replays per-image zone rules from a
directory of <image_id>.json files.  Plugins signal errors by exception:
UnknownImage renders as 404, RequestError as 400, anything else as 500.
"""
from __future__ import annotations

import importlib
import json
import logging
import re
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable

from .rules import load_image_rules, stub_segment

logger = logging.getLogger("segserve")

# plugin(image_id, height, width, points) -> protocol results array
Plugin = Callable[[str, int, int, list], list]

_IMAGE_ID = re.compile(r"[A-Za-z0-9._-]+")


class UnknownImage(KeyError):
    """No stored data for the requested image id."""


class RequestError(ValueError):
    """The request is malformed or contradicts the stored image."""


@dataclass(frozen=True)
class ServiceConfig:
    """Where to listen, where the image store lives, and which plugin runs."""

    host: str = "127.0.0.1"
    port: int = 0
    store: str = "."
    plugin: str = "stub"

    def __post_init__(self) -> None:
        if not 0 <= self.port <= 65535:
            raise ValueError(f"port must be in [0, 65535], got {self.port}")
        if not Path(self.store).is_dir():
            raise ValueError(f"image store is not a directory: {self.store}")


def stub_plugin(store: Path) -> Plugin:
    """Replays <store>/<image_id>.json rule files."""

    def segment(image_id: str, height: int, width: int, points: list) -> list:
        path = store / f"{image_id}.json"
        if not path.is_file():
            raise UnknownImage(image_id)
        rules = load_image_rules(path)
        if (rules.height, rules.width) != (height, width):
            raise RequestError(
                f"image {image_id} is {rules.height}x{rules.width}, "
                f"request says {height}x{width}"
            )
        return stub_segment(rules, points)["results"]

    return segment


def resolve_plugin(config: ServiceConfig) -> Plugin:
    """The stub plugin, or an external factory named as "module:attribute".

    An external factory is called with the store path and must return a
    plugin callable.
    """
    if config.plugin == "stub":
        return stub_plugin(Path(config.store))
    module_name, sep, attr = config.plugin.partition(":")
    if not sep or not module_name or not attr:
        raise ValueError(
            f"plugin must be 'stub' or 'module:attribute', got {config.plugin!r}"
        )
    factory = getattr(importlib.import_module(module_name), attr)
    return factory(Path(config.store))


def _parse_request(body: object) -> tuple[str, int, int, list[tuple[int, int]]]:
    if not isinstance(body, dict):
        raise RequestError("request body must be a JSON object")
    image_id = body.get("image_id")
    if not isinstance(image_id, str) or not _IMAGE_ID.fullmatch(image_id):
        raise RequestError(f"image_id must match {_IMAGE_ID.pattern}, got {image_id!r}")
    dims = []
    for key in ("height", "width"):
        value = body.get(key)
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            raise RequestError(f"{key} must be a positive integer, got {value!r}")
        dims.append(value)
    height, width = dims
    points = body.get("points")
    if not isinstance(points, list):
        raise RequestError("points must be an array of [row, col] pairs")
    parsed = []
    for i, pair in enumerate(points):
        if (
            not isinstance(pair, list)
            or len(pair) != 2
            or any(isinstance(v, bool) or not isinstance(v, int) for v in pair)
        ):
            raise RequestError(f"point {i} must be an integer [row, col] pair")
        row, col = pair
        if not (0 <= row < height and 0 <= col < width):
            raise RequestError(f"point {i} ({row}, {col}) is outside {height}x{width}")
        parsed.append((row, col))
    return image_id, height, width, parsed


class SegmentServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address: tuple[str, int], plugin: Plugin) -> None:
        super().__init__(address, _Handler)
        self.plugin = plugin


class _Handler(BaseHTTPRequestHandler):
    server_version = "segserve/0.1"

    def log_message(self, format: str, *args) -> None:
        logger.info("%s %s", self.address_string(), format % args)

    def do_GET(self) -> None:
        if self.path == "/v1/health":
            self._send(200, {"status": "ok"})
        else:
            self._send(404, {"error": f"unknown route {self.path}"})

    def do_POST(self) -> None:
        if self.path != "/v1/segment":
            self._send(404, {"error": f"unknown route {self.path}"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            try:
                body = json.loads(self.rfile.read(length))
            except json.JSONDecodeError as exc:
                raise RequestError(f"malformed JSON: {exc}") from exc
            image_id, height, width, points = _parse_request(body)
        except RequestError as exc:
            self._send(400, {"error": str(exc)})
            return
        server: SegmentServer = self.server  # type: ignore[assignment]
        try:
            results = server.plugin(image_id, height, width, points)
        except UnknownImage:
            self._send(404, {"error": f"unknown image id {image_id}"})
        except RequestError as exc:
            self._send(400, {"error": str(exc)})
        except Exception as exc:
            logger.exception("plugin failure for image %s", image_id)
            self._send(500, {"error": f"plugin failure: {exc}"})
        else:
            self._send(200, {"results": results})

    def _send(self, status: int, obj: dict) -> None:
        payload = json.dumps(obj).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)


def build_server(config: ServiceConfig, plugin: Plugin | None = None) -> SegmentServer:
    """A ready server; pass a plugin callable to bypass config resolution."""
    if plugin is None:
        plugin = resolve_plugin(config)
    return SegmentServer((config.host, config.port), plugin)


def serve(config: ServiceConfig) -> None:
    """Run until interrupted."""
    server = build_server(config)
    host, port = server.server_address[:2]
    logger.info("listening on http://%s:%d (store %s)", host, port, config.store)
    try:
        server.serve_forever()
    finally:
        server.server_close()
