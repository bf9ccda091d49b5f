"""Stub point-prompt segmentation service."""
from .rules import ImageRules, RulesError, StubRule, load_image_rules, parse_image_rules, stub_segment
from .server import (
    Plugin,
    RequestError,
    SegmentServer,
    ServiceConfig,
    UnknownImage,
    build_server,
    resolve_plugin,
    serve,
    stub_plugin,
)

__version__ = "0.1.0"

__all__ = [
    "ImageRules",
    "Plugin",
    "RequestError",
    "RulesError",
    "SegmentServer",
    "ServiceConfig",
    "StubRule",
    "UnknownImage",
    "build_server",
    "load_image_rules",
    "parse_image_rules",
    "resolve_plugin",
    "serve",
    "stub_plugin",
    "stub_segment",
]
