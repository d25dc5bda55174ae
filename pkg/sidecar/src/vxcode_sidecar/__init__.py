"""Detector inference server for the vxcode stdio wire protocol."""

from .mock import make_mock
from .server import handle_message, mask_raw, patch_rect, serve

__version__ = "0.1.0"

__all__ = ["handle_message", "make_mock", "mask_raw", "patch_rect", "serve"]
