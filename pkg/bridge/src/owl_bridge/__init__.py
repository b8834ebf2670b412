"""Detector bridge: serves OWLv2 detections over the line-delimited wire protocol."""

from .config import MODEL_IDS, BridgeConfig
from .server import handle_request, serve

__all__ = ["BridgeConfig", "MODEL_IDS", "handle_request", "serve"]

__version__ = "0.1.0"
