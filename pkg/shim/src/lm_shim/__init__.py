"""lm-shim: a reference wire-protocol model server backed by a causal LM."""

from .model import NextTokenModel, build_checkpoint, ensure_checkpoint
from .server import ShimConfig, ShimServer, serve

__version__ = "0.1.0"
