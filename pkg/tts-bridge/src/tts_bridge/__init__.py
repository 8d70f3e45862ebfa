"""HTTP bridge exposing TTS models over a small wire protocol."""

from .engines import EngineUnavailable, NeuralEngine, ProceduralEngine
from .server import BridgeConfig, serve

__all__ = [
    "BridgeConfig",
    "EngineUnavailable",
    "NeuralEngine",
    "ProceduralEngine",
    "serve",
]
