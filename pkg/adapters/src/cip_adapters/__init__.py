"""Reference model servers for the cip backend wire protocol."""

from .config import AdapterConfig, AdapterConfigError, config_from_dict, load_config
from .models import ModelLoadError, ModelSet, fake_models, load_models
from .record import record_replay
from .server import build_app, serve

__all__ = [
    "AdapterConfig",
    "AdapterConfigError",
    "config_from_dict",
    "load_config",
    "ModelLoadError",
    "ModelSet",
    "fake_models",
    "load_models",
    "record_replay",
    "build_app",
    "serve",
]

__version__ = "0.1.0"
