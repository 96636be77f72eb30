"""Adapter configuration: one model identifier per role, device, port."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

DEFAULT_MODELS = {
    "captioner": "Salesforce/blip2-opt-2.7b",
    "generator": "runwayml/stable-diffusion-v1-5",
    "rewriter": "lmsys/vicuna-13b-v1.5",
}


class AdapterConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RoleConfig:
    model: str
    enabled: bool = True


@dataclass(frozen=True)
class AdapterConfig:
    captioner: RoleConfig = field(
        default_factory=lambda: RoleConfig(DEFAULT_MODELS["captioner"]))
    generator: RoleConfig = field(
        default_factory=lambda: RoleConfig(DEFAULT_MODELS["generator"]))
    rewriter: RoleConfig = field(
        default_factory=lambda: RoleConfig(DEFAULT_MODELS["rewriter"]))
    device: str = "cuda"
    port: int = 8100
    host: str = "127.0.0.1"
    max_batch: int = 1
    data_root: str = "."

    def __post_init__(self):
        if not 1 <= self.port <= 65535:
            raise AdapterConfigError(f"port {self.port} outside 1..65535")
        if self.max_batch < 1:
            raise AdapterConfigError("max_batch must be >= 1")

    def roles(self) -> dict[str, RoleConfig]:
        return {"captioner": self.captioner, "generator": self.generator,
                "rewriter": self.rewriter}


def _role_from(obj, default_model: str) -> RoleConfig:
    if obj is None:
        return RoleConfig(default_model, enabled=False)
    if isinstance(obj, str):
        return RoleConfig(obj)
    return RoleConfig(str(obj.get("model", default_model)),
                      bool(obj.get("enabled", True)))


def config_from_dict(obj: dict) -> AdapterConfig:
    if not isinstance(obj, dict):
        raise AdapterConfigError("adapter config must be a JSON object")
    known = {"captioner", "generator", "rewriter", "device", "port", "host",
             "max_batch", "data_root"}
    unknown = set(obj) - known
    if unknown:
        raise AdapterConfigError(f"unknown adapter config keys: {sorted(unknown)}")
    return AdapterConfig(
        captioner=_role_from(obj.get("captioner", {}), DEFAULT_MODELS["captioner"]),
        generator=_role_from(obj.get("generator", {}), DEFAULT_MODELS["generator"]),
        rewriter=_role_from(obj.get("rewriter", {}), DEFAULT_MODELS["rewriter"]),
        device=str(obj.get("device", "cuda")),
        port=int(obj.get("port", 8100)),
        host=str(obj.get("host", "127.0.0.1")),
        max_batch=int(obj.get("max_batch", 1)),
        data_root=str(obj.get("data_root", ".")),
    )


def load_config(path: str | Path) -> AdapterConfig:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise AdapterConfigError(f"adapter config not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise AdapterConfigError(f"adapter config is not valid JSON: {exc}") from exc
    return config_from_dict(obj)
