"""Wire protocol for captioning, generation, and rewrite backends.

HTTP + JSON bodies, UTF-8:
  POST /v1/caption  {"image_ref" | "image_b64"}                    -> {"caption"}
  POST /v1/generate {"prompt","guidance_scale","seed","width",
                     "height","steps","negative_prompt"}           -> {"image_b64","meta":{echo}}
  POST /v1/rewrite  {"prompt","max_tokens","temperature"}          -> {"text"}

Canonical request bytes (digests, replay keys): JSON with sorted keys,
compact separators, ensure_ascii=False, encoded UTF-8, wrapped as
{"kind": <route kind>, "body": <request body>}. Floats serialize via
Python's shortest repr, so sweep values like 1.5 and 7.5 round-trip
exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from ..errors import ConfigError, InvariantError

KIND_CAPTION = "caption"
KIND_GENERATE = "generate"
KIND_REWRITE = "rewrite"

ROUTES = {
    KIND_CAPTION: "/v1/caption",
    KIND_GENERATE: "/v1/generate",
    KIND_REWRITE: "/v1/rewrite",
}

DEFAULT_MAX_TOKENS = 512
DEFAULT_TEMPERATURE = 0.7


@dataclass(frozen=True)
class GenerationConfig:
    """Generation knobs. steps=50 and no negative prompt are conventions
    (the source models' sampler settings are not published), flagged here
    rather than hidden."""

    guidance_scale: float = 1.5
    width: int = 512
    height: int = 512
    steps: int = 50
    negative_prompt: str | None = None

    def __post_init__(self):
        if self.guidance_scale < 1:
            raise ConfigError("guidance_scale must be >= 1")
        if self.width <= 0 or self.height <= 0:
            raise ConfigError("width and height must be positive")
        if self.steps <= 0:
            raise ConfigError("steps must be positive")


@dataclass(frozen=True)
class RewriteParams:
    max_tokens: int = DEFAULT_MAX_TOKENS
    temperature: float = DEFAULT_TEMPERATURE


@dataclass(frozen=True)
class BackendEndpoint:
    base_url: str
    kind: str
    timeout: float = 30.0
    max_retries: int = 2
    auth_token: str | None = None
    auth_env: str | None = None

    def __post_init__(self):
        if self.timeout <= 0:
            raise ConfigError("timeout must be positive")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.kind not in ROUTES:
            raise ConfigError(f"unknown backend kind {self.kind!r}")


def canonical_json_bytes(obj) -> bytes:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True,
                      separators=(",", ":")).encode("utf-8")


def canonical_request_bytes(kind: str, body: dict) -> bytes:
    if kind not in ROUTES:
        raise ConfigError(f"unknown request kind {kind!r}")
    return canonical_json_bytes({"kind": kind, "body": body})


def request_digest(data: bytes) -> str:
    """Stable 64-hex content hash of canonical request bytes."""
    return hashlib.sha256(data).hexdigest()


def request_digest_for(kind: str, body: dict) -> str:
    return request_digest(canonical_request_bytes(kind, body))


def caption_body(sample_ref: str | None = None, image_b64: str | None = None) -> dict:
    if (sample_ref is None) == (image_b64 is None):
        raise InvariantError("caption request needs exactly one of image_ref / image_b64")
    if sample_ref is not None:
        return {"image_ref": sample_ref}
    return {"image_b64": image_b64}


def generate_body(prompt: str, config: GenerationConfig, seed: int) -> dict:
    if not prompt:
        raise InvariantError("prompt must be non-empty")
    return {
        "prompt": prompt,
        "guidance_scale": float(config.guidance_scale),
        "seed": int(seed),
        "width": config.width,
        "height": config.height,
        "steps": config.steps,
        "negative_prompt": config.negative_prompt,
    }


def rewrite_body(request_text: str, params: RewriteParams) -> dict:
    return {
        "prompt": request_text,
        "max_tokens": params.max_tokens,
        "temperature": params.temperature,
    }
