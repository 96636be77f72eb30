"""Deterministic protocol stub server.

Implements the backend wire protocol with zero ML runtime: captions come
from a canned mapping or a toy-world captioner, generation echoes its
request and (when a world is attached) samples the toy conditional
generator, rewrites are canned or synthesized. Used for protocol
conformance, replay recording, and offline pipeline tests.
"""

from __future__ import annotations

import base64
import hashlib
import json

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..dataman import decode_vector_ref, is_vector_ref
from ..promptkit import ANSWER_MARKER
from ..synthworld import (
    QUALITY_FINE,
    WorldSpec,
    resolve_prompt_mode,
    synth_caption,
)
from .protocol import canonical_json_bytes

REWRITE_ECHO = "echo"
REWRITE_DESTROY = "destroy"


def _error(status: int, kind: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error": {"kind": kind, "message": message}})


def _vector_payload_b64(x: np.ndarray) -> str:
    payload = canonical_json_bytes({"v": [float(v) for v in x]})
    return base64.b64encode(payload).decode("ascii")


def decode_vector_payload(payload: bytes) -> np.ndarray:
    """Parse a stub/adapter vector payload back into a feature vector."""
    obj = json.loads(payload.decode("utf-8"))
    return np.array([float(v) for v in obj["v"]], dtype=float)


def _match_class(world: WorldSpec, prompt: str) -> int | None:
    # a T2I model reads the class from the text; mimic by longest name match
    best = None
    best_len = 0
    for c, name in enumerate(world.class_names):
        if name in prompt and len(name) > best_len:
            best = c
            best_len = len(name)
    return best


def make_stub_app(
    captions: dict[str, str] | None = None,
    rewrites: dict[str, str] | None = None,
    rewrite_mode: str = REWRITE_ECHO,
    world: WorldSpec | None = None,
    caption_quality: str = QUALITY_FINE,
    fail_first: int = 0,
) -> FastAPI:
    """Build the stub app. fail_first makes the first N generate calls 500
    (retry-contract tests)."""
    app = FastAPI(title="cip-backend-stub")
    captions = dict(captions or {})
    rewrites = dict(rewrites or {})
    state = {"fail_remaining": fail_first}

    @app.get("/healthz")
    def healthz():
        models = {"captioner": "stub", "generator": "stub-world" if world else "stub",
                  "rewriter": f"stub-{rewrite_mode}"}
        return {"status": "ok", "models": models, "deterministic": True}

    @app.post("/v1/caption")
    async def caption(request: Request):
        body = await request.json()
        ref = body.get("image_ref")
        b64 = body.get("image_b64")
        if (ref is None) == (b64 is None):
            return _error(400, "malformed-request",
                          "need exactly one of image_ref / image_b64")
        key = ref if ref is not None else b64
        if key in captions:
            return {"caption": captions[key]}
        if world is not None and ref is not None and is_vector_ref(ref):
            x = decode_vector_ref(ref)
            return {"caption": synth_caption(world, x, caption_quality) or "an image"}
        digest = hashlib.sha256(str(key).encode("utf-8")).hexdigest()[:8]
        return {"caption": f"a stub image {digest}"}

    @app.post("/v1/generate")
    async def generate(request: Request):
        body = await request.json()
        prompt = body.get("prompt")
        if not prompt or not isinstance(prompt, str):
            return _error(400, "malformed-request", "prompt must be non-empty text")
        try:
            gs = float(body["guidance_scale"])
            seed = int(body["seed"])
        except (KeyError, TypeError, ValueError):
            return _error(400, "malformed-request", "guidance_scale and seed required")
        if state["fail_remaining"] > 0:
            state["fail_remaining"] -= 1
            return _error(500, "transport-error", "synthetic failure for retry tests")
        meta = {
            "prompt": prompt,
            "guidance_scale": gs,
            "seed": seed,
            "width": body.get("width"),
            "height": body.get("height"),
            "steps": body.get("steps"),
            "negative_prompt": body.get("negative_prompt"),
        }
        if world is not None:
            label = _match_class(world, prompt)
            rng = np.random.default_rng(seed)
            if label is None:
                x = world.sigma * rng.standard_normal(world.d)
            else:
                mode = resolve_prompt_mode(world, prompt, label, rng)
                scale = world.sigma / np.sqrt(max(gs, 1.0))
                x = mode.mean_vec + scale * rng.standard_normal(world.d)
            return {"image_b64": _vector_payload_b64(x), "meta": meta}
        fake = hashlib.sha256(
            canonical_json_bytes({"prompt": prompt, "gs": gs, "seed": seed})
        ).digest()
        return {"image_b64": base64.b64encode(fake).decode("ascii"), "meta": meta}

    @app.post("/v1/rewrite")
    async def rewrite(request: Request):
        body = await request.json()
        text = body.get("prompt")
        if not text or not isinstance(text, str) or not text.endswith("# Answer:"):
            return _error(400, "malformed-request",
                          "rewrite prompt must end with '# Answer:'")
        if text in rewrites:
            return {"text": rewrites[text]}
        caption = ""
        if "# Caption:\n" in text:
            caption = text.split("# Caption:\n", 1)[1]
            caption = caption.split("\n" + ANSWER_MARKER, 1)[0].strip()
        if rewrite_mode == REWRITE_DESTROY or not caption:
            return {"text": "\n1. a thing in a place\n2. an object somewhere"}
        return {"text": f"\n1. {caption}\n2. {caption}"}

    return app
