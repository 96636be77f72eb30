"""The adapter server: the backend wire protocol over real models.

Request handling is serialized per model instance (one lock per role,
GPU memory safety); FastAPI's worker pool may queue behind the locks.
"""

from __future__ import annotations

import base64
import threading

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .config import AdapterConfig
from .models import ModelSet, _decode_image


def _error(status: int, kind: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error": {"kind": kind, "message": message}})


def build_app(models: ModelSet, config: AdapterConfig | None = None) -> FastAPI:
    config = config or AdapterConfig(port=8100, device="cpu")
    app = FastAPI(title="cip-adapters")
    locks = {role: threading.Lock() for role in ("captioner", "generator",
                                                 "rewriter")}

    @app.get("/healthz")
    def healthz():
        return {
            "status": "ok",
            "models": models.descriptions(),
            "deterministic": models.deterministic,
        }

    @app.post("/v1/caption")
    async def caption(request: Request):
        if models.captioner is None:
            return _error(503, "backend-rejection", "captioner role disabled")
        body = await request.json()
        ref, b64 = body.get("image_ref"), body.get("image_b64")
        if (ref is None) == (b64 is None):
            return _error(400, "malformed-request",
                          "need exactly one of image_ref / image_b64")
        try:
            image = _decode_image(b64, ref, config.data_root)
        except Exception as exc:
            return _error(400, "malformed-request", f"cannot decode image: {exc}")
        with locks["captioner"]:
            try:
                text = models.captioner.caption(image)
            except Exception as exc:
                return _error(500, "backend-error", f"captioning failed: {exc}")
        return {"caption": text}

    @app.post("/v1/generate")
    async def generate(request: Request):
        if models.generator is None:
            return _error(503, "backend-rejection", "generator role disabled")
        body = await request.json()
        prompt = body.get("prompt")
        if not prompt or not isinstance(prompt, str):
            return _error(400, "malformed-request", "prompt must be non-empty text")
        try:
            gs = float(body["guidance_scale"])
            seed = int(body["seed"])
            width = int(body.get("width", 512))
            height = int(body.get("height", 512))
            steps = int(body.get("steps", 50))
        except (KeyError, TypeError, ValueError):
            return _error(400, "malformed-request",
                          "guidance_scale and seed are required")
        negative = body.get("negative_prompt")
        with locks["generator"]:
            try:
                payload = models.generator.generate(
                    prompt, gs, seed, width, height, steps, negative)
            except Exception as exc:
                return _error(500, "backend-error", f"generation failed: {exc}")
        return {
            "image_b64": base64.b64encode(payload).decode("ascii"),
            "meta": {
                "prompt": prompt,
                "guidance_scale": gs,
                "seed": seed,
                "width": width,
                "height": height,
                "steps": steps,
                "negative_prompt": negative,
            },
        }

    @app.post("/v1/rewrite")
    async def rewrite(request: Request):
        if models.rewriter is None:
            return _error(503, "backend-rejection", "rewriter role disabled")
        body = await request.json()
        text = body.get("prompt")
        if not text or not isinstance(text, str) or not text.endswith("# Answer:"):
            return _error(400, "malformed-request",
                          "rewrite prompt must end with '# Answer:'")
        try:
            max_tokens = int(body.get("max_tokens", 512))
            temperature = float(body.get("temperature", 0.7))
        except (TypeError, ValueError):
            return _error(400, "malformed-request", "bad max_tokens/temperature")
        with locks["rewriter"]:
            try:
                completion = models.rewriter.rewrite(text, max_tokens, temperature)
            except Exception as exc:
                return _error(500, "backend-error", f"rewrite failed: {exc}")
        return {"text": completion}

    return app


def serve(config: AdapterConfig, models: ModelSet | None = None) -> None:
    """Load models and run the server; a model-load failure exits non-zero."""
    import sys

    import uvicorn

    from .models import ModelLoadError, load_models

    if models is None:
        try:
            models = load_models(config)
        except ModelLoadError as exc:
            print(f"fatal: {exc}", file=sys.stderr)
            raise SystemExit(1)
    uvicorn.run(build_app(models, config), host=config.host, port=config.port)
