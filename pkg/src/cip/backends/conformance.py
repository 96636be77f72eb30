"""Protocol conformance checks, runnable against any backend server.

Each check exercises one contract of the wire protocol. The suite takes a
transport-like ``post`` plus an optional raw poster for the checks that
need to observe HTTP status codes, so it runs unmodified against the
in-process stub, a replay store, or a live adapter over HTTP.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass

import httpx

from .protocol import (
    DEFAULT_MAX_TOKENS,
    DEFAULT_TEMPERATURE,
    canonical_json_bytes,
)


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


# a 2x2 PNG: captioning checks must be self-contained, since only the
# server knows which image_refs it can resolve
_SAMPLE_PNG_B64 = (
    "iVBORw0KGgoAAAANSUhEUgAAAAIAAAACCAIAAAD91JpzAAAAFklEQVR4nGOsCNBgYGBgYm"
    "BgYGBgAAALugD0A6C97wAAAABJRU5ErkJggg=="
)


class HttpConformanceTarget:
    """Raw access to a protocol server for conformance runs."""

    def __init__(self, base_url: str | None = None, app=None, timeout: float = 30.0):
        if app is not None:
            from .._asgi import in_process_client

            self._client = in_process_client(app, "http://conformance.local")
        else:
            self._client = httpx.Client(base_url=base_url, timeout=timeout)

    def post(self, route: str, body: dict) -> tuple[int, dict]:
        resp = self._client.post(route, json=body)
        try:
            payload = resp.json()
        except json.JSONDecodeError:
            payload = {}
        return resp.status_code, payload

    def get(self, route: str) -> tuple[int, dict]:
        resp = self._client.get(route)
        try:
            payload = resp.json()
        except json.JSONDecodeError:
            payload = {}
        return resp.status_code, payload


def run_conformance(target: HttpConformanceTarget) -> list[CheckResult]:
    results: list[CheckResult] = []

    def check(name: str, ok: bool, detail: str = ""):
        results.append(CheckResult(name, bool(ok), detail))

    status, health = target.get("/healthz")
    check("healthz responds", status == 200, f"status {status}")
    check("healthz reports status/models/deterministic",
          isinstance(health.get("status"), str)
          and "models" in health and "deterministic" in health,
          json.dumps(health)[:200])
    deterministic = bool(health.get("deterministic", False))

    status, resp = target.post("/v1/caption", {"image_b64": _SAMPLE_PNG_B64})
    check("caption accepts image_b64", status == 200, f"status {status}")
    check("caption returns non-empty text",
          isinstance(resp.get("caption"), str) and resp["caption"].strip() != "",
          repr(resp.get("caption"))[:100])

    # servers choose which refs they can resolve: either outcome is fine,
    # but an unresolvable ref must be a clean client error, not a crash
    status, _ = target.post("/v1/caption", {"image_ref": "conformance/sample-0"})
    check("caption handles image_ref without crashing",
          status == 200 or 400 <= status < 500, f"status {status}")

    status, _ = target.post("/v1/caption", {})
    check("caption rejects empty body", status == 400, f"status {status}")

    gen_body = {
        "prompt": "A photo of conformance target",
        "guidance_scale": 1.5,
        "seed": 12345,
        "width": 64,
        "height": 64,
        "steps": 5,
        "negative_prompt": None,
    }
    status, resp = target.post("/v1/generate", gen_body)
    check("generate accepts canonical body", status == 200, f"status {status}")
    meta = resp.get("meta", {})
    check("generate echoes guidance_scale exactly",
          meta.get("guidance_scale") == 1.5, repr(meta.get("guidance_scale")))
    check("generate echoes prompt and seed",
          meta.get("prompt") == gen_body["prompt"] and meta.get("seed") == 12345,
          json.dumps({k: meta.get(k) for k in ("prompt", "seed")})[:200])
    payload_ok = False
    try:
        payload_ok = len(base64.b64decode(resp.get("image_b64", ""))) > 0
    except (ValueError, TypeError):
        pass
    check("generate payload is base64 bytes", payload_ok)

    if deterministic:
        _, again = target.post("/v1/generate", gen_body)
        check("generate is seed-deterministic",
              again.get("image_b64") == resp.get("image_b64"))

    status, _ = target.post("/v1/generate", {"prompt": ""})
    check("generate rejects empty prompt", status == 400, f"status {status}")

    rewrite_req = (
        "This is an image caption about conformance category. "
        "Can you unemotionally and succinctly rewrite it to 2 captions "
        "by containing the word of conformance in more diverse scenarios?\n"
        "# Caption:\na sample caption\n# Answer:"
    )
    status, resp = target.post("/v1/rewrite", {
        "prompt": rewrite_req,
        "max_tokens": DEFAULT_MAX_TOKENS,
        "temperature": DEFAULT_TEMPERATURE,
    })
    check("rewrite accepts default params", status == 200, f"status {status}")
    check("rewrite returns text", isinstance(resp.get("text"), str))

    status, _ = target.post("/v1/rewrite", {
        "prompt": "no marker here",
        "max_tokens": DEFAULT_MAX_TOKENS,
        "temperature": DEFAULT_TEMPERATURE,
    })
    check("rewrite rejects request without answer marker", status == 400,
          f"status {status}")

    # canonical serialize -> parse is the identity on every request form
    for body in ({"image_ref": "r"}, gen_body,
                 {"prompt": rewrite_req, "max_tokens": 512, "temperature": 0.7}):
        round_tripped = json.loads(canonical_json_bytes(body).decode("utf-8"))
        check("canonical JSON round-trip", round_tripped == body)

    return results


def conformance_failures(results: list[CheckResult]) -> list[CheckResult]:
    return [r for r in results if not r.ok]
