"""Backend transports and the three client operations.

A transport is anything with ``post(kind, body) -> dict``. Three are
provided: HTTP (with bounded, jittered retry), replay (offline,
digest-addressed), and recording (forwards and captures into a store).
"""

from __future__ import annotations

import base64
import os
import random
import time

import httpx

from ..errors import (
    BackendRejection,
    EmptyCaptionError,
    MalformedRequestError,
    TransportError,
)
from .protocol import (
    ROUTES,
    BackendEndpoint,
    GenerationConfig,
    RewriteParams,
    caption_body,
    generate_body,
    request_digest_for,
    rewrite_body,
)
from .replay import ReplayStore


class HttpTransport:
    """POSTs protocol requests with at most max_retries+1 attempts.

    5xx responses and connection errors are retried with jittered
    exponential backoff; each wait is capped by the endpoint timeout.
    4xx responses raise BackendRejection immediately.
    """

    def __init__(self, endpoint: BackendEndpoint, backoff_base: float = 0.2,
                 client: httpx.Client | None = None):
        self.endpoint = endpoint
        self.backoff_base = backoff_base
        headers = {}
        token = endpoint.auth_token
        if token is None and endpoint.auth_env:
            token = os.environ.get(endpoint.auth_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = client or httpx.Client(
            base_url=endpoint.base_url, timeout=endpoint.timeout, headers=headers
        )

    def post(self, kind: str, body: dict) -> dict:
        route = ROUTES[kind]
        attempts = self.endpoint.max_retries + 1
        last_error = "no attempt made"
        for attempt in range(attempts):
            try:
                resp = self._client.post(route, json=body)
            except httpx.HTTPError as exc:
                last_error = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code < 300:
                    return resp.json()
                if 400 <= resp.status_code < 500:
                    raise BackendRejection(resp.status_code, resp.text[:500])
                last_error = f"HTTP {resp.status_code}: {resp.text[:200]}"
            if attempt < attempts - 1 and self.backoff_base > 0:
                wait = self.backoff_base * (2 ** attempt) * (1 + 0.25 * random.random())
                time.sleep(min(wait, self.endpoint.timeout))
        raise TransportError(
            f"{kind} request failed after {attempts} attempts: {last_error}"
        )


class ReplayTransport:
    """Serves stored responses; any unknown request is a replay miss."""

    def __init__(self, store: ReplayStore):
        self.store = store

    def post(self, kind: str, body: dict) -> dict:
        return self.store.get(request_digest_for(kind, body))


class RecordingTransport:
    """Forwards to an inner transport and captures responses for replay."""

    def __init__(self, inner, store: ReplayStore):
        self.inner = inner
        self.store = store

    def post(self, kind: str, body: dict) -> dict:
        response = self.inner.post(kind, body)
        self.store.put_request(kind, body, response)
        return response


class AsgiTransport:
    """In-process transport against a FastAPI app (tests, local stubs)."""

    def __init__(self, app):
        from .._asgi import in_process_client

        self._client = in_process_client(app, "http://stub.local")

    def post(self, kind: str, body: dict) -> dict:
        resp = self._client.post(ROUTES[kind], json=body)
        if resp.status_code >= 500:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code >= 400:
            raise BackendRejection(resp.status_code, resp.text[:500])
        return resp.json()


def caption_sample(transport, sample_ref: str) -> str:
    """Caption one sample; returns the trimmed caption text."""
    response = transport.post("caption", caption_body(sample_ref=sample_ref))
    caption = str(response.get("caption", "")).strip()
    if not caption:
        raise EmptyCaptionError(f"backend returned an empty caption for {sample_ref!r}")
    return caption


def generate_sample(transport, prompt: str, config: GenerationConfig,
                    seed: int) -> tuple[bytes, dict]:
    """Generate one sample; returns (payload bytes, echoed metadata)."""
    body = generate_body(prompt, config, seed)
    response = transport.post("generate", body)
    payload = base64.b64decode(response["image_b64"])
    return payload, response.get("meta", {})


def rewrite_caption(transport, request_text: str,
                    params: RewriteParams | None = None) -> str:
    """Send a rewrite instruction; returns the raw completion text."""
    if not request_text.endswith("# Answer:"):
        raise MalformedRequestError("rewrite request must end with '# Answer:'")
    params = params or RewriteParams()
    response = transport.post("rewrite", rewrite_body(request_text, params))
    return str(response["text"])
