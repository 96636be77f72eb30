"""Synchronous in-process transport for ASGI apps.

Lets the CLI and tests call FastAPI apps through the normal httpx client
interface without a running server or an event loop of their own.
"""

from __future__ import annotations

import asyncio

import httpx


class InProcessTransport(httpx.BaseTransport):
    def __init__(self, app):
        self._app = app

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        async def _send() -> httpx.Response:
            transport = httpx.ASGITransport(app=self._app)
            response = await transport.handle_async_request(request)
            body = await response.aread()
            await response.aclose()
            return httpx.Response(
                status_code=response.status_code,
                headers=response.headers,
                content=body,
                request=request,
            )

        return asyncio.run(_send())


def in_process_client(app, base_url: str = "http://cip.local") -> httpx.Client:
    return httpx.Client(transport=InProcessTransport(app), base_url=base_url)
