from __future__ import annotations

import asyncio

import httpx
import pytest

from cip_adapters.models import fake_models
from cip_adapters.server import build_app


class _InProcessTransport(httpx.BaseTransport):
    def __init__(self, app):
        self._app = app

    def handle_request(self, request):
        async def _send():
            transport = httpx.ASGITransport(app=self._app)
            response = await transport.handle_async_request(request)
            body = await response.aread()
            await response.aclose()
            return httpx.Response(status_code=response.status_code,
                                  headers=response.headers, content=body,
                                  request=request)

        return asyncio.run(_send())


def client_for(app) -> httpx.Client:
    return httpx.Client(transport=_InProcessTransport(app),
                        base_url="http://adapter.local")


@pytest.fixture()
def fake_app():
    return build_app(fake_models())


@pytest.fixture()
def client(fake_app):
    return client_for(fake_app)
