from __future__ import annotations

import socket
import threading
import time
from pathlib import Path

import pytest
import uvicorn

from cip.backends import ReplayStore
from cip.backends.stub import make_stub_app
from cip.dataman import ClassMap, Manifest, Record

FIXTURES = Path(__file__).parent / "fixtures"


def load_caption_fixture(name: str) -> dict[str, list[str]]:
    """Parse a caption fixture file: '# class: <name> (<synset>)' headers,
    one caption per line."""
    captions: dict[str, list[str]] = {}
    current = None
    for line in (FIXTURES / name).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        if line.startswith("# class:"):
            current = line[len("# class:"):].split("(")[0].strip()
            captions[current] = []
        elif line.startswith("#"):
            continue
        else:
            captions[current].append(line)
    return captions


@pytest.fixture(scope="session")
def blip2_captions() -> dict[str, list[str]]:
    return load_caption_fixture("captions_blip2.txt")


@pytest.fixture()
def tench_manifest(blip2_captions) -> Manifest:
    """Five tench records whose refs resolve to the published captions."""
    class_map = ClassMap.from_names(["tench"], ["n01440764"])
    records = [
        Record(i, f"imagenette/tench/{i}.jpg", 0)
        for i in range(len(blip2_captions["tench"]))
    ]
    return Manifest(class_map, records, global_seed=1)


@pytest.fixture()
def tench_replay(tmp_path, blip2_captions) -> ReplayStore:
    """Replay store holding the tench caption fixtures."""
    store = ReplayStore(tmp_path / "replay", create=True)
    for i, caption in enumerate(blip2_captions["tench"]):
        store.put_request("caption", {"image_ref": f"imagenette/tench/{i}.jpg"},
                          {"caption": caption})
    return store


class LiveServer:
    def __init__(self, app):
        sock = socket.socket()
        sock.bind(("127.0.0.1", 0))
        self.port = sock.getsockname()[1]
        sock.close()
        self.base_url = f"http://127.0.0.1:{self.port}"
        config = uvicorn.Config(app, host="127.0.0.1", port=self.port,
                                log_level="error")
        self._server = uvicorn.Server(config)
        self._thread = threading.Thread(target=self._server.run, daemon=True)

    def __enter__(self):
        self._thread.start()
        for _ in range(100):
            if self._server.started:
                return self
            time.sleep(0.05)
        raise RuntimeError("stub server did not start")

    def __exit__(self, *exc):
        self._server.should_exit = True
        self._thread.join(timeout=5)


@pytest.fixture()
def live_stub():
    """Context-manager factory for a live stub server on a free port."""
    def factory(**kwargs):
        return LiveServer(make_stub_app(**kwargs))

    return factory
