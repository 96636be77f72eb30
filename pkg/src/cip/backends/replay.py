"""Content-addressed replay store for backend responses.

Directory layout:
  <dir>/index.json          {"format_version": 1, "entries": {digest: {"kind", "file"}}}
  <dir>/<digest>.json       stored response body

Reads are lock-free; writes assume a single writer. Fixtures are plain
JSON files named by their request digest, so stores are inspectable and
versionable.
"""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path

from ..errors import InvariantError, ReplayMissError
from .protocol import request_digest_for

INDEX_NAME = "index.json"


class ReplayStore:
    """Reads are lock-free; writes serialize behind an internal lock (one
    process owns a store at a time, but it may record from several
    request threads)."""

    def __init__(self, root: str | Path, create: bool = False):
        self.root = Path(root)
        self._write_lock = threading.Lock()
        index_path = self.root / INDEX_NAME
        if index_path.exists():
            with open(index_path, "r", encoding="utf-8") as fh:
                index = json.load(fh)
            if index.get("format_version") != 1:
                raise InvariantError(f"unsupported replay index version in {index_path}")
            self._entries: dict[str, dict] = index["entries"]
            self.backend_id: str | None = index.get("backend_id")
        elif create:
            self.root.mkdir(parents=True, exist_ok=True)
            self._entries = {}
            self.backend_id = None
            self._write_index()
        else:
            raise InvariantError(f"no replay index at {index_path}")

    def set_backend_id(self, backend_id: str | None) -> None:
        """Record which backend produced the stored responses, so replayed
        manifests are byte-identical to the recorded run."""
        if backend_id != self.backend_id:
            self.backend_id = backend_id
            with self._write_lock:
                self._write_index()

    def _write_index(self) -> None:
        index = {"format_version": 1, "backend_id": self.backend_id,
                 "entries": self._entries}
        tmp = self.root / (INDEX_NAME + ".tmp")
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(index, fh, ensure_ascii=False, sort_keys=True, indent=1)
            fh.write("\n")
        os.replace(tmp, self.root / INDEX_NAME)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, digest: str) -> bool:
        return digest in self._entries

    def get(self, digest: str) -> dict:
        if digest not in self._entries:
            raise ReplayMissError(f"no stored response for digest {digest}")
        with open(self.root / self._entries[digest]["file"], "r", encoding="utf-8") as fh:
            return json.load(fh)

    def put(self, digest: str, kind: str, response: dict) -> None:
        with self._write_lock:
            fname = digest + ".json"
            tmp = self.root / (fname + ".tmp")
            with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
                json.dump(response, fh, ensure_ascii=False, sort_keys=True, indent=1)
                fh.write("\n")
            os.replace(tmp, self.root / fname)
            self._entries[digest] = {"kind": kind, "file": fname}
            self._write_index()

    def put_request(self, kind: str, body: dict, response: dict) -> str:
        digest = request_digest_for(kind, body)
        self.put(digest, kind, response)
        return digest
