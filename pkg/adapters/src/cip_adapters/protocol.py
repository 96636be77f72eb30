"""Wire-protocol constants and the content-addressing recipe.

This mirrors the documented external interface of the core toolkit (the
adapters deliberately do not import it): canonical request bytes are the
UTF-8 encoding of {"kind": <kind>, "body": <body>} serialized with sorted
keys and compact separators; the digest is the SHA-256 hex of those
bytes. A replay store is a directory of digest-named response files plus
an index.json.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

ROUTES = {
    "caption": "/v1/caption",
    "generate": "/v1/generate",
    "rewrite": "/v1/rewrite",
}


def canonical_json_bytes(obj) -> bytes:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True,
                      separators=(",", ":")).encode("utf-8")


def request_digest(kind: str, body: dict) -> str:
    return hashlib.sha256(
        canonical_json_bytes({"kind": kind, "body": body})
    ).hexdigest()


class ReplayStoreWriter:
    """Writes the replay-store directory format consumed by the toolkit."""

    def __init__(self, root: str | Path, backend_id: str | None = None):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.backend_id = backend_id
        self.entries: dict[str, dict] = {}
        index = self.root / "index.json"
        if index.exists():
            existing = json.loads(index.read_text(encoding="utf-8"))
            self.entries = existing.get("entries", {})
            self.backend_id = backend_id or existing.get("backend_id")
        self._write_index()

    def _write_index(self) -> None:
        index = {"format_version": 1, "backend_id": self.backend_id,
                 "entries": self.entries}
        tmp = self.root / "index.json.tmp"
        tmp.write_text(json.dumps(index, ensure_ascii=False, sort_keys=True,
                                  indent=1) + "\n", encoding="utf-8")
        os.replace(tmp, self.root / "index.json")

    def put(self, kind: str, body: dict, response: dict) -> str:
        digest = request_digest(kind, body)
        fname = digest + ".json"
        tmp = self.root / (fname + ".tmp")
        tmp.write_text(json.dumps(response, ensure_ascii=False, sort_keys=True,
                                  indent=1) + "\n", encoding="utf-8")
        os.replace(tmp, self.root / fname)
        self.entries[digest] = {"kind": kind, "file": fname}
        self._write_index()
        return digest
