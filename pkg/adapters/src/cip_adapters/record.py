"""Record protocol responses into a replay-store directory.

The requests file is JSONL, one {"kind": ..., "body": {...}} per line.
Transport failures are logged per request and skipped; a partial store is
still a valid store.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import httpx

from .protocol import ROUTES, ReplayStoreWriter


def iter_requests(path: str | Path):
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8")
                                  .splitlines(), start=1):
        if not line.strip():
            continue
        obj = json.loads(line)
        kind, body = obj["kind"], obj["body"]
        if kind not in ROUTES:
            raise ValueError(f"line {lineno}: unknown request kind {kind!r}")
        yield kind, body


def record_replay(base_url: str, requests_file: str | Path,
                  out_dir: str | Path, timeout: float = 120.0,
                  client: httpx.Client | None = None,
                  log=sys.stderr) -> ReplayStoreWriter:
    """Execute every request against the server, storing each response
    under its request digest."""
    client = client or httpx.Client(base_url=base_url, timeout=timeout)
    store = ReplayStoreWriter(out_dir, backend_id=base_url)
    recorded = failed = 0
    for kind, body in iter_requests(requests_file):
        try:
            resp = client.post(ROUTES[kind], json=body)
        except httpx.HTTPError as exc:
            failed += 1
            print(f"record: transport failure on {kind}: {exc}", file=log)
            continue
        if resp.status_code >= 400:
            failed += 1
            print(f"record: {kind} rejected with {resp.status_code}: "
                  f"{resp.text[:200]}", file=log)
            continue
        store.put(kind, body, resp.json())
        recorded += 1
    print(f"record: stored {recorded} responses ({failed} failures) "
          f"in {store.root}", file=log)
    return store
