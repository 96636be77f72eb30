from __future__ import annotations

import io
import json

from cip_adapters.protocol import request_digest
from cip_adapters.record import record_replay

from conftest import client_for


def write_requests(path, rows):
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n",
                    encoding="utf-8")


class TestRecordReplay:
    def test_empty_request_file(self, tmp_path, fake_app):
        req = tmp_path / "requests.jsonl"
        req.write_text("")
        log = io.StringIO()
        store = record_replay("http://adapter.local", req, tmp_path / "store",
                              client=client_for(fake_app), log=log)
        index = json.loads((store.root / "index.json").read_text())
        assert index["entries"] == {}
        assert index["format_version"] == 1

    def test_n_requests_n_fixtures(self, tmp_path, fake_app):
        gen = {"prompt": "A photo of x", "guidance_scale": 2.0, "seed": 1,
               "width": 8, "height": 8, "steps": 1, "negative_prompt": None}
        rows = [
            {"kind": "generate", "body": gen},
            {"kind": "generate", "body": dict(gen, seed=2)},
            {"kind": "rewrite", "body": {
                "prompt": "x\n# Caption:\nc\n# Answer:", "max_tokens": 512,
                "temperature": 0.7}},
        ]
        req = tmp_path / "requests.jsonl"
        write_requests(req, rows)
        log = io.StringIO()
        store = record_replay("http://adapter.local", req, tmp_path / "store",
                              client=client_for(fake_app), log=log)
        index = json.loads((store.root / "index.json").read_text())
        assert len(index["entries"]) == 3
        for row in rows:
            digest = request_digest(row["kind"], row["body"])
            assert digest in index["entries"]
            assert (store.root / f"{digest}.json").exists()

    def test_rerecording_seeded_generator_identical_digests(self, tmp_path,
                                                            fake_app):
        gen = {"prompt": "A photo of x", "guidance_scale": 1.5, "seed": 9,
               "width": 8, "height": 8, "steps": 1, "negative_prompt": None}
        req = tmp_path / "requests.jsonl"
        write_requests(req, [{"kind": "generate", "body": gen}])
        log = io.StringIO()
        a = record_replay("http://adapter.local", req, tmp_path / "a",
                          client=client_for(fake_app), log=log)
        b = record_replay("http://adapter.local", req, tmp_path / "b",
                          client=client_for(fake_app), log=log)
        digest = request_digest("generate", gen)
        assert (a.root / f"{digest}.json").read_bytes() == \
            (b.root / f"{digest}.json").read_bytes()

    def test_failures_logged_partial_store_valid(self, tmp_path, fake_app):
        rows = [
            {"kind": "caption", "body": {}},  # rejected: no image source
            {"kind": "rewrite", "body": {
                "prompt": "x\n# Caption:\nc\n# Answer:", "max_tokens": 512,
                "temperature": 0.7}},
        ]
        req = tmp_path / "requests.jsonl"
        write_requests(req, rows)
        log = io.StringIO()
        store = record_replay("http://adapter.local", req, tmp_path / "store",
                              client=client_for(fake_app), log=log)
        index = json.loads((store.root / "index.json").read_text())
        assert len(index["entries"]) == 1
        assert "rejected" in log.getvalue()
