"""Dataset manifests: class maps, records, and atomic resumable JSONL persistence.

Manifest file format (UTF-8, LF):
  line 1: header object  {"format_version": int, "global_seed": int,
                          "classes": [{"id": int, "name": str, "synset": str|null}, ...]}
  line 2+: one record per line, fixed key order
           {"index", "ref", "label", "caption", "prompt", "seed", "provenance", "backend"}

Serialization is byte-deterministic: fixed key order, compact separators,
no trailing whitespace. Appends write whole lines and fsync, so a crash
mid-generation leaves a loadable prefix.
"""

from __future__ import annotations

import io
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import InvariantError, ManifestParseError

FORMAT_VERSION = 1

PROVENANCE_REAL = "real"
PROVENANCES = (
    PROVENANCE_REAL,
    "synthetic-basic",
    "synthetic-cip",
    "synthetic-zeroshot",
    "synthetic-llm",
)


@dataclass(frozen=True)
class ClassEntry:
    class_id: int
    class_name: str
    synset_id: str | None = None


@dataclass(frozen=True)
class ClassMap:
    entries: tuple[ClassEntry, ...]

    def __post_init__(self):
        if len(self.entries) < 1:
            raise InvariantError("class map must have at least one class")
        names = set()
        for i, e in enumerate(self.entries):
            if e.class_id != i:
                raise InvariantError(
                    f"class ids must be contiguous from 0; entry {i} has id {e.class_id}"
                )
            if not e.class_name:
                raise InvariantError(f"class {i} has an empty name")
            if e.class_name in names:
                raise InvariantError(f"duplicate class name {e.class_name!r}")
            names.add(e.class_name)

    @classmethod
    def from_names(cls, names: list[str], synsets: list[str] | None = None) -> "ClassMap":
        syn = synsets or [None] * len(names)
        return cls(tuple(ClassEntry(i, n, s) for i, (n, s) in enumerate(zip(names, syn))))

    @property
    def k(self) -> int:
        return len(self.entries)

    def name_of(self, class_id: int) -> str:
        return self.entries[class_id].class_name


@dataclass(frozen=True)
class Record:
    index: int
    sample_ref: str
    label: int
    caption: str | None = None
    prompt: str | None = None
    seed: int | None = None
    provenance: str = PROVENANCE_REAL
    backend_id: str | None = None


@dataclass
class Manifest:
    class_map: ClassMap
    records: list[Record] = field(default_factory=list)
    global_seed: int = 0
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        validate_records(self.class_map, self.records)

    @property
    def m(self) -> int:
        return len(self.records)

    def with_records(self, records: list[Record]) -> "Manifest":
        return Manifest(self.class_map, records, self.global_seed, self.format_version)

    def map_records(self, fn) -> "Manifest":
        return self.with_records([fn(r) for r in self.records])


def validate_records(class_map: ClassMap, records: list[Record]) -> None:
    k = class_map.k
    for i, rec in enumerate(records):
        if rec.index != i:
            raise InvariantError(
                f"record indices must be contiguous from 0; position {i} has index {rec.index}"
            )
        if not 0 <= rec.label < k:
            raise InvariantError(f"record {i}: label {rec.label} outside 0..{k - 1}")
        if rec.provenance not in PROVENANCES:
            raise InvariantError(f"record {i}: unknown provenance {rec.provenance!r}")
        if rec.provenance != PROVENANCE_REAL:
            if rec.prompt is None or rec.seed is None:
                raise InvariantError(
                    f"record {i}: synthetic records need prompt and seed"
                )


# ---------------------------------------------------------------------------
# inline feature vectors (synthworld payloads, d <= 16)

VEC_PREFIX = "vec:"
_MAX_INLINE_DIM = 16


def encode_vector_ref(x: np.ndarray) -> str:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size > _MAX_INLINE_DIM:
        raise InvariantError(f"inline vectors must be 1-d with at most {_MAX_INLINE_DIM} entries")
    return VEC_PREFIX + ",".join(repr(float(v)) for v in x)


def decode_vector_ref(ref: str) -> np.ndarray:
    if not ref.startswith(VEC_PREFIX):
        raise InvariantError(f"not an inline vector ref: {ref[:32]!r}")
    body = ref[len(VEC_PREFIX):]
    return np.array([float(tok) for tok in body.split(",")], dtype=float)


def is_vector_ref(ref: str) -> bool:
    return ref.startswith(VEC_PREFIX)


# ---------------------------------------------------------------------------
# serialization

def _header_line(manifest: Manifest) -> str:
    classes = [
        {"id": e.class_id, "name": e.class_name, "synset": e.synset_id}
        for e in manifest.class_map.entries
    ]
    header = {
        "format_version": manifest.format_version,
        "global_seed": manifest.global_seed,
        "classes": classes,
    }
    return json.dumps(header, ensure_ascii=False, separators=(",", ":"))


def record_line(rec: Record) -> str:
    obj = {
        "index": rec.index,
        "ref": rec.sample_ref,
        "label": rec.label,
        "caption": rec.caption,
        "prompt": rec.prompt,
        "seed": rec.seed,
        "provenance": rec.provenance,
        "backend": rec.backend_id,
    }
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def dumps_manifest(manifest: Manifest) -> str:
    buf = io.StringIO()
    buf.write(_header_line(manifest))
    buf.write("\n")
    for rec in manifest.records:
        buf.write(record_line(rec))
        buf.write("\n")
    return buf.getvalue()


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    """Write the manifest atomically; identical manifests produce identical bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    data = dumps_manifest(manifest).encode("utf-8")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def _parse_header(line: str, lineno: int) -> tuple[ClassMap, int, int]:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ManifestParseError(f"bad header JSON: {exc.msg}", lineno) from exc
    if not isinstance(obj, dict) or "classes" not in obj:
        raise ManifestParseError("header must be an object with a 'classes' key", lineno)
    try:
        entries = tuple(
            ClassEntry(int(c["id"]), str(c["name"]), c.get("synset"))
            for c in obj["classes"]
        )
        class_map = ClassMap(entries)
        return class_map, int(obj["global_seed"]), int(obj["format_version"])
    except InvariantError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestParseError(f"bad header fields: {exc}", lineno) from exc


def parse_record(line: str, lineno: int | None = None) -> Record:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ManifestParseError(f"bad record JSON: {exc.msg}", lineno) from exc
    if not isinstance(obj, dict):
        raise ManifestParseError("record line must be a JSON object", lineno)
    try:
        return Record(
            index=int(obj["index"]),
            sample_ref=str(obj["ref"]),
            label=int(obj["label"]),
            caption=obj.get("caption"),
            prompt=obj.get("prompt"),
            seed=obj.get("seed"),
            provenance=str(obj.get("provenance", PROVENANCE_REAL)),
            backend_id=obj.get("backend"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestParseError(f"bad record fields: {exc}", lineno) from exc


def load_manifest(path: str | Path) -> Manifest:
    """Load and validate a manifest; any malformed input raises a typed error."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.strip():
            raise ManifestParseError("missing header line", 1)
        class_map, global_seed, version = _parse_header(header, 1)
        records = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            records.append(parse_record(line, lineno))
    return Manifest(class_map, records, global_seed, version)


def append_records(path: str | Path, records: list[Record]) -> None:
    """Append records to an existing manifest file, one fsynced line each.

    Records must extend the file's current max index contiguously.
    """
    if not records:
        return
    existing = load_manifest(path)
    next_index = existing.m
    for rec in records:
        if rec.index != next_index:
            raise InvariantError(
                f"append must continue at index {next_index}, got {rec.index}"
            )
        next_index += 1
    validate_records(existing.class_map, existing.records + list(records))
    with open(path, "a", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(record_line(rec))
            fh.write("\n")
            fh.flush()
            os.fsync(fh.fileno())


def strip_to_real(manifest: Manifest) -> Manifest:
    """Drop captions/prompts, keeping only the raw real samples."""
    return manifest.map_records(
        lambda r: replace(r, caption=None, prompt=None)
    )
