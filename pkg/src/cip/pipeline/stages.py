"""Stage primitives shared by the file-based runner and in-memory experiments.

Each primitive derives its randomness from the run's global seed plus
structural coordinates, so a stage recomputed in isolation (or resumed
after an interruption) reproduces the same bytes as an uninterrupted run.
"""

from __future__ import annotations

import base64
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from random import Random

import numpy as np

from ..backends import (
    GenerationConfig,
    HttpTransport,
    RecordingTransport,
    ReplayStore,
    ReplayTransport,
    caption_sample,
    generate_sample,
    rewrite_caption,
)
from ..backends.stub import decode_vector_payload
from ..dataman import (
    Manifest,
    Record,
    decode_vector_ref,
    encode_vector_ref,
    is_vector_ref,
)
from ..errors import ConfigError, InvariantError
from ..promptkit import (
    PromptSet,
    build_prompt_set,
    postprocess_llm_output,
    rewrite_request,
    select_candidate,
)
from ..seeding import derive_record_seed, derive_seed
from ..synthworld import (
    GuidanceKnob,
    WorldSpec,
    caption_manifest,
    sample_real,
    synth_generate,
)
from .config import (
    MODE_ZERO_SHOT,
    PROVENANCE_BY_STRATEGY,
    ZERO_SHOT_PRELIM_GUIDANCE,
    PipelineConfig,
)

PRELIM_PROVENANCE = PROVENANCE_BY_STRATEGY["basic"]


# ---------------------------------------------------------------------------
# transports

def build_transports(config: PipelineConfig) -> dict:
    """Per-role transports for backend-driven modes (None in world mode)."""
    if config.replay:
        store = ReplayStore(config.replay)
        transport = ReplayTransport(store)
        return {"caption": transport, "generate": transport, "rewrite": transport,
                "backend_id": store.backend_id or "replay"}
    transports: dict = {"backend_id": None}
    record_store = None
    if config.record_replay:
        record_store = ReplayStore(config.record_replay, create=True)
    for kind in ("caption", "generate", "rewrite"):
        ep = config.backends.get(kind)
        if ep is None:
            transports[kind] = None
            continue
        t = HttpTransport(ep)
        if record_store is not None:
            t = RecordingTransport(t, record_store)
        transports[kind] = t
        transports["backend_id"] = transports["backend_id"] or ep.base_url
    if record_store is not None:
        record_store.set_backend_id(transports["backend_id"])
    return transports


def _require(transport, kind: str):
    if transport is None:
        raise ConfigError(f"no {kind} backend configured (endpoint or replay needed)")
    return transport


# ---------------------------------------------------------------------------
# real / preliminary stages

def make_real(config: PipelineConfig, world: WorldSpec | None) -> Manifest:
    """The input dataset: a snapshot of the provided manifest, a fresh
    world sample, or (zero-shot with no input) an empty class-map carrier."""
    from ..dataman import ClassMap, load_manifest

    if config.input_manifest:
        return load_manifest(config.input_manifest)
    if world is not None:
        if config.effective_strategy == MODE_ZERO_SHOT:
            return Manifest(world.class_map(), [],
                            global_seed=config.global_seed)
        m = config.per_class * world.k
        return sample_real(world, m, derive_seed(config.global_seed, "real-sample"))
    if config.classes:
        return Manifest(ClassMap.from_names(list(config.classes)), [],
                        global_seed=config.global_seed)
    raise ConfigError("no input manifest, world, or class list configured")


def prelim_prompt_slots(class_map, per_class: int) -> list[tuple[int, str]]:
    """(label, prompt text) per preliminary record, class-major order."""
    from ..promptkit import basic_prompt

    slots = []
    for entry in class_map.entries:
        text = basic_prompt(entry.class_name)
        slots.extend((entry.class_id, text) for _ in range(per_class))
    return slots


def make_preliminary_record(
    world: WorldSpec | None,
    transports: dict | None,
    generation: GenerationConfig,
    label: int,
    text: str,
    j: int,
    replica: int,
    global_seed: int,
    payload_dir: Path | None,
) -> Record:
    """One preliminary zero-shot record, generated from a basic prompt at
    the fixed preliminary guidance scale."""
    from ..promptkit import Prompt

    seed = derive_record_seed(global_seed, PRELIM_PROVENANCE, j, replica)
    prelim_gen = replace(generation, guidance_scale=ZERO_SHOT_PRELIM_GUIDANCE)
    if world is not None:
        rng = np.random.default_rng(seed)
        x = synth_generate(world, Prompt(text, label, "basic"),
                           GuidanceKnob(ZERO_SHOT_PRELIM_GUIDANCE), rng)
        ref = encode_vector_ref(x)
        backend_id = None
    else:
        transport = _require(transports.get("generate"), "generate")
        payload, _ = generate_sample(transport, text, prelim_gen, seed)
        ref = _store_payload(payload, payload_dir, f"prelim-{j:06d}")
        backend_id = transports.get("backend_id")
    return Record(j, ref, label, caption=None, prompt=text, seed=seed,
                  provenance=PRELIM_PROVENANCE, backend_id=backend_id)


# ---------------------------------------------------------------------------
# captioning

def make_captions(
    manifest: Manifest,
    world: WorldSpec | None,
    transports: dict | None,
    quality: str,
    max_inflight: int = 4,
) -> Manifest:
    """Attach captions to records that lack them."""
    if world is not None:
        return caption_manifest(world, manifest, quality)
    transport = _require(transports.get("caption"), "caption")
    todo = [r for r in manifest.records if not r.caption]
    if not todo:
        return manifest
    with ThreadPoolExecutor(max_workers=max_inflight) as pool:
        captions = list(pool.map(lambda r: caption_sample(transport, r.sample_ref),
                                 todo))
    by_index = {r.index: c for r, c in zip(todo, captions)}
    return manifest.map_records(
        lambda r: replace(r, caption=by_index.get(r.index, r.caption))
    )


# ---------------------------------------------------------------------------
# LLM rewriting

def toy_rewrite(mode: str, caption: str) -> str:
    """The in-process rewriter used in world mode (mirrors the stub server)."""
    if mode == "destroy" or not caption:
        return "\n1. a thing in a place\n2. an object somewhere"
    return f"\n1. {caption}\n2. {caption}"


def make_rewrites(
    manifest: Manifest,
    world_rewriter: str | None,
    transports: dict | None,
    global_seed: int,
    max_inflight: int = 4,
) -> Manifest:
    """Rewrite each caption, post-process, and select one candidate per record."""
    records = manifest.records
    missing = [r.index for r in records if not r.caption]
    if missing:
        from ..errors import MissingCaptionError

        raise MissingCaptionError(missing)

    def completion_for(rec: Record) -> str:
        name = manifest.class_map.name_of(rec.label)
        request = rewrite_request(name, rec.caption)
        if world_rewriter is not None:
            return request + toy_rewrite(world_rewriter, rec.caption)
        transport = _require(transports.get("rewrite"), "rewrite")
        return request + rewrite_caption(transport, request)

    if world_rewriter is not None:
        texts = [completion_for(r) for r in records]
    else:
        with ThreadPoolExecutor(max_workers=max_inflight) as pool:
            texts = list(pool.map(completion_for, records))

    new_records = []
    for rec, text in zip(records, texts):
        candidates = postprocess_llm_output(text)
        rng = Random(derive_seed(global_seed, "rewrite-select", rec.index))
        chosen = select_candidate(candidates, rng)
        new_records.append(replace(rec, caption=chosen))
    return manifest.with_records(new_records)


# ---------------------------------------------------------------------------
# prompt construction

def template_for_strategy(strategy: str) -> str:
    if strategy == "basic":
        return "basic"
    if strategy == "cip-llm":
        return "llm"
    return "cip"


def make_prompts(manifest: Manifest, strategy: str) -> PromptSet:
    return build_prompt_set(manifest, template_for_strategy(strategy))


# ---------------------------------------------------------------------------
# synthetic generation

def _store_payload(payload: bytes, payload_dir: Path | None, stem: str) -> str:
    if payload_dir is None:
        # in-memory runs keep vector payloads inline
        return encode_vector_ref(decode_vector_payload(payload))
    payload_dir.mkdir(parents=True, exist_ok=True)
    fname = stem + ".bin"
    tmp = payload_dir / (fname + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, payload_dir / fname)
    return f"{payload_dir.name}/{fname}"


def make_synthetic_record(
    world: WorldSpec | None,
    transports: dict | None,
    generation: GenerationConfig,
    prompt,
    caption: str | None,
    j: int,
    replica: int,
    global_seed: int,
    provenance: str,
    payload_dir: Path | None,
) -> Record:
    """One synthetic record for prompt slot j (replica r of its prompt)."""
    seed = derive_record_seed(global_seed, provenance, j, replica)
    if world is not None:
        rng = np.random.default_rng(seed)
        x = synth_generate(world, prompt, GuidanceKnob(generation.guidance_scale), rng)
        ref = encode_vector_ref(x)
        backend_id = None
    else:
        transport = _require(transports.get("generate"), "generate")
        payload, _ = generate_sample(transport, prompt.text, generation, seed)
        ref = _store_payload(payload, payload_dir, f"{j:06d}")
        backend_id = transports.get("backend_id")
    return Record(j, ref, prompt.label, caption=caption, prompt=prompt.text,
                  seed=seed, provenance=provenance, backend_id=backend_id)


def caption_by_source(prompts: PromptSet, source: Manifest) -> dict[int, str | None]:
    """Caption carried onto each synthetic record, keyed by prompt position."""
    captions: dict[int, str | None] = {}
    by_index = {r.index: r.caption for r in source.records}
    for pos, p in enumerate(prompts.prompts):
        captions[pos] = by_index.get(p.source_index) if p.source_index is not None else None
    return captions


# ---------------------------------------------------------------------------
# feature extraction for training/eval

def manifest_features(manifest: Manifest, base_dir: str | Path | None = None
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix and labels from a manifest of vector-backed records."""
    if manifest.m == 0:
        raise InvariantError("manifest has no records to featurize")
    xs = []
    for rec in manifest.records:
        if is_vector_ref(rec.sample_ref):
            xs.append(decode_vector_ref(rec.sample_ref))
        else:
            if base_dir is None:
                raise InvariantError(
                    f"record {rec.index} references a payload file but no base dir given"
                )
            payload = (Path(base_dir) / rec.sample_ref).read_bytes()
            try:
                xs.append(decode_vector_payload(payload))
            except (ValueError, KeyError, json.JSONDecodeError) as exc:
                raise InvariantError(
                    f"record {rec.index} payload is not a feature vector "
                    "(image payloads cannot train at desk scale)"
                ) from exc
    X = np.stack(xs)
    y = np.array([r.label for r in manifest.records])
    return X, y


def payload_vector_b64(x: np.ndarray) -> str:
    from ..backends.protocol import canonical_json_bytes

    return base64.b64encode(
        canonical_json_bytes({"v": [float(v) for v in x]})
    ).decode("ascii")
