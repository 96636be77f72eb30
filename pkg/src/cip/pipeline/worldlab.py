"""In-memory toy-world experiments: strategy comparisons and guidance curves.

These run the same logical stages as the file-based pipeline (identical
seed derivations, so a file run with the same world/seed produces the
same numbers) but keep all artifacts in memory, which keeps multi-seed
comparison suites fast.
"""

from __future__ import annotations

import numpy as np

from ..dataman import Manifest, Record
from ..promptkit import Prompt
from ..seeding import derive_record_seed, derive_seed
from ..synthworld import (
    GuidanceKnob,
    WorldSpec,
    caption_manifest,
    sample_real,
    synth_generate,
)
from ..trainer import TrainConfig, eval_on_world, train
from ..dataman import encode_vector_ref
from .config import (
    MODE_BASIC,
    MODE_CIP,
    MODE_LLM,
    MODE_ZERO_SHOT,
    PROVENANCE_BY_STRATEGY,
    ZERO_SHOT_PRELIM_GUIDANCE,
)
from .stages import make_rewrites, make_prompts, prelim_prompt_slots, PRELIM_PROVENANCE


def _prelim_manifest(world: WorldSpec, per_class: int, seed: int) -> Manifest:
    slots = prelim_prompt_slots(world.class_map(), per_class)
    knob = GuidanceKnob(ZERO_SHOT_PRELIM_GUIDANCE)
    records = []
    for j, (label, text) in enumerate(slots):
        rec_seed = derive_record_seed(seed, PRELIM_PROVENANCE, j, j % per_class)
        rng = np.random.default_rng(rec_seed)
        x = synth_generate(world, Prompt(text, label, "basic"), knob, rng)
        records.append(Record(j, encode_vector_ref(x), label, prompt=text,
                              seed=rec_seed, provenance=PRELIM_PROVENANCE))
    return Manifest(world.class_map(), records, global_seed=seed)


def world_prompts(world: WorldSpec, strategy: str, per_class: int, quality: str,
                  rewriter: str, seed: int):
    """Prompt set plus its source manifest for one strategy."""
    if strategy == MODE_ZERO_SHOT:
        prelim = _prelim_manifest(world, per_class, seed)
        source = caption_manifest(world, prelim, quality)
    else:
        real = sample_real(world, per_class * world.k,
                           derive_seed(seed, "real-sample"))
        if strategy == MODE_BASIC:
            source = real
        else:
            source = caption_manifest(world, real, quality)
            if strategy == MODE_LLM:
                source = make_rewrites(source, rewriter, None, seed)
    return make_prompts(source, strategy), source


def synthesize(world: WorldSpec, prompts, knob: GuidanceKnob, replicas: int,
               seed: int, provenance: str) -> tuple[np.ndarray, np.ndarray]:
    """Synthetic feature matrix and prompt-derived labels."""
    n = len(prompts) * replicas
    X = np.empty((n, world.d))
    y = np.empty(n, dtype=int)
    for j in range(n):
        pos, replica = j // replicas, j % replicas
        prompt = prompts.prompts[pos]
        rng = np.random.default_rng(
            derive_record_seed(seed, provenance, j, replica))
        X[j] = synth_generate(world, prompt, knob, rng)
        y[j] = prompt.label
    return X, y


def strategy_accuracy(
    world: WorldSpec,
    strategy: str,
    guidance: float,
    seed: int,
    per_class: int = 20,
    replicas: int = 1,
    quality: str = "fine",
    rewriter: str = "echo",
    train_config: TrainConfig | None = None,
    eval_n: int = 20_000,
    eval_labeler: str = "joint",
) -> float:
    """Accuracy on the real world of a model trained on one strategy's
    synthetic set."""
    cfg = train_config or TrainConfig()
    provenance = PROVENANCE_BY_STRATEGY[strategy]
    prompts, _ = world_prompts(world, strategy, per_class, quality, rewriter, seed)
    X, y = synthesize(world, prompts, GuidanceKnob(guidance), replicas, seed,
                      provenance)
    clf = train((X, y), cfg, derive_seed(seed, "train"), k=world.k)
    return eval_on_world(clf, world, eval_n, derive_seed(seed, "eval"),
                         labeler=eval_labeler).accuracy


def strategy_table(world: WorldSpec, strategies: list[str], seeds: list[int],
                   guidance: float = 1.5, **kwargs) -> dict[str, list[float]]:
    """Paired-seed accuracy lists per strategy (same seed, same world draw)."""
    return {
        s: [strategy_accuracy(world, s, guidance, seed, **kwargs) for seed in seeds]
        for s in strategies
    }


def quality_table(world: WorldSpec, qualities: list[str], seeds: list[int],
                  guidance: float = 1.5, **kwargs) -> dict[str, list[float]]:
    """Captioner-quality comparison; quality "none" degrades to basic prompts."""
    out: dict[str, list[float]] = {}
    for q in qualities:
        strategy = MODE_BASIC if q == "none" else MODE_CIP
        out[q] = [
            strategy_accuracy(world, strategy, guidance, seed, quality=q, **kwargs)
            for seed in seeds
        ]
    return out


def guidance_curve(world: WorldSpec, guidance_values: list[float], seed: int,
                   strategy: str = MODE_CIP, repeats: int = 1,
                   paired: bool = False, **kwargs) -> dict[float, float]:
    """Mean accuracy per guidance value (repeats average per cell).

    paired=True shares each repeat's random stream across all guidance
    values (common random numbers), so the curve isolates the knob's
    effect from prompt-draw and noise-draw variation.
    """
    curve = {}
    for g in guidance_values:
        accs = []
        for r in range(repeats):
            if paired:
                cell_seed = derive_seed(seed, "cell", strategy, r)
            else:
                cell_seed = derive_seed(seed, "cell", strategy, float(g), r)
            accs.append(strategy_accuracy(world, strategy, float(g), cell_seed,
                                          **kwargs))
        curve[float(g)] = float(np.mean(accs))
    return curve


def has_interior_max(curve: dict[float, float]) -> bool:
    values = [curve[g] for g in sorted(curve)]
    best = int(np.argmax(values))
    return 0 < best < len(values) - 1
