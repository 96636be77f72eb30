"""Pipeline configuration: one structured JSON file plus CLI overrides."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..backends.protocol import BackendEndpoint, GenerationConfig
from ..errors import ConfigError
from ..synthworld import QUALITIES, QUALITY_FINE, WorldSpec, load_world, world_from_dict
from ..trainer import TrainConfig

MODE_BASIC = "basic"
MODE_CIP = "cip"
MODE_ZERO_SHOT = "zero-shot-cip"
MODE_LLM = "cip-llm"
MODE_SYNTHWORLD = "synthworld"
MODES = (MODE_BASIC, MODE_CIP, MODE_ZERO_SHOT, MODE_LLM, MODE_SYNTHWORLD)
STRATEGIES = (MODE_BASIC, MODE_CIP, MODE_ZERO_SHOT, MODE_LLM)

PROVENANCE_BY_STRATEGY = {
    MODE_BASIC: "synthetic-basic",
    MODE_CIP: "synthetic-cip",
    MODE_ZERO_SHOT: "synthetic-zeroshot",
    MODE_LLM: "synthetic-llm",
}

# the preliminary zero-shot pass is always generated at this scale
ZERO_SHOT_PRELIM_GUIDANCE = 1.5

DEFAULT_GUIDANCE_SWEEP = (1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 7.5)


@dataclass(frozen=True)
class EvalSpec:
    n_mc: int = 20_000
    manifest: str | None = None

    def __post_init__(self):
        if self.n_mc < 1:
            raise ConfigError("eval n_mc must be >= 1")


@dataclass(frozen=True)
class PipelineConfig:
    mode: str
    output_dir: str
    global_seed: int = 0
    strategy: str = MODE_CIP
    input_manifest: str | None = None
    world_spec: str | dict | None = None
    classes: tuple[str, ...] | None = None
    per_class: int = 20
    captioner_quality: str = QUALITY_FINE
    world_rewriter: str = "echo"
    backends: dict = field(default_factory=dict)
    replay: str | None = None
    record_replay: str | None = None
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    replicas_per_prompt: int = 1
    max_inflight: int = 4
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalSpec = field(default_factory=EvalSpec)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if self.replicas_per_prompt < 1:
            raise ConfigError("replicas_per_prompt must be >= 1")
        if self.per_class < 1:
            raise ConfigError("per_class must be >= 1")
        if self.max_inflight < 1:
            raise ConfigError("max_inflight must be >= 1")
        if self.captioner_quality not in QUALITIES:
            raise ConfigError(f"unknown captioner quality {self.captioner_quality!r}")
        if self.world_rewriter not in ("echo", "destroy"):
            raise ConfigError(f"unknown world rewriter {self.world_rewriter!r}")
        if not self.output_dir:
            raise ConfigError("output_dir is required")
        if self.mode == MODE_SYNTHWORLD:
            if self.world_spec is None:
                raise ConfigError("synthworld mode needs a world_spec")
        else:
            if self.input_manifest is None and not (
                self.mode == MODE_ZERO_SHOT and self.classes
            ):
                raise ConfigError(
                    f"mode {self.mode!r} needs an input_manifest"
                    + (" (or an explicit class list)" if self.mode == MODE_ZERO_SHOT else "")
                )

    @property
    def effective_strategy(self) -> str:
        return self.strategy if self.mode == MODE_SYNTHWORLD else self.mode

    @property
    def provenance(self) -> str:
        return PROVENANCE_BY_STRATEGY[self.effective_strategy]

    @property
    def guidance(self) -> float:
        return float(self.generation.guidance_scale)

    def load_world(self) -> WorldSpec:
        if isinstance(self.world_spec, dict):
            return world_from_dict(self.world_spec)
        if isinstance(self.world_spec, str):
            return load_world(self.world_spec)
        raise ConfigError("no world spec configured")


def _endpoint_from_dict(kind: str, obj: dict) -> BackendEndpoint:
    try:
        return BackendEndpoint(
            base_url=str(obj["base_url"]),
            kind=kind,
            timeout=float(obj.get("timeout", 30.0)),
            max_retries=int(obj.get("max_retries", 2)),
            auth_token=obj.get("auth_token"),
            auth_env=obj.get("auth_env"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad backend endpoint for {kind}: {exc}") from exc


def config_from_dict(obj: dict) -> PipelineConfig:
    if not isinstance(obj, dict):
        raise ConfigError("pipeline config must be a JSON object")
    known = {
        "mode", "output_dir", "global_seed", "strategy", "input_manifest",
        "world_spec", "classes", "per_class", "captioner_quality",
        "world_rewriter", "backends", "replay", "record_replay", "generation",
        "replicas_per_prompt", "max_inflight", "train", "eval",
    }
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        generation = GenerationConfig(**obj.get("generation", {}))
        train = TrainConfig(**obj.get("train", {}))
        eval_spec = EvalSpec(**obj.get("eval", {}))
    except TypeError as exc:
        raise ConfigError(f"bad config section: {exc}") from exc
    backends = {
        kind: _endpoint_from_dict(kind, ep)
        for kind, ep in (obj.get("backends") or {}).items()
    }
    classes = obj.get("classes")
    return PipelineConfig(
        mode=obj.get("mode", MODE_CIP),
        output_dir=str(obj.get("output_dir", "")),
        global_seed=int(obj.get("global_seed", 0)),
        strategy=obj.get("strategy", MODE_CIP),
        input_manifest=obj.get("input_manifest"),
        world_spec=obj.get("world_spec"),
        classes=tuple(classes) if classes else None,
        per_class=int(obj.get("per_class", 20)),
        captioner_quality=obj.get("captioner_quality", QUALITY_FINE),
        world_rewriter=obj.get("world_rewriter", "echo"),
        backends=backends,
        replay=obj.get("replay"),
        record_replay=obj.get("record_replay"),
        generation=generation,
        replicas_per_prompt=int(obj.get("replicas_per_prompt", 1)),
        max_inflight=int(obj.get("max_inflight", 4)),
        train=train,
        eval=eval_spec,
    )


def config_to_dict(config: PipelineConfig) -> dict:
    gen = config.generation
    out = {
        "mode": config.mode,
        "output_dir": config.output_dir,
        "global_seed": config.global_seed,
        "strategy": config.strategy,
        "input_manifest": config.input_manifest,
        "world_spec": config.world_spec,
        "classes": list(config.classes) if config.classes else None,
        "per_class": config.per_class,
        "captioner_quality": config.captioner_quality,
        "world_rewriter": config.world_rewriter,
        "backends": {
            kind: {
                "base_url": ep.base_url,
                "timeout": ep.timeout,
                "max_retries": ep.max_retries,
                "auth_env": ep.auth_env,
            }
            for kind, ep in sorted(config.backends.items())
        },
        "replay": config.replay,
        "record_replay": config.record_replay,
        "generation": {
            "guidance_scale": float(gen.guidance_scale),
            "width": gen.width,
            "height": gen.height,
            "steps": gen.steps,
            "negative_prompt": gen.negative_prompt,
        },
        "replicas_per_prompt": config.replicas_per_prompt,
        "max_inflight": config.max_inflight,
        "train": {
            "epochs": config.train.epochs,
            "lr": config.train.lr,
            "momentum": config.train.momentum,
            "weight_decay": config.train.weight_decay,
            "lr_decay_factor": config.train.lr_decay_factor,
            "lr_decay_every": config.train.lr_decay_every,
            "batch_size": config.train.batch_size,
            "model": config.train.model,
            "hidden": config.train.hidden,
        },
        "eval": {"n_mc": config.eval.n_mc, "manifest": config.eval.manifest},
    }
    return out


def load_config(path: str | Path, overrides: dict | None = None) -> PipelineConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if overrides:
        obj = apply_overrides(obj, overrides)
    return config_from_dict(obj)


def apply_overrides(obj: dict, overrides: dict) -> dict:
    """Apply CLI-level overrides onto a raw config dict."""
    obj = dict(obj)
    if overrides.get("seed") is not None:
        obj["global_seed"] = int(overrides["seed"])
    if overrides.get("mode") is not None:
        obj["mode"] = overrides["mode"]
    if overrides.get("strategy") is not None:
        obj["strategy"] = overrides["strategy"]
    if overrides.get("guidance") is not None:
        gen = dict(obj.get("generation", {}))
        gen["guidance_scale"] = float(overrides["guidance"])
        obj["generation"] = gen
    if overrides.get("replay") is not None:
        obj["replay"] = overrides["replay"]
    if overrides.get("out") is not None:
        obj["output_dir"] = overrides["out"]
    return obj


def with_updates(config: PipelineConfig, **kwargs) -> PipelineConfig:
    return replace(config, **kwargs)


@dataclass(frozen=True)
class SweepSpec:
    guidance: tuple[float, ...] = DEFAULT_GUIDANCE_SWEEP
    strategies: tuple[str, ...] = (MODE_BASIC, MODE_CIP)
    repeats: int = 1

    def __post_init__(self):
        if not self.guidance:
            raise ConfigError("sweep needs at least one guidance value")
        if not self.strategies:
            raise ConfigError("sweep needs at least one strategy")
        for s in self.strategies:
            if s not in STRATEGIES:
                raise ConfigError(f"unknown sweep strategy {s!r}")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")


def sweep_from_dict(obj: dict) -> SweepSpec:
    return SweepSpec(
        guidance=tuple(float(g) for g in obj.get("guidance", DEFAULT_GUIDANCE_SWEEP)),
        strategies=tuple(obj.get("strategies", (MODE_BASIC, MODE_CIP))),
        repeats=int(obj.get("repeats", 1)),
    )
