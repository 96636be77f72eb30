"""End-to-end pipeline orchestration with stage checkpoints and resume.

Every stage persists its output under the run's output directory before
the next stage starts; generation appends record-by-record, so an
interrupted run resumes to byte-identical final files. Stage order per
strategy:

  basic          real -> prompts -> generate -> train -> eval
  cip            real -> captions -> prompts -> generate -> train -> eval
  zero-shot-cip  real -> preliminary -> captions -> prompts -> generate -> train -> eval
  cip-llm        real -> captions -> rewrites -> prompts -> generate -> train -> eval
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dataman import (
    Manifest,
    load_manifest,
    record_line,
    save_manifest,
)
from ..errors import CipError, ConfigError
from ..promptkit import PromptSet, load_prompt_set, save_prompt_set
from ..seeding import derive_seed
from ..synthworld import WorldSpec
from ..trainer import (
    RiskReport,
    eval_on_set,
    eval_on_world,
    load_classifier,
    save_classifier,
    train,
)
from .config import (
    MODE_LLM,
    MODE_SYNTHWORLD,
    MODE_ZERO_SHOT,
    PipelineConfig,
    SweepSpec,
    config_to_dict,
    with_updates,
)
from .stages import (
    build_transports,
    caption_by_source,
    make_captions,
    make_preliminary_record,
    make_prompts,
    make_real,
    make_rewrites,
    make_synthetic_record,
    manifest_features,
    prelim_prompt_slots,
)

STAGE_FILES = {
    "real": "real.jsonl",
    "preliminary": "preliminary.jsonl",
    "captions": "captions.jsonl",
    "rewrites": "rewrites.jsonl",
    "prompts": "prompts.jsonl",
    "generate": "synthetic.jsonl",
    "train": "classifier.txt",
    "eval": "report.json",
}

CLI_STAGE_ALIASES = {
    "caption": "captions",
    "prompts": "prompts",
    "rewrite": "rewrites",
    "generate": "generate",
    "train": "train",
    "eval": "eval",
}


def stage_order(strategy: str) -> list[str]:
    if strategy == "basic":
        return ["real", "prompts", "generate", "train", "eval"]
    if strategy == MODE_ZERO_SHOT:
        return ["real", "preliminary", "captions", "prompts", "generate",
                "train", "eval"]
    if strategy == MODE_LLM:
        return ["real", "captions", "rewrites", "prompts", "generate",
                "train", "eval"]
    return ["real", "captions", "prompts", "generate", "train", "eval"]


@dataclass
class RunResult:
    out_dir: str
    manifest_path: str | None
    report: dict | None
    stages_run: list[str] = field(default_factory=list)

    @property
    def accuracy(self) -> float | None:
        if self.report and "report" in self.report:
            return self.report["report"]["accuracy"]
        return None


def dump_json(obj: dict, path: Path) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, ensure_ascii=False, indent=1) + "\n",
                   encoding="utf-8", newline="\n")
    os.replace(tmp, path)


class _Run:
    def __init__(self, config: PipelineConfig, resume: bool):
        self.config = config
        self.resume = resume
        self.out = Path(config.output_dir)
        self.strategy = config.effective_strategy
        self.world: WorldSpec | None = (
            config.load_world() if config.mode == MODE_SYNTHWORLD else None
        )
        self.transports = (
            build_transports(config) if config.mode != MODE_SYNTHWORLD else None
        )
        self.stages_run: list[str] = []

    def path(self, stage: str) -> Path:
        return self.out / STAGE_FILES[stage]

    # -- snapshot ----------------------------------------------------------
    def write_snapshot(self) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        snapshot = config_to_dict(self.config)
        path = self.out / "resolved_config.json"
        if path.exists():
            existing = json.loads(path.read_text(encoding="utf-8"))
            if existing != snapshot:
                raise ConfigError(
                    f"output dir {self.out} was created with a different config"
                )
            return
        dump_json(snapshot, path)

    # -- stages ------------------------------------------------------------
    def stage_real(self) -> Manifest:
        path = self.path("real")
        if path.exists():
            return load_manifest(path)
        manifest = make_real(self.config, self.world)
        save_manifest(manifest, path)
        self.stages_run.append("real")
        return manifest

    def _generate_into(self, path: Path, slots, expected: int, record_fn) -> Manifest:
        """Ordered, resumable record generation with bounded in-flight requests."""
        if path.exists():
            existing = load_manifest(path)
            start = existing.m
            if start > expected:
                raise ConfigError(f"{path} has more records than configured")
            if 0 < start < expected and not self.resume:
                raise ConfigError(
                    f"{path} holds a partial generation ({start}/{expected}); "
                    "pass resume to continue"
                )
        else:
            real = self.stage_real()
            save_manifest(
                Manifest(real.class_map, [], global_seed=self.config.global_seed),
                path,
            )
            start = 0
        if start == expected:
            return load_manifest(path)

        max_inflight = (
            1 if self.world is not None else self.config.max_inflight
        )
        with open(path, "a", encoding="utf-8", newline="\n") as fh:
            def commit(rec):
                fh.write(record_line(rec))
                fh.write("\n")
                fh.flush()
                os.fsync(fh.fileno())

            if max_inflight == 1:
                for j in range(start, expected):
                    commit(record_fn(j, slots[j]))
            else:
                with ThreadPoolExecutor(max_workers=max_inflight) as pool:
                    window: list = []
                    for j in range(start, expected):
                        window.append(pool.submit(record_fn, j, slots[j]))
                        if len(window) >= max_inflight:
                            commit(window.pop(0).result())
                    for fut in window:
                        commit(fut.result())
        return load_manifest(path)

    def stage_preliminary(self) -> Manifest:
        real = self.stage_real()
        per_class = self.config.per_class
        slots = prelim_prompt_slots(real.class_map, per_class)
        path = self.path("preliminary")

        def record_fn(j: int, slot):
            label, text = slot
            return make_preliminary_record(
                self.world, self.transports, self.config.generation, label, text,
                j, j % per_class, self.config.global_seed,
                None if self.world is not None else self.out / "samples",
            )

        manifest = self._generate_into(path, slots, len(slots), record_fn)
        if "preliminary" not in self.stages_run and manifest.m == len(slots):
            self.stages_run.append("preliminary")
        return manifest

    def caption_source(self) -> Manifest:
        if self.strategy == MODE_ZERO_SHOT:
            return self.stage_preliminary()
        return self.stage_real()

    def stage_captions(self) -> Manifest:
        path = self.path("captions")
        if path.exists():
            return load_manifest(path)
        source = self.caption_source()
        manifest = make_captions(
            source, self.world, self.transports, self.config.captioner_quality,
            self.config.max_inflight,
        )
        save_manifest(manifest, path)
        self.stages_run.append("captions")
        return manifest

    def stage_rewrites(self) -> Manifest:
        path = self.path("rewrites")
        if path.exists():
            return load_manifest(path)
        source = self.stage_captions()
        rewriter = self.config.world_rewriter if self.world is not None else None
        manifest = make_rewrites(source, rewriter, self.transports,
                                 self.config.global_seed, self.config.max_inflight)
        save_manifest(manifest, path)
        self.stages_run.append("rewrites")
        return manifest

    def prompt_source(self) -> Manifest:
        if self.strategy == "basic":
            return self.stage_real()
        if self.strategy == MODE_LLM:
            return self.stage_rewrites()
        return self.stage_captions()

    def stage_prompts(self) -> PromptSet:
        path = self.path("prompts")
        if path.exists():
            return load_prompt_set(path)
        prompts = make_prompts(self.prompt_source(), self.strategy)
        save_prompt_set(prompts, path)
        self.stages_run.append("prompts")
        return prompts

    def stage_generate(self) -> Manifest:
        prompts = self.stage_prompts()
        source = self.prompt_source()
        captions = caption_by_source(prompts, source)
        replicas = self.config.replicas_per_prompt
        expected = len(prompts) * replicas
        slots = [(j // replicas, j % replicas) for j in range(expected)]
        provenance = self.config.provenance
        path = self.path("generate")

        def record_fn(j: int, slot):
            pos, replica = slot
            prompt = prompts.prompts[pos]
            return make_synthetic_record(
                self.world, self.transports, self.config.generation, prompt,
                captions.get(pos), j, replica, self.config.global_seed, provenance,
                None if self.world is not None else self.out / "samples",
            )

        manifest = self._generate_into(path, slots, expected, record_fn)
        if "generate" not in self.stages_run and manifest.m == expected:
            self.stages_run.append("generate")
        return manifest

    def stage_train(self):
        path = self.path("train")
        if path.exists():
            return load_classifier(path)
        synthetic = self.stage_generate()
        X, y = manifest_features(synthetic, self.out)
        clf = train((X, y), self.config.train,
                    derive_seed(self.config.global_seed, "train"),
                    k=synthetic.class_map.k)
        save_classifier(clf, path)
        self.stages_run.append("train")
        return clf

    def stage_eval(self) -> dict:
        path = self.path("eval")
        if path.exists():
            return json.loads(path.read_text(encoding="utf-8"))
        clf = self.stage_train()
        if self.world is not None:
            report = eval_on_world(clf, self.world, self.config.eval.n_mc,
                                   derive_seed(self.config.global_seed, "eval"))
        else:
            eval_path = self.config.eval.manifest or self.config.input_manifest
            if eval_path is None:
                raise ConfigError("no evaluation manifest configured")
            eval_manifest = load_manifest(eval_path)
            X, y = manifest_features(eval_manifest,
                                     Path(eval_path).parent)
            report = eval_on_set(clf, (X, y))
        payload = risk_report_payload(self.config, report)
        dump_json(payload, path)
        self.stages_run.append("eval")
        return payload


def risk_report_payload(config: PipelineConfig, report: RiskReport) -> dict:
    return {
        "report_version": 1,
        "kind": "risk",
        "mode": config.mode,
        "strategy": config.effective_strategy,
        "guidance": config.guidance,
        "replicas_per_prompt": config.replicas_per_prompt,
        "report": report.to_dict(),
    }


def run_pipeline(config: PipelineConfig, resume: bool = False,
                 stop_after: str | None = None) -> RunResult:
    """Execute the configured pipeline, checkpointing after every stage.

    stop_after names a stage (file key or CLI alias) to halt at, which is
    how single-stage CLI subcommands and interruption tests drive the
    runner.
    """
    if stop_after is not None:
        stop_after = CLI_STAGE_ALIASES.get(stop_after, stop_after)
        if stop_after not in STAGE_FILES:
            raise ConfigError(f"unknown stage {stop_after!r}")
    run = _Run(config, resume)
    run.write_snapshot()
    order = stage_order(run.strategy)
    if stop_after is not None and stop_after not in order:
        raise ConfigError(
            f"stage {stop_after!r} does not exist for strategy {run.strategy!r}"
        )
    report: dict | None = None
    for stage in order:
        getattr(run, f"stage_{stage}")()
        if stage == "eval":
            report = json.loads(run.path("eval").read_text(encoding="utf-8"))
        if stage == stop_after:
            break
    synthetic = run.path("generate")
    return RunResult(
        out_dir=str(run.out),
        manifest_path=str(synthetic) if synthetic.exists() else None,
        report=report,
        stages_run=run.stages_run,
    )


# ---------------------------------------------------------------------------
# sweeps

def _cell_dir(base: Path, strategy: str, guidance: float, repeat: int) -> Path:
    return base / "sweep" / strategy / f"gs{guidance!r}" / f"r{repeat}"


def run_sweep(spec: SweepSpec, base: PipelineConfig) -> dict:
    """Cross-product sweep; per-cell seeds derive from the base seed plus
    (strategy, guidance, repeat). Cell failures are recorded and the sweep
    continues."""
    t_start = time.time()
    base_out = Path(base.output_dir)
    cells = []
    for strategy in spec.strategies:
        for guidance in spec.guidance:
            for repeat in range(spec.repeats):
                seed = derive_seed(base.global_seed, "sweep", strategy,
                                   float(guidance), repeat)
                updates = {
                    "output_dir": str(_cell_dir(base_out, strategy, guidance, repeat)),
                    "global_seed": seed,
                    "generation": type(base.generation)(
                        guidance_scale=float(guidance),
                        width=base.generation.width,
                        height=base.generation.height,
                        steps=base.generation.steps,
                        negative_prompt=base.generation.negative_prompt,
                    ),
                }
                if base.mode == MODE_SYNTHWORLD:
                    updates["strategy"] = strategy
                else:
                    updates["mode"] = strategy
                cell_cfg = with_updates(base, **updates)
                cell = {
                    "strategy": strategy,
                    "guidance": float(guidance),
                    "repeat": repeat,
                    "seed": seed,
                }
                t_cell = time.time()
                try:
                    result = run_pipeline(cell_cfg, resume=True)
                    cell["status"] = "ok"
                    cell["accuracy"] = result.accuracy
                except CipError as exc:
                    cell["status"] = "failed"
                    cell["reason"] = f"{exc.kind}: {exc}"
                cell["seconds"] = round(time.time() - t_cell, 3)
                cells.append(cell)

    table: dict[str, dict[str, dict]] = {}
    best: dict[str, dict] = {}
    for strategy in spec.strategies:
        table[strategy] = {}
        for guidance in spec.guidance:
            accs = [c["accuracy"] for c in cells
                    if c["strategy"] == strategy and c["guidance"] == float(guidance)
                    and c["status"] == "ok"]
            if accs:
                entry = {
                    "mean": float(np.mean(accs)),
                    "std": float(np.std(accs)),
                    "n": len(accs),
                }
            else:
                entry = {"mean": None, "std": None, "n": 0, "failed": True}
            table[strategy][repr(float(guidance))] = entry
        scored = [(g, table[strategy][repr(float(g))]["mean"])
                  for g in spec.guidance
                  if table[strategy][repr(float(g))]["mean"] is not None]
        if scored:
            g_best, acc_best = max(scored, key=lambda t: t[1])
            best[strategy] = {"guidance": float(g_best), "accuracy": acc_best}

    report = {
        "report_version": 1,
        "kind": "sweep",
        "strategies": list(spec.strategies),
        "guidance": [float(g) for g in spec.guidance],
        "repeats": spec.repeats,
        "table": table,
        "best": best,
        "cells": cells,
        "runtime": {"total_seconds": round(time.time() - t_start, 3)},
    }
    base_out.mkdir(parents=True, exist_ok=True)
    dump_json(report, base_out / "sweep_report.json")
    return report
