from .config import (
    DEFAULT_GUIDANCE_SWEEP,
    MODES,
    STRATEGIES,
    EvalSpec,
    PipelineConfig,
    SweepSpec,
    apply_overrides,
    config_from_dict,
    config_to_dict,
    load_config,
    sweep_from_dict,
    with_updates,
)
from .refdata import reference_lookup
from .reporting import render_report, render_report_file
from .runner import RunResult, run_pipeline, run_sweep, stage_order
from . import stages, worldlab

__all__ = [
    "DEFAULT_GUIDANCE_SWEEP",
    "MODES",
    "STRATEGIES",
    "EvalSpec",
    "PipelineConfig",
    "SweepSpec",
    "apply_overrides",
    "config_from_dict",
    "config_to_dict",
    "load_config",
    "sweep_from_dict",
    "with_updates",
    "reference_lookup",
    "render_report",
    "render_report_file",
    "RunResult",
    "run_pipeline",
    "run_sweep",
    "stage_order",
    "stages",
    "worldlab",
]
