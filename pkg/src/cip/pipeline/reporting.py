"""Report rendering: JSON reports to human-readable stdout tables."""

from __future__ import annotations

import json
from pathlib import Path

from ..errors import ConfigError
from .refdata import reference_lookup

# local strategy names -> the published tables' method labels
_PUBLISHED_ALIAS = {
    "cip": "cip-blip2",
    "zero-shot-cip": "cip-zero-shot",
    "cip-llm": "cip-blip2-llm",
}


def render_report(obj: dict, dataset: str | None = None) -> str:
    kind = obj.get("kind")
    if kind == "risk":
        return _render_risk(obj, dataset)
    if kind == "sweep":
        return _render_sweep(obj)
    if kind == "bound" or kind == "bound-suite":
        return _render_bound(obj)
    raise ConfigError(f"unknown report kind {kind!r}")


def render_report_file(path: str | Path, dataset: str | None = None) -> str:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"no report at {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"report is not valid JSON: {exc}") from exc
    return render_report(obj, dataset)


def _render_risk(obj: dict, dataset: str | None) -> str:
    rep = obj["report"]
    lines = [
        f"strategy={obj.get('strategy')} guidance={obj.get('guidance')}",
        f"risk      {rep['risk']:.4f}",
        f"accuracy  {rep['accuracy']:.4f}  (+/- {rep['std_error']:.4f}, "
        f"n={rep['n_eval']}, {rep['eval_kind']})",
    ]
    if dataset:
        strategy = obj.get("strategy", "")
        ref = reference_lookup(dataset, strategy, obj.get("guidance", 0.0))
        if ref is None:
            ref = reference_lookup(dataset, _PUBLISHED_ALIAS.get(strategy, ""),
                                   obj.get("guidance", 0.0))
        if ref is not None:
            lines.append(
                f"published reference for {dataset} (not reproduced here): {ref:.2f}%"
            )
    return "\n".join(lines)


def _render_sweep(obj: dict) -> str:
    guidance = obj["guidance"]
    header = "strategy".ljust(16) + "".join(f"{g:>8}" for g in guidance)
    lines = [header, "-" * len(header)]
    for strategy in obj["strategies"]:
        row = strategy.ljust(16)
        for g in guidance:
            cell = obj["table"][strategy][repr(float(g))]
            row += f"{cell['mean']:8.3f}" if cell["mean"] is not None else "    fail"
        lines.append(row)
    for strategy, best in obj.get("best", {}).items():
        lines.append(
            f"best[{strategy}]: guidance {best['guidance']} "
            f"-> accuracy {best['accuracy']:.3f}"
        )
    lines.append(f"runtime: {obj.get('runtime', {}).get('total_seconds', '?')}s")
    return "\n".join(lines)


def _render_bound(obj: dict) -> str:
    if obj.get("kind") == "bound":
        r = obj["report"]
        return (
            f"r_D={r['r_d']:.4f}  r_DC={r['r_dc']:.4f}  "
            f"distance={r['distance']:.4f}  slack={r['slack']:.4f}  "
            f"(sigma_total={r['sigma_total']:.4f})"
        )
    lines = [
        f"bound suite: {obj['n_holds']}/{obj['n_configs']} hold "
        f"({100 * obj['hold_fraction']:.1f}%) at {obj['n_sigmas']} sigma",
    ]
    worst = sorted(obj["reports"], key=lambda r: r["slack"])[:3]
    for r in worst:
        lines.append(
            f"  tightest slack {r['slack']:+.4f} "
            f"(r_D={r['r_d']:.3f}, r_DC={r['r_dc']:.3f}, d={r['distance']:.3f})"
        )
    return "\n".join(lines)
