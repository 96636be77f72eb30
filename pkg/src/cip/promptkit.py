"""Prompt construction, the prompt->label association, and LLM-rewrite text processing.

Templates use the canonical capital-A form "A photo of ..." so golden tests
can pin exact bytes. The prompt->label mapping is carried as data on each
Prompt, never parsed back out of the text.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from random import Random

from .dataman import ClassMap, Manifest
from .errors import (
    ConfigError,
    InvariantError,
    MissingCaptionError,
    NoAnswerMarkerError,
)

TEMPLATE_BASIC = "basic"
TEMPLATE_CIP = "cip"
TEMPLATE_LLM = "llm"
TEMPLATES = (TEMPLATE_BASIC, TEMPLATE_CIP, TEMPLATE_LLM)

ANSWER_MARKER = "# Answer"

REWRITE_TEMPLATE = (
    "This is an image caption about {class_name} category. "
    "Can you unemotionally and succinctly rewrite it to 2 captions "
    "by containing the word of {class_name} in more diverse scenarios?\n"
    "# Caption:\n"
    "{caption}\n"
    "# Answer:"
)


@dataclass(frozen=True)
class Prompt:
    text: str
    label: int
    template: str
    source_index: int | None = None

    def __post_init__(self):
        if not self.text:
            raise InvariantError("prompt text must be non-empty")
        if self.template not in TEMPLATES:
            raise InvariantError(f"unknown template {self.template!r}")


@dataclass(frozen=True)
class PromptSet:
    prompts: tuple[Prompt, ...]
    class_map: ClassMap

    def __post_init__(self):
        if len(self.prompts) < 1:
            raise InvariantError("prompt set must be non-empty")
        for p in self.prompts:
            if not 0 <= p.label < self.class_map.k:
                raise InvariantError(f"prompt label {p.label} outside class map")

    def __len__(self) -> int:
        return len(self.prompts)


def basic_prompt(class_name: str) -> str:
    """The plain template: "A photo of {class name}"."""
    if not class_name:
        raise InvariantError("class name must be non-empty")
    return f"A photo of {class_name}"


def cip_prompt(class_name: str, caption: str) -> str:
    """Class name prefixed to the caption: "A photo of {class name}, {caption}"."""
    if not class_name:
        raise InvariantError("class name must be non-empty")
    if not caption:
        raise InvariantError("caption must be non-empty")
    return f"A photo of {class_name}, {caption}"


def build_prompt_set(manifest: Manifest, template: str) -> PromptSet:
    """One prompt per record, in record order; labels copied from the records.

    Templates "cip" and "llm" require every record to carry a caption.
    """
    if template not in TEMPLATES:
        raise ConfigError(f"unknown template {template!r}")
    if template in (TEMPLATE_CIP, TEMPLATE_LLM):
        missing = [r.index for r in manifest.records if not r.caption]
        if missing:
            raise MissingCaptionError(missing)
    prompts = []
    for rec in manifest.records:
        name = manifest.class_map.name_of(rec.label)
        if template == TEMPLATE_BASIC:
            text = basic_prompt(name)
        else:
            text = cip_prompt(name, rec.caption)
        prompts.append(Prompt(text, rec.label, template, source_index=rec.index))
    return PromptSet(tuple(prompts), manifest.class_map)


def rewrite_request(class_name: str, caption: str) -> str:
    """The caption-rewrite instruction sent to the rewrite backend."""
    if not class_name:
        raise InvariantError("class name must be non-empty")
    if not caption:
        raise InvariantError("caption must be non-empty")
    return REWRITE_TEMPLATE.format(class_name=class_name, caption=caption)


_NUMBERED_SPLIT = re.compile(r"\n+|\s+\d+[.)]\s+")
_LEADING_NUMBER = re.compile(r"^\s*\d+[.)]\s*")


def _clean_candidate(raw: str) -> str:
    # keep letters and spaces only, collapsing whitespace runs
    kept = "".join(ch if ch.isalpha() else " " for ch in raw)
    return " ".join(kept.split())


def postprocess_llm_output(raw: str) -> list[str]:
    """Extract caption candidates from a rewrite completion.

    Takes the text after the final "# Answer" marker, splits candidates on
    numbered-list boundaries or newlines, strips everything that is not a
    letter or a space, collapses whitespace, and drops empty candidates.
    """
    pos = raw.rfind(ANSWER_MARKER)
    if pos < 0:
        raise NoAnswerMarkerError("completion contains no '# Answer' marker")
    answer = raw[pos + len(ANSWER_MARKER):]
    answer = answer.lstrip(":").lstrip()
    candidates = []
    for part in _NUMBERED_SPLIT.split(answer):
        part = _LEADING_NUMBER.sub("", part)
        cleaned = _clean_candidate(part)
        if cleaned:
            candidates.append(cleaned)
    return candidates


def select_candidate(candidates: list[str], rng: Random) -> str:
    """Uniform pick, deterministic under the given generator."""
    if not candidates:
        raise InvariantError("candidate list must be non-empty")
    return candidates[rng.randrange(len(candidates))]


# ---------------------------------------------------------------------------
# prompt-set persistence (stage checkpoint format: JSONL, header + one prompt per line)

def save_prompt_set(prompt_set: PromptSet, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    classes = [
        {"id": e.class_id, "name": e.class_name, "synset": e.synset_id}
        for e in prompt_set.class_map.entries
    ]
    lines = [json.dumps({"format_version": 1, "classes": classes},
                        ensure_ascii=False, separators=(",", ":"))]
    for i, p in enumerate(prompt_set.prompts):
        lines.append(json.dumps(
            {"index": i, "text": p.text, "label": p.label,
             "template": p.template, "source_index": p.source_index},
            ensure_ascii=False, separators=(",", ":")))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_prompt_set(path: str | Path) -> PromptSet:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise InvariantError("empty prompt-set file")
    header = json.loads(lines[0])
    from .dataman import ClassEntry  # local import to keep module load cheap

    class_map = ClassMap(tuple(
        ClassEntry(int(c["id"]), str(c["name"]), c.get("synset"))
        for c in header["classes"]
    ))
    prompts = []
    for line in lines[1:]:
        if not line.strip():
            continue
        obj = json.loads(line)
        prompts.append(Prompt(obj["text"], int(obj["label"]),
                              obj["template"], obj.get("source_index")))
    return PromptSet(tuple(prompts), class_map)
