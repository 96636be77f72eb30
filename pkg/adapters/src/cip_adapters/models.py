"""Model wrappers behind the three protocol roles.

Each role is a small duck-typed object; the server takes whatever set it
is given, so tests inject fakes and GPU hosts load the real runtimes.
Loading is lazy and import errors surface with an actionable message
(the model extras are optional by design: the core toolkit and CI run
with zero ML-runtime dependencies).
"""

from __future__ import annotations

import base64
import hashlib
import io
from dataclasses import dataclass
from pathlib import Path


class ModelLoadError(RuntimeError):
    pass


@dataclass
class ModelSet:
    captioner: object | None
    generator: object | None
    rewriter: object | None

    def descriptions(self) -> dict[str, str]:
        out = {}
        for role in ("captioner", "generator", "rewriter"):
            model = getattr(self, role)
            out[role] = getattr(model, "model_id", "disabled") if model else "disabled"
        return out

    @property
    def deterministic(self) -> bool:
        gen = self.generator
        return bool(gen is not None and getattr(gen, "deterministic", False))


def _decode_image(image_b64: str | None, image_ref: str | None, data_root: str):
    from PIL import Image

    if image_b64 is not None:
        return Image.open(io.BytesIO(base64.b64decode(image_b64))).convert("RGB")
    path = Path(data_root) / image_ref
    return Image.open(path).convert("RGB")


class Blip2Captioner:
    """Greedy image captioning via transformers; greedy decoding keeps it
    deterministic."""

    deterministic = True

    def __init__(self, model_id: str, device: str = "cuda"):
        self.model_id = model_id
        self.device = device
        try:
            import torch
            from transformers import AutoProcessor, Blip2ForConditionalGeneration
        except ImportError as exc:
            raise ModelLoadError(
                "captioner needs the model extras: pip install 'cip-adapters[models]'"
            ) from exc
        try:
            self._processor = AutoProcessor.from_pretrained(model_id)
            dtype = torch.float16 if device.startswith("cuda") else torch.float32
            self._model = Blip2ForConditionalGeneration.from_pretrained(
                model_id, torch_dtype=dtype).to(device)
        except Exception as exc:
            raise ModelLoadError(f"failed to load captioner {model_id}: {exc}") from exc

    def caption(self, image) -> str:
        inputs = self._processor(images=image, return_tensors="pt").to(self.device)
        ids = self._model.generate(**inputs, max_new_tokens=40, do_sample=False)
        return self._processor.batch_decode(ids, skip_special_tokens=True)[0].strip()


class DiffusionGenerator:
    """Seeded text-to-image generation via diffusers; a fixed per-request
    torch generator makes identical requests produce identical images."""

    deterministic = True

    def __init__(self, model_id: str, device: str = "cuda"):
        self.model_id = model_id
        self.device = device
        try:
            import torch
            from diffusers import StableDiffusionPipeline
        except ImportError as exc:
            raise ModelLoadError(
                "generator needs the model extras: pip install 'cip-adapters[models]'"
            ) from exc
        try:
            dtype = torch.float16 if device.startswith("cuda") else torch.float32
            self._pipe = StableDiffusionPipeline.from_pretrained(
                model_id, torch_dtype=dtype).to(device)
            self._torch = torch
        except Exception as exc:
            raise ModelLoadError(f"failed to load generator {model_id}: {exc}") from exc

    def generate(self, prompt: str, guidance_scale: float, seed: int,
                 width: int, height: int, steps: int,
                 negative_prompt: str | None) -> bytes:
        generator = self._torch.Generator(self.device).manual_seed(seed % 2 ** 63)
        image = self._pipe(
            prompt,
            guidance_scale=guidance_scale,
            num_inference_steps=steps,
            width=width,
            height=height,
            negative_prompt=negative_prompt,
            generator=generator,
        ).images[0]
        buf = io.BytesIO()
        image.save(buf, format="PNG")
        return buf.getvalue()


class LlmRewriter:
    """Caption rewriting via a transformers text-generation pipeline.
    Sampling at nonzero temperature, so not seed-deterministic."""

    deterministic = False

    def __init__(self, model_id: str, device: str = "cuda"):
        self.model_id = model_id
        try:
            from transformers import pipeline
        except ImportError as exc:
            raise ModelLoadError(
                "rewriter needs the model extras: pip install 'cip-adapters[models]'"
            ) from exc
        try:
            self._pipe = pipeline("text-generation", model=model_id, device=device)
        except Exception as exc:
            raise ModelLoadError(f"failed to load rewriter {model_id}: {exc}") from exc

    def rewrite(self, prompt: str, max_tokens: int, temperature: float) -> str:
        out = self._pipe(prompt, max_new_tokens=max_tokens,
                         temperature=temperature, do_sample=temperature > 0,
                         return_full_text=False)
        return out[0]["generated_text"]


def load_models(config) -> ModelSet:
    """Instantiate the enabled roles; any failure is a hard error (the
    server must not come up half-loaded)."""
    captioner = generator = rewriter = None
    if config.captioner.enabled:
        captioner = Blip2Captioner(config.captioner.model, config.device)
    if config.generator.enabled:
        generator = DiffusionGenerator(config.generator.model, config.device)
    if config.rewriter.enabled:
        rewriter = LlmRewriter(config.rewriter.model, config.device)
    return ModelSet(captioner, generator, rewriter)


# ---------------------------------------------------------------------------
# deterministic fakes: used by the adapter test suite and by conformance
# runs on hosts without the model runtimes

class FakeCaptioner:
    model_id = "fake-captioner"
    deterministic = True

    def caption(self, image) -> str:
        raw = image.tobytes() if hasattr(image, "tobytes") else bytes(image)
        digest = hashlib.sha256(raw).hexdigest()[:8]
        return f"a synthetic test image {digest}"


class FakeGenerator:
    model_id = "fake-generator"
    deterministic = True

    def generate(self, prompt, guidance_scale, seed, width, height, steps,
                 negative_prompt) -> bytes:
        from PIL import Image

        rgb = hashlib.sha256(
            f"{prompt}|{guidance_scale!r}|{seed}".encode("utf-8")).digest()[:3]
        image = Image.new("RGB", (width, height), tuple(rgb))
        buf = io.BytesIO()
        image.save(buf, format="PNG")
        return buf.getvalue()


class FakeRewriter:
    model_id = "fake-rewriter"
    deterministic = True

    def rewrite(self, prompt, max_tokens, temperature) -> str:
        caption = ""
        if "# Caption:\n" in prompt:
            caption = prompt.split("# Caption:\n", 1)[1].split("\n# Answer", 1)[0]
        caption = caption.strip() or "a plain scene"
        return f"\n1. {caption}\n2. {caption} in another setting"


def fake_models() -> ModelSet:
    return ModelSet(FakeCaptioner(), FakeGenerator(), FakeRewriter())
