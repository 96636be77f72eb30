"""A fully specified toy universe for desk-scale verification.

Classes are isotropic Gaussian mixtures over low-dimensional feature
vectors. A toy captioner reads off the nearest mode's tokens, and a toy
conditional generator resolves a prompt to a mode and samples around it
with variance sigma^2/g, so every distribution-level quantity (true
density, prompt-induced density, Bayes posterior) is available in closed
form.

The guidance knob g maps to conditional-variance shrinkage with
unchanged means: larger g means tighter, more prompt-consistent samples;
g = 1 reproduces the real per-mode variance. This is an analog of the
consistency/diversity trade-off, not a claim about diffusion internals.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataman import (
    ClassMap,
    Manifest,
    Record,
    encode_vector_ref,
)
from .errors import ConfigError, InvariantError
from .promptkit import PromptSet, build_prompt_set
from .seeding import derive_record_seed, derive_seed

QUALITY_NONE = "none"
QUALITY_COARSE = "coarse"
QUALITY_FINE = "fine"
QUALITIES = (QUALITY_NONE, QUALITY_COARSE, QUALITY_FINE)

_ORACLE_MAX_DIM = 2
_MC_MAX_DIM = 16


@dataclass(frozen=True)
class Mode:
    mean: tuple[float, ...]
    weight: float
    background_token: str
    behavior_token: str

    def __post_init__(self):
        if not 0 < self.weight <= 1:
            raise InvariantError("mode weight must be in (0, 1]")

    @property
    def mean_vec(self) -> np.ndarray:
        return np.asarray(self.mean, dtype=float)


@dataclass(frozen=True)
class Polysemy:
    confuser: Mode
    confusion_prob: float

    def __post_init__(self):
        if not 0 <= self.confusion_prob <= 1:
            raise InvariantError("confusion_prob must be in [0, 1]")


@dataclass(frozen=True)
class GuidanceKnob:
    g: float = 1.0

    def __post_init__(self):
        if self.g < 1:
            raise InvariantError("guidance knob must be >= 1")


@dataclass(frozen=True)
class WorldSpec:
    k: int
    d: int
    modes: tuple[tuple[Mode, ...], ...]
    sigma: float
    polysemy: tuple[Polysemy | None, ...]
    seed: int = 0
    class_names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.k < 1 or len(self.modes) != self.k:
            raise InvariantError("need one mode list per class, k >= 1")
        if self.d < 1 or self.d > _MC_MAX_DIM:
            raise InvariantError(f"d must be in 1..{_MC_MAX_DIM}")
        if self.sigma <= 0:
            raise InvariantError("sigma must be positive")
        if len(self.polysemy) != self.k:
            raise InvariantError("need one polysemy slot per class (None allowed)")
        for c, class_modes in enumerate(self.modes):
            if len(class_modes) < 1:
                raise InvariantError(f"class {c} has no modes")
            total = sum(m.weight for m in class_modes)
            if abs(total - 1.0) > 1e-9:
                raise InvariantError(f"class {c} mode weights sum to {total}, not 1")
            for m in class_modes:
                if len(m.mean) != self.d:
                    raise InvariantError(f"class {c} mode mean has wrong dimension")
        if not self.class_names:
            object.__setattr__(
                self, "class_names", tuple(f"class-{c}" for c in range(self.k))
            )
        if len(self.class_names) != self.k:
            raise InvariantError("class_names length must equal k")

    def class_map(self) -> ClassMap:
        return ClassMap.from_names(list(self.class_names))


# ---------------------------------------------------------------------------
# isotropic Gaussian mixtures

class GaussianMixture:
    """Weighted isotropic Gaussian mixture with vectorized pdf/sampling."""

    def __init__(self, means: np.ndarray, variances: np.ndarray, weights: np.ndarray):
        self.means = np.atleast_2d(np.asarray(means, dtype=float))
        self.variances = np.asarray(variances, dtype=float).reshape(-1)
        self.weights = np.asarray(weights, dtype=float).reshape(-1)
        if not (len(self.means) == len(self.variances) == len(self.weights)):
            raise InvariantError("mixture component arrays must have equal length")
        if np.any(self.variances <= 0):
            raise InvariantError("component variances must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise InvariantError("mixture weights must sum to 1")

    @property
    def d(self) -> int:
        return self.means.shape[1]

    def pdf(self, x: np.ndarray) -> np.ndarray:
        """Density at x; x is (n, d) or a single (d,) point."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        out = np.empty(len(pts))
        norm = (2.0 * np.pi * self.variances) ** (-0.5 * self.d)
        for start in range(0, len(pts), 8192):
            chunk = pts[start:start + 8192]
            diff = chunk[:, None, :] - self.means[None, :, :]
            sq = np.einsum("nmd,nmd->nm", diff, diff)
            dens = np.exp(-0.5 * sq / self.variances) * norm
            out[start:start + 8192] = dens @ self.weights
        return float(out[0]) if single else out

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comp = rng.choice(len(self.weights), size=n, p=self.weights)
        z = rng.standard_normal((n, self.d))
        return self.means[comp] + np.sqrt(self.variances[comp])[:, None] * z

    def bounds(self, n_sigmas: float = 8.0) -> tuple[np.ndarray, np.ndarray]:
        spread = n_sigmas * np.sqrt(self.variances)[:, None]
        return (self.means - spread).min(axis=0), (self.means + spread).max(axis=0)

    def shifted(self, delta: np.ndarray) -> "GaussianMixture":
        return GaussianMixture(self.means + np.asarray(delta, dtype=float),
                               self.variances, self.weights)


def merge_components(parts: list[tuple[float, np.ndarray, float]]) -> GaussianMixture:
    """Collapse duplicate (mean, variance) components, summing weights."""
    order: list[tuple[bytes, float]] = []
    acc: dict[tuple[bytes, float], list] = {}
    for w, mean, var in parts:
        key = (np.asarray(mean, dtype=float).tobytes(), float(var))
        if key not in acc:
            acc[key] = [0.0, np.asarray(mean, dtype=float), float(var)]
            order.append(key)
        acc[key][0] += w
    means = np.stack([acc[k][1] for k in order])
    variances = np.array([acc[k][2] for k in order])
    weights = np.array([acc[k][0] for k in order])
    return GaussianMixture(means, variances, weights)


def class_conditional(world: WorldSpec, label: int) -> GaussianMixture:
    modes = world.modes[label]
    return GaussianMixture(
        np.stack([m.mean_vec for m in modes]),
        np.full(len(modes), world.sigma ** 2),
        np.array([m.weight for m in modes]),
    )


def true_mixture(world: WorldSpec) -> GaussianMixture:
    """P(x) under a uniform class prior: all real modes, weights w/k."""
    parts = []
    for c in range(world.k):
        for m in world.modes[c]:
            parts.append((m.weight / world.k, m.mean_vec, world.sigma ** 2))
    return merge_components(parts)


def true_density(world: WorldSpec, x: np.ndarray):
    return true_mixture(world).pdf(x)


def bayes_posterior(world: WorldSpec, x: np.ndarray) -> np.ndarray:
    """P(y | x) from the ground-truth class conditionals and uniform prior."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    dens = np.stack([class_conditional(world, c).pdf(pts) for c in range(world.k)],
                    axis=1)
    total = dens.sum(axis=1, keepdims=True)
    post = np.where(total > 0, dens / np.where(total > 0, total, 1.0), 1.0 / world.k)
    return post[0] if np.asarray(x).ndim == 1 else post


def bayes_labeler(world: WorldSpec, x: np.ndarray) -> np.ndarray:
    return bayes_posterior(world, x)


def bayes_argmax(world: WorldSpec, x: np.ndarray) -> np.ndarray:
    post = np.atleast_2d(bayes_posterior(world, x))
    return post.argmax(axis=1)


# ---------------------------------------------------------------------------
# sampling the real world

def sample_real(world: WorldSpec, m: int, seed: int) -> Manifest:
    """Draw m labeled samples from the real distribution.

    Labels are uniform over classes, features from the class's mode
    mixture. Each record's randomness is keyed by its index, so partial
    and parallel generation agree with a single sequential pass.
    """
    if m < 1:
        raise ConfigError("m must be >= 1")
    records = []
    for i in range(m):
        rng = np.random.default_rng(derive_record_seed(seed, "real", i))
        label = int(rng.integers(world.k))
        modes = world.modes[label]
        weights = np.array([mo.weight for mo in modes])
        comp = int(rng.choice(len(modes), p=weights))
        x = modes[comp].mean_vec + world.sigma * rng.standard_normal(world.d)
        records.append(Record(i, encode_vector_ref(x), label))
    return Manifest(world.class_map(), records, global_seed=seed)


# ---------------------------------------------------------------------------
# toy captioner

def synth_caption(world: WorldSpec, x: np.ndarray, quality: str,
                  rng: np.random.Generator | None = None) -> str:
    """Caption a feature vector by its nearest real mode's tokens.

    Scans modes of every class (ties break to the lowest class/mode
    index); quality "none" emits nothing, "coarse" the background token,
    "fine" "{behavior} in {background}". Deterministic given x.
    """
    if quality not in QUALITIES:
        raise ConfigError(f"unknown captioner quality {quality!r}")
    if quality == QUALITY_NONE:
        return ""
    x = np.asarray(x, dtype=float)
    best: Mode | None = None
    best_dist = np.inf
    for c in range(world.k):
        for mode in world.modes[c]:
            dist = float(np.sum((x - mode.mean_vec) ** 2))
            if dist < best_dist:
                best_dist = dist
                best = mode
    assert best is not None
    if quality == QUALITY_COARSE:
        return best.background_token
    return f"{best.behavior_token} in {best.background_token}"


def caption_manifest(world: WorldSpec, manifest: Manifest, quality: str) -> Manifest:
    """Attach toy captions to every record (decoding inline vector refs)."""
    from .dataman import decode_vector_ref
    from dataclasses import replace

    def with_caption(rec: Record) -> Record:
        text = synth_caption(world, decode_vector_ref(rec.sample_ref), quality)
        return replace(rec, caption=text or None)

    return manifest.map_records(with_caption)


# ---------------------------------------------------------------------------
# toy conditional generator

def _candidate_modes(world: WorldSpec, label: int) -> list[Mode]:
    modes = list(world.modes[label])
    poly = world.polysemy[label]
    if poly is not None:
        modes.append(poly.confuser)
    return modes


def _match_mode(world: WorldSpec, text: str, label: int) -> Mode | None:
    """Pick the candidate mode whose tokens best match the prompt text."""
    best: Mode | None = None
    best_score = 0
    for mode in _candidate_modes(world, label):
        score = 0
        if mode.background_token and mode.background_token in text:
            score += 1
        if mode.behavior_token and mode.behavior_token in text:
            score += 1
        if score > best_score:
            best_score = score
            best = mode
    return best


def resolve_prompt_mode(world: WorldSpec, text: str, label: int,
                        rng: np.random.Generator) -> Mode:
    """The generation target for a prompt.

    Token matches win outright (and suppress polysemy). Otherwise the
    confuser fires with its confusion probability, and the remaining mass
    picks a real mode of the class by mixture weight.
    """
    matched = _match_mode(world, text, label)
    if matched is not None:
        return matched
    poly = world.polysemy[label]
    if poly is not None and poly.confusion_prob > 0:
        if rng.random() < poly.confusion_prob:
            return poly.confuser
    modes = world.modes[label]
    weights = np.array([m.weight for m in modes])
    return modes[int(rng.choice(len(modes), p=weights))]


def synth_generate(world: WorldSpec, prompt, knob: GuidanceKnob,
                   rng: np.random.Generator) -> np.ndarray:
    """Sample one synthetic feature vector: N(resolved mode mean, sigma^2/g I)."""
    if not 0 <= prompt.label < world.k:
        raise InvariantError(f"prompt label {prompt.label} outside world classes")
    mode = resolve_prompt_mode(world, prompt.text, prompt.label, rng)
    scale = world.sigma / np.sqrt(knob.g)
    return mode.mean_vec + scale * rng.standard_normal(world.d)


def prompt_conditional(world: WorldSpec, text: str, label: int,
                       knob: GuidanceKnob) -> list[tuple[float, np.ndarray, float]]:
    """Closed-form components of P(s | t): (weight, mean, variance) triples.

    Mirrors resolve_prompt_mode exactly, including the polysemy branch
    as a sub-mixture when no tokens match.
    """
    var = world.sigma ** 2 / knob.g
    matched = _match_mode(world, text, label)
    if matched is not None:
        return [(1.0, matched.mean_vec, var)]
    parts = []
    poly = world.polysemy[label]
    keep = 1.0
    if poly is not None and poly.confusion_prob > 0:
        parts.append((poly.confusion_prob, poly.confuser.mean_vec, var))
        keep = 1.0 - poly.confusion_prob
    for mode in world.modes[label]:
        parts.append((keep * mode.weight, mode.mean_vec, var))
    return parts


def induced_mixture(world: WorldSpec, prompt_set: PromptSet,
                    knob: GuidanceKnob) -> GaussianMixture:
    """The prompt-induced distribution: uniform mixture of per-prompt conditionals."""
    if len(prompt_set) < 1:
        raise InvariantError("prompt set must be non-empty")
    n = len(prompt_set)
    parts = []
    for p in prompt_set.prompts:
        for w, mean, var in prompt_conditional(world, p.text, p.label, knob):
            parts.append((w / n, mean, var))
    return merge_components(parts)


def induced_density(world: WorldSpec, prompt_set: PromptSet, knob: GuidanceKnob,
                    x: np.ndarray):
    return induced_mixture(world, prompt_set, knob).pdf(x)


def world_prompt_set(world: WorldSpec, template: str, per_class: int,
                     quality: str, seed: int) -> PromptSet:
    """Sample real data from the world and build its prompt set."""
    manifest = sample_real(world, per_class * world.k, seed)
    if template == "basic":
        return build_prompt_set(manifest, "basic")
    manifest = caption_manifest(world, manifest, quality)
    return build_prompt_set(manifest, "cip")


# ---------------------------------------------------------------------------
# serialization (same JSON conventions as manifests)

def _mode_to_dict(m: Mode) -> dict:
    return {
        "mean": [float(v) for v in m.mean],
        "weight": m.weight,
        "background": m.background_token,
        "behavior": m.behavior_token,
    }


def _mode_from_dict(obj: dict) -> Mode:
    return Mode(tuple(float(v) for v in obj["mean"]), float(obj["weight"]),
                str(obj["background"]), str(obj["behavior"]))


def world_to_dict(world: WorldSpec) -> dict:
    poly = []
    for p in world.polysemy:
        if p is None:
            poly.append(None)
        else:
            poly.append({"confuser": _mode_to_dict(p.confuser),
                         "confusion_prob": p.confusion_prob})
    return {
        "format_version": 1,
        "k": world.k,
        "d": world.d,
        "sigma": world.sigma,
        "seed": world.seed,
        "class_names": list(world.class_names),
        "modes": [[_mode_to_dict(m) for m in class_modes] for class_modes in world.modes],
        "polysemy": poly,
    }


def world_from_dict(obj: dict) -> WorldSpec:
    try:
        poly = tuple(
            None if p is None
            else Polysemy(_mode_from_dict(p["confuser"]), float(p["confusion_prob"]))
            for p in obj["polysemy"]
        )
        return WorldSpec(
            k=int(obj["k"]),
            d=int(obj["d"]),
            modes=tuple(tuple(_mode_from_dict(m) for m in class_modes)
                        for class_modes in obj["modes"]),
            sigma=float(obj["sigma"]),
            polysemy=poly,
            seed=int(obj.get("seed", 0)),
            class_names=tuple(obj.get("class_names") or ()),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad world spec: {exc}") from exc


def save_world(world: WorldSpec, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(world_to_dict(world), ensure_ascii=False, indent=1) + "\n"
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8", newline="\n")
    os.replace(tmp, path)


def load_world(path: str | Path) -> WorldSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return world_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# world constructors

def _alpha(i: int) -> str:
    """Letters-only index tag; tokens must survive the alphabetic-only
    caption cleanup, so no digits or punctuation."""
    out = ""
    i += 1
    while i:
        i, rem = divmod(i - 1, 26)
        out = chr(ord("a") + rem) + out
    return out


def background_token(c: int, j: int) -> str:
    return f"meadow{_alpha(c)}{_alpha(j)}"


def behavior_token(c: int, j: int) -> str:
    return f"resting{_alpha(c)}{_alpha(j)}"


def confuser_tokens(c: int) -> tuple[str, str]:
    return f"shadowland{_alpha(c)}", f"lurking{_alpha(c)}"


def random_world(seed: int, k: int | None = None, d: int = 2,
                 max_modes: int = 3, allow_polysemy: bool = True) -> WorldSpec:
    """A randomized world for property suites (k <= 5, d <= 2 by default)."""
    rng = np.random.default_rng(derive_seed(seed, "random-world"))
    if k is None:
        k = int(rng.integers(2, 6))
    sigma = float(rng.uniform(0.5, 1.2))
    modes = []
    for c in range(k):
        n_modes = int(rng.integers(1, max_modes + 1))
        raw = rng.uniform(0.5, 2.0, size=n_modes)
        weights = raw / raw.sum()
        class_modes = []
        for j in range(n_modes):
            mean = tuple(float(v) for v in rng.normal(0.0, 3.0, size=d))
            class_modes.append(Mode(mean, float(weights[j]), background_token(c, j), behavior_token(c, j)))
        # exact unit total despite float division
        total = sum(m.weight for m in class_modes)
        class_modes[-1] = Mode(class_modes[-1].mean,
                               class_modes[-1].weight + (1.0 - total),
                               class_modes[-1].background_token,
                               class_modes[-1].behavior_token)
        modes.append(tuple(class_modes))
    poly = []
    for c in range(k):
        if allow_polysemy and rng.random() < 0.5:
            mean = tuple(float(v) for v in rng.normal(0.0, 4.0, size=d))
            confuser = Mode(mean, 1.0, *confuser_tokens(c))
            poly.append(Polysemy(confuser, float(rng.uniform(0.1, 0.6))))
        else:
            poly.append(None)
    return WorldSpec(k=k, d=d, modes=tuple(modes), sigma=sigma,
                     polysemy=tuple(poly), seed=seed)


def make_polysemy_world(sigma: float = 0.6) -> WorldSpec:
    """The designated polysemy benchmark: k=4, 3 modes/class, p=0.5.

    Each class's confuser sits on the next class's primary mode, so
    caption-free prompts inject heavy cross-class label noise while
    token-carrying prompts generate cleanly.
    """
    k, radius, spread = 4, 4.0, 1.1
    centers = [
        np.array([radius * np.cos(2 * np.pi * c / k),
                  radius * np.sin(2 * np.pi * c / k)])
        for c in range(k)
    ]
    offsets = [np.array([0.0, 0.0]), np.array([spread, 0.4]),
               np.array([-0.5, -spread])]
    weights = [0.5, 0.3, 0.2]
    modes = []
    for c in range(k):
        class_modes = tuple(
            Mode(tuple(float(v) for v in centers[c] + offsets[j]), weights[j],
                 background_token(c, j), behavior_token(c, j))
            for j in range(3)
        )
        modes.append(class_modes)
    poly = tuple(
        Polysemy(Mode(tuple(float(v) for v in centers[(c + 1) % k]), 1.0,
                      *confuser_tokens(c)), 0.5)
        for c in range(k)
    )
    return WorldSpec(k=k, d=2, modes=tuple(modes), sigma=sigma,
                     polysemy=poly, seed=0,
                     class_names=tuple(f"class-{c}" for c in range(k)))


def make_quality_world(sigma: float = 0.6) -> WorldSpec:
    """Captioner-quality benchmark: both modes of a class share one
    background (coarse captions cannot tell them apart and collapse onto
    the first), behaviors differ (fine captions resolve exactly), and
    caption-free prompts additionally face polysemy."""
    k, radius = 3, 4.0
    centers = [
        np.array([radius * np.cos(2 * np.pi * c / k),
                  radius * np.sin(2 * np.pi * c / k)])
        for c in range(k)
    ]
    offsets = [np.array([0.0, 0.0]), np.array([1.6, 0.9])]
    weights = [0.6, 0.4]
    modes = []
    for c in range(k):
        shared_bg = background_token(c, 0)
        class_modes = tuple(
            Mode(tuple(float(v) for v in centers[c] + offsets[j]), weights[j],
                 shared_bg, behavior_token(c, j))
            for j in range(2)
        )
        modes.append(class_modes)
    poly = tuple(
        Polysemy(Mode(tuple(float(v) for v in centers[(c + 1) % k]), 1.0,
                      *confuser_tokens(c)), 0.4)
        for c in range(k)
    )
    return WorldSpec(k=k, d=2, modes=tuple(modes), sigma=sigma,
                     polysemy=poly, seed=0)


def make_sweep_world(seed: int) -> WorldSpec:
    """Worlds for guidance-knob curves, built so accuracy dips at both ends.

    Each class has a dominant core mode plus a light (15%) mode sitting at
    the midpoint toward the next class. At low knobs the in-gap mass
    spreads at full variance into the neighbour's territory, so finite
    training draws place the boundary noisily; at high knobs the fitted
    boundary converges to the shrunk-variance optimum, whose weight-ratio
    offset differs from the real-variance one. Seeds rotate and jitter a
    fixed balanced geometry.
    """
    rng = np.random.default_rng(derive_seed(seed, "sweep-world"))
    k, sigma, radius, w_major = 3, 1.0, 1.9, 0.85
    angle0 = float(rng.uniform(0, 2 * np.pi))
    centers = [
        np.array([radius * np.cos(angle0 + 2 * np.pi * c / k),
                  radius * np.sin(angle0 + 2 * np.pi * c / k)])
        + rng.normal(0.0, 0.05, 2)
        for c in range(k)
    ]
    modes = []
    for c in range(k):
        center = centers[c]
        minor = 0.5 * (center + centers[(c + 1) % k]) + rng.normal(0.0, 0.08, 2)
        modes.append((
            Mode(tuple(float(v) for v in center), w_major,
                 background_token(c, 0), behavior_token(c, 0)),
            Mode(tuple(float(v) for v in minor), 1.0 - w_major,
                 background_token(c, 1), behavior_token(c, 1)),
        ))
    return WorldSpec(k=k, d=2, modes=tuple(modes), sigma=sigma,
                     polysemy=(None,) * k, seed=seed)
