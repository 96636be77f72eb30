"""Induced-distribution distance estimation and empirical risk-bound checks.

The distance here is the integrated absolute density gap
d(P, Q) = integral |p(x) - q(x)| dx, i.e. twice the total variation, with
range [0, 2]. That unhalved form is what the additive term of the risk
bound uses, so the bound check keeps it. "Expectation over x" is read as
integration with respect to the reference measure, the only reading under
which the bound's derivation goes through.

Two estimators cross-check each other: a trapezoidal grid oracle (d <= 2,
bounds automatically covering every component's mean +/- 8 sigma) and a
Monte-Carlo estimator that samples the balanced mixture (p+q)/2 and
averages 2|p-q|/(p+q), which keeps the integrand bounded where both
densities are tiny.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvariantError
from .promptkit import PromptSet
from .seeding import derive_seed
from .synthworld import (
    GaussianMixture,
    GuidanceKnob,
    WorldSpec,
    induced_mixture,
    random_world,
    true_mixture,
    world_prompt_set,
)
from .trainer import (
    TrainConfig,
    eval_on_mixture,
    eval_on_world,
    train,
)


class DimensionError(ConfigError):
    kind = "dimension-too-high"


class GridCoverageError(InvariantError):
    kind = "grid-coverage-insufficient"


@dataclass
class InducedDistribution:
    """Uniform mixture of per-prompt conditionals, flattened to components."""

    mixture: GaussianMixture
    knob: GuidanceKnob
    n_prompts: int
    prompt_set: PromptSet | None = field(default=None, repr=False)

    @classmethod
    def from_prompts(cls, world: WorldSpec, prompt_set: PromptSet,
                     knob: GuidanceKnob) -> "InducedDistribution":
        return cls(induced_mixture(world, prompt_set, knob), knob,
                   len(prompt_set), prompt_set)

    @classmethod
    def from_components(cls, means, variances, weights,
                        knob: GuidanceKnob = GuidanceKnob(1.0)) -> "InducedDistribution":
        mix = GaussianMixture(np.asarray(means, dtype=float),
                              np.asarray(variances, dtype=float),
                              np.asarray(weights, dtype=float))
        return cls(mix, knob, len(mix.weights))

    def pdf(self, x):
        return self.mixture.pdf(x)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.mixture.sample(n, rng)

    def shifted(self, delta) -> "InducedDistribution":
        return InducedDistribution(self.mixture.shifted(delta), self.knob,
                                   self.n_prompts)


@dataclass(frozen=True)
class GridSpec:
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    points: int = 201


@dataclass(frozen=True)
class DistanceEstimate:
    value: float
    method: str
    tolerance: float
    std_error: float = 0.0
    n_mc: int = 0
    grid_points: int = 0

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "method": self.method,
            "tolerance": self.tolerance,
            "std_error": self.std_error,
            "n_mc": self.n_mc,
            "grid_points": self.grid_points,
        }


@dataclass(frozen=True)
class BoundReport:
    r_d: float
    r_dc: float
    distance: float
    slack: float
    se_r_d: float
    se_r_dc: float
    distance_tolerance: float
    sigma_total: float

    def to_dict(self) -> dict:
        return {
            "r_d": self.r_d,
            "r_dc": self.r_dc,
            "distance": self.distance,
            "slack": self.slack,
            "se_r_d": self.se_r_d,
            "se_r_dc": self.se_r_dc,
            "distance_tolerance": self.distance_tolerance,
            "sigma_total": self.sigma_total,
        }

    def holds(self, n_sigmas: float = 3.0) -> bool:
        return self.slack >= -n_sigmas * self.sigma_total


def _as_mixture(dist) -> GaussianMixture:
    if isinstance(dist, GaussianMixture):
        return dist
    if isinstance(dist, InducedDistribution):
        return dist.mixture
    if isinstance(dist, WorldSpec):
        return true_mixture(dist)
    raise ConfigError(f"cannot interpret {type(dist).__name__} as a distribution")


def auto_grid(p: GaussianMixture, q: GaussianMixture, points: int = 201) -> GridSpec:
    lo_p, hi_p = p.bounds()
    lo_q, hi_q = q.bounds()
    lo = np.minimum(lo_p, lo_q)
    hi = np.maximum(hi_p, hi_q)
    return GridSpec(tuple(float(v) for v in lo), tuple(float(v) for v in hi), points)


def _grid_value(p: GaussianMixture, q: GaussianMixture, axes: list[np.ndarray]
                ) -> tuple[float, float, float]:
    """(integral |p-q|, mass of p, mass of q) by trapezoidal quadrature."""
    if len(axes) == 1:
        pts = axes[0][:, None]
        pv, qv = p.pdf(pts), q.pdf(pts)
        return (
            float(np.trapezoid(np.abs(pv - qv), axes[0])),
            float(np.trapezoid(pv, axes[0])),
            float(np.trapezoid(qv, axes[0])),
        )
    xx, yy = np.meshgrid(axes[0], axes[1], indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    pv = p.pdf(pts).reshape(xx.shape)
    qv = q.pdf(pts).reshape(xx.shape)

    def integrate(values):
        inner = np.trapezoid(values, axes[1], axis=1)
        return float(np.trapezoid(inner, axes[0]))

    return integrate(np.abs(pv - qv)), integrate(pv), integrate(qv)


def distance_grid(p_dist, q_dist, grid: GridSpec | None = None) -> DistanceEstimate:
    """Grid-oracle distance for d <= 2.

    The reported tolerance is the change under halving the grid spacing;
    the grid must capture at least 1 - 1e-4 of both masses.
    """
    p, q = _as_mixture(p_dist), _as_mixture(q_dist)
    if p.d != q.d:
        raise InvariantError("distributions have different dimensions")
    if p.d > 2:
        raise DimensionError(f"grid oracle supports d <= 2, got d={p.d}")
    grid = grid or auto_grid(p, q)
    points = grid.points if grid.points % 2 == 1 else grid.points + 1
    axes = [np.linspace(grid.lo[i], grid.hi[i], points) for i in range(p.d)]
    value, mass_p, mass_q = _grid_value(p, q, axes)
    if mass_p < 1 - 1e-4 or mass_q < 1 - 1e-4:
        raise GridCoverageError(
            f"grid covers masses {mass_p:.6f} / {mass_q:.6f}, need >= {1 - 1e-4}"
        )
    coarse_axes = [ax[::2] for ax in axes]
    coarse, _, _ = _grid_value(p, q, coarse_axes)
    return DistanceEstimate(value, "grid", abs(value - coarse),
                            grid_points=points)


def distance_mc(p_dist, q_dist, n_mc: int, seed: int) -> DistanceEstimate:
    """Monte-Carlo distance: x ~ (p+q)/2, average 2|p-q|/(p+q)."""
    if n_mc < 1:
        raise ConfigError("n_mc must be >= 1")
    p, q = _as_mixture(p_dist), _as_mixture(q_dist)
    rng = np.random.default_rng(seed)
    from_p = rng.random(n_mc) < 0.5
    n_p = int(from_p.sum())
    xs = np.empty((n_mc, p.d))
    if n_p:
        xs[from_p] = p.sample(n_p, rng)
    if n_mc - n_p:
        xs[~from_p] = q.sample(n_mc - n_p, rng)
    pv, qv = p.pdf(xs), q.pdf(xs)
    total = pv + qv
    h = np.where(total > 0, 2.0 * np.abs(pv - qv) / np.where(total > 0, total, 1.0), 0.0)
    value = float(h.mean())
    se = float(h.std(ddof=1) / np.sqrt(n_mc)) if n_mc > 1 else 0.0
    return DistanceEstimate(value, "monte-carlo", 3.0 * se, std_error=se, n_mc=n_mc)


def distance_for(world: WorldSpec, induced: InducedDistribution, n_mc: int,
                 seed: int) -> DistanceEstimate:
    """Grid oracle when the dimension allows it, Monte-Carlo otherwise."""
    if world.d <= 2:
        return distance_grid(world, induced)
    return distance_mc(world, induced, n_mc, seed)


def check_bound(world: WorldSpec, prompt_set: PromptSet, knob: GuidanceKnob,
                train_config: TrainConfig, n_mc: int, seed: int,
                n_train: int | None = None) -> BoundReport:
    """Train on a draw from the induced distribution and compare risks.

    Both sides label with the shared Bayes-argmax labeler, enforcing the
    equal-labeling premise the bound assumes.
    """
    induced = InducedDistribution.from_prompts(world, prompt_set, knob)
    n_train = n_train or len(prompt_set)
    rng = np.random.default_rng(derive_seed(seed, "bound-train-draw"))
    X_s = induced.sample(n_train, rng)
    from .synthworld import bayes_argmax

    y_s = bayes_argmax(world, X_s)
    clf = train((X_s, y_s), train_config, derive_seed(seed, "bound-train"),
                k=world.k)
    r_d = eval_on_world(clf, world, n_mc, derive_seed(seed, "bound-eval-real"),
                        labeler="bayes-argmax")
    r_dc = eval_on_mixture(clf, induced.mixture, world, n_mc,
                           derive_seed(seed, "bound-eval-induced"),
                           labeler="bayes-argmax")
    dist = distance_for(world, induced, n_mc, derive_seed(seed, "bound-distance"))
    slack = r_dc.risk + dist.value - r_d.risk
    sigma_total = float(np.sqrt(r_d.std_error ** 2 + r_dc.std_error ** 2)
                        + dist.tolerance)
    return BoundReport(r_d.risk, r_dc.risk, dist.value, slack,
                       r_d.std_error, r_dc.std_error, dist.tolerance, sigma_total)


def decompose_bound(report: BoundReport) -> dict[str, float]:
    """The two upper-bound contributions, for prompt-set comparisons."""
    return {"complexity_term": report.r_dc, "distance_term": report.distance}


# ---------------------------------------------------------------------------
# randomized verification suite

_SWEEP_KNOBS = (1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 7.5)


def random_bound_case(seed: int, max_prompts: int = 200
                      ) -> tuple[WorldSpec, PromptSet, GuidanceKnob]:
    """One randomized configuration: world, prompt set, knob."""
    rng = np.random.default_rng(derive_seed(seed, "bound-case"))
    world = random_world(seed, d=2)
    template = "basic" if rng.random() < 0.5 else "cip"
    quality = ("coarse", "fine")[int(rng.integers(2))]
    per_class = int(rng.integers(5, max(6, max_prompts // world.k + 1)))
    per_class = max(1, min(per_class, max_prompts // world.k))
    prompt_set = world_prompt_set(world, template, per_class, quality,
                                  derive_seed(seed, "bound-prompts"))
    knob = GuidanceKnob(float(_SWEEP_KNOBS[int(rng.integers(len(_SWEEP_KNOBS)))]))
    return world, prompt_set, knob


def verify_bound_suite(n_configs: int, seed: int, n_mc: int = 50_000,
                       train_config: TrainConfig | None = None,
                       n_sigmas: float = 3.0) -> dict:
    """Run the bound check over randomized configurations.

    Returns per-config reports plus the fraction for which the inequality
    holds within n_sigmas of combined estimation error.
    """
    cfg = train_config or TrainConfig(epochs=60, batch_size=64)
    reports = []
    holds = 0
    for i in range(n_configs):
        case_seed = derive_seed(seed, "bound-suite", i)
        world, prompt_set, knob = random_bound_case(case_seed)
        report = check_bound(world, prompt_set, knob, cfg, n_mc, case_seed)
        reports.append(report)
        holds += int(report.holds(n_sigmas))
    return {
        "n_configs": n_configs,
        "n_holds": holds,
        "hold_fraction": holds / n_configs if n_configs else 1.0,
        "n_sigmas": n_sigmas,
        "reports": [r.to_dict() for r in reports],
    }
