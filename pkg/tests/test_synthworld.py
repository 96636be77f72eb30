from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from cip.dataman import decode_vector_ref
from cip.errors import ConfigError, InvariantError
from cip.promptkit import Prompt, basic_prompt, cip_prompt
from cip.seeding import derive_seed
from cip.synthworld import (
    GuidanceKnob,
    Mode,
    Polysemy,
    WorldSpec,
    bayes_posterior,
    caption_manifest,
    induced_density,
    induced_mixture,
    load_world,
    make_polysemy_world,
    random_world,
    resolve_prompt_mode,
    sample_real,
    save_world,
    synth_caption,
    synth_generate,
    true_density,
    world_from_dict,
    world_prompt_set,
    world_to_dict,
)


def single_mode_world(mean=(0.0,), sigma=1.0):
    return WorldSpec(k=1, d=len(mean),
                     modes=((Mode(tuple(mean), 1.0, "meadowaa", "restingaa"),),),
                     sigma=sigma, polysemy=(None,))


def two_class_world(separation=4.0, sigma=1.0, p=0.0, d=1):
    """Two single-mode classes at +/- separation/2; optional confusers sit on
    the opposite class's mode."""
    lo = tuple([-separation / 2.0] + [0.0] * (d - 1))
    hi = tuple([separation / 2.0] + [0.0] * (d - 1))
    modes = (
        (Mode(lo, 1.0, "meadowaa", "restingaa"),),
        (Mode(hi, 1.0, "meadowba", "restingba"),),
    )
    poly = (None, None)
    if p > 0:
        poly = (
            Polysemy(Mode(hi, 1.0, "shadowlanda", "lurkinga"), p),
            Polysemy(Mode(lo, 1.0, "shadowlandb", "lurkingb"), p),
        )
    return WorldSpec(k=2, d=d, modes=modes, sigma=sigma, polysemy=poly)


class TestWorldSpec:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(InvariantError):
            WorldSpec(k=1, d=1,
                      modes=((Mode((0.0,), 0.7, "a", "b"),),),
                      sigma=1.0, polysemy=(None,))

    def test_confusion_prob_range(self):
        with pytest.raises(InvariantError):
            Polysemy(Mode((0.0,), 1.0, "a", "b"), 1.5)

    def test_knob_floor(self):
        with pytest.raises(InvariantError):
            GuidanceKnob(0.5)

    def test_serialization_round_trip(self, tmp_path):
        world = random_world(3)
        assert world_from_dict(world_to_dict(world)) == world
        save_world(world, tmp_path / "w.json")
        assert load_world(tmp_path / "w.json") == world


class TestTrueDensity:
    def test_standard_normal_peak(self):
        world = single_mode_world()
        assert true_density(world, np.array([0.0])) == pytest.approx(
            1.0 / np.sqrt(2 * np.pi), abs=1e-9
        )
        assert true_density(world, np.array([0.0])) == pytest.approx(0.398942, abs=1e-6)

    def test_integrates_to_one_on_grid(self):
        world = random_world(11, d=1)
        xs = np.linspace(-40, 40, 4001)
        mass = np.trapezoid(true_density(world, xs[:, None]), xs)
        assert mass == pytest.approx(1.0, abs=1e-3)

    def test_integrates_to_one_2d(self):
        world = random_world(12, d=2)
        xs = np.linspace(-25, 25, 301)
        grid = np.column_stack([g.ravel() for g in np.meshgrid(xs, xs, indexing="ij")])
        vals = true_density(world, grid).reshape(301, 301)
        mass = np.trapezoid(np.trapezoid(vals, xs, axis=1), xs)
        assert mass == pytest.approx(1.0, abs=1e-3)

    def test_symmetry(self):
        world = two_class_world()
        for x in (0.3, 1.7, 2.5):
            assert true_density(world, np.array([x])) == pytest.approx(
                true_density(world, np.array([-x])), abs=1e-15
            )


class TestSampleReal:
    def test_m_zero_rejected(self):
        with pytest.raises(ConfigError):
            sample_real(single_mode_world(), 0, 1)

    def test_class_frequencies(self):
        world = two_class_world()
        manifest = sample_real(world, 10_000, 5)
        freq = np.mean([r.label for r in manifest.records])
        assert abs(freq - 0.5) < 0.02

    def test_sample_mean_clt(self):
        world = single_mode_world(mean=(3.0,), sigma=0.8)
        manifest = sample_real(world, 4000, 7)
        xs = np.array([decode_vector_ref(r.sample_ref)[0] for r in manifest.records])
        assert abs(xs.mean() - 3.0) < 3 * 0.8 / np.sqrt(len(xs))

    def test_prefix_stability(self):
        world = two_class_world()
        m1 = sample_real(world, 10, 9)
        m2 = sample_real(world, 30, 9)
        assert m2.records[:10] == m1.records


class TestCaptioner:
    def test_exact_mode_mean_fine(self):
        world = two_class_world()
        text = synth_caption(world, np.array([2.0]), "fine")
        assert text == "restingba in meadowba"

    def test_quality_none_empty(self):
        assert synth_caption(two_class_world(), np.array([2.0]), "none") == ""

    def test_quality_coarse_background_only(self):
        assert synth_caption(two_class_world(), np.array([2.0]), "coarse") == "meadowba"

    def test_equidistant_tie_breaks_low(self):
        world = two_class_world(separation=4.0)
        assert synth_caption(world, np.array([0.0]), "coarse") == "meadowaa"

    def test_caption_manifest_sets_captions(self):
        world = two_class_world()
        manifest = caption_manifest(world, sample_real(world, 20, 3), "fine")
        assert all(r.caption for r in manifest.records)


class TestGenerate:
    def test_high_knob_collapses_variance(self):
        world = two_class_world()
        prompt = Prompt(cip_prompt("class-1", "restingba in meadowba"), 1, "cip")
        rng = np.random.default_rng(0)
        xs = np.array([
            synth_generate(world, prompt, GuidanceKnob(1e6), rng) for _ in range(200)
        ])
        assert np.allclose(xs.mean(axis=0), [2.0], atol=0.01)
        assert xs.std() < 0.01

    def test_tokens_override_polysemy(self):
        world = two_class_world(p=0.9)
        prompt = Prompt(cip_prompt("class-0", "restingaa in meadowaa"), 0, "cip")
        rng = np.random.default_rng(1)
        for _ in range(2000):
            mode = resolve_prompt_mode(world, prompt.text, 0, rng)
            assert mode.background_token == "meadowaa"

    def test_basic_prompt_confuser_frequency(self):
        world = two_class_world(p=0.5)
        text = basic_prompt("class-0")
        rng = np.random.default_rng(2)
        hits = sum(
            resolve_prompt_mode(world, text, 0, rng).background_token == "shadowlanda"
            for _ in range(10_000)
        )
        assert abs(hits / 10_000 - 0.5) < 0.02

    def test_invalid_label_rejected(self):
        world = two_class_world()
        with pytest.raises(InvariantError):
            synth_generate(world, Prompt("A photo of x", 5, "basic"),
                           GuidanceKnob(1.0), np.random.default_rng(0))

    def test_token_faithfulness_chi_square(self):
        # histogram of token-resolved draws vs the closed-form component
        world = two_class_world(sigma=0.7)
        g = 2.0
        prompt = Prompt(cip_prompt("class-1", "restingba in meadowba"), 1, "cip")
        rng = np.random.default_rng(3)
        xs = np.array([
            synth_generate(world, prompt, GuidanceKnob(g), rng)[0]
            for _ in range(4000)
        ])
        scale = 0.7 / np.sqrt(g)
        edges = stats.norm.ppf(np.linspace(0.0, 1.0, 21)[1:-1], loc=2.0, scale=scale)
        counts, _ = np.histogram(xs, bins=np.concatenate([[-np.inf], edges, [np.inf]]))
        chi2 = ((counts - 200.0) ** 2 / 200.0).sum()
        p_value = stats.chi2.sf(chi2, df=19)
        assert p_value > 0.01


class TestInducedDensity:
    def test_duplicated_prompt_idempotent(self):
        world = two_class_world()
        t = Prompt(cip_prompt("class-0", "restingaa in meadowaa"), 0, "cip")
        from cip.promptkit import PromptSet

        one = PromptSet((t,), world.class_map())
        two = PromptSet((t, t), world.class_map())
        xs = np.random.default_rng(0).normal(0, 3, size=(50, 1))
        d1 = induced_density(world, one, GuidanceKnob(2.0), xs)
        d2 = induced_density(world, two, GuidanceKnob(2.0), xs)
        assert np.allclose(d1, d2, atol=1e-15)

    def test_singleton_matches_gaussian_formula(self):
        world = two_class_world(sigma=0.9)
        t = Prompt(cip_prompt("class-0", "restingaa in meadowaa"), 0, "cip")
        from cip.promptkit import PromptSet

        ps = PromptSet((t,), world.class_map())
        xs = np.linspace(-5, 1, 40)[:, None]
        got = induced_density(world, ps, GuidanceKnob(1.0), xs)
        want = np.exp(-0.5 * (xs[:, 0] + 2.0) ** 2 / 0.81) / np.sqrt(2 * np.pi * 0.81)
        assert np.allclose(got, want, atol=1e-12)

    def test_two_prompts_pointwise_average(self):
        world = two_class_world()
        from cip.promptkit import PromptSet

        ta = Prompt(cip_prompt("class-0", "restingaa in meadowaa"), 0, "cip")
        tb = Prompt(cip_prompt("class-1", "restingba in meadowba"), 1, "cip")
        pair = PromptSet((ta, tb), world.class_map())
        only_a = PromptSet((ta,), world.class_map())
        only_b = PromptSet((tb,), world.class_map())
        xs = np.random.default_rng(1).normal(0, 3, size=(100, 1))
        knob = GuidanceKnob(1.5)
        avg = 0.5 * (induced_density(world, only_a, knob, xs)
                     + induced_density(world, only_b, knob, xs))
        assert np.allclose(induced_density(world, pair, knob, xs), avg, atol=1e-12)

    def test_polysemy_weights_in_conditional(self):
        from cip.synthworld import prompt_conditional

        world = two_class_world(p=0.3)
        # basic prompt: confuser carries exactly p
        parts = prompt_conditional(world, basic_prompt("class-0"), 0, GuidanceKnob(1.0))
        confuser_w = [w for w, mean, _ in parts if mean[0] == 2.0]
        assert confuser_w == [pytest.approx(0.3)]
        # token prompt: no confuser component at all
        parts = prompt_conditional(world, cip_prompt("class-0", "meadowaa"), 0,
                                   GuidanceKnob(1.0))
        assert len(parts) == 1 and parts[0][1][0] == -2.0

    def test_induced_mixture_drops_confuser_under_cip(self):
        world = make_polysemy_world()
        ps = world_prompt_set(world, "cip", 10, "fine", 5)
        mix = induced_mixture(world, ps, GuidanceKnob(1.5))
        confuser_means = {tuple(p.confuser.mean) for p in world.polysemy if p}
        real_means = {tuple(m.mean) for modes in world.modes for m in modes}
        for mean in mix.means:
            t = tuple(float(v) for v in mean)
            assert t in real_means
            assert t not in confuser_means - real_means


class TestBayes:
    def test_far_mode_confident(self):
        world = two_class_world(separation=20.0)  # 10 sigma from the other class
        post = bayes_posterior(world, np.array([-10.0]))
        assert post[0] >= 0.999

    def test_identical_classes_uniform(self):
        modes = (
            (Mode((0.0,), 1.0, "a", "b"),),
            (Mode((0.0,), 1.0, "c", "d"),),
        )
        world = WorldSpec(k=2, d=1, modes=modes, sigma=1.0, polysemy=(None, None))
        post = bayes_posterior(world, np.array([[0.7], [-2.0]]))
        assert np.allclose(post, 0.5, atol=1e-12)

    def test_normalization(self):
        world = random_world(21, d=2)
        xs = np.random.default_rng(0).normal(0, 4, size=(200, 2))
        post = bayes_posterior(world, xs)
        assert np.allclose(post.sum(axis=1), 1.0, atol=1e-12)


class TestMonotonicityByConstruction:
    def test_distance_ordering_fine_coarse_none(self):
        # two modes per class sharing a background (coarse collapses them),
        # plus polysemy that only caption-free prompts suffer
        from cip.theory import InducedDistribution, distance_grid

        modes = (
            (Mode((-3.0,), 0.65, "meadowaa", "restingaa"),
             Mode((-1.0,), 0.35, "meadowaa", "wanderingaa")),
            (Mode((3.0,), 0.65, "meadowba", "restingba"),
             Mode((1.0,), 0.35, "meadowba", "wanderingba")),
        )
        poly = (
            Polysemy(Mode((9.0,), 1.0, "shadowlanda", "lurkinga"), 0.4),
            Polysemy(Mode((-9.0,), 1.0, "shadowlandb", "lurkingb"), 0.4),
        )
        world = WorldSpec(k=2, d=1, modes=modes, sigma=0.6, polysemy=poly)
        knob = GuidanceKnob(1.0)
        dist = {}
        for quality, template in (("fine", "cip"), ("coarse", "cip"),
                                  ("none", "basic")):
            ps = world_prompt_set(world, template, 80, quality,
                                  derive_seed(4, quality))
            induced = InducedDistribution.from_prompts(world, ps, knob)
            dist[quality] = distance_grid(world, induced).value
        assert dist["fine"] <= dist["coarse"] + 1e-3
        assert dist["coarse"] <= dist["none"] + 1e-3
