import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from op3d.errors import (
    EmptyClassSet,
    EmptyTemplateBank,
    NoTrials,
    TimestepOutOfRange,
)
from op3d.match import (
    DenoiseTrial,
    MatcherHandle,
    MatchScore,
    NoiseSchedule,
    PromptTemplate,
    TemplateBank,
    build_prompt,
    class_probabilities,
    mask_iou,
    matching_score,
    noised_feature,
    noised_from_alpha_bar,
    reference_similarity,
    score,
    similarity_scores,
)
from op3d.project import GrayImage, ProjectionStyle


class TestPrompts:
    def test_edge_prompt(self):
        assert build_prompt(ProjectionStyle.EDGE, "chair") == "one edge map of one standalone chair"

    def test_render_prompt(self):
        assert build_prompt(ProjectionStyle.RENDER, "table") == "one model of table in linear composition"

    def test_depth_prompt(self):
        assert build_prompt(ProjectionStyle.DEPTH, "bed") == "one line-drawn bed"

    def test_slot_must_appear_once(self):
        with pytest.raises(ValueError):
            PromptTemplate(ProjectionStyle.DEPTH, "no slot here")
        with pytest.raises(ValueError):
            PromptTemplate(ProjectionStyle.DEPTH, "[n_c] and [n_c]")

    def test_empty_class_rejected(self):
        with pytest.raises(ValueError):
            build_prompt(ProjectionStyle.DEPTH, "")


class TestNoiseSchedule:
    def test_linear_invariants(self):
        s = NoiseSchedule.linear(600)
        assert s.T == 600
        assert np.all(s.betas > 0) and np.all(s.betas < 1)
        assert np.all(np.diff(s.alpha_bars) < 0)
        assert s.alpha_bars[-1] > 0

    def test_alpha_bar_product_expansion_oracle(self):
        s = NoiseSchedule.linear(1000)
        b1, b2 = s.betas[0], s.betas[1]
        assert b1 == pytest.approx(1e-4)
        # direct product of the first two alphas
        assert s.alpha_bars[1] == pytest.approx((1 - b1) * (1 - b2), rel=1e-15)

    def test_bad_betas_rejected(self):
        with pytest.raises(ValueError):
            NoiseSchedule(np.array([0.0, 0.1]))
        with pytest.raises(ValueError):
            NoiseSchedule(np.array([0.5, 1.0]))


class TestNoisedFeature:
    def test_no_noise_endpoint_exact(self):
        f0 = np.array([1.0, -2.0, 3.0])
        eps = np.array([9.0, 9.0, 9.0])
        out = noised_from_alpha_bar(f0, 1.0, eps)
        assert np.array_equal(out, f0)

    def test_pure_noise_endpoint_exact(self):
        f0 = np.array([1.0, -2.0, 3.0])
        eps = np.array([0.5, 0.25, -0.125])
        out = noised_from_alpha_bar(f0, 0.0, eps)
        assert np.array_equal(out, eps)

    def test_schedule_indexing_matches_product(self):
        s = NoiseSchedule.linear(1000)
        f0 = np.array([2.0])
        eps = np.array([-1.0])
        expected_ab = (1 - s.betas[0]) * (1 - s.betas[1])
        out = noised_feature(f0, 2, eps, s)
        manual = math.sqrt(expected_ab) * f0 + math.sqrt(1 - expected_ab) * eps
        assert np.allclose(out, manual, rtol=1e-15)

    def test_timestep_bounds(self):
        s = NoiseSchedule.linear(10)
        f0, eps = np.zeros(2), np.zeros(2)
        with pytest.raises(TimestepOutOfRange):
            noised_feature(f0, 0, eps, s)
        with pytest.raises(TimestepOutOfRange):
            noised_feature(f0, 11, eps, s)


class TestMatchingScore:
    def test_perfect_denoiser(self):
        trials = [DenoiseTrial.from_vectors(3, np.ones(4), np.ones(4)) for _ in range(5)]
        assert matching_score(trials).value == 1.0

    def test_single_term(self):
        assert matching_score([DenoiseTrial(1, np.zeros(2), np.zeros(2), 0.7)]).value == pytest.approx(math.exp(-0.7))

    def test_mean_then_exp(self):
        trials = [
            DenoiseTrial(1, np.zeros(2), np.zeros(2), 1.0),
            DenoiseTrial(2, np.zeros(2), np.zeros(2), 3.0),
        ]
        assert matching_score(trials).value == pytest.approx(math.exp(-2.0), abs=1e-15)

    def test_no_trials(self):
        with pytest.raises(NoTrials):
            matching_score([])

    @settings(max_examples=40, deadline=None)
    @given(
        errs=st.lists(st.floats(0.0, 20.0), min_size=1, max_size=8),
        bump=st.floats(0.01, 5.0),
        idx=st.integers(0, 7),
    )
    def test_monotone_decreasing_in_any_trial_error(self, errs, bump, idx):
        worse = list(errs)
        worse[idx % len(errs)] += bump
        assert matching_score(errs).value > matching_score(worse).value


class TestClassProbabilities:
    def test_uniform(self):
        probs = class_probabilities({c: MatchScore(0.5) for c in "abcd"})
        assert all(p == pytest.approx(0.25) for p in probs.values())

    def test_two_class_normalization_arithmetic(self):
        probs = class_probabilities({"a": 1.0, "b": math.exp(-1)})
        z = 1 + math.exp(-1)
        assert probs["a"] == pytest.approx(1 / z, abs=1e-12)
        assert probs["b"] == pytest.approx(math.exp(-1) / z, abs=1e-12)
        assert probs["a"] == pytest.approx(0.7311, abs=5e-5)
        assert probs["b"] == pytest.approx(0.2689, abs=5e-5)

    def test_single_class(self):
        assert class_probabilities({"only": MatchScore(0.123)}) == {"only": 1.0}

    def test_sums_to_one(self):
        rng = np.random.default_rng(0)
        scores = {f"c{i}": float(v) for i, v in enumerate(rng.random(9) + 1e-3)}
        assert sum(class_probabilities(scores).values()) == pytest.approx(1.0, abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(EmptyClassSet):
            class_probabilities({})

    @settings(max_examples=30, deadline=None)
    @given(scale=st.floats(1e-3, 1e3), seed=st.integers(0, 100))
    def test_scale_invariance(self, scale, seed):
        rng = np.random.default_rng(seed)
        scores = {f"c{i}": float(v) for i, v in enumerate(rng.random(5) + 0.01)}
        scaled = {c: v * scale for c, v in scores.items()}
        p0 = class_probabilities(scores)
        p1 = class_probabilities(scaled)
        for c in scores:
            assert p0[c] == pytest.approx(p1[c], rel=1e-9)
        assert max(p0, key=p0.get) == max(p1, key=p1.get)


class TestSimilarityScores:
    def test_max_shift_keeps_probabilities(self):
        sims = {"a": 0.31, "b": 0.27, "c": 0.05}
        scores = similarity_scores(sims, tau=0.01)
        assert scores["a"].value == 1.0  # the max maps to exp(0)
        probs = class_probabilities(scores)
        assert max(probs, key=probs.get) == "a"
        assert sum(probs.values()) == pytest.approx(1.0, abs=1e-12)

    def test_no_underflow_for_wide_gaps(self):
        scores = similarity_scores({"a": 1.0, "b": -1.0}, tau=0.01)
        assert scores["b"].value > 0.0


def _square_mask(size, lo, hi):
    m = np.zeros((size, size))
    m[lo:hi, lo:hi] = 1.0
    return m


class TestReferenceSimilarity:
    def test_identical_masks_score_one(self):
        m = _square_mask(32, 8, 24)
        assert reference_similarity(GrayImage(m), [m > 0]).value == 1.0

    def test_disjoint_masks_formula_endpoint(self):
        a = _square_mask(32, 0, 8)
        b = _square_mask(32, 20, 30) > 0
        assert reference_similarity(GrayImage(a), [b]).value == pytest.approx(math.exp(-1.0))

    def test_best_template_wins(self):
        img = GrayImage(_square_mask(32, 8, 24))
        square = _square_mask(32, 9, 25) > 0
        tri = np.tril(np.ones((32, 32))) > 0
        s_square = reference_similarity(img, [square])
        s_tri = reference_similarity(img, [tri])
        assert s_square.value > s_tri.value
        both = reference_similarity(img, [tri, square])
        assert both.value == s_square.value

    def test_empty_bank_entry(self):
        with pytest.raises(EmptyTemplateBank):
            reference_similarity(GrayImage(_square_mask(16, 2, 6)), [])

    def test_iou_direct_computation(self):
        a = _square_mask(16, 0, 8) > 0   # 8x16 region? no: rows 0..8, cols 0..8
        b = _square_mask(16, 4, 12) > 0
        # overlap is a 4x4 square, union is 2*64 - 16
        assert mask_iou(a, b) == pytest.approx(16 / (128 - 16))


class TestHandleScore:
    def test_self_template_scores_one(self, toy_bank, toy_cam):
        handle = MatcherHandle.reference(toy_bank)
        cls = toy_bank.classes[0]
        template = toy_bank.masks[cls][0]
        img = GrayImage(template.astype(float))
        s = score(handle, img, build_prompt(ProjectionStyle.DEPTH, cls))
        assert s.value == pytest.approx(1.0)

    def test_blank_image_scores_low(self, toy_bank):
        handle = MatcherHandle.reference(toy_bank)
        blank = GrayImage(np.zeros((64, 64)))
        for cls in toy_bank.classes:
            s = score(handle, blank, build_prompt(ProjectionStyle.DEPTH, cls))
            assert s.value <= 0.05

    def test_deterministic(self, toy_bank):
        handle = MatcherHandle.reference(toy_bank)
        img = GrayImage(toy_bank.masks["disk"][3].astype(float))
        prompt = build_prompt(ProjectionStyle.DEPTH, "disk")
        assert score(handle, img, prompt).value == score(handle, img, prompt).value

    def test_prompt_without_known_class(self, toy_bank):
        handle = MatcherHandle.reference(toy_bank)
        with pytest.raises(EmptyTemplateBank):
            score(handle, GrayImage(np.zeros((8, 8))), "one photo of one zebra")


class TestMultiStyleScoring:
    def test_styles_pool_inside_the_exponent(self, toy_bank, toy_cam):
        from op3d.core3d import pca_align
        from op3d.match import ms_score
        from op3d.project import ViewAngles
        from op3d.shapes import make_slab

        cfg, vox = toy_cam
        handle = MatcherHandle.reference(toy_bank)
        x = pca_align(make_slab(1200, 6))
        phi = ViewAngles(90, 0)
        depth = ms_score(x, phi, "slab", handle, (ProjectionStyle.DEPTH,), cfg, vox)
        edge = ms_score(x, phi, "slab", handle, (ProjectionStyle.EDGE,), cfg, vox)
        both = ms_score(x, phi, "slab", handle,
                        (ProjectionStyle.DEPTH, ProjectionStyle.EDGE), cfg, vox)
        pooled = 0.5 * (depth.pooled_error + edge.pooled_error)
        assert both.pooled_error == pytest.approx(pooled, rel=1e-12)


class TestTemplateBank:
    def test_save_load_round_trip(self, toy_bank, tmp_path):
        toy_bank.save(tmp_path / "bank")
        back = TemplateBank.load(tmp_path / "bank")
        assert back.classes == toy_bank.classes
        for cls in toy_bank.classes:
            assert len(back.masks[cls]) == len(toy_bank.masks[cls])
            for a, b in zip(back.masks[cls], toy_bank.masks[cls]):
                assert np.array_equal(a, b)
        assert back.info["n_views"] == 12

    def test_bank_has_twelve_views_per_class(self, toy_bank):
        assert all(len(v) == 12 for v in toy_bank.masks.values())
