import math

import numpy as np
import pytest

from privgen import (
    AnnotatedDocument,
    Dist,
    DpDecodingConfig,
    DpPromptConfig,
    FusionConfig,
    InvalidInputError,
    MockModel,
    baseline_generate,
    dp_decoding_epsilon,
    dp_decoding_step,
    dp_prompt_epsilon,
    dp_prompt_step,
    softmax_with_temperature,
)


class TestDpDecodingStep:
    def test_zero_weight_is_uniform(self):
        out = dp_decoding_step(Dist([1.0, 0.0]), 0.0)
        np.testing.assert_array_equal(out.probs, [0.5, 0.5])

    def test_half_weight_worked_example(self):
        out = dp_decoding_step(Dist([1.0, 0.0]), 0.5, vocab_size=2)
        np.testing.assert_allclose(out.probs, [0.75, 0.25], atol=1e-15)

    def test_floor_holds_on_every_coordinate(self):
        rng = np.random.default_rng(61)
        for lam in (0.0, 0.3, 0.9, 0.99):
            probs = rng.dirichlet(np.ones(12))
            out = dp_decoding_step(Dist(probs), lam)
            assert np.all(out.probs >= (1.0 - lam) / 12 - 1e-15)

    def test_exact_convex_combination(self):
        rng = np.random.default_rng(62)
        p = Dist(rng.dirichlet(np.ones(7)))
        lam = 0.37
        out = dp_decoding_step(p, lam)
        np.testing.assert_allclose(out.probs, lam * p.probs + (1 - lam) / 7, atol=1e-15)

    def test_invalid_weight(self):
        with pytest.raises(InvalidInputError):
            dp_decoding_step(Dist([0.5, 0.5]), 1.0)
        with pytest.raises(InvalidInputError):
            dp_decoding_step(Dist([0.5, 0.5]), -0.1)

    def test_vocab_size_must_match(self):
        with pytest.raises(InvalidInputError):
            dp_decoding_step(Dist([0.5, 0.5]), 0.5, vocab_size=3)


class TestDpDecodingEpsilon:
    def test_zero_weight_zero_epsilon(self):
        assert dp_decoding_epsilon(0.0, 1000, 1.0) == 0.0

    def test_worked_example(self):
        assert abs(dp_decoding_epsilon(0.5, 4, 1.0) - math.log(4.0)) < 1e-12

    def test_strictly_increasing_in_lambda(self):
        eps = [dp_decoding_epsilon(l, 50, 1.0) for l in np.linspace(0.0, 0.99, 34)]
        assert all(b > a for a, b in zip(eps, eps[1:]))

    def test_weight_one_rejected(self):
        with pytest.raises(InvalidInputError):
            dp_decoding_epsilon(1.0, 4, 1.0)


class TestDpPromptStep:
    def test_clipping_worked_example(self):
        cfg = DpPromptConfig(-2.5, 2.5, temperature=1.0)
        out = dp_prompt_step([3.0, -30.0, 10.0], cfg)
        expected = softmax_with_temperature([2.5, -2.5, 2.5], 1.0)
        np.testing.assert_allclose(out.probs, expected.probs, atol=1e-15)

    def test_noop_when_logits_inside_range(self):
        cfg = DpPromptConfig(-25.0, 25.0, temperature=0.8)
        logits = [1.0, -2.0, 0.5]
        np.testing.assert_allclose(
            dp_prompt_step(logits, cfg).probs,
            softmax_with_temperature(logits, 0.8).probs,
            atol=1e-15,
        )

    def test_two_sided_worked_example(self):
        out = dp_prompt_step([2.5, -2.5], DpPromptConfig(-2.5, 2.5, 1.0))
        e5 = math.exp(5.0)
        np.testing.assert_allclose(out.probs, [e5 / (e5 + 1), 1 / (e5 + 1)], atol=1e-12)
        np.testing.assert_allclose(out.probs, [0.99331, 0.00669], atol=5e-6)

    def test_shift_invariance_without_clipping(self):
        cfg = DpPromptConfig(-100.0, 100.0, 1.0)
        a = dp_prompt_step([1.0, 2.0, 3.0], cfg)
        b = dp_prompt_step([11.0, 12.0, 13.0], cfg)
        np.testing.assert_allclose(a.probs, b.probs, atol=1e-12)

    def test_shift_invariance_breaks_with_clipping(self):
        cfg = DpPromptConfig(-2.5, 2.5, 1.0)
        a = dp_prompt_step([1.0, 2.0, 3.0], cfg)
        b = dp_prompt_step([11.0, 12.0, 13.0], cfg)
        assert not np.allclose(a.probs, b.probs)

    def test_invalid_range(self):
        with pytest.raises(InvalidInputError):
            DpPromptConfig(2.5, -2.5, 1.0)

    def test_from_width_is_symmetric(self):
        cfg = DpPromptConfig.from_width(50.0, 1.75)
        assert (cfg.clip_low, cfg.clip_high, cfg.width) == (-25.0, 25.0, 50.0)


class TestDpPromptEpsilon:
    def test_worked_examples(self):
        assert abs(dp_prompt_epsilon(DpPromptConfig.from_width(5.0, 0.75), 1) - 40.0 / 3.0) < 1e-12
        assert abs(dp_prompt_epsilon(DpPromptConfig.from_width(5.0, 1.75), 900) - 2 * 900 * 5.0 / 1.75) < 1e-12

    def test_width_to_zero_limit(self):
        eps = dp_prompt_epsilon(DpPromptConfig(-1e-9, 1e-9, 1.0), 900)
        assert eps == pytest.approx(0.0, abs=1e-5)


class TestBaselineGenerate:
    def test_public_equals_original_when_no_spans(self):
        doc = AnnotatedDocument("plain", "nothing secret here", (), ())
        backend = MockModel(seed=63)
        cfg = FusionConfig(max_tokens=10, rng_seed=9)
        a = baseline_generate(backend, doc, mode="ner_public", config=cfg)
        b = baseline_generate(backend, doc, mode="original_doc", config=cfg)
        assert a.output_tokens == b.output_tokens
        assert a.output_text == b.output_text

    def test_modes_differ_on_annotated_doc(self, three_group_doc):
        backend = MockModel(seed=63)
        cfg = FusionConfig(max_tokens=10, rng_seed=9)
        a = baseline_generate(backend, three_group_doc, mode="ner_public", config=cfg)
        b = baseline_generate(backend, three_group_doc, mode="original_doc", config=cfg)
        assert a.output_tokens != b.output_tokens

    def test_deterministic_per_mode(self, three_group_doc):
        backend = MockModel(seed=64)
        cfg = FusionConfig(max_tokens=10, rng_seed=1)
        for mode, kwargs in (
            ("original_doc", {}),
            ("ner_public", {}),
            ("dp_decoding", {"dp_decoding": DpDecodingConfig(0.5)}),
            ("dp_prompt", {"dp_prompt": DpPromptConfig.from_width(5.0)}),
        ):
            a = baseline_generate(backend, three_group_doc, mode=mode, config=cfg, **kwargs)
            b = baseline_generate(backend, three_group_doc, mode=mode, config=cfg, **kwargs)
            assert a == b
            assert a.config_echo["mode"] == mode

    def test_per_group_records_stay_empty(self, three_group_doc):
        tr = baseline_generate(
            MockModel(seed=65), three_group_doc, mode="dp_decoding",
            config=FusionConfig(max_tokens=6, rng_seed=0), dp_decoding=DpDecodingConfig(0.9),
        )
        assert all(step.per_group == {} for step in tr.steps)

    def test_missing_mechanism_config_rejected(self, three_group_doc):
        with pytest.raises(InvalidInputError):
            baseline_generate(MockModel(), three_group_doc, mode="dp_decoding")
        with pytest.raises(InvalidInputError):
            baseline_generate(MockModel(), three_group_doc, mode="dp_prompt")
        with pytest.raises(InvalidInputError):
            baseline_generate(MockModel(), three_group_doc, mode="bogus")
