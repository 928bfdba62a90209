import json

import numpy as np
import pytest
from scipy import stats

from privgen import (
    AnnotatedDocument,
    DegenerateDocumentError,
    Dist,
    FusionConfig,
    GenerationAbortedError,
    InvalidInputError,
    MockModel,
    PrivacyGroup,
    Span,
    fuse_step,
    generate,
    read_transcript,
    renyi_divergence,
    write_transcript,
)
from privgen.backend import DistributionProvider
from privgen.errors import TransportError
from privgen.fusion import sample_token

from conftest import random_dist


class FixedDistProvider(DistributionProvider):
    """Minimal provider: same distribution for every context."""

    def __init__(self, probs, eos_first=True):
        self.vocab_size = len(probs)
        self.eos_token = 0
        self.capabilities = frozenset({"next_dist", "batched"})
        self._dist = Dist(probs)

    def next_distribution(self, context, temperature=1.0):
        return self._dist

    def decode(self, tokens):
        return "".join("" if t == self.eos_token else f"<{t}>" for t in tokens)


class FailingProvider(FixedDistProvider):
    def __init__(self, probs, fail_after):
        super().__init__(probs)
        self.calls = 0
        self.fail_after = fail_after

    def next_distribution(self, context, temperature=1.0):
        self.calls += 1
        if self.calls > self.fail_after:
            raise TransportError("synthetic outage")
        return self._dist


class TestFuseStep:
    def test_generous_budgets_average_the_private_dists(self):
        rng = np.random.default_rng(31)
        p_pub = random_dist(rng, 6)
        privs = [random_dist(rng, 6) for _ in range(3)]
        p_final, outcomes = fuse_step(p_pub, privs, [1e6] * 3)
        assert all(o.lam == 1.0 and not o.saturated for o in outcomes)
        np.testing.assert_allclose(p_final.probs, np.mean([d.probs for d in privs], axis=0), atol=1e-15)

    def test_zero_budgets_return_public(self):
        rng = np.random.default_rng(32)
        p_pub = random_dist(rng, 6)
        privs = [random_dist(rng, 6) for _ in range(3)]
        p_final, outcomes = fuse_step(p_pub, privs, [0.0] * 3)
        assert all(o.lam == 0.0 for o in outcomes)
        np.testing.assert_allclose(p_final.probs, p_pub.probs, atol=1e-15)

    def test_single_group_worked_example(self):
        p_final, (outcome,) = fuse_step(Dist([0.5, 0.5]), [Dist([0.7, 0.3])], [0.04])
        assert abs(outcome.lam - 0.4950) <= 2e-4
        np.testing.assert_allclose(p_final.probs, [0.599, 0.401], atol=5e-4)

    def test_no_groups_is_degenerate(self):
        with pytest.raises(DegenerateDocumentError):
            fuse_step(Dist([0.5, 0.5]), [], [])

    def test_mismatched_budgets_rejected(self):
        with pytest.raises(InvalidInputError):
            fuse_step(Dist([0.5, 0.5]), [Dist([0.7, 0.3])], [0.1, 0.2])

    def test_averaged_mixture_divergence_within_worst_group_bound(self):
        # quasi-convexity of D_alpha in its first argument, checked numerically
        rng = np.random.default_rng(33)
        for _ in range(25):
            p_pub = random_dist(rng, 8)
            privs = [random_dist(rng, 8) for _ in range(3)]
            bounds = [float(10 ** rng.uniform(-3, 0)) for _ in range(3)]
            p_final, outcomes = fuse_step(p_pub, privs, bounds)
            worst = max(o.achieved_divergence for o in outcomes)
            assert renyi_divergence(p_final, p_pub) <= worst + 1e-9


class TestGenerate:
    def test_deterministic_given_seed(self, three_group_doc):
        backend = MockModel(seed=41)
        cfg = FusionConfig(max_tokens=20, rng_seed=7)
        a = generate(backend, three_group_doc, config=cfg)
        b = generate(backend, three_group_doc, config=cfg)
        assert a == b

    def test_seed_changes_output(self, three_group_doc):
        backend = MockModel(seed=41)
        a = generate(backend, three_group_doc, config=FusionConfig(max_tokens=20, rng_seed=1))
        b = generate(backend, three_group_doc, config=FusionConfig(max_tokens=20, rng_seed=2))
        assert a.output_tokens != b.output_tokens

    def test_every_step_records_every_group(self, three_group_doc):
        tr = generate(MockModel(seed=41), three_group_doc, config=FusionConfig(max_tokens=15, rng_seed=0))
        for step in tr.steps:
            assert set(step.per_group) == {1, 2, 3}

    def test_per_step_budgets_respected(self, three_group_doc):
        cfg = FusionConfig(max_tokens=25, rng_seed=3)
        tr = generate(MockModel(seed=42), three_group_doc, config=cfg)
        betas = three_group_doc.betas()
        for step in tr.steps:
            for gid, out in step.per_group.items():
                assert out.achieved_divergence <= 2.0 * betas[gid] + 1e-9

    def test_budget_overrides_take_precedence(self, three_group_doc):
        cfg = FusionConfig(max_tokens=5, rng_seed=0, per_group_budgets={1: 0.5, 2: 0.5, 3: 0.5})
        tr = generate(MockModel(seed=42), three_group_doc, config=cfg)
        assert tr.config_echo["budgets"] == {"1": 0.5, "2": 0.5, "3": 0.5}

    def test_unknown_override_group_rejected(self, three_group_doc):
        cfg = FusionConfig(per_group_budgets={9: 0.1})
        with pytest.raises(InvalidInputError):
            generate(MockModel(), three_group_doc, config=cfg)

    def test_tmax_limits_length(self, three_group_doc):
        tr = generate(MockModel(seed=44), three_group_doc, config=FusionConfig(max_tokens=9, rng_seed=1))
        assert len(tr.steps) == len(tr.output_tokens) <= 9

    def test_eos_stops_early(self, one_group_doc):
        backend = FixedDistProvider([0.999] + [0.001])
        tr = generate(backend, one_group_doc, config=FusionConfig(max_tokens=50, rng_seed=0))
        assert len(tr.steps) < 50
        assert tr.output_tokens[-1] == backend.eos_token
        assert tr.output_text == ""

    def test_zero_group_doc_uses_public_path(self):
        doc = AnnotatedDocument("plain", "no annotations here", (), ())
        tr = generate(MockModel(seed=45), doc, config=FusionConfig(max_tokens=8, rng_seed=2))
        assert all(step.per_group == {} for step in tr.steps)

    def test_identical_views_release_nothing(self):
        # the span's content is the placeholder itself, so revealing it
        # does not change the rendering and p_final must equal p_pub
        text = "prefix ___ suffix"
        doc = AnnotatedDocument(
            "same", text, (Span(7, 10, 1),), (PrivacyGroup(1, "NOOP", 0.01),)
        )
        stripped = AnnotatedDocument("same", text, (), ())
        cfg = FusionConfig(max_tokens=10, rng_seed=5)
        backend = MockModel(seed=46)
        tr = generate(backend, doc, config=cfg)
        tr_public = generate(backend, stripped, config=cfg)
        assert tr.output_tokens == tr_public.output_tokens
        for step in tr.steps:
            assert step.per_group[1].achieved_divergence == 0.0
            assert step.per_group[1].lam == 1.0

    def test_backend_failure_aborts_with_partial(self, three_group_doc):
        backend = FailingProvider([0.01, 0.99], fail_after=9)
        with pytest.raises(GenerationAbortedError) as exc_info:
            generate(backend, three_group_doc, config=FusionConfig(max_tokens=50, rng_seed=0))
        partial = exc_info.value.partial
        assert partial.config_echo.get("invalid") is True
        assert len(partial.steps) < 50


class TestSampler:
    def test_inverse_cdf_frequencies(self):
        rng = np.random.default_rng(47)
        d = Dist([0.1, 0.6, 0.3])
        counts = np.bincount([sample_token(d, rng) for _ in range(20000)], minlength=3)
        assert stats.chisquare(counts, 20000 * d.probs).pvalue > 0.01

    def test_zero_budget_matches_public_sampling(self, one_group_doc):
        backend = MockModel(seed=48)
        cfg_base = dict(max_tokens=1, per_group_budgets={1: 0.0})
        first_tokens = [
            generate(backend, one_group_doc, config=FusionConfig(rng_seed=s, **cfg_base)).output_tokens[0]
            for s in range(3000)
        ]
        from privgen.document import assemble_prompt, partition

        public_view, _ = partition(one_group_doc)
        p_pub = backend.next_distribution(assemble_prompt(public_view)).floored()
        counts = np.bincount(first_tokens, minlength=backend.vocab_size)
        assert stats.chisquare(counts, 3000 * p_pub.probs).pvalue > 0.001


class TestTranscriptFiles:
    def test_round_trip(self, tmp_path, three_group_doc):
        tr = generate(MockModel(seed=49), three_group_doc, config=FusionConfig(max_tokens=12, rng_seed=1))
        path = tmp_path / "t.jsonl"
        write_transcript(tr, path)
        back = read_transcript(path)
        assert back.output_tokens == tr.output_tokens
        assert back.output_text == tr.output_text
        assert back.config_echo == tr.config_echo
        for a, b in zip(back.steps, tr.steps):
            assert a.chosen_token == b.chosen_token
            for gid in a.per_group:
                assert a.per_group[gid].lam == b.per_group[gid].lam
                assert a.per_group[gid].achieved_divergence == b.per_group[gid].achieved_divergence

    def test_jsonl_shape(self, tmp_path, three_group_doc):
        tr = generate(MockModel(seed=49), three_group_doc, config=FusionConfig(max_tokens=5, rng_seed=1))
        path = tmp_path / "t.jsonl"
        write_transcript(tr, path)
        lines = [json.loads(l) for l in path.read_text().splitlines()]
        *steps, summary = lines
        for row in steps:
            assert set(row) == {"t", "token", "text_piece", "groups"}
            for g in row["groups"]:
                assert set(g) == {"id", "lambda", "div"}
        assert set(summary) == {"output_text", "config"}

    def test_non_transcript_file_rejected(self, tmp_path):
        path = tmp_path / "junk.jsonl"
        path.write_text('{"nope": 1}\n')
        with pytest.raises(InvalidInputError):
            read_transcript(path)
