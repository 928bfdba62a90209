import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from privgen import (
    Dist,
    DivergenceUndefinedError,
    InvalidInputError,
    RenyiOrder,
    mix,
    renyi_divergence,
    renyi_divergence_general,
    softmax_with_temperature,
    symmetric_renyi,
)

from conftest import d2_brute, d_alpha_brute, random_dist


# hypothesis strategy: strictly positive distributions of width 2..12
@st.composite
def dists(draw, vocab=None):
    v = vocab if vocab is not None else draw(st.integers(2, 12))
    weights = draw(st.lists(st.floats(0.01, 100.0), min_size=v, max_size=v))
    arr = np.asarray(weights)
    return Dist(arr / arr.sum())


class TestDistType:
    def test_rejects_negative_and_unnormalized(self):
        with pytest.raises(InvalidInputError):
            Dist([0.5, -0.5, 1.0])
        with pytest.raises(InvalidInputError):
            Dist([0.5, 0.6])
        with pytest.raises(InvalidInputError):
            Dist([math.nan, 1.0])
        with pytest.raises(InvalidInputError):
            Dist([])

    def test_probs_are_read_only(self):
        d = Dist([0.5, 0.5])
        with pytest.raises(ValueError):
            d.probs[0] = 1.0

    def test_floored_lifts_tiny_entries(self):
        d = Dist([1.0 - 1e-13, 1e-13])
        f = d.floored(1e-12)
        # renormalization can shave a few ulp off the lifted entry
        assert f.probs[1] >= 0.99e-12
        assert abs(f.probs.sum() - 1.0) < 1e-15


class TestSoftmax:
    def test_symmetric_logits_give_uniform(self):
        d = softmax_with_temperature([0.0, 0.0, 0.0], 1.0)
        np.testing.assert_allclose(d.probs, [1 / 3] * 3, atol=1e-15)

    def test_ln2_logits(self):
        # direct evaluation: e^{ln 2} / (e^{ln 2} + 1) = 2/3
        d = softmax_with_temperature([math.log(2.0), 0.0], 1.0)
        np.testing.assert_allclose(d.probs, [2 / 3, 1 / 3], atol=1e-15)

    def test_large_temperature_flattens(self):
        d = softmax_with_temperature([3.0, -1.0], 1e9)
        np.testing.assert_allclose(d.probs, [0.5, 0.5], atol=1e-8)

    def test_invalid_inputs(self):
        with pytest.raises(InvalidInputError):
            softmax_with_temperature([1.0, math.inf], 1.0)
        with pytest.raises(InvalidInputError):
            softmax_with_temperature([1.0, 2.0], 0.0)
        with pytest.raises(InvalidInputError):
            softmax_with_temperature([1.0, 2.0], -1.0)

    def test_extreme_logits_are_stable(self):
        d = softmax_with_temperature([1000.0, 0.0], 1.0)
        assert math.isfinite(d.probs[0]) and d.probs[0] > 0.999

    @given(dists())
    @settings(max_examples=50, deadline=None)
    def test_normalization_invariant(self, d):
        assert abs(math.fsum(d.probs.tolist()) - 1.0) <= 1e-9


class TestRenyiDivergence:
    def test_identity_is_exact_zero(self):
        d = Dist([0.2, 0.3, 0.5])
        assert renyi_divergence(d, d) == 0.0
        assert symmetric_renyi(d, d) == 0.0

    def test_worked_example(self):
        # oracle: log(0.49/0.5 + 0.09/0.5) = log(1.16)
        p, q = Dist([0.7, 0.3]), Dist([0.5, 0.5])
        expected = 0.14842000511827322
        assert abs(renyi_divergence(p, q) - expected) < 1e-15
        assert abs(d2_brute(p, q) - expected) < 1e-15

    def test_point_mass_example(self):
        p, q = Dist([1.0, 0.0]), Dist([0.5, 0.5])
        assert abs(renyi_divergence(p, q) - math.log(2.0)) < 1e-15

    def test_support_violation_raises(self):
        with pytest.raises(DivergenceUndefinedError):
            renyi_divergence(Dist([0.5, 0.5]), Dist([1.0, 0.0]))

    def test_dimension_mismatch_raises(self):
        with pytest.raises(InvalidInputError):
            renyi_divergence(Dist([0.5, 0.5]), Dist([0.2, 0.3, 0.5]))

    def test_symmetric_worked_example(self):
        p, q = Dist([0.7, 0.3]), Dist([0.5, 0.5])
        expected = -math.log(0.84)  # reverse direction dominates
        assert abs(symmetric_renyi(p, q) - expected) < 1e-15

    def test_symmetric_requires_support_both_ways(self):
        with pytest.raises(DivergenceUndefinedError):
            symmetric_renyi(Dist([1.0, 0.0]), Dist([0.5, 0.5]))

    @given(dists(), dists())
    @settings(max_examples=60, deadline=None)
    def test_symmetric_is_symmetric_and_nonnegative(self, p, q):
        if len(p) != len(q):
            return
        assert symmetric_renyi(p, q) == symmetric_renyi(q, p) >= 0.0

    def test_fast_path_matches_general_and_brute(self):
        rng = np.random.default_rng(11)
        for vocab in (2, 10, 100):
            for _ in range(25):
                p, q = random_dist(rng, vocab), random_dist(rng, vocab)
                fast = renyi_divergence(p, q)
                general = renyi_divergence_general(p, q)
                brute = d2_brute(p, q)
                assert abs(fast - general) <= 1e-12
                assert abs(fast - brute) <= 1e-12

    def test_general_alpha_against_brute(self):
        rng = np.random.default_rng(12)
        for alpha in (1.5, 2.5, 3.0):
            order = RenyiOrder(alpha)
            for _ in range(20):
                p, q = random_dist(rng, 8), random_dist(rng, 8)
                assert abs(renyi_divergence(p, q, order) - d_alpha_brute(p, q, alpha)) <= 1e-12

    def test_order_must_exceed_one(self):
        with pytest.raises(InvalidInputError):
            RenyiOrder(1.0)
        with pytest.raises(InvalidInputError):
            RenyiOrder(0.5)


class TestMix:
    def test_endpoints_exact(self):
        p, q = Dist([0.7, 0.3]), Dist([0.5, 0.5])
        assert mix(0.0, p, q) == q
        assert mix(1.0, p, q) == p

    def test_halfway(self):
        out = mix(0.5, Dist([0.7, 0.3]), Dist([0.5, 0.5]))
        np.testing.assert_allclose(out.probs, [0.6, 0.4], atol=1e-15)

    def test_lambda_domain(self):
        p = Dist([0.5, 0.5])
        for bad in (-0.1, 1.1, math.nan):
            with pytest.raises(InvalidInputError):
                mix(bad, p, p)

    def test_mix_at_zero_has_zero_divergence(self):
        rng = np.random.default_rng(13)
        p, q = random_dist(rng, 6), random_dist(rng, 6)
        assert renyi_divergence(mix(0.0, p, q), q) == 0.0

    @given(dists(vocab=6), dists(vocab=6), st.floats(0.0, 1.0))
    @settings(max_examples=60, deadline=None)
    def test_mix_normalization(self, p, q, lam):
        out = mix(lam, p, q)
        assert abs(math.fsum(out.probs.tolist()) - 1.0) <= 1e-9


class TestMonotonicity:
    def test_divergence_nondecreasing_in_lambda(self):
        rng = np.random.default_rng(14)
        grid = np.arange(0.0, 1.0 + 1e-12, 0.01)
        for _ in range(40):
            vocab = int(rng.integers(2, 20))
            p, q = random_dist(rng, vocab), random_dist(rng, vocab)
            values = [symmetric_renyi(mix(l, p, q), q) for l in grid]
            diffs = np.diff(values)
            assert diffs.min() >= -1e-12
