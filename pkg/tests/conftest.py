import math

import numpy as np
import pytest

from privgen import AnnotatedDocument, Dist, PrivacyGroup, Span


def random_dist(rng: np.random.Generator, vocab: int, concentration: float = 1.0) -> Dist:
    """Strictly positive random distribution (floored Dirichlet draw)."""
    probs = rng.dirichlet(np.full(vocab, concentration))
    probs = np.maximum(probs, 1e-9)
    return Dist(probs / probs.sum())


def d2_brute(p: Dist, q: Dist) -> float:
    """Order-2 divergence by direct per-coordinate summation (independent oracle)."""
    total = 0.0
    for pi, qi in zip(p.probs.tolist(), q.probs.tolist()):
        if pi > 0.0:
            total += pi * pi / qi
    return math.log(total)


def d_alpha_brute(p: Dist, q: Dist, alpha: float) -> float:
    """General-order divergence by direct summation (independent oracle)."""
    total = 0.0
    for pi, qi in zip(p.probs.tolist(), q.probs.tolist()):
        if pi > 0.0:
            total += pi**alpha / qi ** (alpha - 1.0)
    return math.log(total) / (alpha - 1.0)


def sym_d2_brute(p: Dist, q: Dist) -> float:
    return max(d2_brute(p, q), d2_brute(q, p))


@pytest.fixture
def three_group_doc() -> AnnotatedDocument:
    return AnnotatedDocument(
        doc_id="fixture-3g",
        text="The applicant Henrik filed in Copenhagen in 1994.",
        spans=(Span(14, 20, 1), Span(30, 40, 2), Span(44, 48, 3)),
        groups=(
            PrivacyGroup(1, "PERSON", 0.01),
            PrivacyGroup(2, "LOC", 0.05),
            PrivacyGroup(3, "DATETIME", 0.05),
        ),
    )


@pytest.fixture
def one_group_doc() -> AnnotatedDocument:
    return AnnotatedDocument(
        doc_id="fixture-1g",
        text="Case record: the applicant met the court in May.",
        spans=(Span(17, 30, 1),),
        groups=(PrivacyGroup(1, "PERSON", 0.02),),
    )
