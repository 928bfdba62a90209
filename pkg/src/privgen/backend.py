"""Next-token distribution providers: the abstract interface and a scriptable mock.

The generation engine never tokenizes; it hands providers context *text* and
receives full-vocabulary distributions back. Providers must be deterministic:
identical (context, temperature) means an identical distribution, on both the
single and batched paths.
"""
from __future__ import annotations

import hashlib
import math
from abc import ABC, abstractmethod
from typing import Sequence

import numpy as np

from .dist import Dist
from .errors import InvalidInputError, ScoringError, UnsupportedOperationError

CAP_NEXT_DIST = "next_dist"
CAP_SCORE = "teacher_force_score"
CAP_BATCHED = "batched"


class DistributionProvider(ABC):
    """A model backend that maps context text to next-token distributions."""

    vocab_size: int
    eos_token: int
    capabilities: frozenset[str]

    @abstractmethod
    def next_distribution(self, context: str, temperature: float = 1.0) -> Dist:
        """Full-vocabulary distribution (strictly positive) for one context."""

    def next_distribution_batch(self, contexts: Sequence[str], temperature: float = 1.0) -> list[Dist]:
        """Element-wise equal to per-context next_distribution calls, order preserved."""
        if not contexts:
            raise InvalidInputError("batch must contain at least one context")
        return [self.next_distribution(c, temperature) for c in contexts]

    def score_continuation(self, context: str, continuation: str) -> list[float]:
        """Teacher-forced per-token log-probabilities of `continuation` after `context`."""
        raise UnsupportedOperationError(f"{type(self).__name__} cannot score continuations")

    @abstractmethod
    def decode(self, tokens: Sequence[int]) -> str:
        """Text of a token id sequence."""

    def token_text(self, token: int) -> str:
        return self.decode([token])


DEFAULT_MOCK_TOKENS = (
    "<eos>",
    " the", " a", " court", " case", " was", " filed", " in", " by",
    " applicant", " state", " year", " city", " review", " held", ".",
)

_UNSCRIPTED_SMOOTHING = 0.05


def _smoothed_unigram(vocab_size: int) -> np.ndarray:
    """Fixed Zipf-flavored unigram with additive smoothing; the table-mode fallback."""
    w = 1.0 / np.arange(1, vocab_size + 1) + _UNSCRIPTED_SMOOTHING
    return w / w.sum()


class MockModel(DistributionProvider):
    """Deterministic in-process provider for tests and desk-scale experiments.

    Modes:
      uniform  every context maps to the uniform distribution;
      table    exact-context script lookup with a fixed smoothed-unigram
               fallback so generation never stalls on unscripted contexts;
      ngram    a pseudo-random but fully deterministic distribution derived
               by hashing the context with the seed. By default the whole
               context is hashed so that any change anywhere (a revealed
               span, a generated token) yields a fresh distribution; set
               context_window to an integer to hash only that many trailing
               characters, giving genuine n-gram-style locality.

    Stored distributions are treated as temperature-1 softmax outputs;
    requesting temperature T reweights entries by p**(1/T) and renormalizes,
    which is exactly a T-rescaling of the implied logits.
    """

    def __init__(
        self,
        tokens: Sequence[str] = DEFAULT_MOCK_TOKENS,
        mode: str = "ngram",
        seed: int = 0,
        script: dict | None = None,
        eos_text: str = "<eos>",
        context_window: int | None = None,
        concentration: float = 0.8,
    ):
        tokens = tuple(tokens)
        if len(set(tokens)) != len(tokens) or not tokens:
            raise InvalidInputError("mock vocabulary must be non-empty and duplicate-free")
        if any(t == "" for t in tokens):
            raise InvalidInputError("mock vocabulary tokens must be non-empty strings")
        if mode not in ("uniform", "table", "ngram"):
            raise InvalidInputError(f"unknown mock mode {mode!r}")
        if eos_text not in tokens:
            raise InvalidInputError(f"eos text {eos_text!r} missing from the vocabulary")
        self.tokens = tokens
        self.vocab_size = len(tokens)
        self.eos_token = tokens.index(eos_text)
        self.capabilities = frozenset({CAP_NEXT_DIST, CAP_SCORE, CAP_BATCHED})
        self.mode = mode
        self.seed = int(seed)
        self.context_window = context_window
        self.concentration = float(concentration)
        self._fallback = _smoothed_unigram(self.vocab_size)
        self._by_length = sorted(range(self.vocab_size), key=lambda i: -len(tokens[i]))
        self._script: dict[str, np.ndarray] = {}
        for ctx, dist in (script or {}).items():
            self._script[ctx] = Dist(dist).probs
        self._ngram_cache: dict[str, np.ndarray] = {}

    # -- distribution construction --

    def _base_probs(self, context: str) -> np.ndarray:
        if self.mode == "uniform":
            return np.full(self.vocab_size, 1.0 / self.vocab_size)
        if self.mode == "table":
            hit = self._script.get(context)
            return hit if hit is not None else self._fallback
        hashed = context if self.context_window is None else context[-self.context_window:]
        digest = hashlib.blake2b(
            hashed.encode("utf-8"), digest_size=8, key=str(self.seed).encode("utf-8")
        ).digest()
        cached = self._ngram_cache.get(digest)
        if cached is not None:
            return cached
        rng = np.random.default_rng(int.from_bytes(digest, "big"))
        probs = rng.dirichlet(np.full(self.vocab_size, self.concentration))
        probs = np.maximum(probs, 1e-9)
        probs = probs / probs.sum()
        if len(self._ngram_cache) < 200_000:
            self._ngram_cache[digest] = probs
        return probs

    def next_distribution(self, context: str, temperature: float = 1.0) -> Dist:
        if not (isinstance(temperature, (int, float)) and math.isfinite(temperature) and temperature > 0):
            raise InvalidInputError(f"temperature must be a finite real > 0, got {temperature!r}")
        probs = self._base_probs(context)
        if temperature != 1.0:
            reweighted = probs ** (1.0 / temperature)
            probs = reweighted / reweighted.sum()
        return Dist(probs)

    # -- text handling --

    def decode(self, tokens: Sequence[int]) -> str:
        """Token text; the end-of-sequence token decodes to the empty string."""
        pieces = []
        for t in tokens:
            t = int(t)
            if not 0 <= t < self.vocab_size:
                raise InvalidInputError(f"token id {t} outside vocabulary of size {self.vocab_size}")
            pieces.append("" if t == self.eos_token else self.tokens[t])
        return "".join(pieces)

    def tokenize(self, text: str) -> list[int]:
        """Greedy longest-match segmentation into vocabulary tokens (never emits eos)."""
        out = []
        pos = 0
        while pos < len(text):
            for tid in self._by_length:
                if tid == self.eos_token:
                    continue
                tok = self.tokens[tid]
                if text.startswith(tok, pos):
                    out.append(tid)
                    pos += len(tok)
                    break
            else:
                raise ScoringError(f"text not tokenizable at offset {pos}: {text[pos:pos + 12]!r}")
        return out

    def score_continuation(self, context: str, continuation: str) -> list[float]:
        """Chained next_distribution log-probabilities along the continuation."""
        logprobs = []
        ctx = context
        for tid in self.tokenize(continuation):
            probs = self.next_distribution(ctx).probs
            logprobs.append(float(np.log(probs[tid])))
            ctx += self.tokens[tid]
        return logprobs
