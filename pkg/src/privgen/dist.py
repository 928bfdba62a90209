"""Probability distributions over a finite vocabulary and Renyi divergences.

Everything downstream (mollification, fusion, baselines, attacks) is built on
three primitives defined here: temperature softmax, the order-alpha Renyi
divergence, and convex mixing of two distributions. All arithmetic is 64-bit;
divergence sums use compensated accumulation (math.fsum) so the 1e-12
property bounds used in the test suite are meaningful.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceUndefinedError, InvalidInputError

# Entries below this are lifted before divergence computation so absolute
# continuity cannot fail via float underflow.
PROB_FLOOR = 1e-12

# Normalization slack accepted on construction.
SUM_TOL = 1e-9


@dataclass(frozen=True)
class RenyiOrder:
    """Order alpha > 1 of the Renyi divergence. alpha = 2 is the working default."""

    alpha: float = 2.0

    def __post_init__(self):
        if not math.isfinite(self.alpha) or self.alpha <= 1.0:
            raise InvalidInputError(f"Renyi order must be a finite real > 1, got {self.alpha}")


class Dist:
    """A normalized probability vector over token ids 0..V-1.

    Immutable after construction; `probs` is a read-only float64 array.
    """

    __slots__ = ("probs",)

    def __init__(self, probs):
        arr = np.asarray(probs, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise InvalidInputError("distribution must be a non-empty 1-D vector")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("distribution entries must be finite")
        if np.any(arr < 0.0):
            raise InvalidInputError("distribution entries must be non-negative")
        total = math.fsum(arr.tolist())
        if abs(total - 1.0) > SUM_TOL:
            raise InvalidInputError(f"distribution entries must sum to 1 +- {SUM_TOL}, got {total!r}")
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Dist is immutable")

    def __len__(self) -> int:
        return int(self.probs.size)

    def __eq__(self, other) -> bool:
        return isinstance(other, Dist) and np.array_equal(self.probs, other.probs)

    def __repr__(self) -> str:
        return f"Dist({self.probs.tolist()!r})"

    @staticmethod
    def uniform(vocab_size: int) -> "Dist":
        if vocab_size < 1:
            raise InvalidInputError("vocab_size must be >= 1")
        return Dist(np.full(vocab_size, 1.0 / vocab_size))

    def floored(self, floor: float = PROB_FLOOR) -> "Dist":
        """Clamp entries below `floor` up to it and renormalize.

        Backends are required to return strictly positive softmax outputs, but
        64-bit transport can underflow extreme tails; the engine floors every
        incoming distribution so divergences stay defined.
        """
        arr = np.maximum(self.probs, floor)
        return Dist(arr / math.fsum(arr.tolist()))


def softmax_with_temperature(logits, temperature: float) -> Dist:
    """exp(z_y / T) / sum_v exp(z_v / T), stabilized by subtracting max(z).

    Raises InvalidInputError on non-finite logits or T <= 0.
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.size == 0:
        raise InvalidInputError("logits must be a non-empty 1-D vector")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("logits must be finite")
    if not (isinstance(temperature, (int, float)) and math.isfinite(temperature) and temperature > 0):
        raise InvalidInputError(f"temperature must be a finite real > 0, got {temperature!r}")
    scaled = z / float(temperature)
    scaled -= scaled.max()
    expz = np.exp(scaled)
    return Dist(expz / math.fsum(expz.tolist()))


def _check_same_length(p: Dist, q: Dist) -> None:
    if len(p) != len(q):
        raise InvalidInputError(f"dimension mismatch: {len(p)} vs {len(q)}")


def _renyi_from_terms(p: Dist, q: Dist, alpha: float, general: bool) -> float:
    _check_same_length(p, q)
    pa, qa = p.probs, q.probs
    if np.array_equal(pa, qa):
        return 0.0
    bad = (pa > 0.0) & (qa == 0.0)
    if np.any(bad):
        raise DivergenceUndefinedError(
            f"support violation: p has mass on coordinate {int(np.argmax(bad))} where q is zero"
        )
    live = pa > 0.0
    pl, ql = pa[live], qa[live]
    if alpha == 2.0 and not general:
        terms = pl * pl / ql
    else:
        terms = np.exp(alpha * np.log(pl) - (alpha - 1.0) * np.log(ql))
    total = math.fsum(terms.tolist())
    return max(0.0, math.log(total) / (alpha - 1.0))


def renyi_divergence(p: Dist, q: Dist, order: RenyiOrder = RenyiOrder()) -> float:
    """D_alpha(p || q) = (1/(alpha-1)) * log sum_i p_i^alpha / q_i^(alpha-1).

    Coordinates with p_i = 0 contribute nothing; a coordinate with p_i > 0 and
    q_i = 0 makes the divergence undefined and raises. Returns exactly 0.0
    when p and q are entrywise equal. The alpha = 2 closed form
    log sum p_i^2 / q_i is used as a fast path.
    """
    return _renyi_from_terms(p, q, order.alpha, general=False)


def renyi_divergence_general(p: Dist, q: Dist, order: RenyiOrder = RenyiOrder()) -> float:
    """Same contract as renyi_divergence but always via the general-alpha formula.

    Exists so the alpha = 2 fast path has an in-package cross-check.
    """
    return _renyi_from_terms(p, q, order.alpha, general=True)


def symmetric_renyi(p: Dist, q: Dist, order: RenyiOrder = RenyiOrder()) -> float:
    """max(D_alpha(p || q), D_alpha(q || p)); requires identical support."""
    return max(renyi_divergence(p, q, order), renyi_divergence(q, p, order))


def mix(lam: float, p_priv: Dist, p_pub: Dist) -> Dist:
    """Coordinate-wise convex combination lam * p_priv + (1 - lam) * p_pub.

    Returns p_pub exactly at lam = 0 and p_priv exactly at lam = 1.
    """
    if not (isinstance(lam, (int, float)) and math.isfinite(lam) and 0.0 <= lam <= 1.0):
        raise InvalidInputError(f"mixing coefficient must lie in [0, 1], got {lam!r}")
    _check_same_length(p_priv, p_pub)
    if lam == 0.0:
        return p_pub
    if lam == 1.0:
        return p_priv
    return Dist(lam * p_priv.probs + (1.0 - lam) * p_pub.probs)
