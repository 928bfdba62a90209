"""Token-recovery game with LOSS and Min-K% scoring, plus the perplexity metric.

An instance gives the adversary the document with exactly one privacy group
redacted, the privatized output, and a small candidate set containing the
true hidden content. Each candidate is substituted into the redaction slots,
the defender's own prompt is rebuilt around it (gray-box assumption), and the
observed output is teacher-force scored under that context. LOSS predicts the
candidate with the lowest mean negative log-likelihood; Min-K% predicts the
one whose k% least probable output tokens are least surprising.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .backend import CAP_SCORE, DistributionProvider
from .document import (
    DEFAULT_PLACEHOLDER,
    AnnotatedDocument,
    ContextView,
    PromptBundle,
    assemble_prompt,
    render_view,
)
from .errors import BackendError, InvalidInputError, ScoringError


@dataclass(frozen=True)
class CandidateSet:
    group_id: int
    candidates: tuple[tuple[str, ...], ...]  # one piece per redacted span, in document order
    true_index: int

    def __post_init__(self):
        if not self.candidates:
            raise InvalidInputError("candidate set must be non-empty")
        if len(set(self.candidates)) != len(self.candidates):
            raise InvalidInputError("candidates must be distinct")
        if not 0 <= self.true_index < len(self.candidates):
            raise InvalidInputError(f"true_index {self.true_index} outside 0..{len(self.candidates) - 1}")


@dataclass(frozen=True)
class AttackInstance:
    redacted_context: ContextView
    privatized_output: str
    candidate_set: CandidateSet
    placeholder: str = DEFAULT_PLACEHOLDER

    def __post_init__(self):
        if self.candidate_set.group_id in self.redacted_context.revealed_groups:
            raise InvalidInputError(
                f"instance must hide group {self.candidate_set.group_id}, but the context reveals it"
            )


@dataclass(frozen=True)
class InstanceResult:
    predicted_index: int
    correct: bool


@dataclass(frozen=True)
class AttackResult:
    per_instance: tuple[InstanceResult, ...]
    asr: float
    advantage: float
    n: int
    skipped: int
    scorer: str
    k_percent: float | None


def sequence_logprobs(backend: DistributionProvider, context: str, continuation: str) -> list[float]:
    """Per-token log-probabilities of `continuation` teacher-forced after `context`."""
    if CAP_SCORE not in backend.capabilities:
        raise ScoringError(f"{type(backend).__name__} does not support teacher-forced scoring")
    return backend.score_continuation(context, continuation)


def loss_score(logprobs) -> float:
    """Mean negative log-probability; lower means more plausible membership."""
    if len(logprobs) == 0:
        raise InvalidInputError("cannot score an empty sequence")
    return -math.fsum(logprobs) / len(logprobs)


def min_k_score(logprobs, k_percent: float) -> float:
    """Mean of the ceil(k% * n) smallest log-probabilities; higher means membership."""
    if len(logprobs) == 0:
        raise InvalidInputError("cannot score an empty sequence")
    if not 0.0 < k_percent <= 100.0:
        raise InvalidInputError(f"k_percent must lie in (0, 100], got {k_percent}")
    n_sel = math.ceil(k_percent / 100.0 * len(logprobs))
    lowest = sorted(logprobs)[:n_sel]
    return math.fsum(lowest) / n_sel


def perplexity(logprobs) -> float:
    """exp of the mean negative log-probability; 1 for a perfect model."""
    return math.exp(loss_score(logprobs))


def substitute_candidates(rendered_text: str, placeholder: str, pieces) -> str:
    """Fill the i-th placeholder occurrence with the i-th candidate piece."""
    parts = rendered_text.split(placeholder)
    slots = len(parts) - 1
    if slots != len(pieces):
        raise InvalidInputError(f"candidate has {len(pieces)} pieces but the context has {slots} slots")
    out = [parts[0]]
    for piece, part in zip(pieces, parts[1:]):
        out.append(piece)
        out.append(part)
    return "".join(out)


def run_token_recovery(
    backend: DistributionProvider,
    instances,
    scorer: str = "loss",
    k_percent: float = 20.0,
    template: PromptBundle = PromptBundle(),
    seed: int = 0,
) -> AttackResult:
    """Score every candidate of every instance and aggregate the success rate.

    Ties between candidate scores break uniformly at random from the harness
    seed, so an uninformative scorer lands at the trivial-leakage level
    instead of favoring a fixed index. Instances whose scoring fails are
    skipped and counted.
    """
    if scorer not in ("loss", "min_k"):
        raise InvalidInputError(f"unknown scorer {scorer!r}; expected 'loss' or 'min_k'")
    rng = np.random.default_rng(seed)
    results: list[InstanceResult] = []
    skipped = 0
    trivial_sum = 0.0
    for inst in instances:
        try:
            scores = []
            for cand in inst.candidate_set.candidates:
                full_text = substitute_candidates(inst.redacted_context.rendered_text, inst.placeholder, cand)
                prompt = assemble_prompt(ContextView(full_text, frozenset()), template)
                lps = sequence_logprobs(backend, prompt, inst.privatized_output)
                scores.append(loss_score(lps) if scorer == "loss" else min_k_score(lps, k_percent))
        except (ScoringError, BackendError, InvalidInputError):
            skipped += 1
            continue
        best = min(scores) if scorer == "loss" else max(scores)
        tied = [i for i, s in enumerate(scores) if s == best]
        predicted = int(tied[rng.integers(len(tied))]) if len(tied) > 1 else tied[0]
        results.append(InstanceResult(predicted_index=predicted, correct=predicted == inst.candidate_set.true_index))
        trivial_sum += 1.0 / len(inst.candidate_set.candidates)
    n = len(results)
    asr = sum(r.correct for r in results) / n if n else 0.0
    trivial = trivial_sum / n if n else 0.0
    return AttackResult(
        per_instance=tuple(results),
        asr=asr,
        advantage=asr - trivial,
        n=n,
        skipped=skipped,
        scorer=scorer,
        k_percent=k_percent if scorer == "min_k" else None,
    )


def make_attack_instance(
    doc: AnnotatedDocument,
    target_group: int,
    privatized_output: str,
    candidates,
    true_index: int,
    placeholder: str = DEFAULT_PLACEHOLDER,
) -> AttackInstance:
    """Instance revealing all groups except the target (the all-but-one view)."""
    if target_group not in {g.group_id for g in doc.groups}:
        raise InvalidInputError(f"document has no group {target_group}")
    others = [g.group_id for g in doc.groups if g.group_id != target_group]
    view = render_view(doc, others, placeholder)
    cands = tuple((c,) if isinstance(c, str) else tuple(c) for c in candidates)
    return AttackInstance(
        redacted_context=view,
        privatized_output=privatized_output,
        candidate_set=CandidateSet(group_id=target_group, candidates=cands, true_index=true_index),
        placeholder=placeholder,
    )


def perturb_candidates(true_pieces, pool, n_candidates: int, rng: np.random.Generator):
    """Candidate set of size n: the true pieces plus distinct pool re-samples.

    Returns (candidates, true_index) with the true entry at a random position.
    """
    truth = tuple(true_pieces)
    if n_candidates < 2:
        raise InvalidInputError("need at least 2 candidates for a meaningful game")
    distractors: set[tuple[str, ...]] = set()
    attempts = 0
    while len(distractors) < n_candidates - 1:
        cand = tuple(pool[rng.integers(len(pool))] for _ in truth)
        attempts += 1
        if cand != truth:
            distractors.add(cand)
        if attempts > 1000 * n_candidates:
            raise InvalidInputError("candidate pool too small to draw distinct distractors")
    candidates = list(distractors)
    true_index = int(rng.integers(n_candidates))
    candidates.insert(true_index, truth)
    return tuple(candidates), true_index


# --- instance files (JSONL) --------------------------------------------------


def instance_to_obj(inst: AttackInstance) -> dict:
    return {
        "rendered_text": inst.redacted_context.rendered_text,
        "revealed_groups": sorted(inst.redacted_context.revealed_groups),
        "target_group": inst.candidate_set.group_id,
        "placeholder": inst.placeholder,
        "output": inst.privatized_output,
        "candidates": [list(c) for c in inst.candidate_set.candidates],
        "true_index": inst.candidate_set.true_index,
    }


def instance_from_obj(obj: dict) -> AttackInstance:
    candidates = tuple(
        (c,) if isinstance(c, str) else tuple(c) for c in obj["candidates"]
    )
    return AttackInstance(
        redacted_context=ContextView(
            rendered_text=str(obj["rendered_text"]),
            revealed_groups=frozenset(int(g) for g in obj.get("revealed_groups", [])),
        ),
        privatized_output=str(obj["output"]),
        candidate_set=CandidateSet(
            group_id=int(obj["target_group"]),
            candidates=candidates,
            true_index=int(obj["true_index"]),
        ),
        placeholder=str(obj.get("placeholder", DEFAULT_PLACEHOLDER)),
    )


def save_instances(instances, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(instance_to_obj(inst)) + "\n")


def load_instances(path) -> list[AttackInstance]:
    with open(path, encoding="utf-8") as fh:
        return [instance_from_obj(json.loads(line)) for line in fh if line.strip()]


def result_to_obj(result: AttackResult) -> dict:
    return {
        "asr": result.asr,
        "advantage": result.advantage,
        "n": result.n,
        "skipped": result.skipped,
        "scorer": result.scorer,
        "k": result.k_percent,
    }
