"""The autoregressive private-fusion generation loop.

One step: query the backend once for the public context and once per privacy
group, mollify each private distribution toward the public one under its
divergence budget, average the mollified mixtures, and sample the next token
from a single seeded stream. The per-group mollification outcomes are
recorded so the accountant can replay exactly what was released.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .backend import CAP_BATCHED, DistributionProvider
from .dist import Dist, RenyiOrder, mix
from .document import AnnotatedDocument, PromptBundle, assemble_prompt, partition
from .errors import (
    BackendError,
    DegenerateDocumentError,
    GenerationAbortedError,
    InvalidInputError,
)
from .mollify import DEFAULT_TOL, MollificationOutcome, find_max_lambda


@dataclass(frozen=True)
class FusionConfig:
    max_tokens: int = 900
    order: RenyiOrder = field(default_factory=RenyiOrder)
    temperature: float = 1.0
    rng_seed: int = 0
    # beta_i per group id; falls back to the document's own budgets when None.
    per_group_budgets: dict[int, float] | None = None
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if self.max_tokens < 1:
            raise InvalidInputError("max_tokens must be >= 1")
        if not self.temperature > 0:
            raise InvalidInputError("temperature must be > 0")
        if not 0 <= self.rng_seed < 2**64:
            raise InvalidInputError("rng_seed must be an unsigned 64-bit integer")
        if self.per_group_budgets is not None:
            for gid, beta in self.per_group_budgets.items():
                if not beta >= 0:
                    raise InvalidInputError(f"budget beta for group {gid} must be >= 0, got {beta}")

    def resolve_betas(self, doc: AnnotatedDocument) -> dict[int, float]:
        betas = dict(doc.betas())
        if self.per_group_budgets is not None:
            unknown = set(self.per_group_budgets) - set(betas)
            if unknown:
                raise InvalidInputError(f"budget overrides for unknown groups: {sorted(unknown)}")
            betas.update(self.per_group_budgets)
        return betas


@dataclass(frozen=True)
class StepRecord:
    step_index: int
    chosen_token: int
    per_group: dict[int, MollificationOutcome]


@dataclass(frozen=True)
class FusionTranscript:
    output_tokens: tuple[int, ...]
    output_text: str
    steps: tuple[StepRecord, ...]
    config_echo: dict
    # one decoded piece per token; "".join(text_pieces) == output_text
    text_pieces: tuple[str, ...] = ()


def sample_token(dist: Dist, rng: np.random.Generator) -> int:
    """Inverse-CDF sample consuming exactly one draw from the stream."""
    u = rng.random()
    cum = np.cumsum(dist.probs)
    return int(min(np.searchsorted(cum, u, side="right"), len(dist) - 1))


def fuse_step(
    p_pub: Dist,
    p_priv_list: list[Dist],
    budgets: list[float],
    order: RenyiOrder = RenyiOrder(),
    tol: float = DEFAULT_TOL,
) -> tuple[Dist, list[MollificationOutcome]]:
    """Mollify every group's distribution and average the mixtures.

    `budgets` are the allowed symmetric divergences per group, i.e. the
    alpha * beta_i products.
    """
    if len(p_priv_list) == 0:
        raise DegenerateDocumentError("fuse_step needs at least one privacy group; use p_pub directly")
    if len(p_priv_list) != len(budgets):
        raise InvalidInputError(f"{len(p_priv_list)} private distributions but {len(budgets)} budgets")
    outcomes = [
        find_max_lambda(p_priv, p_pub, order, bound, tol)
        for p_priv, bound in zip(p_priv_list, budgets)
    ]
    mixed = [mix(o.lam, p_priv, p_pub).probs for o, p_priv in zip(outcomes, p_priv_list)]
    p_final = Dist(np.mean(mixed, axis=0))
    return p_final, outcomes


def _echo(config: FusionConfig, doc: AnnotatedDocument, betas: dict[int, float], mode: str, extra: dict | None = None) -> dict:
    echo = {
        "mode": mode,
        "doc_id": doc.doc_id,
        "m": doc.group_count,
        "max_tokens": config.max_tokens,
        "alpha": config.order.alpha,
        "temperature": config.temperature,
        "seed": config.rng_seed,
        "tol": config.tol,
        "budgets": {str(gid): beta for gid, beta in sorted(betas.items())},
    }
    if extra:
        echo.update(extra)
    return echo


def _query(backend: DistributionProvider, contexts: list[str], temperature: float) -> list[Dist]:
    if CAP_BATCHED in backend.capabilities:
        dists = backend.next_distribution_batch(contexts, temperature)
    else:
        dists = [backend.next_distribution(c, temperature) for c in contexts]
    return [d.floored() for d in dists]


def generate(
    backend: DistributionProvider,
    doc: AnnotatedDocument,
    template: PromptBundle = PromptBundle(),
    config: FusionConfig = FusionConfig(),
) -> FusionTranscript:
    """Run the full fusion loop over the document; deterministic given the seed.

    A document with zero privacy groups degenerates to sampling the public
    view directly, with empty per-group records. Backend failures abort the
    run: the partial transcript is attached to the raised error for
    diagnostics and must not be emitted as mechanism output.
    """
    public_view, group_views = partition(doc, template.placeholder)
    prompts = [assemble_prompt(public_view, template)]
    prompts += [assemble_prompt(v, template) for v in group_views]
    betas = config.resolve_betas(doc)
    group_ids = [g.group_id for g in doc.groups]
    bounds = [config.order.alpha * betas[gid] for gid in group_ids]

    rng = np.random.default_rng(config.rng_seed)
    echo = _echo(config, doc, betas, mode="fusion")
    steps: list[StepRecord] = []
    tokens: list[int] = []
    pieces: list[str] = []
    piece_cache: dict[int, str] = {}
    suffix = ""
    for t in range(config.max_tokens):
        contexts = [p + suffix for p in prompts]
        try:
            dists = _query(backend, contexts, config.temperature)
        except BackendError as exc:
            partial = FusionTranscript(
                tuple(tokens), "".join(pieces), tuple(steps), {**echo, "invalid": True}, tuple(pieces)
            )
            raise GenerationAbortedError(f"backend failed at step {t}: {exc}", partial=partial) from exc
        p_pub = dists[0]
        if group_ids:
            p_final, outcomes = fuse_step(p_pub, dists[1:], bounds, config.order, config.tol)
            per_group = dict(zip(group_ids, outcomes))
        else:
            p_final, per_group = p_pub, {}
        token = sample_token(p_final, rng)
        piece = piece_cache.get(token)
        if piece is None:
            piece = backend.decode([token])
            piece_cache[token] = piece
        steps.append(StepRecord(step_index=t, chosen_token=token, per_group=per_group))
        tokens.append(token)
        pieces.append(piece)
        suffix += piece
        if token == backend.eos_token:
            break
    return FusionTranscript(
        output_tokens=tuple(tokens),
        output_text="".join(pieces),
        steps=tuple(steps),
        config_echo=echo,
        text_pieces=tuple(pieces),
    )


# --- transcript files (JSONL, one line per step, trailing summary line) -----


def transcript_to_lines(transcript: FusionTranscript) -> list[str]:
    lines = []
    for rec, piece in zip(transcript.steps, transcript.text_pieces):
        groups = [
            {"id": gid, "lambda": out.lam, "div": out.achieved_divergence}
            for gid, out in sorted(rec.per_group.items())
        ]
        lines.append(
            json.dumps(
                {"t": rec.step_index, "token": rec.chosen_token, "text_piece": piece, "groups": groups}
            )
        )
    lines.append(json.dumps({"output_text": transcript.output_text, "config": transcript.config_echo}))
    return lines


def write_transcript(transcript: FusionTranscript, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in transcript_to_lines(transcript):
            fh.write(line + "\n")


def read_transcript(path) -> FusionTranscript:
    """Rebuild a transcript from JSONL; saturation is implied by lambda < 1."""
    steps: list[StepRecord] = []
    tokens: list[int] = []
    pieces: list[str] = []
    summary = None
    with open(path, encoding="utf-8") as fh:
        rows = [json.loads(line) for line in fh if line.strip()]
    if not rows or "config" not in rows[-1]:
        raise InvalidInputError(f"{path}: not a transcript file (missing summary line)")
    summary = rows[-1]
    for row in rows[:-1]:
        per_group = {
            int(g["id"]): MollificationOutcome(
                lam=float(g["lambda"]),
                achieved_divergence=float(g["div"]),
                saturated=float(g["lambda"]) < 1.0,
            )
            for g in row["groups"]
        }
        steps.append(StepRecord(step_index=int(row["t"]), chosen_token=int(row["token"]), per_group=per_group))
        tokens.append(int(row["token"]))
        pieces.append(str(row["text_piece"]))
    return FusionTranscript(
        output_tokens=tuple(tokens),
        output_text=str(summary["output_text"]),
        steps=tuple(steps),
        config_echo=dict(summary["config"]),
        text_pieces=tuple(pieces),
    )
