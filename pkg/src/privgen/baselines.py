"""Comparison mechanisms behind the same generation interface as fusion.

Two DPI baselines (uniform-mixture interpolation and logit-clipped
exponential-mechanism sampling) plus the two no-DP modes that paraphrase the
original or the redacted document directly. Their published epsilon formulas
are reproduced verbatim for comparison plots; no attempt is made to tighten
them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .backend import DistributionProvider
from .dist import Dist, softmax_with_temperature
from .document import AnnotatedDocument, PromptBundle, assemble_prompt, render_view
from .errors import BackendError, GenerationAbortedError, InvalidInputError
from .fusion import FusionConfig, FusionTranscript, StepRecord, _echo, sample_token

MODES = ("original_doc", "ner_public", "dp_decoding", "dp_prompt")


@dataclass(frozen=True)
class DpDecodingConfig:
    lambda_interp: float
    temperature: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.lambda_interp < 1.0:
            raise InvalidInputError(f"interpolation weight must lie in [0, 1); epsilon diverges at 1 (got {self.lambda_interp})")
        if not self.temperature > 0:
            raise InvalidInputError("temperature must be > 0")


@dataclass(frozen=True)
class DpPromptConfig:
    """Clip logits into [clip_low, clip_high], then softmax at `temperature`.

    The published settings are symmetric: width 5 means (-2.5, 2.5) and
    width 50 means (-25, 25); use from_width for those.
    """

    clip_low: float
    clip_high: float
    temperature: float = 1.0

    def __post_init__(self):
        if not self.clip_low < self.clip_high:
            raise InvalidInputError(f"clip range must satisfy low < high, got ({self.clip_low}, {self.clip_high})")
        if not self.temperature > 0:
            raise InvalidInputError("temperature must be > 0")

    @property
    def width(self) -> float:
        return self.clip_high - self.clip_low

    @staticmethod
    def from_width(width: float, temperature: float = 1.0) -> "DpPromptConfig":
        if not width > 0:
            raise InvalidInputError("clip width must be > 0")
        return DpPromptConfig(clip_low=-width / 2.0, clip_high=width / 2.0, temperature=temperature)


def dp_decoding_step(p: Dist, lambda_interp: float, vocab_size: int | None = None) -> Dist:
    """lambda * p + (1 - lambda) * uniform; every entry ends up >= (1-lambda)/V."""
    if not 0.0 <= lambda_interp < 1.0:
        raise InvalidInputError(f"interpolation weight must lie in [0, 1), got {lambda_interp}")
    V = len(p) if vocab_size is None else int(vocab_size)
    if V != len(p):
        raise InvalidInputError(f"vocab_size {V} does not match distribution length {len(p)}")
    return Dist(lambda_interp * p.probs + (1.0 - lambda_interp) / V)


def dp_decoding_epsilon(lambda_interp: float, vocab_size: int, temperature: float) -> float:
    """T * log(1 + (V - 1) * lambda / (1 - lambda)), T being the temperature as published."""
    if not 0.0 <= lambda_interp < 1.0:
        raise InvalidInputError(f"interpolation weight must lie in [0, 1), got {lambda_interp}")
    if vocab_size < 1:
        raise InvalidInputError("vocab_size must be >= 1")
    return temperature * math.log1p((vocab_size - 1) * lambda_interp / (1.0 - lambda_interp))


def dp_prompt_step(logits, cfg: DpPromptConfig) -> Dist:
    """Exponential mechanism over clipped scores: clamp, then temperature softmax."""
    z = np.asarray(logits, dtype=np.float64)
    clipped = np.clip(z, cfg.clip_low, cfg.clip_high)
    return softmax_with_temperature(clipped, cfg.temperature)


def dp_prompt_epsilon(cfg: DpPromptConfig, t_max: int) -> float:
    """2 * T_max * width / temperature."""
    if t_max < 1:
        raise InvalidInputError("t_max must be >= 1")
    return 2.0 * t_max * cfg.width / cfg.temperature


def baseline_generate(
    backend: DistributionProvider,
    doc: AnnotatedDocument,
    template: PromptBundle = PromptBundle(),
    mode: str = "ner_public",
    config: FusionConfig = FusionConfig(),
    dp_decoding: DpDecodingConfig | None = None,
    dp_prompt: DpPromptConfig | None = None,
) -> FusionTranscript:
    """One-view generation loop shared by all four baseline modes.

    original_doc and ner_public paraphrase the full or public rendering with
    the extra privacy instruction appended; the DPI baselines see the full
    document through the unmodified template and transform each step's
    distribution. Sampling consumes the same seeded stream as fusion;
    per-group records stay empty.
    """
    if mode not in MODES:
        raise InvalidInputError(f"unknown baseline mode {mode!r}; expected one of {MODES}")
    all_groups = [g.group_id for g in doc.groups]
    extra: dict = {}
    if mode == "ner_public":
        view = render_view(doc, (), template.placeholder)
        template = template.with_privacy_instruction()
    elif mode == "original_doc":
        view = render_view(doc, all_groups, template.placeholder)
        template = template.with_privacy_instruction()
    elif mode == "dp_decoding":
        if dp_decoding is None:
            raise InvalidInputError("dp_decoding mode needs a DpDecodingConfig")
        view = render_view(doc, all_groups, template.placeholder)
        extra = {"lambda_interp": dp_decoding.lambda_interp, "dp_temperature": dp_decoding.temperature}
    else:
        if dp_prompt is None:
            raise InvalidInputError("dp_prompt mode needs a DpPromptConfig")
        view = render_view(doc, all_groups, template.placeholder)
        extra = {
            "clip_low": dp_prompt.clip_low,
            "clip_high": dp_prompt.clip_high,
            "dp_temperature": dp_prompt.temperature,
        }

    prompt = assemble_prompt(view, template)
    rng = np.random.default_rng(config.rng_seed)
    echo = _echo(config, doc, config.resolve_betas(doc), mode=mode, extra=extra)
    steps: list[StepRecord] = []
    tokens: list[int] = []
    pieces: list[str] = []
    piece_cache: dict[int, str] = {}
    suffix = ""
    for t in range(config.max_tokens):
        context = prompt + suffix
        try:
            if mode == "dp_prompt":
                # Raw pre-softmax logits never cross the wire; the clip acts on
                # the normalized logits log p of the temperature-1 distribution.
                base = backend.next_distribution(context, 1.0).floored()
                p_final = dp_prompt_step(np.log(base.probs), dp_prompt)
            elif mode == "dp_decoding":
                base = backend.next_distribution(context, dp_decoding.temperature).floored()
                p_final = dp_decoding_step(base, dp_decoding.lambda_interp)
            else:
                p_final = backend.next_distribution(context, config.temperature).floored()
        except BackendError as exc:
            partial = FusionTranscript(
                tuple(tokens), "".join(pieces), tuple(steps), {**echo, "invalid": True}, tuple(pieces)
            )
            raise GenerationAbortedError(f"backend failed at step {t}: {exc}", partial=partial) from exc
        token = sample_token(p_final, rng)
        piece = piece_cache.get(token)
        if piece is None:
            piece = backend.decode([token])
            piece_cache[token] = piece
        steps.append(StepRecord(step_index=t, chosen_token=token, per_group={}))
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
