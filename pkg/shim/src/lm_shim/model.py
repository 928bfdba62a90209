"""Checkpoint management and the next-token computation.

The default checkpoint is a tiny GPT-2-architecture causal LM over the
character vocabulary, randomly initialized from a fixed seed and saved to
disk on first use (this sandbox has no model-hub access; any locally saved
causal LM checkpoint with the same vocabulary drops in unchanged). All
inference runs in eval mode under no_grad; softmax normalization happens in
float64 so served distributions sum to 1 well within 1e-6.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from transformers import GPT2Config, GPT2LMHeadModel

from . import vocab

DEFAULT_CHECKPOINT = Path(__file__).resolve().parent / "checkpoint"
WEIGHT_SEED = 20240601


def build_checkpoint(model_dir, seed: int = WEIGHT_SEED, n_positions: int = 2048) -> None:
    config = GPT2Config(
        vocab_size=vocab.VOCAB_SIZE,
        n_positions=n_positions,
        n_embd=64,
        n_layer=2,
        n_head=4,
        bos_token_id=vocab.EOS,
        eos_token_id=vocab.EOS,
    )
    torch.manual_seed(seed)
    model = GPT2LMHeadModel(config)
    model.save_pretrained(model_dir)


def ensure_checkpoint(model_dir=DEFAULT_CHECKPOINT) -> Path:
    model_dir = Path(model_dir)
    if not (model_dir / "config.json").exists():
        model_dir.mkdir(parents=True, exist_ok=True)
        build_checkpoint(model_dir)
    return model_dir


class NextTokenModel:
    """Deterministic next-token distributions and teacher-forced scoring."""

    def __init__(self, model_dir=DEFAULT_CHECKPOINT, device: str = "cpu"):
        model_dir = ensure_checkpoint(model_dir)
        self.model_id = str(model_dir)
        self.device = torch.device(device)
        self.model = GPT2LMHeadModel.from_pretrained(model_dir).to(self.device).eval()
        self.vocab_size = self.model.config.vocab_size
        self.eos_token = vocab.EOS
        self.max_positions = int(self.model.config.n_positions)

    def _ids(self, text: str) -> list[int]:
        # a leading eos acts as BOS so the empty context is still scoreable
        return [vocab.EOS] + vocab.encode(text)

    def _forward_logits(self, ids: list[int]) -> torch.Tensor:
        if len(ids) > self.max_positions:
            raise ContextLengthError(f"{len(ids)} tokens exceed the model's {self.max_positions} positions")
        with torch.no_grad():
            out = self.model(torch.tensor([ids], device=self.device))
        return out.logits[0]

    def next_distribution(self, context: str, temperature: float = 1.0) -> np.ndarray:
        if not temperature > 0:
            raise ValueError(f"temperature must be > 0, got {temperature}")
        logits = self._forward_logits(self._ids(context))[-1]
        return _softmax64(logits, temperature)

    def score_continuation(self, context: str, continuation: str) -> list[float]:
        """Per-character log-probabilities, teacher-forced in one pass."""
        ctx_ids = self._ids(context)
        cont_ids = vocab.encode(continuation)
        if not cont_ids:
            return []
        logits = self._forward_logits(ctx_ids + cont_ids)
        out = []
        for i, token in enumerate(cont_ids):
            probs = _softmax64(logits[len(ctx_ids) - 1 + i], 1.0)
            out.append(float(np.log(probs[token])))
        return out


def _softmax64(logits: torch.Tensor, temperature: float) -> np.ndarray:
    z = logits.detach().cpu().numpy().astype(np.float64) / temperature
    z -= z.max()
    e = np.exp(z)
    return e / e.sum()


class ContextLengthError(ValueError):
    """Context (plus continuation) does not fit the model's positions."""
