"""Contextual token embeddings and head/modifier specialization.

Embeddings are trainable lookups (form + optional gold-POS, summed) with
a reserved trainable root-marker row at id 0. Context, when enabled, is
a stack of standard self-attention layers over the token sequence with
sinusoidal position encodings added at the input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conllu import Sentence, Vocab
from .nn import Linear, Module, ModuleList
from .refiner import TransformerLayer, num_heads
from .tensor import Tensor, dropout, embedding_gather, relu


@dataclass
class EncoderConfig:
    emb_dim: int
    context_layers: int = 2
    context_heads: int | None = None
    emb_dropout: float = 0.0
    use_upos: bool = True
    exact_counts: bool = False

    def __post_init__(self):
        if self.emb_dim < 2:
            raise ValueError(f"emb_dim must be >= 2, got {self.emb_dim}")
        if self.context_layers < 0:
            raise ValueError("context_layers must be >= 0")
        if self.context_heads is None:
            self.context_heads = num_heads(self.emb_dim)
        if self.context_layers > 0 and self.emb_dim % self.context_heads:
            raise ValueError(
                f"emb_dim {self.emb_dim} not divisible by {self.context_heads} heads")


def sinusoidal_encoding(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length)[:, None].astype(float)
    i = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    enc = np.zeros((length, dim))
    enc[:, 0::2] = np.sin(angle[:, 0::2])
    enc[:, 1::2] = np.cos(angle[:, 1::2])
    return enc


class Encoder(Module):
    def __init__(self, n_forms: int, n_upos: int, cfg: EncoderConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        scale = cfg.emb_dim ** -0.5
        self.form_emb = Tensor(rng.normal(0.0, scale, size=(n_forms, cfg.emb_dim)), requires_grad=True)
        self.upos_emb = (
            Tensor(rng.normal(0.0, scale, size=(n_upos, cfg.emb_dim)), requires_grad=True)
            if cfg.use_upos else None
        )
        self.context = ModuleList(
            TransformerLayer(cfg.emb_dim, cfg.context_heads, rng, exact_counts=cfg.exact_counts)
            for _ in range(cfg.context_layers)
        )
        self.rng = rng

    def forward(self, form_ids, upos_ids=None) -> Tensor:
        e = embedding_gather(self.form_emb, form_ids)
        if self.upos_emb is not None:
            if upos_ids is None:
                raise ValueError("encoder configured with UPOS embeddings but got no upos ids")
            e = e + embedding_gather(self.upos_emb, upos_ids)
        e = dropout(e, self.cfg.emb_dropout, self.training, self.rng)
        if len(self.context):
            e = e + Tensor(sinusoidal_encoding(len(form_ids), self.cfg.emb_dim))
            for layer in self.context:
                e = layer(e)
        return e

    def encode(self, sentence: Sentence, vocab: Vocab) -> Tensor:
        """Rows 0..n of contextual embeddings; row 0 is the root marker."""
        form_ids = [0] + [vocab.form_id(t.form) for t in sentence.tokens]
        upos_ids = [0] + [vocab.upos_id(t.upos) for t in sentence.tokens]
        return self.forward(form_ids, upos_ids if self.upos_emb is not None else None)


class Specialization(Module):
    """Single-layer FFN mapping shared embeddings to one role: linear,
    ReLU, dropout. The exact-counts flag drops the bias."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator,
                 drop: float = 0.33, exact_counts: bool = False):
        super().__init__()
        self.linear = Linear(d_in, d_out, rng, bias=not exact_counts)
        self.drop = drop
        self.rng = rng

    def forward(self, x: Tensor) -> Tensor:
        return dropout(relu(self.linear(x)), self.drop, self.training, self.rng)
