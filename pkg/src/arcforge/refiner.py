"""Transformer refinement of arc vectors behind a differentiable top-k filter.

The filter keeps the k most probable head candidates per modifier. Kept
vectors pass jointly through the encoder layers as one sequence (no
positional encodings: arcs are a set, identified by content); discarded
vectors are final. At train time the kept vectors are straight-through
nodes: forward values are the hard selections bitwise, gradients flow
through the softmax-weighted expectation of the candidate vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nn import Linear, Module, ModuleList, glorot_uniform
from .tensor import (
    Tensor,
    argsort_descending,
    concat,
    embedding_gather,
    layer_norm,
    matmul,
    narrow,
    relu,
    reshape,
    row_scatter,
    softmax,
    straight_through,
    transpose,
)

_attn_score_entries = 0


def reset_attention_entry_count() -> None:
    global _attn_score_entries
    _attn_score_entries = 0


def attention_entry_count() -> int:
    """Attention score elements allocated since the last reset."""
    return _attn_score_entries


def num_heads(r: int) -> int:
    """Head count rule: the divisor of r closest to r/16 (ties -> larger)."""
    if r < 1:
        raise ValueError(f"width must be positive, got {r}")
    target = r / 16.0
    best = 1
    best_key = (abs(1 - target), -1)
    for div in range(2, r + 1):
        if r % div:
            continue
        key = (abs(div - target), -div)
        if key < best_key:
            best_key, best = key, div
    return best


class LayerNorm(Module):
    def __init__(self, width: int, affine: bool = True):
        super().__init__()
        self.width = width
        self.gain = Tensor(np.ones(width), requires_grad=True) if affine else None
        self.bias = Tensor(np.zeros(width), requires_grad=True) if affine else None

    def forward(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias)


class TransformerLayer(Module):
    """Pre-norm multi-head self-attention + position-wise FFN (hidden 4r).

    With exact_counts=True the layer carries exactly 9r^2 parameters:
    queries and keys attend unprojected, values go through a single
    r x r projection, the FFN has no biases, and layer norms have no
    affine terms. Without the flag it is the standard layer with
    separate Q/K/V/output projections, biases, and layer-norm affines.
    """

    def __init__(self, width: int, heads: int, rng: np.random.Generator,
                 exact_counts: bool = False):
        super().__init__()
        if width % heads:
            raise ValueError(f"head count {heads} does not divide width {width}")
        self.width = width
        self.heads = heads
        self.exact_counts = exact_counts
        if exact_counts:
            self.w_value = Tensor(glorot_uniform((width, width), width, width, rng), requires_grad=True)
        else:
            self.w_query = Linear(width, width, rng)
            self.w_key = Linear(width, width, rng)
            self.w_value_proj = Linear(width, width, rng)
            self.w_out = Linear(width, width, rng)
        self.norm_attn = LayerNorm(width, affine=not exact_counts)
        self.norm_ffn = LayerNorm(width, affine=not exact_counts)
        self.ffn_in = Linear(width, 4 * width, rng, bias=not exact_counts)
        self.ffn_out = Linear(4 * width, width, rng, bias=not exact_counts)

    def _attention(self, y: Tensor) -> Tensor:
        global _attn_score_entries
        t = y.data.shape[0]
        dk = self.width // self.heads
        if self.exact_counts:
            q = k = y
            v = matmul(y, self.w_value)
        else:
            q, k, v = self.w_query(y), self.w_key(y), self.w_value_proj(y)
        outs = []
        for h in range(self.heads):
            qh = narrow(q, 1, h * dk, dk)
            kh = narrow(k, 1, h * dk, dk)
            vh = narrow(v, 1, h * dk, dk)
            scores = matmul(qh, transpose(kh)) * (1.0 / math.sqrt(dk))
            _attn_score_entries += t * t
            outs.append(matmul(softmax(scores, axis=-1), vh))
        mixed = concat(outs, axis=1) if len(outs) > 1 else outs[0]
        if not self.exact_counts:
            mixed = self.w_out(mixed)
        return mixed

    def forward(self, x: Tensor) -> Tensor:
        x = x + self._attention(self.norm_attn(x))
        return x + self.ffn_out(relu(self.ffn_in(self.norm_ffn(x))))


@dataclass
class FilterOutput:
    """Per-modifier kept head lists (most to least probable) plus the kept
    vectors as one sequence, aligned with kept_flat_idx into the flat
    (n+1)^2 x r arc grid. logits_flat holds the noiseless filter logits
    for every arc cell (for diagnostics and the optional auxiliary loss)."""

    n: int
    k: int
    kept_heads: list[list[int]]
    kept_flat_idx: np.ndarray
    kept_vectors: Tensor | None
    discarded_flat_idx: np.ndarray
    probs: list[np.ndarray] = field(default_factory=list)
    logits_flat: Tensor | None = None


def filter_topk(v0_flat: Tensor, filter_head: Linear, n: int, k: int,
                mode: str = "eval", rng: np.random.Generator | None = None,
                gumbel_scale: float = 1.0, st_grad: bool = True) -> FilterOutput:
    """Keep the k highest-scoring head candidates for each modifier.

    Train mode adds Gumbel(0,1) noise (scaled) to the filter logits
    before the softmax and the sort. Ties break toward the smaller head
    index. With st_grad, kept vectors are straight-through nodes whose
    backward path is the probability-weighted expectation of the
    modifier's candidate vectors; otherwise they are plain gathers.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown filter mode {mode!r}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    big_n = n + 1
    if v0_flat.data.shape[0] != big_n * big_n:
        raise ValueError(f"arc grid has {v0_flat.data.shape[0]} rows, expected {big_n * big_n}")
    logits_all = filter_head(v0_flat)
    kept_heads: list[list[int]] = []
    kept_vecs: list[Tensor] = []
    kept_flat: list[int] = []
    probs_out: list[np.ndarray] = []
    for j in range(1, big_n):
        valid = [i for i in range(big_n) if i != j]
        idx = [i * big_n + j for i in valid]
        lg = reshape(embedding_gather(logits_all, idx), (len(valid),))
        if mode == "train" and gumbel_scale > 0.0:
            if rng is None:
                raise ValueError("train-mode filter noise needs an rng")
            lg = lg + Tensor(rng.gumbel(size=len(valid)) * gumbel_scale)
        probs = softmax(lg)
        order = argsort_descending(lg.data)
        kept_count = min(k, len(valid))
        heads_j = [valid[o] for o in order[:kept_count]]
        kept_heads.append(heads_j)
        probs_out.append(probs.data.copy())
        expectation = None
        if st_grad:
            rows = embedding_gather(v0_flat, idx)
            expectation = matmul(reshape(probs, (1, len(valid))), rows)
        for h in heads_j:
            hard = embedding_gather(v0_flat, [h * big_n + j])
            kept_vecs.append(straight_through(hard, expectation) if st_grad else hard)
            kept_flat.append(h * big_n + j)
    kept_flat_arr = np.asarray(kept_flat, dtype=np.intp)
    all_valid = np.asarray(
        [i * big_n + j for j in range(1, big_n) for i in range(big_n) if i != j],
        dtype=np.intp,
    )
    discarded = np.setdiff1d(all_valid, kept_flat_arr)
    kept_vectors = concat(kept_vecs, axis=0) if kept_vecs else None
    return FilterOutput(
        n=n,
        k=k,
        kept_heads=kept_heads,
        kept_flat_idx=kept_flat_arr,
        kept_vectors=kept_vectors,
        discarded_flat_idx=discarded,
        probs=probs_out,
        logits_flat=logits_all,
    )


def refine(v0_flat: Tensor, filter_output: FilterOutput | None,
           layers: ModuleList | list) -> Tensor:
    """Pass kept arc vectors through the layers; discarded rows are final.

    With no layers the input is returned unchanged (bitwise).
    """
    if layers is None or len(layers) == 0:
        return v0_flat
    if filter_output is None or filter_output.kept_vectors is None:
        raise ValueError("refinement with layers requires a filter output")
    x = filter_output.kept_vectors
    for layer in layers:
        x = layer(x)
    return row_scatter(v0_flat, filter_output.kept_flat_idx, x)
