"""Arc and label scoring.

LocScorer is the two-pipeline baseline: one biaffine matrix for arc
scores, one biaffine tensor for label logits, reading from four
role-specialized token representations. ArcScorer is the single-pipeline
variant: one biaffine tensor produces an r-vector per arc, and small
FFN heads read score, label, and filter logits off those vectors.
"""

from __future__ import annotations

import numpy as np

from .nn import Linear, Module, glorot_uniform
from .tensor import (
    Tensor,
    concat,
    matmul,
    paired_bilinear,
    pairwise_bilinear,
    relu,
    reshape,
    transpose,
)

MASK_VALUE = -1e9


def arc_mask(n: int, neg: float = MASK_VALUE) -> np.ndarray:
    """(n+1)x(n+1) additive mask: diagonal and arcs into the root get
    ``neg``, everything else 0. The root may only ever be a head."""
    m = np.zeros((n + 1, n + 1))
    np.fill_diagonal(m, neg)
    m[:, 0] = neg
    return m


def apply_arc_mask(s: Tensor, n: int, neg: float = MASK_VALUE) -> Tensor:
    """Set invalid cells (diagonal, arcs into root) to exactly ``neg``;
    valid cells and their gradients pass through unchanged."""
    keep = np.ones((n + 1, n + 1))
    np.fill_diagonal(keep, 0.0)
    keep[:, 0] = 0.0
    return s * Tensor(keep) + Tensor((1.0 - keep) * neg)


def decode_scores(s: Tensor | np.ndarray, n: int) -> np.ndarray:
    """Score matrix for the decoders: true -inf on invalid cells."""
    arr = (s.data if isinstance(s, Tensor) else np.asarray(s)).copy()
    np.fill_diagonal(arr, -np.inf)
    arr[:, 0] = -np.inf
    return arr


def _ones_column(x: Tensor) -> Tensor:
    return concat([x, Tensor(np.ones((x.data.shape[0], 1)))], axis=1)


class LocScorer(Module):
    """Biaffine arc scores s_ij = h_i^T M m_j and biaffine label logits.

    The bias-augmented variant (biaffine_bias=True) appends a ones
    column to both inputs, which folds the linear and constant bias
    terms into the biaffine weights.
    """

    def __init__(self, x: int, y: int, n_labels: int, rng: np.random.Generator,
                 biaffine_bias: bool = False):
        super().__init__()
        if x < 1 or y < 1:
            raise ValueError(f"MLP output sizes must be positive, got x={x}, y={y}")
        self.x = x
        self.y = y
        self.n_labels = n_labels
        self.biaffine_bias = biaffine_bias
        xa = x + 1 if biaffine_bias else x
        ya = y + 1 if biaffine_bias else y
        self.arc_weight = Tensor(glorot_uniform((xa, xa), xa, xa, rng), requires_grad=True)
        self.label_weight = Tensor(glorot_uniform((ya, n_labels, ya), ya, ya, rng), requires_grad=True)

    def arc_score_matrix(self, h_arc: Tensor, m_arc: Tensor) -> Tensor:
        """S[i, j] = h_i^T M m_j with the validity mask added (-1e9 on
        the diagonal and on arcs into the root)."""
        if self.biaffine_bias:
            h_arc, m_arc = _ones_column(h_arc), _ones_column(m_arc)
        s = matmul(matmul(h_arc, self.arc_weight), transpose(m_arc))
        return apply_arc_mask(s, s.data.shape[0] - 1)

    def label_logits(self, h_lab_rows: Tensor, m_lab_rows: Tensor) -> Tensor:
        """Label logits for row-aligned (head, modifier) pairs."""
        if self.biaffine_bias:
            h_lab_rows, m_lab_rows = _ones_column(h_lab_rows), _ones_column(m_lab_rows)
        return paired_bilinear(h_lab_rows, self.label_weight, m_lab_rows)


class ArcScorer(Module):
    """Explicit arc vectors v_ij = h_i^T R m_j with heads reading off them:

    - score head: linear(r -> r/2), ReLU, linear(r/2 -> 1)
    - label head: linear(r -> 2L), ReLU, linear(2L -> L)
    - filter head (only when refinement layers exist): linear(r -> 1)
    """

    def __init__(self, d: int, r: int, n_labels: int, rng: np.random.Generator,
                 with_filter: bool = False, exact_counts: bool = False):
        super().__init__()
        if r % 2:
            raise ValueError(f"arc vector size must be even, got r={r}")
        self.d = d
        self.r = r
        self.n_labels = n_labels
        bias = not exact_counts
        self.arc_tensor = Tensor(glorot_uniform((d, r, d), d, d, rng), requires_grad=True)
        self.score_hidden = Linear(r, r // 2, rng, bias=bias)
        self.score_out = Linear(r // 2, 1, rng, bias=bias)
        self.label_hidden = Linear(r, 2 * n_labels, rng, bias=bias)
        self.label_out = Linear(2 * n_labels, n_labels, rng, bias=bias)
        self.filter_head = Linear(r, 1, rng, bias=bias) if with_filter else None

    def arc_vectors(self, h: Tensor, m: Tensor) -> Tensor:
        """Stage-0 arc vectors for every (head, modifier) pair:
        V[i, j] = bilinear(h_i, R, m_j), shape (n+1, n+1, r)."""
        return pairwise_bilinear(h, self.arc_tensor, m)

    def score_head(self, v_rows: Tensor) -> Tensor:
        """Scalar score per arc vector row; returns (t, 1)."""
        return self.score_out(relu(self.score_hidden(v_rows)))

    def label_head(self, v_rows: Tensor) -> Tensor:
        """Label logits per arc vector row; returns (t, L)."""
        return self.label_out(relu(self.label_hidden(v_rows)))

    def filter_logit(self, v_rows: Tensor) -> Tensor:
        if self.filter_head is None:
            raise ValueError("this scorer was built without a filter head")
        return self.filter_head(v_rows)

    def score_matrix_from(self, v_flat: Tensor, n: int) -> Tensor:
        """Masked (n+1)x(n+1) score matrix read from flat arc vectors."""
        s = reshape(self.score_head(v_flat), (n + 1, n + 1))
        return apply_arc_mask(s, n)
