"""Exact tree inference over arc score matrices.

Score matrices are plain (n+1) x (n+1) float arrays with S[i][j] the
score of the arc i -> j; the diagonal and column 0 are ignored (they
may hold -inf). All decoders enforce the single-root constraint: token
0 is the dummy root and heads exactly one word.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

NEG_INF = float("-inf")


def tree_score(scores: np.ndarray, heads: list[int]) -> float:
    """Sum of arc scores of the tree given as a 1-indexed head array."""
    n = len(heads)
    return float(sum(scores[heads[j - 1], j] for j in range(1, n + 1)))


def is_single_root_tree(heads: list[int]) -> bool:
    n = len(heads)
    if sum(1 for h in heads if h == 0) != 1:
        return False
    if any(h == j for j, h in enumerate(heads, start=1)):
        return False
    if any(not 0 <= h <= n for h in heads):
        return False
    # every node must reach the root without revisiting
    for j in range(1, n + 1):
        seen = set()
        v = j
        while v != 0:
            if v in seen:
                return False
            seen.add(v)
            v = heads[v - 1]
    return True


def is_projective(heads: list[int]) -> bool:
    """No two arcs cross (root arcs included; root sits at position 0)."""
    arcs = [(min(h, j), max(h, j)) for j, h in enumerate(heads, start=1)]
    for (a1, b1), (a2, b2) in itertools.combinations(arcs, 2):
        if a1 < a2 < b1 < b2 or a2 < a1 < b2 < b1:
            return False
    return True


def eisner(scores: np.ndarray) -> list[int]:
    """Maximum projective single-root tree in O(n^3) time, O(n^2) space.

    The chart runs over word positions 1..n; the root arc is attached
    afterwards, once, to the best chart decomposition, which enforces
    the single-root constraint exactly.
    """
    n = scores.shape[0] - 1
    if n == 0:
        return []
    if n == 1:
        return [0]
    # complete/incomplete spans over [s, t], 1 <= s <= t <= n
    c_left = np.zeros((n + 1, n + 1))    # headed at t
    c_right = np.zeros((n + 1, n + 1))   # headed at s
    i_left = np.zeros((n + 1, n + 1))    # arc t -> s
    i_right = np.zeros((n + 1, n + 1))   # arc s -> t
    bp_cl = np.zeros((n + 1, n + 1), dtype=int)
    bp_cr = np.zeros((n + 1, n + 1), dtype=int)
    bp_il = np.zeros((n + 1, n + 1), dtype=int)
    bp_ir = np.zeros((n + 1, n + 1), dtype=int)

    for length in range(1, n):
        for s in range(1, n - length + 1):
            t = s + length
            # incomplete: choose split q in [s, t)
            combo = c_right[s, s:t] + c_left[s + 1:t + 1, t]
            q = int(np.argmax(combo))
            i_left[s, t] = scores[t, s] + combo[q]
            i_right[s, t] = scores[s, t] + combo[q]
            bp_il[s, t] = s + q
            bp_ir[s, t] = s + q
            # complete headed at t: split q in [s, t)
            combo = c_left[s, s:t] + i_left[s:t, t]
            q = int(np.argmax(combo))
            c_left[s, t] = combo[q]
            bp_cl[s, t] = s + q
            # complete headed at s: split q in (s, t]
            combo = i_right[s, s + 1:t + 1] + c_right[s + 1:t + 1, t]
            q = int(np.argmax(combo))
            c_right[s, t] = combo[q]
            bp_cr[s, t] = s + 1 + q

    best_c, best_val = 1, NEG_INF
    for c in range(1, n + 1):
        val = scores[0, c] + c_left[1, c] + c_right[c, n]
        if val > best_val:
            best_val, best_c = val, c

    heads = [0] * (n + 1)
    stack = [("cl", 1, best_c), ("cr", best_c, n)]
    heads[best_c] = 0
    while stack:
        kind, s, t = stack.pop()
        if s == t:
            continue
        if kind == "cl":
            q = bp_cl[s, t]
            stack.append(("cl", s, q))
            stack.append(("il", q, t))
        elif kind == "cr":
            q = bp_cr[s, t]
            stack.append(("ir", s, q))
            stack.append(("cr", q, t))
        elif kind == "il":
            heads[s] = t
            q = bp_il[s, t]
            stack.append(("cr", s, q))
            stack.append(("cl", q + 1, t))
        else:  # ir
            heads[t] = s
            q = bp_ir[s, t]
            stack.append(("cr", s, q))
            stack.append(("cl", q + 1, t))
    return heads[1:]


def _find_cycle(best: np.ndarray, m: int) -> list[int] | None:
    color = [0] * m
    color[0] = 2
    for start in range(1, m):
        if color[start] != 0:
            continue
        path = [start]
        color[start] = 1
        while True:
            nxt = int(best[path[-1]])
            if nxt == 0 or color[nxt] == 2:
                break
            if color[nxt] == 1:
                return path[path.index(nxt):]
            color[nxt] = 1
            path.append(nxt)
        for v in path:
            color[v] = 2
    return None


def _greedy_arborescence(scores: np.ndarray) -> np.ndarray:
    """Greedy-contract maximum arborescence rooted at node 0.

    May attach several children to the root; the single-root constraint
    is enforced by the caller.
    """
    m = scores.shape[0]
    best = np.full(m, -1, dtype=int)
    for j in range(1, m):
        col = scores[:, j].copy()
        col[j] = NEG_INF
        best[j] = int(np.argmax(col))
    cycle = _find_cycle(best, m)
    if cycle is None:
        return best

    cyc = sorted(cycle)
    cyc_set = set(cyc)
    rest = [v for v in range(m) if v not in cyc_set]
    new_index = {v: i for i, v in enumerate(rest)}
    c_star = len(rest)
    m2 = len(rest) + 1
    contracted = np.full((m2, m2), NEG_INF)
    for i_old in rest:
        for j_old in rest:
            if i_old != j_old:
                contracted[new_index[i_old], new_index[j_old]] = scores[i_old, j_old]
    enter_choice: dict[int, tuple[int, int]] = {}
    for i_old in rest:
        best_val, best_v = NEG_INF, cyc[0]
        for v in cyc:
            val = scores[i_old, v] - scores[best[v], v]
            if val > best_val:
                best_val, best_v = val, v
        contracted[new_index[i_old], c_star] = best_val
        enter_choice[new_index[i_old]] = (i_old, best_v)
    exit_choice: dict[int, int] = {}
    for j_old in rest:
        if j_old == 0:
            continue
        best_val, best_v = NEG_INF, cyc[0]
        for v in cyc:
            if scores[v, j_old] > best_val:
                best_val, best_v = scores[v, j_old], v
        contracted[c_star, new_index[j_old]] = best_val
        exit_choice[new_index[j_old]] = best_v

    sub = _greedy_arborescence(contracted)
    heads = np.full(m, -1, dtype=int)
    for v in cyc:
        heads[v] = best[v]
    for j_old in rest:
        if j_old == 0:
            continue
        j_new = new_index[j_old]
        if sub[j_new] == c_star:
            heads[j_old] = exit_choice[j_new]
        else:
            heads[j_old] = rest[sub[j_new]]
    entering_i, entering_v = enter_choice[int(sub[c_star])]
    heads[entering_v] = entering_i
    return heads


def _masked(scores: np.ndarray) -> np.ndarray:
    s = scores.astype(float).copy()
    np.fill_diagonal(s, NEG_INF)
    s[:, 0] = NEG_INF
    return s


def cle(scores: np.ndarray) -> list[int]:
    """Maximum spanning arborescence with exactly one root child.

    Runs greedy contraction once; if the result attaches several words
    to the root, re-runs once per forced root child and keeps the best
    total (exact; costs one extra decode per word).
    """
    n = scores.shape[0] - 1
    if n == 0:
        return []
    if n == 1:
        return [0]
    s = _masked(scores)
    heads = _greedy_arborescence(s)
    if int(np.sum(heads[1:] == 0)) == 1:
        return heads[1:].tolist()
    best_heads, best_val = None, NEG_INF
    for c in range(1, n + 1):
        forced = s.copy()
        forced[0, :] = NEG_INF
        forced[0, c] = s[0, c]
        cand = _greedy_arborescence(forced)
        val = tree_score(s, cand[1:].tolist())
        if val > best_val:
            best_val, best_heads = val, cand
    return best_heads[1:].tolist()


@lru_cache(maxsize=32)
def _candidate_trees(n: int, projective: bool) -> tuple[tuple[int, ...], ...]:
    out = []
    for heads in itertools.product(range(n + 1), repeat=n):
        if any(h == j for j, h in enumerate(heads, start=1)):
            continue
        if sum(1 for h in heads if h == 0) != 1:
            continue
        if not is_single_root_tree(list(heads)):
            continue
        if projective and not is_projective(list(heads)):
            continue
        out.append(heads)
    return tuple(out)


def brute_force_best_tree(scores: np.ndarray, projective: bool) -> tuple[list[int], float]:
    """Exhaustive argmax over single-root trees; the test oracle."""
    n = scores.shape[0] - 1
    if n > 7:
        raise ValueError(f"brute force refuses n={n} > 7")
    if n == 0:
        return [], 0.0
    best_heads, best_val = None, NEG_INF
    for heads in _candidate_trees(n, projective):
        val = tree_score(scores, list(heads))
        if val > best_val:
            best_val, best_heads = val, heads
    return list(best_heads), best_val
