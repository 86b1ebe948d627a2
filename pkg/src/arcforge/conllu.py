"""CoNLL-U reading/writing and vocabulary construction.

Only the ID, FORM, UPOS, HEAD and DEPREL columns are consumed; the
remaining columns are written back as underscores. Multiword-token
ranges ("3-4") and empty nodes ("5.1") are skipped, '#' lines ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class ConlluError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass
class Token:
    form: str
    upos: str
    gold_head: int
    gold_label: str


@dataclass
class Sentence:
    """Tokens at positions 1..n; the dummy root at position 0 is implicit."""

    tokens: list[Token] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def gold_heads(self) -> list[int]:
        return [t.gold_head for t in self.tokens]

    @property
    def gold_labels(self) -> list[str]:
        return [t.gold_label for t in self.tokens]


def check_tree(heads: list[int]) -> bool:
    """True iff heads (1-indexed positions, 0 = root) form a tree rooted at 0."""
    n = len(heads)
    if any(not 0 <= h <= n for h in heads):
        return False
    if any(heads[j - 1] == j for j in range(1, n + 1)):
        return False
    children: list[list[int]] = [[] for _ in range(n + 1)]
    for j in range(1, n + 1):
        children[heads[j - 1]].append(j)
    seen = set()
    stack = [0]
    while stack:
        v = stack.pop()
        if v in seen:
            return False
        seen.add(v)
        stack.extend(children[v])
    return len(seen) == n + 1


def parse_conllu(text: str) -> list[Sentence]:
    sentences: list[Sentence] = []
    tokens: list[Token] = []
    first_line = 0

    def flush(at_line: int):
        nonlocal tokens, first_line
        if not tokens:
            return
        heads = [t.gold_head for t in tokens]
        for i, h in enumerate(heads):
            if h > len(tokens):
                raise ConlluError(f"HEAD {h} out of range for a {len(tokens)}-token sentence", first_line + i)
            if h == i + 1:
                raise ConlluError(f"token {i + 1} is its own head", first_line + i)
        if not check_tree(heads):
            raise ConlluError("gold heads do not form a tree rooted at 0", first_line)
        sentences.append(Sentence(tokens))
        tokens = []

    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip("\r")
        if not line.strip():
            flush(lineno)
            continue
        if line.lstrip().startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) < 8:
            cols = line.split()
        if len(cols) < 8:
            raise ConlluError(f"expected at least 8 columns, got {len(cols)}", lineno)
        tok_id = cols[0]
        if "-" in tok_id or "." in tok_id:
            continue
        try:
            int(tok_id)
        except ValueError:
            raise ConlluError(f"bad token id {tok_id!r}", lineno) from None
        try:
            head = int(cols[6])
        except ValueError:
            raise ConlluError(f"non-integer HEAD {cols[6]!r}", lineno) from None
        if head < 0:
            raise ConlluError(f"negative HEAD {head}", lineno)
        if not tokens:
            first_line = lineno
        tokens.append(Token(form=cols[1], upos=cols[3], gold_head=head, gold_label=cols[7]))
    flush(len(text.split("\n")) + 1)
    return sentences


def write_conllu(sentences: list[Sentence], predictions: list[tuple[list[int], list[str]]] | None = None) -> str:
    """Render sentences; predictions, when given, replace HEAD/DEPREL."""
    if predictions is not None and len(predictions) != len(sentences):
        raise ValueError(f"{len(predictions)} predictions for {len(sentences)} sentences")
    blocks = []
    for si, sent in enumerate(sentences):
        lines = []
        for i, tok in enumerate(sent.tokens, start=1):
            if predictions is None:
                head, label = tok.gold_head, tok.gold_label
            else:
                heads, labels = predictions[si]
                head, label = heads[i - 1], labels[i - 1]
            lines.append(f"{i}\t{tok.form}\t_\t{tok.upos}\t_\t_\t{head}\t{label}\t_\t_")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


ROOT_ID = 0
UNK_ID = 1


@dataclass
class Vocab:
    """Form/UPOS tables reserve id 0 for the root marker and 1 for unknowns;
    label ids are dense from 0."""

    form_to_id: dict[str, int]
    upos_to_id: dict[str, int]
    label_to_id: dict[str, int]

    @property
    def n_forms(self) -> int:
        return len(self.form_to_id) + 2

    @property
    def n_upos(self) -> int:
        return len(self.upos_to_id) + 2

    @property
    def n_labels(self) -> int:
        return len(self.label_to_id)

    def form_id(self, form: str) -> int:
        return self.form_to_id.get(form.lower(), UNK_ID)

    def upos_id(self, upos: str) -> int:
        return self.upos_to_id.get(upos, UNK_ID)

    def label_id(self, label: str) -> int:
        if label not in self.label_to_id:
            raise KeyError(f"unknown dependency label {label!r}")
        return self.label_to_id[label]

    def label_name(self, idx: int) -> str:
        return self._labels_by_id[idx]

    def __post_init__(self):
        self._labels_by_id = {i: lab for lab, i in self.label_to_id.items()}

    def to_dict(self) -> dict:
        return {
            "form_to_id": self.form_to_id,
            "upos_to_id": self.upos_to_id,
            "label_to_id": self.label_to_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Vocab":
        return cls(
            form_to_id=dict(d["form_to_id"]),
            upos_to_id=dict(d["upos_to_id"]),
            label_to_id=dict(d["label_to_id"]),
        )


def build_vocab(sentences: list[Sentence], min_count: int = 1) -> Vocab:
    """Forms are lowercased; those below min_count map to the unknown id."""
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    if not sentences:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    counts: dict[str, int] = {}
    upos_to_id: dict[str, int] = {}
    label_to_id: dict[str, int] = {}
    for sent in sentences:
        for tok in sent.tokens:
            low = tok.form.lower()
            counts[low] = counts.get(low, 0) + 1
            if tok.upos not in upos_to_id:
                upos_to_id[tok.upos] = 2 + len(upos_to_id)
            if tok.gold_label not in label_to_id:
                label_to_id[tok.gold_label] = len(label_to_id)
    form_to_id: dict[str, int] = {}
    for form, c in counts.items():
        if c >= min_count:
            form_to_id[form] = 2 + len(form_to_id)
    return Vocab(form_to_id=form_to_id, upos_to_id=upos_to_id, label_to_id=label_to_id)
