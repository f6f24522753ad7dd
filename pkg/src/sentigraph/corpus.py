"""Dataset ingestion: aspect-annotated sentences with dependency parses.

Dataset wire format is one JSON record per line::

    {"tokens": ["the", "menu", "was", "limited"],
     "aspect_start": 1, "aspect_len": 1, "label": "negative",
     "deps": [[1, 0, "det"], [3, 1, "nsubj"], [3, 2, "cop"], [-1, 3, "root"]]}

``deps`` holds one ``[head_index, dependent_index, relation]`` triple per
token (head ``-1`` marks the root). A sentence with several aspects appears
as one record per aspect. Word vectors load from the usual text format of
one token followed by its decimals per line.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass

import numpy as np

LABELS = ("positive", "neutral", "negative")
LABEL_TO_INDEX = {label: i for i, label in enumerate(LABELS)}

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_ID = 0
UNK_ID = 1


class DatasetError(ValueError):
    """A dataset or embedding file failed validation."""


@dataclass(frozen=True)
class AspectSample:
    """One (sentence, aspect span, polarity, dependency parse) unit."""

    tokens: tuple[str, ...]
    aspect_start: int
    aspect_len: int
    label: str
    deps: tuple[tuple[int, int, str], ...]

    @property
    def n(self) -> int:
        return len(self.tokens)

    def validate(self, expected_labels=LABELS) -> None:
        n = self.n
        if n < 1:
            raise DatasetError("field 'tokens': empty sentence")
        if self.aspect_start < 0 or self.aspect_len < 1 \
                or self.aspect_start + self.aspect_len > n:
            raise DatasetError(
                f"field 'aspect_start'/'aspect_len': span [{self.aspect_start}, "
                f"{self.aspect_start + self.aspect_len}) outside sentence of length {n}")
        if self.label not in expected_labels:
            raise DatasetError(f"field 'label': {self.label!r} not in {tuple(expected_labels)}")
        if len(self.deps) != n:
            raise DatasetError(f"field 'deps': {len(self.deps)} entries for {n} tokens")
        seen = set()
        roots = 0
        children: list[list[int]] = [[] for _ in range(n)]
        root = -1
        for head, dep, rel in self.deps:
            if not (-1 <= head < n) or not (0 <= dep < n):
                raise DatasetError(f"field 'deps': index out of range in ({head}, {dep}, {rel!r})")
            if head == dep:
                raise DatasetError(f"field 'deps': token {dep} is its own head")
            if dep in seen:
                raise DatasetError(f"field 'deps': token {dep} has more than one head")
            seen.add(dep)
            if head == -1:
                roots += 1
                root = dep
            else:
                children[head].append(dep)
        if roots != 1:
            raise DatasetError(f"field 'deps': expected exactly one root, found {roots}")
        # a full traversal from the root must reach every token exactly once
        reached = 0
        stack = [root]
        while stack:
            reached += 1
            stack.extend(children[stack.pop()])
        if reached != n:
            raise DatasetError("field 'deps': edges do not form a single-rooted tree")


def _record_to_sample(record: dict, line_no: int) -> AspectSample:
    def need(field, kind):
        if field not in record:
            raise DatasetError(f"line {line_no}: missing field {field!r}")
        value = record[field]
        if not isinstance(value, kind):
            raise DatasetError(f"line {line_no}: field {field!r} has wrong type")
        return value

    tokens = need("tokens", list)
    if not all(isinstance(t, str) and t for t in tokens):
        raise DatasetError(f"line {line_no}: field 'tokens' must be non-empty strings")
    deps_raw = need("deps", list)
    deps = []
    for entry in deps_raw:
        if (not isinstance(entry, list)) or len(entry) != 3 \
                or not isinstance(entry[0], int) or not isinstance(entry[1], int) \
                or not isinstance(entry[2], str):
            raise DatasetError(f"line {line_no}: field 'deps' entries must be [head, dependent, relation]")
        deps.append((entry[0], entry[1], entry[2]))
    return AspectSample(
        tokens=tuple(tokens),
        aspect_start=need("aspect_start", int),
        aspect_len=need("aspect_len", int),
        label=need("label", str),
        deps=tuple(deps),
    )


def load_dataset(path, expected_labels=LABELS) -> list[AspectSample]:
    """Read and validate a JSON-lines dataset; raises DatasetError naming the offending line."""
    samples = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetError(f"line {line_no}: invalid JSON ({e.msg})") from e
            if not isinstance(record, dict):
                raise DatasetError(f"line {line_no}: record is not an object")
            sample = _record_to_sample(record, line_no)
            try:
                sample.validate(expected_labels)
            except DatasetError as e:
                raise DatasetError(f"line {line_no}: {e}") from e
            samples.append(sample)
    return samples


def save_dataset(path, samples) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in samples:
            record = {
                "tokens": list(s.tokens),
                "aspect_start": s.aspect_start,
                "aspect_len": s.aspect_len,
                "label": s.label,
                "deps": [list(d) for d in s.deps],
            }
            f.write(json.dumps(record) + "\n")


class Vocab:
    """Token ids with reserved slots: 0 = padding, 1 = unknown."""

    def __init__(self, id_to_token: list[str]):
        if id_to_token[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ValueError("vocab must start with the padding and unknown tokens")
        self.id_to_token = list(id_to_token)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("vocab contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def id(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def encode(self, tokens) -> np.ndarray:
        return np.array([self.id(t) for t in tokens], dtype=np.int64)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for token in self.id_to_token:
                f.write(token + "\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        with open(path, "r", encoding="utf-8") as f:
            return cls([line.rstrip("\n") for line in f if line.rstrip("\n")])


def build_vocab(samples, min_freq: int = 1) -> Vocab:
    """Frequency-filtered vocabulary, ordered by descending count then token."""
    if not samples:
        raise DatasetError("cannot build a vocabulary from an empty sample list")
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    counts = Counter()
    for s in samples:
        counts.update(s.tokens)
    kept = sorted((t for t, c in counts.items() if c >= min_freq),
                  key=lambda t: (-counts[t], t))
    return Vocab([PAD_TOKEN, UNK_TOKEN] + kept)


@dataclass(frozen=True)
class EmbeddingTable:
    """Dense word vectors, one row per vocabulary id."""

    vectors: np.ndarray

    def __post_init__(self):
        if self.vectors.ndim != 2:
            raise DatasetError("embedding table must be a 2-d matrix")
        if not np.all(np.isfinite(self.vectors)):
            raise DatasetError("embedding table contains non-finite values")


def random_embeddings(vocab: Vocab, d_w: int, rng: np.random.Generator) -> EmbeddingTable:
    """Uniform [-0.25, 0.25] rows for every token; padding row stays zero."""
    vectors = rng.uniform(-0.25, 0.25, size=(len(vocab), d_w))
    vectors[PAD_ID] = 0.0
    return EmbeddingTable(vectors=vectors)


def load_pretrained_embeddings(path, vocab: Vocab, d_w: int,
                               rng: np.random.Generator) -> EmbeddingTable:
    """Copy in-file vectors verbatim; out-of-file tokens get seeded uniform rows.

    Every line must carry exactly ``d_w`` values, whether or not its token
    is in the vocabulary.
    """
    table = random_embeddings(vocab, d_w, rng).vectors
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            token, values = parts[0], parts[1:]
            if len(values) != d_w:
                raise DatasetError(
                    f"line {line_no}: expected {d_w} values, found {len(values)}")
            if token in vocab:
                table[vocab.id(token)] = np.array([float(v) for v in values])
    table[PAD_ID] = 0.0
    return EmbeddingTable(vectors=table)


# ---------------------------------------------------------------------------
# converter for pre-parsed input

def read_conllu(path) -> list[dict]:
    """Parse a 10-column CoNLL-U-style file down to tokens and labeled edges.

    Only the index, form, head, and relation columns are used; multiword
    ranges and empty nodes are skipped. Heads convert from the 1-based
    convention (0 = root) to 0-based with -1 for the root.
    """
    sentences = []
    tokens: list[str] = []
    deps: list[tuple[int, int, str]] = []

    def flush():
        if tokens:
            sentences.append({"tokens": tuple(tokens), "deps": tuple(deps)})
            tokens.clear()
            deps.clear()

    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                flush()
                continue
            if line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) < 8:
                raise DatasetError(f"line {line_no}: expected >= 8 tab-separated columns")
            try:
                index = int(cols[0])
            except ValueError:
                continue  # multiword range or empty node
            try:
                head = int(cols[6])
            except ValueError as e:
                raise DatasetError(f"line {line_no}: head column is not an integer") from e
            tokens.append(cols[1])
            deps.append((head - 1, index - 1, cols[7]))
    flush()
    return sentences


def read_aspect_labels(path) -> list[tuple[int, int, int, str]]:
    """Aspect annotations: whitespace-separated
    ``sentence_index aspect_start aspect_len label`` per line, '#' comments allowed.
    """
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise DatasetError(f"line {line_no}: expected 4 columns, found {len(parts)}")
            try:
                rows.append((int(parts[0]), int(parts[1]), int(parts[2]), parts[3]))
            except ValueError as e:
                raise DatasetError(f"line {line_no}: non-integer index column") from e
    return rows


def conllu_to_samples(conllu_path, labels_path, expected_labels=LABELS) -> list[AspectSample]:
    """Join parsed sentences with aspect annotations into validated samples."""
    sentences = read_conllu(conllu_path)
    samples = []
    for row_no, (sent_index, start, length, label) in enumerate(read_aspect_labels(labels_path), 1):
        if not (0 <= sent_index < len(sentences)):
            raise DatasetError(
                f"annotation {row_no}: sentence index {sent_index} outside 0..{len(sentences) - 1}")
        sent = sentences[sent_index]
        sample = AspectSample(tokens=sent["tokens"], aspect_start=start,
                              aspect_len=length, label=label, deps=sent["deps"])
        try:
            sample.validate(expected_labels)
        except DatasetError as e:
            raise DatasetError(f"annotation {row_no}: {e}") from e
        samples.append(sample)
    return samples
