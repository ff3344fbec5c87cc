"""LZ78 phrase tree and the probability assignment it induces.

The tree starts as a root with one leaf per symbol. Training walks each
sequence from the root; reaching a leaf completes a phrase, and that leaf
is expanded with a fresh leaf per symbol. Every node's counter is the
number of leaves below it, so the probability of stepping from ``node`` to
``child`` is ``counter(child) / counter(node)``. Scoring walks the same way
and jumps back to the root whenever it lands on a leaf.

Example:

    >>> m = train(new_model(4), [encode("aabdbbacbbda", "abcd")])
    >>> m.leaf_count
    28
    >>> sequence_probability(m, encode("bdca", "abcd"))
    Fraction(1, 784)
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .errors import (
    CorruptModelError,
    EmptyInputError,
    InvalidAlphabetError,
    InvalidSymbolError,
    TooShortError,
)

FORMAT_VERSION = 1


def encode(text: str, alphabet: str) -> np.ndarray:
    """Map each character of ``text`` to its index in ``alphabet``."""
    index = {c: i for i, c in enumerate(alphabet)}
    try:
        return np.array([index[c] for c in text], dtype=np.int64)
    except KeyError as exc:
        pos = next(i for i, c in enumerate(text) if c not in index)
        raise InvalidSymbolError(pos, exc.args[0], len(alphabet)) from None


def decode(symbols: Iterable[int], alphabet: str) -> str:
    return "".join(alphabet[int(s)] for s in symbols)


def as_symbols(seq, alphabet_size: int, sequence_index=None) -> np.ndarray:
    """Validate ``seq`` against the alphabet and return it as an int64 array."""
    arr = np.asarray(seq)
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    if arr.size == 0:
        return arr.astype(np.int64)
    if not np.issubdtype(arr.dtype, np.integer):
        if arr.dtype == object or np.issubdtype(arr.dtype, np.floating):
            rounded = arr.astype(np.float64)
            bad = np.flatnonzero(rounded != np.floor(rounded))
            if bad.size:
                raise InvalidSymbolError(int(bad[0]), arr[bad[0]], alphabet_size, sequence_index)
            arr = rounded
        else:
            raise InvalidSymbolError(0, arr[0], alphabet_size, sequence_index)
    arr = arr.astype(np.int64)
    bad = np.flatnonzero((arr < 0) | (arr >= alphabet_size))
    if bad.size:
        i = int(bad[0])
        raise InvalidSymbolError(i, int(arr[i]), alphabet_size, sequence_index)
    return arr


def _as_sequence_list(sequences) -> list:
    if isinstance(sequences, np.ndarray) and sequences.ndim == 1:
        return [sequences]
    seqs = list(sequences)
    if seqs and isinstance(seqs[0], (int, np.integer)):
        return [seqs]
    return seqs


@dataclass(frozen=True)
class TreeNode:
    """Read-only view of one node of a :class:`LZModel`."""

    model: "LZModel"
    index: int

    @property
    def symbol(self):
        s = int(self.model._symbols[self.index])
        return None if s < 0 else s

    @property
    def counter(self) -> int:
        return int(self.model._counts[self.index])

    @property
    def is_leaf(self) -> bool:
        return bool(self.model._children[self.index, 0] < 0)

    @property
    def children(self) -> list:
        if self.is_leaf:
            return []
        return [TreeNode(self.model, int(c)) for c in self.model._children[self.index]]

    @property
    def probability(self) -> Fraction:
        return Fraction(self.counter, self.model.leaf_count)

    def child(self, symbol: int) -> "TreeNode":
        if self.is_leaf:
            raise KeyError(f"node {self.index} is a leaf")
        return TreeNode(self.model, int(self.model._children[self.index, symbol]))


class LZModel:
    """LZ78 phrase tree over the alphabet ``{0, ..., alphabet_size - 1}``.

    Nodes live in flat arrays (see :mod:`lzanomaly._kernels`); index 0 is the
    root. ``quantizer`` and ``metadata`` are persisted with the model but
    never consulted by training or scoring.
    """

    def __init__(self, alphabet_size: int, capacity: int | None = None):
        if isinstance(alphabet_size, bool) or not isinstance(alphabet_size, (int, np.integer)):
            raise InvalidAlphabetError(f"alphabet size must be an integer, got {alphabet_size!r}")
        if alphabet_size < 2:
            raise InvalidAlphabetError(f"alphabet size must be >= 2, got {alphabet_size}")
        k = int(alphabet_size)
        self.alphabet_size = k
        self.trained_symbol_count = 0
        self.quantizer = None
        self.metadata = {}
        self._allocate(max(capacity or 0, 1 + k))
        self._children[0] = np.arange(1, k + 1)
        self._counts[0] = k
        self._counts[1 : k + 1] = 1
        self._parent[1 : k + 1] = 0
        self._symbols[1 : k + 1] = np.arange(k)
        self._n_nodes = 1 + k

    def _allocate(self, capacity):
        k = self.alphabet_size
        self._children = np.full((capacity, k), -1, dtype=np.int64)
        self._counts = np.zeros(capacity, dtype=np.int64)
        self._parent = np.full(capacity, -1, dtype=np.int64)
        self._symbols = np.full(capacity, -1, dtype=np.int64)

    def _grow(self, min_capacity):
        old = self._counts.shape[0]
        cap = max(min_capacity, 2 * old)
        children, counts, parent, symbols = self._children, self._counts, self._parent, self._symbols
        self._allocate(cap)
        self._children[:old] = children
        self._counts[:old] = counts
        self._parent[:old] = parent
        self._symbols[:old] = symbols

    # -- structure ---------------------------------------------------------

    @property
    def root(self) -> TreeNode:
        return TreeNode(self, 0)

    @property
    def node_count(self) -> int:
        return self._n_nodes

    @property
    def leaf_count(self) -> int:
        return int(self._counts[0])

    @property
    def phrase_count(self) -> int:
        return (self.leaf_count - self.alphabet_size) // (self.alphabet_size - 1)

    @property
    def children(self) -> np.ndarray:
        return self._children[: self._n_nodes]

    @property
    def counts(self) -> np.ndarray:
        return self._counts[: self._n_nodes]

    def node_at(self, path: Sequence[int]) -> TreeNode:
        """Node reached by following ``path`` from the root, without resets."""
        node = self.root
        for s in as_symbols(path, self.alphabet_size):
            node = node.child(int(s))
        return node

    def depth(self) -> int:
        depth = np.zeros(self._n_nodes, dtype=np.int64)
        parent = self._parent[: self._n_nodes]
        for i in range(1, self._n_nodes):
            depth[i] = depth[parent[i]] + 1
        return int(depth.max())

    def copy(self) -> "LZModel":
        other = LZModel.__new__(LZModel)
        other.alphabet_size = self.alphabet_size
        other.trained_symbol_count = self.trained_symbol_count
        other.quantizer = self.quantizer
        other.metadata = dict(self.metadata)
        n = self._n_nodes
        other._children = self._children[:n].copy()
        other._counts = self._counts[:n].copy()
        other._parent = self._parent[:n].copy()
        other._symbols = self._symbols[:n].copy()
        other._n_nodes = n
        return other

    def preorder(self) -> list:
        """``[symbol, is_leaf]`` records in preorder; the persisted shape."""
        nodes = []
        children = self._children
        stack = [0]
        while stack:
            node = stack.pop()
            leaf = bool(children[node, 0] < 0)
            sym = int(self._symbols[node])
            nodes.append([None if sym < 0 else sym, leaf])
            if not leaf:
                stack.extend(int(c) for c in children[node, ::-1])
        return nodes

    def same_tree(self, other: "LZModel") -> bool:
        """Structural equality; node numbering may differ."""
        return (
            self.alphabet_size == other.alphabet_size
            and self._n_nodes == other._n_nodes
            and self.preorder() == other.preorder()
        )

    # -- training ----------------------------------------------------------

    def train(self, sequences, *, phrase_log: list | None = None) -> "LZModel":
        """Extend the tree with every complete phrase of each sequence.

        Each sequence is parsed from the root; a trailing partial phrase is
        dropped. If ``phrase_log`` is given, ``(sequence_index, start, end)``
        is appended for every phrase parsed.
        """
        seqs = [as_symbols(s, self.alphabet_size, i) for i, s in enumerate(_as_sequence_list(sequences))]
        for idx, seq in enumerate(seqs):
            self._update(seq, idx, phrase_log)
        return self

    def update(self, seq) -> float:
        """Train on one sequence and return its sequential log2-probability,
        i.e. the universal code length of ``seq`` given the tree so far."""
        return self._update(as_symbols(seq, self.alphabet_size), 0, None)

    def _update(self, seq, idx, phrase_log) -> float:
        kern = _kernels.active
        k = self.alphabet_size
        n = seq.shape[0]
        if n == 0:
            return 0.0
        ends = np.empty(n, dtype=np.int64)
        pos, cur, n_ends, logp = 0, 0, 0, 0.0
        while True:
            pos, cur, self._n_nodes, n_ends, logp = kern.train(
                self._children, self._counts, self._parent, self._symbols,
                self._n_nodes, seq, pos, cur, ends, n_ends, logp,
            )
            if pos >= n:
                break
            remaining = n - pos
            self._grow(self._n_nodes + k * min(remaining, max(1024, remaining // 4)))
        self.trained_symbol_count += n
        if phrase_log is not None:
            start = 0
            for end in ends[:n_ends]:
                phrase_log.append((idx, start, int(end)))
                start = int(end)
        return float(logp)

    # -- scoring -----------------------------------------------------------

    def log_probability(self, seq) -> float:
        seq = as_symbols(seq, self.alphabet_size)
        if seq.size == 0:
            raise EmptyInputError("cannot score an empty sequence")
        total, _ = _kernels.active.score(self._children, self._counts, seq, 0)
        return float(total)

    def symbol_log_probabilities(self, seq) -> np.ndarray:
        seq = as_symbols(seq, self.alphabet_size)
        out = np.empty(seq.shape[0], dtype=np.float64)
        _kernels.active.symbol_scores(self._children, self._counts, seq, 0, out)
        return out

    def window_log_probabilities(self, seq, length: int, stride: int = 1) -> np.ndarray:
        """Log2-probability of every window ``seq[i*stride : i*stride+length]``,
        each scored independently from the root."""
        seq = as_symbols(seq, self.alphabet_size)
        if length < 1 or stride < 1:
            raise ValueError("window length and stride must be >= 1")
        if seq.shape[0] < length:
            raise TooShortError(f"sequence of length {seq.shape[0]} is shorter than window {length}")
        return _kernels.active.window_scores(self._children, self._counts, seq, length, stride)

    def scorer(self) -> "StreamingScorer":
        return StreamingScorer(self)

    def sample(self, length: int, seed=None) -> np.ndarray:
        if length < 1:
            raise ValueError("sample length must be >= 1")
        rng = np.random.default_rng(seed)
        u = rng.random(length)
        out = np.empty(length, dtype=np.int64)
        _kernels.active.sample(self._children, self._counts, u, out)
        return out

    def __repr__(self):
        return (
            f"LZModel(alphabet_size={self.alphabet_size}, phrases={self.phrase_count}, "
            f"leaves={self.leaf_count}, nodes={self._n_nodes})"
        )


class StreamingScorer:
    """Scores a sequence fed in arbitrary chunks; keeps private traversal state."""

    def __init__(self, model: LZModel):
        self.model = model
        self.node = 0
        self.log_probability = 0.0
        self.length = 0

    def update(self, chunk) -> float:
        seq = as_symbols(chunk, self.model.alphabet_size)
        if seq.size:
            total, self.node = _kernels.active.score(self.model._children, self.model._counts, seq, self.node)
            self.log_probability += float(total)
            self.length += int(seq.size)
        return self.log_probability

    @property
    def per_symbol(self) -> float:
        if self.length == 0:
            raise EmptyInputError("no symbols scored yet")
        return self.log_probability / self.length


# -- functional surface ------------------------------------------------------


def new_model(alphabet_size: int) -> LZModel:
    return LZModel(alphabet_size)


def train(model: LZModel, sequences) -> LZModel:
    return model.train(sequences)


def _walk_exact(model: LZModel, seq: np.ndarray, node: int = 0):
    prob = Fraction(1)
    children, counts = model._children, model._counts
    for s in seq:
        child = int(children[node, s])
        prob *= Fraction(int(counts[child]), int(counts[node]))
        node = 0 if children[child, 0] < 0 else child
    return prob, node


def sequence_probability(model: LZModel, seq) -> Fraction:
    """Exact probability of ``seq`` as a rational number."""
    seq = as_symbols(seq, model.alphabet_size)
    if seq.size == 0:
        raise EmptyInputError("cannot score an empty sequence")
    return _walk_exact(model, seq)[0]


def phrase_probability(model: LZModel, phrase) -> Fraction:
    """Probability of ``phrase``.

    When the phrase follows a single root-to-node path the edge product
    telescopes to ``counter(node) / leaf_count``; otherwise the walk resets
    at leaves exactly as in :func:`sequence_probability`.
    """
    phrase = as_symbols(phrase, model.alphabet_size)
    if phrase.size == 0:
        raise EmptyInputError("phrase must be nonempty")
    node = 0
    children = model._children
    for i, s in enumerate(phrase):
        child = int(children[node, s])
        if i == phrase.size - 1:
            return Fraction(int(model._counts[child]), model.leaf_count)
        if children[child, 0] < 0:
            break
        node = child
    return _walk_exact(model, phrase)[0]


def sequence_log_probability(model: LZModel, seq) -> float:
    return model.log_probability(seq)


def per_symbol_log_probability(model: LZModel, seq) -> float:
    seq = as_symbols(seq, model.alphabet_size)
    return model.log_probability(seq) / seq.shape[0]


def conditional_probability(model: LZModel, context, next_symbol: int) -> Fraction:
    """``P(next_symbol | context)`` under the reset-at-leaf walk."""
    context = as_symbols(context, model.alphabet_size)
    nxt = as_symbols([next_symbol], model.alphabet_size)[0]
    _, node = _walk_exact(model, context)
    child = int(model._children[node, nxt])
    return Fraction(int(model._counts[child]), int(model._counts[node]))


def sample(model: LZModel, length: int, seed=None) -> np.ndarray:
    return model.sample(length, seed)


# -- persistence -------------------------------------------------------------


def to_document(model: LZModel) -> dict:
    doc = {
        "version": FORMAT_VERSION,
        "alphabet_size": model.alphabet_size,
        "centroids": None,
        "nodes": model.preorder(),
        "trained_symbol_count": model.trained_symbol_count,
    }
    if model.quantizer is not None:
        doc.update(model.quantizer.to_document())
    if model.metadata:
        doc["meta"] = dict(model.metadata)
    return doc


def serialize(model: LZModel) -> str:
    return json.dumps(to_document(model), separators=(",", ":"))


def from_document(doc) -> LZModel:
    if not isinstance(doc, dict):
        raise CorruptModelError("model document must be a JSON object")
    if doc.get("version") != FORMAT_VERSION:
        raise CorruptModelError(f"unsupported model version {doc.get('version')!r}")
    k = doc.get("alphabet_size")
    if isinstance(k, bool) or not isinstance(k, int) or k < 2:
        raise CorruptModelError(f"invalid alphabet_size {k!r}")
    nodes = doc.get("nodes")
    if not isinstance(nodes, list) or not nodes:
        raise CorruptModelError("missing node list")
    n = len(nodes)
    children = np.full((n, k), -1, dtype=np.int64)
    parent = np.full(n, -1, dtype=np.int64)
    symbols = np.full(n, -1, dtype=np.int64)

    def record(i):
        rec = nodes[i]
        if not (isinstance(rec, list) and len(rec) == 2 and isinstance(rec[1], bool)):
            raise CorruptModelError(f"node {i}: expected [symbol, leaf]")
        return rec[0], rec[1]

    sym, leaf = record(0)
    if sym is not None or leaf:
        raise CorruptModelError("first node must be an internal root with null symbol")
    # stack of [node, next child symbol expected]
    stack = [[0, 0]]
    i = 1
    while stack:
        top = stack[-1]
        if top[1] == k:
            stack.pop()
            continue
        if i >= n:
            raise CorruptModelError("node list ends inside an internal node")
        sym, leaf = record(i)
        if sym != top[1] or isinstance(sym, bool):
            raise CorruptModelError(f"node {i}: expected symbol {top[1]}, got {sym!r}")
        children[top[0], top[1]] = i
        parent[i] = top[0]
        symbols[i] = sym
        top[1] += 1
        if not leaf:
            stack.append([i, 0])
        i += 1
    if i != n:
        raise CorruptModelError(f"{n - i} trailing nodes after the tree is complete")

    counts = np.zeros(n, dtype=np.int64)
    _kernels.active.recount(children, counts)
    internal = children[:, 0] >= 0
    if (counts < 1).any() or not np.array_equal(
        counts[internal], counts[children[internal]].sum(axis=1)
    ):
        raise CorruptModelError("recomputed counters violate the tree invariants")
    if (counts[0] - k) % (k - 1) != 0:
        raise CorruptModelError("leaf count inconsistent with alphabet size")

    model = LZModel.__new__(LZModel)
    model.alphabet_size = k
    model.trained_symbol_count = int(doc.get("trained_symbol_count") or 0)
    model._children, model._counts, model._parent, model._symbols = children, counts, parent, symbols
    model._n_nodes = n
    model.quantizer = None
    meta = doc.get("meta") or {}
    if not isinstance(meta, dict):
        raise CorruptModelError("meta must be an object")
    model.metadata = dict(meta)
    if doc.get("centroids") is not None:
        from .preprocess import Quantizer

        try:
            model.quantizer = Quantizer.from_document(doc)
        except (TypeError, ValueError) as exc:
            raise CorruptModelError(f"invalid centroids: {exc}") from None
    return model


def deserialize(text: str) -> LZModel:
    try:
        doc = json.loads(text)
    except (TypeError, ValueError) as exc:
        raise CorruptModelError(f"model text is not valid JSON: {exc}") from None
    return from_document(doc)


def save(model: LZModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize(model))


def load(path) -> LZModel:
    with open(path, encoding="utf-8") as fh:
        return deserialize(fh.read())
