"""Distribution-level comparisons between models and sequences.

* tuple distributions: mass a model assigns to every length-L tuple
* window histograms: binned log2-probabilities of sliding windows
* KL / MSE distances between either kind
* empirical types and exact type-class probabilities with their bounds
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (
    EmptyInputError,
    IncompatibleSupportError,
    InvalidSymbolError,
    InvalidTypeError,
    TooShortError,
)
from .model import LZModel, as_symbols

DEFAULT_EPSILON = 1e-6
DEFAULT_BINS = 64
DEFAULT_WINDOW = 20


# -- tuple distributions -----------------------------------------------------


@dataclass
class TupleDistribution:
    """Probability mass over length-``tuple_length`` tuples.

    Dense distributions hold every tuple in ``probs`` indexed base-k with
    the first symbol most significant. Sparse ones hold a ``mass`` dict of
    observed tuples and are Monte Carlo estimates.
    """

    tuple_length: int
    alphabet_size: int
    probs: np.ndarray | None = None
    mass: dict | None = None
    estimated: bool = False
    samples: int = 0
    seed: int | None = None

    @property
    def dense(self) -> bool:
        return self.probs is not None

    @property
    def support(self) -> tuple:
        return ("tuples", self.tuple_length, self.alphabet_size)

    def items(self):
        if self.dense:
            for idx, p in enumerate(self.probs):
                yield index_to_tuple(idx, self.tuple_length, self.alphabet_size), float(p)
        else:
            yield from sorted(self.mass.items())

    def __getitem__(self, tup) -> float:
        tup = tuple(int(s) for s in tup)
        if self.dense:
            return float(self.probs[tuple_to_index(tup, self.alphabet_size)])
        return float(self.mass.get(tup, 0.0))

    def total(self) -> float:
        return float(self.probs.sum()) if self.dense else float(sum(self.mass.values()))


def tuple_to_index(tup, k: int) -> int:
    idx = 0
    for s in tup:
        idx = idx * k + int(s)
    return idx


def index_to_tuple(idx: int, length: int, k: int) -> tuple:
    out = [0] * length
    for i in range(length - 1, -1, -1):
        idx, out[i] = divmod(idx, k)
    return tuple(out)


def tuple_distribution(
    model: LZModel,
    L: int,
    enumeration_cap: int = 10**6,
    samples: int = 200_000,
    seed: int = 0,
) -> TupleDistribution:
    if L < 1:
        raise ValueError("tuple length must be >= 1")
    k = model.alphabet_size
    if k**L <= enumeration_cap:
        children = model.children
        counts = model.counts
        nodes = np.zeros(1, dtype=np.int64)
        probs = np.ones(1, dtype=np.float64)
        for _ in range(L):
            # every prefix branches into k children, prefix-major order
            child = children[nodes]  # (n_prefix, k)
            step = counts[child] / counts[nodes][:, None]
            probs = (probs[:, None] * step).ravel()
            child = child.ravel()
            nodes = np.where(children[child, 0] < 0, 0, child)
        return TupleDistribution(L, k, probs=probs)
    tuples = sample_tuples(model, L, samples, seed)
    keys, freq = np.unique(tuples, axis=0, return_counts=True)
    mass = {tuple(int(s) for s in key): float(c) / samples for key, c in zip(keys, freq)}
    return TupleDistribution(L, k, mass=mass, estimated=True, samples=samples, seed=seed)


def sample_tuples(model: LZModel, L: int, count: int, seed=None) -> np.ndarray:
    """``count`` independent length-``L`` draws, each started at the root."""
    rng = np.random.default_rng(seed)
    children = model.children
    counts = model.counts
    cur = np.zeros(count, dtype=np.int64)
    out = np.empty((count, L), dtype=np.int64)
    for j in range(L):
        cum = np.cumsum(counts[children[cur]], axis=1)
        target = rng.random(count) * counts[cur]
        chosen = (target[:, None] < cum).argmax(axis=1)
        out[:, j] = chosen
        child = children[cur, chosen]
        cur = np.where(children[child, 0] < 0, 0, child)
    return out


# -- window histograms -------------------------------------------------------


@dataclass(frozen=True)
class HistogramSpec:
    """Bin edges on the log2-probability axis plus an underflow cell below
    ``edges[0]`` and an overflow cell above ``edges[-1]``."""

    edges: tuple
    window_length: int = DEFAULT_WINDOW
    stride: int = 1

    def __post_init__(self):
        e = tuple(float(x) for x in self.edges)
        object.__setattr__(self, "edges", e)
        if len(e) < 2 or any(b <= a for a, b in zip(e, e[1:])):
            raise ValueError("bin edges must be strictly ascending with at least 2 entries")

    @property
    def n_cells(self) -> int:
        return len(self.edges) + 1

    def cell_index(self, scores) -> np.ndarray:
        # cells: 0 underflow, 1..B regular (last one closed), B+1 overflow
        e = np.asarray(self.edges)
        s = np.asarray(scores, dtype=np.float64)
        idx = np.searchsorted(e, s, side="right")
        idx[s == e[-1]] = len(e) - 1
        return idx

    def keys(self) -> list:
        return ["underflow"] + [f"bin{i}" for i in range(len(self.edges) - 1)] + ["overflow"]


def histogram_spec(scores, bins: int = DEFAULT_BINS, window_length: int = DEFAULT_WINDOW, stride: int = 1) -> HistogramSpec:
    """Equal-width edges spanning the range of training window scores."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise EmptyInputError("need scores to fix histogram edges")
    lo, hi = float(s.min()), float(s.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    return HistogramSpec(tuple(np.linspace(lo, hi, bins + 1)), window_length, stride)


@dataclass
class WindowHistogram:
    spec: HistogramSpec
    probs: np.ndarray
    n_windows: int

    @property
    def support(self) -> tuple:
        return ("histogram",) + self.spec.edges

    @property
    def window_length(self) -> int:
        return self.spec.window_length

    def items(self):
        return zip(self.spec.keys(), (float(p) for p in self.probs))


def histogram_from_scores(scores, spec: HistogramSpec) -> WindowHistogram:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise EmptyInputError("no window scores to bin")
    counts = np.bincount(spec.cell_index(scores), minlength=spec.n_cells).astype(np.float64)
    return WindowHistogram(spec, counts / counts.sum(), int(scores.size))


def window_scores(model: LZModel, seq, L: int = DEFAULT_WINDOW, stride: int = 1) -> np.ndarray:
    seq = as_symbols(seq, model.alphabet_size)
    if seq.shape[0] < L:
        raise TooShortError(f"sequence of length {seq.shape[0]} is shorter than window {L}")
    return model.window_log_probabilities(seq, L, stride)


def window_histogram(model: LZModel, seq, L: int | None = None, bins: HistogramSpec | None = None) -> WindowHistogram:
    """Histogram of window log2-probabilities of ``seq``.

    Without ``bins`` the edges are fitted to this sequence's own scores,
    which is how the reference histogram is learned.
    """
    if L is None:
        L = bins.window_length if bins is not None else DEFAULT_WINDOW
    stride = bins.stride if bins is not None else 1
    scores = window_scores(model, seq, L, stride)
    if bins is None:
        bins = histogram_spec(scores, window_length=L)
    elif bins.window_length != L:
        raise IncompatibleSupportError(f"histogram spec is for windows of {bins.window_length}, got {L}")
    return histogram_from_scores(scores, bins)


def learn_histogram(model: LZModel, training, L: int = DEFAULT_WINDOW, bins: int = DEFAULT_BINS) -> WindowHistogram:
    """Reference histogram over one or more training sequences."""
    seqs = [training] if isinstance(training, np.ndarray) and training.ndim == 1 else list(training)
    if seqs and isinstance(seqs[0], (int, np.integer)):
        seqs = [seqs]
    scores = np.concatenate([window_scores(model, s, L) for s in seqs])
    spec = histogram_spec(scores, bins, L)
    return histogram_from_scores(scores, spec)


# -- distances ---------------------------------------------------------------


def _aligned(p, q) -> tuple:
    """Two float vectors over the union support of ``p`` and ``q``."""
    if isinstance(p, WindowHistogram) or isinstance(q, WindowHistogram):
        if not (isinstance(p, WindowHistogram) and isinstance(q, WindowHistogram)):
            raise IncompatibleSupportError("cannot compare a histogram with a non-histogram")
        if p.spec.edges != q.spec.edges:
            raise IncompatibleSupportError("histograms use different bin edges")
        return np.asarray(p.probs, float), np.asarray(q.probs, float)
    if isinstance(p, TupleDistribution) or isinstance(q, TupleDistribution):
        if not (isinstance(p, TupleDistribution) and isinstance(q, TupleDistribution)):
            raise IncompatibleSupportError("cannot compare a tuple distribution with another kind")
        if p.support != q.support:
            raise IncompatibleSupportError(f"tuple supports differ: {p.support} vs {q.support}")
        if p.dense and q.dense:
            return np.asarray(p.probs, float), np.asarray(q.probs, float)
        keys = sorted(set(t for t, _ in p.items()) | set(t for t, _ in q.items()))
        return np.array([p[t] for t in keys]), np.array([q[t] for t in keys])
    if isinstance(p, dict) or isinstance(q, dict):
        if not (isinstance(p, dict) and isinstance(q, dict)):
            raise IncompatibleSupportError("cannot compare a mapping with a vector")
        keys = sorted(set(p) | set(q), key=repr)
        return np.array([float(p.get(k, 0.0)) for k in keys]), np.array([float(q.get(k, 0.0)) for k in keys])
    pa = np.asarray(p, dtype=np.float64).ravel()
    qa = np.asarray(q, dtype=np.float64).ravel()
    if pa.shape != qa.shape:
        raise IncompatibleSupportError(f"vector lengths differ: {pa.size} vs {qa.size}")
    return pa, qa


def kl_divergence(p, q, epsilon: float = DEFAULT_EPSILON) -> float:
    """Smoothed D(p||q) in bits: ``epsilon`` is added to every cell of the
    union support and both sides are renormalized."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    pa, qa = _aligned(p, q)
    if (pa < 0).any() or (qa < 0).any():
        raise ValueError("distributions must be nonnegative")
    pa = pa + epsilon
    qa = qa + epsilon
    pa /= pa.sum()
    qa /= qa.sum()
    return max(0.0, float(np.sum(pa * np.log2(pa / qa))))


def mse_distance(p, q) -> float:
    pa, qa = _aligned(p, q)
    return float(np.mean((pa - qa) ** 2))


def relative_entropy(p, q) -> float:
    """Unsmoothed D(p||q) in bits with 0 log 0 = 0; ``inf`` if p is not
    absolutely continuous w.r.t. q."""
    total = 0.0
    for a, b in zip(p, q):
        a, b = float(a), float(b)
        if a == 0.0:
            continue
        if b == 0.0:
            return math.inf
        total += a * math.log2(a / b)
    return max(0.0, total)


# -- method of types ---------------------------------------------------------


@dataclass(frozen=True)
class EmpiricalType:
    """Symbol counts of a length-``n`` sequence over an ordered alphabet."""

    counts: tuple
    alphabet: tuple

    @property
    def n(self) -> int:
        return sum(self.counts)

    @property
    def frequencies(self) -> tuple:
        return tuple(Fraction(c, self.n) for c in self.counts)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=np.float64) / self.n

    def __getitem__(self, symbol) -> Fraction:
        return self.frequencies[self.alphabet.index(symbol)]


def empirical_type(seq, alphabet) -> EmpiricalType:
    """``alphabet`` is either an int k (symbols 0..k-1) or the symbols
    themselves, e.g. ``"123"``."""
    symbols = tuple(range(alphabet)) if isinstance(alphabet, (int, np.integer)) else tuple(alphabet)
    items = list(seq)
    if not items:
        raise EmptyInputError("type of an empty sequence is undefined")
    index = {s: i for i, s in enumerate(symbols)}
    counts = [0] * len(symbols)
    for pos, x in enumerate(items):
        key = x.item() if isinstance(x, np.generic) else x
        if key not in index:
            raise InvalidSymbolError(pos, key, len(symbols))
        counts[index[key]] += 1
    return EmpiricalType(tuple(counts), symbols)


def all_types(n: int, k: int):
    """Every count vector of length k summing to n."""
    for bars in itertools.combinations(range(n + k - 1), k - 1):
        prev = -1
        counts = []
        for b in bars:
            counts.append(b - prev - 1)
            prev = b
        counts.append(n + k - 2 - prev)
        yield tuple(counts)


@dataclass(frozen=True)
class TypeClassProbability:
    exact: float
    lower: float
    upper: float
    divergence: float
    log2_exact: float
    log2_lower: float
    log2_upper: float


def _type_counts(ptype, n):
    if isinstance(ptype, EmpiricalType):
        if n is None or n == ptype.n:
            return list(ptype.counts)
        freqs = ptype.frequencies
    else:
        freqs = [Fraction(x).limit_denominator(10**12) if isinstance(x, float) else Fraction(x) for x in ptype]
        if n is None:
            raise InvalidTypeError("n is required when the type is given as frequencies")
    if sum(freqs) != 1:
        raise InvalidTypeError(f"type frequencies sum to {float(sum(freqs))}, not 1")
    counts = [f * n for f in freqs]
    if any(c.denominator != 1 for c in counts):
        raise InvalidTypeError(f"n={n} times the type frequencies is not integral")
    return [int(c) for c in counts]


def multinomial(counts) -> int:
    out = 1
    total = 0
    for c in counts:
        total += c
        out *= math.comb(total, c)
    return out


def type_class_probability(ptype, q, n: int | None = None) -> TypeClassProbability:
    """Exact ``Q^n(T(P))`` and the bounds
    ``2^{-nD(P||Q)} / (n+1)^{|A|} <= Q^n(T(P)) <= 2^{-nD(P||Q)}``."""
    counts = _type_counts(ptype, n)
    n = sum(counts)
    if n < 1:
        raise InvalidTypeError("type class of length 0")
    q = [float(x) for x in q]
    if len(q) != len(counts):
        raise InvalidTypeError(f"type has {len(counts)} symbols, q has {len(q)}")
    if any(x <= 0 for x in q) or abs(sum(q) - 1.0) > 1e-9:
        raise InvalidTypeError("q must be strictly positive and sum to 1")
    p = [c / n for c in counts]
    d = relative_entropy(p, q)
    log2_exact = math.log2(multinomial(counts)) + sum(c * math.log2(x) for c, x in zip(counts, q) if c)
    log2_upper = -n * d
    log2_lower = log2_upper - len(counts) * math.log2(n + 1)
    # the bounds are tight for some types (e.g. n=1); allow rounding slack
    slack = 1e-9 * max(1.0, abs(log2_exact))
    if not (log2_lower - slack <= log2_exact <= log2_upper + slack):
        raise ArithmeticError(
            f"type-class bounds violated: {log2_lower} <= {log2_exact} <= {log2_upper}"
        )
    return TypeClassProbability(
        exact=2.0**log2_exact,
        lower=2.0**log2_lower,
        upper=2.0**log2_upper,
        divergence=d,
        log2_exact=log2_exact,
        log2_lower=log2_lower,
        log2_upper=log2_upper,
    )


# -- exchange format ---------------------------------------------------------


def _support_header(dist) -> str:
    if isinstance(dist, WindowHistogram):
        edges = ",".join(repr(e) for e in dist.spec.edges)
        return f"support=histogram window={dist.spec.window_length} stride={dist.spec.stride} edges={edges}"
    extra = f" estimated=1 samples={dist.samples} seed={dist.seed}" if dist.estimated else ""
    return f"support=tuples length={dist.tuple_length} alphabet={dist.alphabet_size}{extra}"


def write_distribution(dist, stream) -> None:
    stream.write(f"# {_support_header(dist)}\n")
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["key", "probability"])
    for key, p in dist.items():
        if isinstance(key, tuple):
            key = "-".join(str(s) for s in key)
        w.writerow([key, repr(float(p))])


def read_distribution(stream):
    first = stream.readline()
    if not first.startswith("# support="):
        raise IncompatibleSupportError("distribution file lacks a '# support=' header")
    fields = dict(tok.split("=", 1) for tok in first[2:].split())
    rows = list(csv.reader(stream))
    if not rows or rows[0] != ["key", "probability"]:
        raise IncompatibleSupportError("distribution file lacks a key,probability header")
    body = {r[0]: float(r[1]) for r in rows[1:] if r}
    if fields["support"] == "histogram":
        spec = HistogramSpec(
            tuple(float(x) for x in fields["edges"].split(",")),
            int(fields["window"]),
            int(fields.get("stride", 1)),
        )
        probs = np.array([body.get(k, 0.0) for k in spec.keys()])
        return WindowHistogram(spec, probs, 0)
    if fields["support"] == "tuples":
        L, k = int(fields["length"]), int(fields["alphabet"])
        mass = {tuple(int(s) for s in key.split("-")): p for key, p in body.items()}
        if fields.get("estimated") == "1":
            return TupleDistribution(L, k, mass=mass, estimated=True,
                                     samples=int(fields.get("samples", 0)),
                                     seed=None if fields.get("seed") in (None, "None") else int(fields["seed"]))
        probs = np.zeros(k**L)
        for t, p in mass.items():
            probs[tuple_to_index(t, k)] = p
        return TupleDistribution(L, k, probs=probs)
    raise IncompatibleSupportError(f"unknown support kind {fields['support']!r}")
