"""Seeded synthetic symbol sources for experiments and demos."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpecError
from .model import LZModel

_TOL = 1e-12


class SourceKind(str, enum.Enum):
    IID = "iid"
    MARKOV1 = "markov1"
    MODEL = "model"


def _check_stochastic(rows: np.ndarray, what: str) -> None:
    if not np.isfinite(rows).all() or (rows < 0).any():
        raise InvalidSpecError(f"{what} has negative or non-finite entries")
    sums = rows.sum(axis=-1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > _TOL)
    if bad.size:
        raise InvalidSpecError(f"{what} row {int(bad[0])} sums to {float(np.atleast_1d(sums)[bad[0]])!r}, not 1")


def stationary_distribution(matrix) -> np.ndarray:
    P = np.asarray(matrix, dtype=np.float64)
    k = P.shape[0]
    A = np.vstack([P.T - np.eye(k), np.ones(k)])
    b = np.zeros(k + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


@dataclass
class SourceSpec:
    kind: SourceKind
    probs: np.ndarray | None = None
    matrix: np.ndarray | None = None
    model: LZModel | None = None
    initial: np.ndarray | None = None

    def __post_init__(self):
        self.kind = SourceKind(self.kind)
        if self.kind is SourceKind.IID:
            if self.probs is None:
                raise InvalidSpecError("iid source needs a probability vector")
            self.probs = np.asarray(self.probs, dtype=np.float64)
            if self.probs.ndim != 1 or self.probs.size < 2:
                raise InvalidSpecError("probability vector needs at least 2 entries")
            _check_stochastic(self.probs[None, :], "probability vector")
        elif self.kind is SourceKind.MARKOV1:
            if self.matrix is None:
                raise InvalidSpecError("markov1 source needs a transition matrix")
            self.matrix = np.asarray(self.matrix, dtype=np.float64)
            if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1] or self.matrix.shape[0] < 2:
                raise InvalidSpecError("transition matrix must be square with k >= 2")
            _check_stochastic(self.matrix, "transition matrix")
            if self.initial is None:
                self.initial = stationary_distribution(self.matrix)
            else:
                self.initial = np.asarray(self.initial, dtype=np.float64)
                _check_stochastic(self.initial[None, :], "initial distribution")
        elif self.model is None:
            raise InvalidSpecError("model source needs a model")

    @property
    def alphabet_size(self) -> int:
        if self.kind is SourceKind.IID:
            return int(self.probs.size)
        if self.kind is SourceKind.MARKOV1:
            return int(self.matrix.shape[0])
        return self.model.alphabet_size

    def generate(self, length: int, rng: np.random.Generator) -> np.ndarray:
        if length < 1:
            raise InvalidSpecError("sequence length must be >= 1")
        if self.kind is SourceKind.IID:
            return rng.choice(self.probs.size, size=length, p=self.probs).astype(np.int64)
        if self.kind is SourceKind.MARKOV1:
            return _markov_chain(self.matrix, self.initial, length, rng)
        return self.model.sample(length, rng.integers(0, 2**63 - 1))

    def sequences(self, count: int, length: int, seed) -> list:
        rng = np.random.default_rng(seed)
        return [self.generate(length, rng) for _ in range(count)]


def _markov_chain(matrix, initial, length, rng) -> np.ndarray:
    cum = np.cumsum(matrix, axis=1)
    cum[:, -1] = 1.0
    u = rng.random(length)
    out = np.empty(length, dtype=np.int64)
    state = int(np.searchsorted(np.cumsum(initial), u[0], side="right"))
    state = min(state, matrix.shape[0] - 1)
    out[0] = state
    for t in range(1, length):
        state = int(np.searchsorted(cum[state], u[t], side="right"))
        out[t] = state
    return out


def iid(probs) -> SourceSpec:
    return SourceSpec(SourceKind.IID, probs=probs)


def markov1(matrix, initial=None) -> SourceSpec:
    return SourceSpec(SourceKind.MARKOV1, matrix=matrix, initial=initial)


def from_model(model: LZModel) -> SourceSpec:
    return SourceSpec(SourceKind.MODEL, model=model)


def random_transition_matrix(k: int, seed, concentration: float = 0.3) -> np.ndarray:
    """Dirichlet rows; a small concentration gives peaked, predictable rows."""
    rng = np.random.default_rng(seed)
    return rng.dirichlet(np.full(k, concentration), size=k)


def perturb_matrix(matrix, strength: float, seed) -> np.ndarray:
    """Mix each row with a random permutation of itself."""
    P = np.asarray(matrix, dtype=np.float64)
    rng = np.random.default_rng(seed)
    Q = np.array([row[rng.permutation(row.size)] for row in P])
    out = (1.0 - strength) * P + strength * Q
    return out / out.sum(axis=1, keepdims=True)
