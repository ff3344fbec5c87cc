"""Hot loops over the array-backed phrase tree.

Tree layout (shared by every kernel):

* ``children[node, s]`` -- index of the child for symbol ``s``, ``-1`` on leaves
* ``counts[node]``      -- leaves in the subtree (1 for a leaf)
* ``parent[node]``      -- parent index, ``-1`` for the root (index 0)

Two backends implement the same functions. ``numba`` compiles the loop
bodies with ``@njit``; ``numpy`` runs them as plain Python, except for the
window scorer, which walks all windows in lockstep with fancy indexing.
Set ``LZANOMALY_BACKEND=numpy`` (or ``LZANOMALY_DISABLE_NUMBA=1``) before
import to force the fallback; ``set_backend`` switches at runtime.
"""

import math
import os
from types import SimpleNamespace

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None


def _train(children, counts, parent, symbols, n_nodes, seq, start, cur, ends, n_ends, logp):
    # Returns early (without consuming the symbol) when there is no room
    # for another expansion; the caller grows the arrays and resumes.
    # ``logp`` accumulates the sequential log2-probability: each symbol is
    # scored by the tree as it stands just before that symbol.
    k = children.shape[1]
    cap = counts.shape[0]
    pos = start
    n = seq.shape[0]
    while pos < n:
        child = children[cur, seq[pos]]
        if children[child, 0] < 0:
            if n_nodes + k > cap:
                return pos, cur, n_nodes, n_ends, logp
            logp += math.log2(counts[child] / counts[cur])
            for j in range(k):
                node = n_nodes + j
                children[child, j] = node
                counts[node] = 1
                parent[node] = child
                symbols[node] = j
            n_nodes += k
            counts[child] = k
            a = parent[child]
            while a >= 0:
                counts[a] += k - 1
                a = parent[a]
            pos += 1
            ends[n_ends] = pos
            n_ends += 1
            cur = 0
        else:
            logp += math.log2(counts[child] / counts[cur])
            cur = child
            pos += 1
    return pos, cur, n_nodes, n_ends, logp


def _score(children, counts, seq, cur):
    total = 0.0
    for t in range(seq.shape[0]):
        child = children[cur, seq[t]]
        total += math.log2(counts[child] / counts[cur])
        if children[child, 0] < 0:
            cur = 0
        else:
            cur = child
    return total, cur


def _symbol_scores(children, counts, seq, cur, out):
    for t in range(seq.shape[0]):
        child = children[cur, seq[t]]
        out[t] = math.log2(counts[child] / counts[cur])
        if children[child, 0] < 0:
            cur = 0
        else:
            cur = child
    return cur


def _window_scores_loop(children, counts, seq, length, stride):
    n_win = (seq.shape[0] - length) // stride + 1
    out = np.empty(n_win, dtype=np.float64)
    for w in range(n_win):
        base = w * stride
        cur = 0
        total = 0.0
        for j in range(length):
            child = children[cur, seq[base + j]]
            total += math.log2(counts[child] / counts[cur])
            if children[child, 0] < 0:
                cur = 0
            else:
                cur = child
        out[w] = total
    return out


def _window_scores_vectorized(children, counts, seq, length, stride):
    n_win = (seq.shape[0] - length) // stride + 1
    starts = np.arange(n_win) * stride
    cur = np.zeros(n_win, dtype=children.dtype)
    total = np.zeros(n_win, dtype=np.float64)
    for j in range(length):
        child = children[cur, seq[starts + j]]
        total += np.log2(counts[child] / counts[cur])
        cur = np.where(children[child, 0] < 0, 0, child)
    return total


def _sample(children, counts, u, out):
    k = children.shape[1]
    cur = 0
    for t in range(u.shape[0]):
        target = u[t] * counts[cur]
        acc = 0
        chosen = k - 1
        for j in range(k):
            acc += counts[children[cur, j]]
            if target < acc:
                chosen = j
                break
        out[t] = chosen
        child = children[cur, chosen]
        if children[child, 0] < 0:
            cur = 0
        else:
            cur = child


def _recount(children, counts):
    # Children always carry larger indices than their parent (preorder or
    # creation order), so one descending sweep suffices.
    k = children.shape[1]
    for node in range(counts.shape[0] - 1, -1, -1):
        if children[node, 0] < 0:
            counts[node] = 1
        else:
            total = 0
            for j in range(k):
                total += counts[children[node, j]]
            counts[node] = total


_PY_FUNCS = {
    "train": _train,
    "score": _score,
    "symbol_scores": _symbol_scores,
    "window_scores": _window_scores_loop,
    "sample": _sample,
    "recount": _recount,
}


def _build(name):
    if name == "numpy":
        funcs = dict(_PY_FUNCS)
        funcs["window_scores"] = _window_scores_vectorized
        return SimpleNamespace(name="numpy", **funcs)
    if name != "numba":
        raise ValueError(f"unknown backend {name!r}; expected 'numba' or 'numpy'")
    if numba is None:
        raise RuntimeError("numba backend requested but numba is not installed")
    jit = numba.njit(cache=True, nogil=True)
    return SimpleNamespace(name="numba", **{k: jit(f) for k, f in _PY_FUNCS.items()})


_BACKENDS = {}


def get_backend(name=None):
    """Return the kernel namespace for ``name`` (default: the active one)."""
    if name is None:
        return active
    if name not in _BACKENDS:
        _BACKENDS[name] = _build(name)
    return _BACKENDS[name]


def set_backend(name):
    global active
    active = get_backend(name)
    return active


def _default_backend_name():
    if os.environ.get("LZANOMALY_DISABLE_NUMBA", "").lower() in ("1", "true", "yes"):
        return "numpy"
    requested = os.environ.get("LZANOMALY_BACKEND", "").lower()
    if requested in ("numpy", "numba"):
        return requested
    return "numba" if numba is not None else "numpy"


active = get_backend(_default_backend_name())
