"""Both kernel backends must agree bit-for-bit on tree shape and closely on scores."""

import numpy as np
import pytest

from lzanomaly import _kernels
from lzanomaly.model import new_model, train

pytestmark = pytest.mark.skipif(_kernels.numba is None, reason="numba not installed")


def _with(name, fn):
    previous = _kernels.active.name
    _kernels.set_backend(name)
    try:
        return fn()
    finally:
        _kernels.set_backend(previous)


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(4)
    train_seqs = [rng.integers(0, 5, size=n) for n in (3000, 17, 800)]
    probe = rng.integers(0, 5, size=2000)
    return train_seqs, probe


def test_training_agrees(data):
    seqs, _ = data
    a = _with("numba", lambda: train(new_model(5), seqs))
    b = _with("numpy", lambda: train(new_model(5), seqs))
    assert a.same_tree(b)
    assert np.array_equal(a.counts, b.counts)


def test_sequential_code_length_agrees(data):
    seqs, _ = data
    a = _with("numba", lambda: new_model(5).update(seqs[0]))
    b = _with("numpy", lambda: new_model(5).update(seqs[0]))
    assert a == pytest.approx(b, rel=1e-12)


def test_scoring_agrees(data):
    seqs, probe = data
    m = train(new_model(5), seqs)
    for L, stride in [(20, 1), (10, 10), (7, 3)]:
        a = _with("numba", lambda: m.window_log_probabilities(probe, L, stride))
        b = _with("numpy", lambda: m.window_log_probabilities(probe, L, stride))
        np.testing.assert_allclose(a, b, rtol=1e-12)
    a = _with("numba", lambda: m.log_probability(probe))
    b = _with("numpy", lambda: m.log_probability(probe))
    assert a == pytest.approx(b, rel=1e-12)
    a = _with("numba", lambda: m.symbol_log_probabilities(probe))
    b = _with("numpy", lambda: m.symbol_log_probabilities(probe))
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_sampling_agrees(data):
    seqs, _ = data
    m = train(new_model(5), seqs)
    a = _with("numba", lambda: m.sample(5000, 9))
    b = _with("numpy", lambda: m.sample(5000, 9))
    assert np.array_equal(a, b)


def test_window_scores_match_direct_scoring(backend, data):
    seqs, probe = data
    m = train(new_model(5), seqs)
    w = m.window_log_probabilities(probe, 13, 5)
    direct = [m.log_probability(probe[i : i + 13]) for i in range(0, probe.size - 12, 5)]
    np.testing.assert_allclose(w, direct, rtol=1e-12)


def test_set_backend_rejects_unknown():
    with pytest.raises(ValueError):
        _kernels.set_backend("fortran")
