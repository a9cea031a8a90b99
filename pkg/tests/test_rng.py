import numpy as np
from hypothesis import given, settings, strategies as st

from cylab.rng import Stream, draw_uniform, replica_key, uniforms


def test_streams_are_reproducible():
    a = uniforms(Stream(3, 1), 100)
    b = uniforms(Stream(3, 1), 100)
    assert np.array_equal(a, b)


def test_replicas_differ():
    a = uniforms(Stream(3, 1), 100)
    b = uniforms(Stream(3, 2), 100)
    assert not np.array_equal(a, b)


def test_counter_continues_stream():
    s = Stream(5)
    first = uniforms(s, 10)
    rest = uniforms(s, 10)
    assert np.array_equal(np.concatenate([first, rest]), uniforms(Stream(5), 20))


def test_uniform_moments():
    x = uniforms(Stream(0), 200000)
    assert x.min() >= 0 and x.max() < 1
    assert abs(x.mean() - 0.5) < 4 * np.sqrt(1 / 12 / len(x))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32), st.integers(0, 1000))
def test_key_depends_on_seed_and_replica(seed, replica):
    assert replica_key(seed, replica) != replica_key(seed, replica + 1)
    u = draw_uniform(replica_key(seed, replica), np.uint64(7))
    assert 0.0 <= u < 1.0


def test_fingerprint_and_spawn():
    s = Stream(1, 2)
    assert s.fingerprint() == Stream(1, 2).fingerprint()
    assert s.spawn(0).seed != s.spawn(1).seed
