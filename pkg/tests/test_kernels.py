"""Backend parity: the compiled kernel must be bit-identical to the pure
Python twin on the same inputs."""

import random

import numpy as np
import pytest

from kmdp._kernels import COMPILED_AVAILABLE, get_kernel, _pykernels
from kmdp.sim import sample_batch
from kmdp.verify import random_markov_policy, random_model, random_simple_policy

needs_compiled = pytest.mark.skipif(not COMPILED_AVAILABLE, reason="extension not built")


def test_backend_selection():
    assert get_kernel("python") is _pykernels
    assert get_kernel("auto") is not None
    with pytest.raises(ValueError):
        get_kernel("fortran")
    if not COMPILED_AVAILABLE:
        with pytest.raises(RuntimeError):
            get_kernel("compiled")


def test_stream_values_in_unit_interval():
    key = _pykernels.stream_key(123, 0)
    values = [_pykernels.stream_uniform(key, d) for d in range(1000)]
    assert all(0.0 <= v < 1.0 for v in values)
    assert abs(sum(values) / len(values) - 0.5) < 0.05


def test_streams_are_counter_based():
    # same (seed, index, draw) always gives the same value, in any order
    forward = [_pykernels.stream_uniform(_pykernels.stream_key(5, i), d) for i in range(10) for d in range(5)]
    backward = [
        _pykernels.stream_uniform(_pykernels.stream_key(5, i), d)
        for i in reversed(range(10))
        for d in reversed(range(5))
    ]
    assert sorted(forward) == sorted(backward)


@needs_compiled
def test_compiled_hash_matches_python():
    for z in (0, 1, 1234567890123456789, (1 << 64) - 1):
        assert get_kernel("compiled").mix64(z) == _pykernels.mix64(z)
    for seed, index in ((0, 0), (42, 7), ((1 << 63) + 11, 12345)):
        key_c = get_kernel("compiled").stream_key(seed, index)
        key_p = _pykernels.stream_key(seed, index)
        assert key_c == key_p
        for d in range(20):
            assert get_kernel("compiled").stream_uniform(key_c, d) == _pykernels.stream_uniform(
                key_p, d
            )


@needs_compiled
@pytest.mark.parametrize("seed", [0, 1, 99, 2**40 + 3])
def test_batches_are_bit_identical(seed):
    rng = random.Random(seed)
    model = random_model(rng, min_epochs=2)
    for policy in (random_simple_policy(rng, model), random_markov_policy(rng, model)):
        p_c, k_c, b_c = sample_batch(model, None, policy, 3_000, seed=seed, backend="compiled")
        p_p, k_p, b_p = sample_batch(model, None, policy, 3_000, seed=seed, backend="python")
        assert b_c == "compiled" and b_p == "python"
        assert np.array_equal(p_c, p_p)
        assert np.array_equal(k_c, k_p)
