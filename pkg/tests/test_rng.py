import numpy as np
from hypothesis import given, strategies as st

from shearflow_ldp import rng


def test_generator_is_addressed():
    a = rng.generator(5, "x", 3).standard_normal(4)
    b = rng.generator(5, "x", 3).standard_normal(4)
    c = rng.generator(5, "x", 4).standard_normal(4)
    d = rng.generator(5, "y", 3).standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


@given(st.integers(0, 5000), st.integers(1, 300))
def test_block_ranges_partition(n, size):
    blocks = rng.block_ranges(n, size)
    covered = [i for _, lo, hi in blocks for i in range(lo, hi)]
    assert covered == list(range(n))
    assert all(b == k for k, (b, _, _) in enumerate(blocks))


def test_parallel_map_keeps_order():
    items = list(range(20))
    assert rng.parallel_map(lambda x: x * x, items, workers=4) == [x * x for x in items]
