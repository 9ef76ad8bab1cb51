import math

import pytest

from diffpareto.rng import SplitMix64


def test_same_seed_same_stream():
    a = SplitMix64(12345)
    b = SplitMix64(12345)
    assert [a.next_u64() for _ in range(16)] == [b.next_u64() for _ in range(16)]


def test_different_seeds_differ():
    a = SplitMix64(1)
    b = SplitMix64(2)
    assert [a.next_u64() for _ in range(4)] != [b.next_u64() for _ in range(4)]


def test_uniform_range_and_mean():
    rng = SplitMix64(777)
    draws = [rng.uniform() for _ in range(20_000)]
    assert all(0.0 <= u < 1.0 for u in draws)
    mean = sum(draws) / len(draws)
    assert mean == pytest.approx(0.5, abs=0.02)


def test_below_is_unbiased_range():
    rng = SplitMix64(5)
    draws = [rng.below(7) for _ in range(5_000)]
    assert set(draws) == set(range(7))
    with pytest.raises(ValueError):
        rng.below(0)


def test_normals_moments():
    rng = SplitMix64(2024)
    draws = rng.normals(40_000)
    n = len(draws)
    mean = sum(draws) / n
    var = sum((x - mean) ** 2 for x in draws) / n
    assert mean == pytest.approx(0.0, abs=0.02)
    assert var == pytest.approx(1.0, abs=0.03)
    assert all(math.isfinite(x) for x in draws)


def test_normals_exact_count_and_determinism():
    assert len(SplitMix64(3).normals(7)) == 7
    assert SplitMix64(3).normals(7) == SplitMix64(3).normals(7)
