import numpy as np
import pytest

from bsfnet.tensor import DimensionError, RngStream, derive_state, ewise, matmul, relu, rng_uniform, splitmix64

M64 = (1 << 64) - 1


def ref_xoshiro(state, n):
    """Straight transcription of the xoshiro256** reference, one output at a time."""
    s = list(state)
    rotl = lambda x, k: ((x << k) | (x >> (64 - k))) & M64
    out = []
    for _ in range(n):
        out.append((rotl((s[1] * 5) & M64, 7) * 9) & M64)
        t = (s[1] << 17) & M64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = rotl(s[3], 45)
    return out


def ref_splitmix(seed, n):
    out, x = [], seed
    for _ in range(n):
        x = (x + 0x9E3779B97F4A7C15) & M64
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
        out.append(z ^ (z >> 31))
    return out


def test_matmul_identity_and_small():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(np.eye(2), a), a)
    assert matmul(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]])).tolist() == [[11.0]]


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(3)
    a, b = rng.integers(-9, 10, (5, 7)).astype(float), rng.integers(-9, 10, (7, 3)).astype(float)
    ref = np.zeros((5, 3))
    for i in range(5):
        for j in range(3):
            for k in range(7):
                ref[i, j] += a[i, k] * b[k, j]
    assert np.array_equal(matmul(a, b), ref)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_ewise():
    assert ewise("add", [1, 2], [3, 4]).tolist() == [4, 6]
    x = np.array([0.5, -2.0, 3.0])
    assert np.array_equal(ewise("mul", x, np.ones(3)), x)
    assert ewise("map", [-1.0, 2.0], f=relu).tolist() == [0.0, 2.0]
    assert ewise("scale", [1.0, 2.0], 3).tolist() == [3.0, 6.0]
    assert ewise("sub", [1.0, 2.0], 1).tolist() == [0.0, 1.0]
    with pytest.raises(DimensionError):
        ewise("add", np.ones(2), np.ones(3))


def test_xoshiro_reference_vector():
    # first output from state {1,2,3,4}: rotl(2*5, 7) * 9 = 1280 * 9
    assert ref_xoshiro([1, 2, 3, 4], 1) == [11520]
    stream = RngStream.from_state([1, 2, 3, 4])
    assert stream.next_u64(6).tolist() == ref_xoshiro([1, 2, 3, 4], 6)


def test_splitmix_matches_reference():
    x, outs = 1234567, []
    for _ in range(5):
        x, out = splitmix64(x)
        outs.append(out)
    assert outs == ref_splitmix(1234567, 5)
    assert outs[0] == 6457827717110365317


def test_stream_is_reproducible_and_continues():
    a, b = RngStream(42, "x"), RngStream(42, "x")
    first, second = a.uniform(3), a.uniform(3)
    assert np.array_equal(np.concatenate([first, second]), b.uniform(6))
    golden = [(v >> 11) * 2.0 ** -53 for v in ref_xoshiro([int(w) for w in derive_state(42, "x")], 6)]
    assert np.concatenate([first, second]).tolist() == golden


def test_uniform_edge_and_range():
    s = RngStream(1)
    assert rng_uniform(s, 0).shape == (0,)
    u = rng_uniform(s, 100_000)
    assert ((u >= 0) & (u < 1)).all()
    # 3 sigma of the mean of 1e5 uniforms is 3 * sqrt(1/12) / sqrt(1e5) = 0.0027
    assert abs(u.mean() - 0.5) < 0.005


def test_uniform_empirical_cdf():
    u = np.sort(RngStream(7, 3).uniform(100_000))
    ecdf = np.arange(1, len(u) + 1) / len(u)
    assert np.max(np.abs(ecdf - u)) < 0.01


def test_distinct_streams_differ():
    a, b = RngStream(5, 0), RngStream(5, 1)
    assert not np.array_equal(a.uniform(16), b.uniform(16))
    root = RngStream(5)
    assert not np.array_equal(root.child("a").uniform(8), root.child("b").uniform(8))
    assert np.array_equal(root.child("a").uniform(8), RngStream(5).child("a").uniform(8))


def test_permutation_is_a_permutation():
    p = RngStream(9).permutation(50)
    assert sorted(p.tolist()) == list(range(50))
