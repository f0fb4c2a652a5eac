"""Kernel-lane contract tests: every available lane against NumPy references."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from instasim import kernels
from instasim.kernels import _numpy as ref

LANES = kernels.available_backends()


@pytest.fixture(params=LANES)
def lane(request):
    return kernels.get_backend(request.param)


def _rand(rng, *shape):
    return np.ascontiguousarray(rng.standard_normal(shape), dtype=np.float32)


def _segments(rng, n_seg, max_size=6):
    sizes = rng.integers(1, max_size + 1, size=n_seg)
    seg = np.zeros(n_seg + 1, dtype=np.int64)
    seg[1:] = np.cumsum(sizes)
    return seg


def test_linear_identity(lane):
    x = np.eye(4, dtype=np.float32)
    y = lane.linear_fwd(x, np.eye(4, dtype=np.float32), np.zeros(4, dtype=np.float32))
    np.testing.assert_array_equal(y, x)


def test_linear_zero_input_gives_bias(lane):
    rng = np.random.default_rng(0)
    b = _rand(rng, 5)
    y = lane.linear_fwd(np.zeros((3, 4), dtype=np.float32), _rand(rng, 4, 5), b)
    np.testing.assert_allclose(y, np.broadcast_to(b, (3, 5)), atol=1e-7)


def test_linear_matches_reference(lane):
    rng = np.random.default_rng(1)
    x, w, b = _rand(rng, 6, 4), _rand(rng, 4, 3), _rand(rng, 3)
    dy = _rand(rng, 6, 3)
    np.testing.assert_allclose(lane.linear_fwd(x, w, b), ref.linear_fwd(x, w, b),
                               rtol=1e-5, atol=1e-6)
    got = lane.linear_bwd(x, w, dy)
    want = ref.linear_bwd(x, w, dy)
    for g, w_ in zip(got, want):
        np.testing.assert_allclose(g, w_, rtol=1e-5, atol=1e-6)


def test_layernorm_constant_row_gives_shift(lane):
    x = np.full((2, 8), 3.0, dtype=np.float32)
    gamma = np.ones(8, dtype=np.float32)
    beta = np.arange(8, dtype=np.float32)
    y, _, _ = lane.layernorm_fwd(x, gamma, beta, 1e-5)
    np.testing.assert_allclose(y, np.broadcast_to(beta, (2, 8)), atol=1e-5)


def test_layernorm_matches_reference(lane):
    rng = np.random.default_rng(2)
    x, g, b = _rand(rng, 5, 8), _rand(rng, 8), _rand(rng, 8)
    dy = _rand(rng, 5, 8)
    y1, m1, r1 = lane.layernorm_fwd(x, g, b, 1e-5)
    y2, m2, r2 = ref.layernorm_fwd(x, g, b, 1e-5)
    np.testing.assert_allclose(y1, y2, rtol=1e-5, atol=1e-6)
    got = lane.layernorm_bwd(x, g, m1, r1, dy)
    want = ref.layernorm_bwd(x, g, m2, r2, dy)
    for a, b_ in zip(got, want):
        np.testing.assert_allclose(a, b_, rtol=1e-4, atol=1e-5)


def test_relu(lane):
    x = np.array([[-1.0, 0.0, 2.0]], dtype=np.float32)
    dy = np.ones_like(x)
    np.testing.assert_array_equal(lane.relu_fwd(x), [[0, 0, 2]])
    np.testing.assert_array_equal(lane.relu_bwd(x, dy), [[0, 0, 1]])


def test_gather_scatter_roundtrip(lane):
    rng = np.random.default_rng(3)
    x = _rand(rng, 7, 4)
    idx = np.array([0, 2, 2, 6, 1], dtype=np.int64)
    y = lane.gather_rows(x, idx)
    np.testing.assert_array_equal(y, x[idx])
    dy = _rand(rng, 5, 4)
    dx = lane.scatter_add_rows(dy, idx, 7)
    want = np.zeros((7, 4), dtype=np.float32)
    np.add.at(want, idx, dy)
    np.testing.assert_allclose(dx, want, rtol=1e-6, atol=1e-6)


def test_segment_max_ties_to_lowest_row(lane):
    x = np.array([[1.0, 5.0], [1.0, 5.0], [0.0, 7.0]], dtype=np.float32)
    seg = np.array([0, 2, 3], dtype=np.int64)
    y, arg = lane.segment_max_fwd(x, seg)
    np.testing.assert_array_equal(y, [[1, 5], [0, 7]])
    np.testing.assert_array_equal(arg, [[0, 0], [2, 2]])


def test_segment_max_backward_routes_to_argmax(lane):
    x = np.array([[1.0, 2.0], [3.0, 0.0], [5.0, 5.0]], dtype=np.float32)
    seg = np.array([0, 2, 3], dtype=np.int64)
    _, arg = lane.segment_max_fwd(x, seg)
    dy = np.array([[1.0, 10.0], [100.0, 1000.0]], dtype=np.float32)
    dx = lane.segment_max_bwd(arg, dy, 3)
    np.testing.assert_array_equal(dx, [[0, 10], [1, 0], [100, 1000]])


@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2 ** 31 - 1))
@settings(max_examples=30, deadline=None)
def test_attention_matches_reference_all_lanes(n_seg, heads, seed):
    rng = np.random.default_rng(seed)
    dim = heads * 8
    seg = _segments(rng, n_seg)
    t = int(seg[-1])
    q, k, v = _rand(rng, n_seg, dim), _rand(rng, t, dim), _rand(rng, t, dim)
    dout = _rand(rng, n_seg, dim)
    want_out, want_w = ref.attention_fwd(q, k, v, seg, heads)
    want_b = ref.attention_bwd(q, k, v, seg, heads, want_w, dout)
    for name in LANES:
        lane = kernels.get_backend(name)
        out, w = lane.attention_fwd(q, k, v, seg, heads)
        np.testing.assert_allclose(out, want_out, rtol=1e-4, atol=1e-5)
        np.testing.assert_allclose(w, want_w, rtol=1e-4, atol=1e-5)
        got_b = lane.attention_bwd(q, k, v, seg, heads, w, dout)
        for a, b in zip(got_b, want_b):
            np.testing.assert_allclose(a, b, rtol=1e-3, atol=1e-4)


def test_attention_single_token_softmax_is_one(lane):
    rng = np.random.default_rng(5)
    q = _rand(rng, 1, 8)
    kv = _rand(rng, 1, 8)
    out, w = lane.attention_fwd(q, kv, kv, np.array([0, 1], dtype=np.int64), 2)
    np.testing.assert_allclose(w, np.ones((1, 2)), atol=1e-7)
    np.testing.assert_allclose(out, kv, atol=1e-6)


def test_attention_duplicate_tokens_match_single(lane):
    rng = np.random.default_rng(6)
    q = _rand(rng, 1, 8)
    tok = _rand(rng, 1, 8)
    single, _ = lane.attention_fwd(q, tok, tok, np.array([0, 1], dtype=np.int64), 2)
    double, w = lane.attention_fwd(q, np.vstack([tok, tok]), np.vstack([tok, tok]),
                                   np.array([0, 2], dtype=np.int64), 2)
    np.testing.assert_allclose(double, single, atol=1e-6)
    np.testing.assert_allclose(w, np.full((2, 2), 0.5), atol=1e-6)


def test_float64_dispatch_uses_numpy_lane():
    # float64 arrays must route to the NumPy lane regardless of active lane.
    x = np.zeros((2, 3), dtype=np.float64)
    w = np.eye(3, dtype=np.float64)
    b = np.ones(3, dtype=np.float64)
    y = kernels.linear_fwd(x, w, b)
    assert y.dtype == np.float64


def test_set_backend_roundtrip():
    original = kernels.backend_name()
    try:
        for name in LANES:
            kernels.set_backend(name)
            assert kernels.backend_name() == name
        with pytest.raises(ValueError):
            kernels.set_backend("nope")
    finally:
        kernels.set_backend(original)
