import numpy as np
import pytest

from helpers import random_graph
from spectral_complement import (
    InputError,
    ModelState,
    ParseError,
    forward_filters,
    fuse,
    init_params,
    load_checkpoint,
    normalized_adjacency,
    pairwise_attention,
    save_checkpoint,
    score,
    self_attention,
)
from spectral_complement.model import PairEmbedding


def test_init_is_deterministic_and_shaped():
    a = init_params(3, 5, embed_dim=4, num_layers=2, shared_weights=False)
    b = init_params(3, 5, embed_dim=4, num_layers=2, shared_weights=False)
    assert a.weight_names() == ["low_0", "mid_0", "low_1", "mid_1", "fusion"]
    for name in a.weight_names():
        np.testing.assert_array_equal(a.weights[name], b.weights[name])
    assert a.weights["low_0"].shape == (5, 4)
    assert a.weights["mid_1"].shape == (4, 4)
    assert a.fusion.shape == (8, 4)
    bound = np.sqrt(6 / (5 + 4))
    assert np.abs(a.weights["low_0"]).max() <= bound
    c = init_params(4, 5, embed_dim=4)
    assert not np.array_equal(a.fusion, c.fusion)


def test_init_rejects_bad_sizes():
    with pytest.raises(InputError):
        init_params(0, 0)


def test_forward_k2_identity_weight(k2):
    params = init_params(0, 2, embed_dim=2)
    params.weights["filter_0"] = np.eye(2)
    H_low, H_mid = forward_filters(np.eye(2), normalized_adjacency(k2), params)
    np.testing.assert_allclose(H_low, 0.5 * np.ones((2, 2)))
    np.testing.assert_allclose(H_mid, np.zeros((2, 2)), atol=1e-15)


def test_forward_relu_clips(p3):
    params = init_params(0, 1, embed_dim=1)
    params.weights["filter_0"] = np.array([[1.0]])
    H_low, H_mid = forward_filters([[1.0], [0.0], [0.0]], normalized_adjacency(p3), params)
    np.testing.assert_allclose(H_mid, [[0.5], [0.0], [0.0]], atol=1e-15)
    assert (H_low >= 0).all()


def test_forward_ablation_zeroes_branch(k3):
    X = np.random.default_rng(0).normal(size=(3, 4))
    for branches, dead in (("low", 1), ("mid", 0)):
        params = init_params(0, 4, embed_dim=3, branches=branches)
        out = forward_filters(X, normalized_adjacency(k3), params)
        assert not out[dead].any()


def test_forward_shape_mismatch(k3):
    with pytest.raises(InputError):
        forward_filters(np.ones((3, 2)), normalized_adjacency(k3), init_params(0, 4))


def test_pairwise_attention_examples():
    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    z_low, z_mid, ((a0, a1), _) = pairwise_attention(e1, e2, e1, e2, return_weights=True)
    # query e1 scores keys (e1, e2) as (1, 0)
    expected = np.exp(1) / (np.exp(1) + 1)
    assert a0 == pytest.approx(expected)
    np.testing.assert_allclose(z_low, [expected, 1 - expected])
    np.testing.assert_allclose(z_mid, [1 - expected, expected])

    q = np.array([np.log(3.0), 0.0])
    _, _, ((a0, a1), _) = pairwise_attention(e1, e2, q, q, return_weights=True)
    assert (a0, a1) == pytest.approx((0.75, 0.25))


def test_attention_equal_inputs_pass_through():
    h = np.array([0.3, -1.2, 2.0])
    z_low, z_mid = pairwise_attention(h, h, np.ones(3), np.zeros(3))
    np.testing.assert_allclose(z_low, h)
    np.testing.assert_allclose(z_mid, h)


def test_attention_is_stable_for_large_logits():
    big = np.array([1e3, 0.0])
    z_low, _, ((a0, a1), _) = pairwise_attention(big, -big, big, big, return_weights=True)
    assert np.isfinite(z_low).all()
    assert (a0, a1) == (1.0, 0.0)


def test_self_attention_example():
    zt_low, zt_mid, ((a0, a1), (b0, b1)) = self_attention(
        np.array([1.0, 0.0]), np.array([0.0, 1.0]), return_weights=True)
    s = np.exp(1) / (np.exp(1) + 1)
    assert (a0, b1) == pytest.approx((s, s))
    np.testing.assert_allclose(zt_low, [s, 1 - s])


def test_fuse_example():
    W = np.vstack([np.eye(2), 2 * np.eye(2)])
    np.testing.assert_allclose(fuse(np.array([1.0, 2.0]), np.array([3.0, 4.0]), W), [7, 10])
    with pytest.raises(InputError):
        fuse(np.ones(2), np.ones(2), np.ones((3, 2)))


def _state(seed=0, n=30, dim=6):
    rng = np.random.default_rng(seed)
    g = random_graph(n, 0.2, rng)
    X = rng.normal(size=(n, dim))
    return ModelState(init_params(seed, dim, embed_dim=5), g, X)


def test_pair_embed_swap_identity():
    state = _state()
    for i, j in [(0, 1), (3, 17), (29, 4)]:
        a = state.pair_embed(i, j)
        b = state.pair_embed(j, i)
        assert np.array_equal(a.z_hat_i, b.z_hat_j)
        assert np.array_equal(a.z_hat_j, b.z_hat_i)
        assert score(a) == score(b)


def test_attention_weights_on_simplex():
    state = _state(1)
    trace = state.pair_embed(2, 9).attention_trace
    assert len(trace) == 8
    for w0, w1 in trace.values():
        assert 0 <= w0 <= 1 and 0 <= w1 <= 1
        assert w0 + w1 == pytest.approx(1, abs=1e-12)


def test_embeddings_depend_on_partner():
    state = _state(2)
    z_with = {j: state.pair_embed(0, j).z_hat_i for j in range(1, 30)}
    assert any(not np.allclose(z_with[1], z) for z in z_with.values())


def test_pair_embed_rejects_self_and_range():
    state = _state()
    with pytest.raises(InputError):
        state.pair_embed(3, 3)
    with pytest.raises(InputError):
        state.pair_embed(0, 30)


def test_score_examples():
    assert score(PairEmbedding(np.zeros(3), np.ones(3), {})) == 0.5
    pe = PairEmbedding(np.array([np.log(3.0)]), np.array([1.0]), {})
    assert score(pe) == pytest.approx(0.75)


def test_logits_match_pair_embed():
    state = _state(4)
    i = np.array([0, 5, 7])
    j = np.array([1, 2, 20])
    logits = state.logits(i, j)
    for k in range(3):
        pe = state.pair_embed(i[k], j[k])
        assert logits[k] == pytest.approx(pe.z_hat_i @ pe.z_hat_j, abs=1e-12)


@pytest.mark.parametrize("fmt", ["binary", "json"])
@pytest.mark.parametrize("shared", [True, False])
def test_checkpoint_round_trip_bit_exact(tmp_path, fmt, shared):
    params = init_params(9, 7, embed_dim=3, num_layers=2, shared_weights=shared)
    path = tmp_path / f"ck.{fmt}"
    save_checkpoint(params, path, fmt=fmt, metadata={"epoch": 4})
    back, meta = load_checkpoint(path)
    assert meta == {"epoch": 4}
    assert back.weight_names() == params.weight_names()
    assert (back.input_dim, back.embed_dim, back.num_layers) == (7, 3, 2)
    for name in params.weight_names():
        assert np.array_equal(back.weights[name], params.weights[name])


def test_checkpoint_bytes_are_deterministic(tmp_path):
    params = init_params(1, 4)
    save_checkpoint(params, tmp_path / "a.bin")
    save_checkpoint(params, tmp_path / "b.bin")
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()


def test_checkpoint_rejects_corruption(tmp_path):
    path = tmp_path / "a.bin"
    save_checkpoint(init_params(1, 4), path)
    raw = path.read_bytes()
    path.write_bytes(raw + b"\0" * 8)
    with pytest.raises(ParseError):
        load_checkpoint(path)
    path.write_bytes(raw[:-8])
    with pytest.raises(ParseError):
        load_checkpoint(path)
    path.write_bytes(b"garbage")
    with pytest.raises(ParseError):
        load_checkpoint(path)
