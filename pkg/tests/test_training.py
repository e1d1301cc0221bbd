import math

import numpy as np
import pytest

from helpers import random_graph
from spectral_complement import (
    ConfigError,
    DivergenceError,
    InputError,
    ModelState,
    SamplingError,
    SynthSpec,
    TrainingConfig,
    build_graph,
    generate_synthetic,
    gradient_check,
    gradients,
    init_params,
    pair_loss,
    sample_negatives,
    train,
)
from spectral_complement.training import (
    batch_loss_and_gradients,
    contrastive_loss_from_logits,
    _sample_negatives_batch,
)


def test_sample_negatives_exhausted(k2):
    with pytest.raises(SamplingError, match="item 0"):
        sample_negatives(k2, 0, 1, np.random.default_rng(0))


def test_sample_negatives_unique_candidate():
    g = build_graph([(0, 1), (1, 2), (0, 2)], 4)
    assert sample_negatives(g, 0, 1, np.random.default_rng(0)) == [3]


def test_sample_negatives_deterministic_and_valid():
    g = random_graph(40, 0.2, np.random.default_rng(1))
    a = sample_negatives(g, 5, 6, np.random.default_rng(7))
    b = sample_negatives(g, 5, 6, np.random.default_rng(7))
    assert a == b
    assert len(set(a)) == 6
    assert all(c != 5 and not g.has_edge(5, c) for c in a)


def test_batch_sampler_respects_exclusions():
    g = random_graph(30, 0.3, np.random.default_rng(2))
    queries = np.repeat(np.arange(30), 3)
    eligible = 29 - g.degrees
    queries = queries[eligible[queries] >= 4]
    negs = _sample_negatives_batch(g, queries, 4, np.random.default_rng(0))
    for q, row in zip(queries, negs):
        assert len(set(row.tolist())) == 4
        assert all(c != q and not g.has_edge(q, c) for c in row)


def _zero_state():
    g = random_graph(20, 0.2, np.random.default_rng(0))
    X = np.random.default_rng(1).normal(size=(20, 3))
    params = init_params(0, 3, embed_dim=4)
    params.weights["fusion"][:] = 0.0
    return ModelState(params, g, X)


@pytest.mark.parametrize("M", [1, 2, 5])
def test_uniform_logits_give_log_m_plus_one(M):
    state = _zero_state()
    g = state.graph
    i = int(np.argmax(g.degrees))
    pos = int(g.neighbors(i)[0])
    negs = sample_negatives(g, i, M, np.random.default_rng(0))
    assert abs(pair_loss(i, pos, negs, state) - math.log(M + 1)) < 1e-12
    assert abs(contrastive_loss_from_logits(np.zeros(M + 1)) - math.log(M + 1)) < 1e-12


def test_loss_examples():
    assert contrastive_loss_from_logits([50.0, 0.0, 0.0]) < 1e-6
    expected = -math.log(math.e / (math.e + 2))
    assert contrastive_loss_from_logits([1.0, 0.0, 0.0]) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.5514, abs=1e-4)
    # temperature rescales the logits
    assert contrastive_loss_from_logits([2.0, 0.0, 0.0], tau=2.0) == pytest.approx(expected)


def test_pair_loss_rejects_bad_triples():
    state = _zero_state()
    g = state.graph
    i = int(np.argmax(g.degrees))
    nbr = int(g.neighbors(i)[0])
    non = int(sample_negatives(g, i, 1, np.random.default_rng(0))[0])
    with pytest.raises(InputError):
        pair_loss(i, non, [nbr], state)
    with pytest.raises(InputError):
        pair_loss(i, nbr, [nbr], state)


def test_vectorised_loss_matches_reference():
    rng = np.random.default_rng(3)
    g = random_graph(25, 0.2, rng)
    X = rng.normal(size=(25, 4))
    params = init_params(1, 4, embed_dim=3)
    state = ModelState(params, g, X)
    triples = []
    for i, p in g.edges[:10]:
        triples.append((int(i), int(p), sample_negatives(g, i, 3, rng)))
    loss, _ = batch_loss_and_gradients(
        params, X, state.adj_norm, [t[0] for t in triples], [[t[1], *t[2]] for t in triples],
        0.5)
    ref = np.mean([pair_loss(i, p, n, state, tau=0.5) for i, p, n in triples])
    assert loss == pytest.approx(ref, abs=1e-12)


def test_gradient_check_default_instance():
    result = gradient_check()
    assert result["max_relative_error"] < 1e-4


@pytest.mark.parametrize("kwargs", [{"tau": 0.1}, {"shared_weights": False},
                                    {"num_layers": 2, "seed": 3}])
def test_gradient_check_variants(kwargs):
    assert gradient_check(**kwargs)["max_relative_error"] < 1e-4


def test_duplicated_batch_has_same_gradient():
    rng = np.random.default_rng(4)
    g = random_graph(20, 0.25, rng)
    X = rng.normal(size=(20, 3))
    state = ModelState(init_params(2, 3, embed_dim=3), g, X)
    i, p = (int(v) for v in g.edges[0])
    batch = [(i, p, sample_negatives(g, i, 2, rng))]
    cfg = TrainingConfig(temperature=1.0)
    once = gradients(batch, state, cfg)
    twice = gradients(batch * 2, state, cfg)
    for name in once:
        np.testing.assert_allclose(once[name], twice[name], atol=1e-14)


def test_uniform_logits_fusion_gradient_vanishes():
    state = _zero_state()
    g = state.graph
    i = int(np.argmax(g.degrees))
    batch = [(i, int(g.neighbors(i)[0]), sample_negatives(g, i, 3, np.random.default_rng(0)))]
    grads = gradients(batch, state, TrainingConfig())
    # with zero fusion every embedding is zero, so nothing flows anywhere
    for g_ in grads.values():
        assert not g_.any()


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainingConfig(epochs=0).validate()
    with pytest.raises(ConfigError):
        TrainingConfig(temperature=0).validate()
    with pytest.raises(ConfigError, match="bogus"):
        TrainingConfig.from_dict({"bogus": 1})
    cfg = TrainingConfig.from_dict({"epochs": 3, "learning_rate": 0.01})
    assert cfg.to_dict()["epochs"] == 3


def _planted(seed=0):
    g, X, _ = generate_synthetic(SynthSpec(edge_probability=0.3, seed=seed))
    return g, X


def test_train_is_deterministic():
    g, X = _planted()
    cfg = TrainingConfig(epochs=3, learning_rate=0.01, seed=5)
    p1, t1 = train(g, X, cfg)
    p2, t2 = train(g, X, cfg)
    assert t1 == t2
    for name in p1.weight_names():
        assert np.array_equal(p1.weights[name], p2.weights[name])


def test_train_reduces_loss():
    g, X = _planted()
    _, trace = train(g, X, TrainingConfig(epochs=15, learning_rate=0.01, seed=0))
    assert trace.loss[-1] < 0.7 * trace.loss[0]
    assert len(trace.seconds) == 15 and trace.val_hr10 == []


def test_train_records_validation_and_callback():
    g, X = _planted()
    seen = []
    _, trace = train(g, X, TrainingConfig(epochs=2, seed=0), val_edges=g.edges[:20],
                     on_epoch_end=lambda e, p, t: seen.append(e))
    assert seen == [1, 2]
    assert len(trace.val_hr10) == 2 and all(0 <= v <= 1 for v in trace.val_hr10)


def test_train_diverges_loudly():
    g, X = _planted()
    with np.errstate(all="ignore"), pytest.raises(DivergenceError):
        train(g, X * 1e200, TrainingConfig(epochs=1))


def test_train_rejects_empty_graph():
    with pytest.raises(InputError):
        train(build_graph([], 3), np.ones((3, 2)), TrainingConfig(epochs=1))


def test_trace_csv(tmp_path):
    g, X = _planted()
    _, trace = train(g, X, TrainingConfig(epochs=2, seed=0))
    trace.write_csv(tmp_path / "t.csv", include_time=False)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "epoch,loss,val_hr10,seconds"
    assert len(lines) == 3 and lines[1].startswith("1,") and lines[1].endswith(",,")
