import numpy as np
import pytest

from spacetime_embed import kernels
from spacetime_embed.experiments import DUPDIV_PRESETS
from spacetime_embed.graphs import (
    DupDivParams,
    generate_chain,
    generate_cycle,
    generate_duplication_divergence,
    generate_transitive_chain,
)
from spacetime_embed.likelihood import Likelihood
from spacetime_embed.manifolds import Kind, ManifoldSpec, random_point, time_delta
from spacetime_embed.optimizer import (
    EmbeddingTable,
    TrainConfig,
    build_batches,
    epoch_lr,
    grad_check,
    load_checkpoint,
    save_checkpoint,
    train,
)


def test_epoch_lr_schedule():
    cfg = TrainConfig(lr=0.1, epochs=22, burnin_epochs=1, burnin_factor=0.01, lr_final_fraction=0.25)
    assert epoch_lr(cfg, 0) == pytest.approx(0.001)
    assert epoch_lr(cfg, 1) == pytest.approx(0.1)
    assert epoch_lr(cfg, 11) == pytest.approx(0.0625)
    assert epoch_lr(cfg, 21) == pytest.approx(0.025)
    with pytest.raises(IndexError):
        epoch_lr(cfg, 22)


def test_config_validation():
    for bad in ({"lr": 0}, {"epochs": -1}, {"batch_size": 0}, {"negatives": "some"},
                {"burnin_factor": 0.0}):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_build_batches_layout_and_weights():
    pos = np.array([[0, 1], [1, 2], [2, 3]])
    neg = np.array([[0, 5], [0, 6], [1, 7], [1, 8], [2, 9], [2, 4]])
    us, vs, labels, ptr, w = build_batches(pos, neg, 2, 2)
    np.testing.assert_array_equal(ptr, [0, 6, 9])
    np.testing.assert_array_equal(labels, [1, 1, 0, 0, 0, 0, 1, 0, 0])
    np.testing.assert_array_equal(vs, [1, 2, 5, 6, 7, 8, 3, 9, 4])
    np.testing.assert_allclose(w, [0.5, 1.0])


def test_zero_epochs_returns_initialisation():
    spec = ManifoldSpec(Kind.MINKOWSKI, 1)
    cfg = TrainConfig(epochs=0, seed=4)
    table, losses = train(generate_cycle(5).edges, 5, spec, Likelihood.tfd(0.1, 0.1, 0.1), cfg,
                          backend="numpy")
    assert losses == []
    ss = np.random.SeedSequence(4).spawn(2)[0]
    np.testing.assert_array_equal(table.coords,
                                  random_point(spec, cfg.init_scale, np.random.default_rng(ss), size=5))


def test_empty_training_set_rejected():
    with pytest.raises(ValueError):
        train(np.zeros((0, 2)), 3, ManifoldSpec(Kind.EUCLIDEAN, 2), Likelihood.fd(0.1), TrainConfig())


@pytest.mark.parametrize("name", list(DUPDIV_PRESETS))
def test_backends_agree(name):
    preset = DUPDIV_PRESETS[name]
    spec = preset.spec(4)
    lik = preset.likelihood.calibrated(spec)
    g = generate_duplication_divergence(DupDivParams(3, 30, 0.7, 0.7, seed=2))
    cfg = preset.train_config(seed=1, epochs=3)
    a, la = train(g.edges, g.num_nodes, spec, lik, cfg, backend="numba")
    b, lb = train(g.edges, g.num_nodes, spec, lik, cfg, backend="numpy")
    np.testing.assert_allclose(a.coords, b.coords, rtol=0, atol=1e-10)
    np.testing.assert_allclose(la, lb, rtol=1e-10)


def test_training_is_deterministic_and_valid():
    preset = DUPDIV_PRESETS["anti_de_sitter"]
    spec = preset.spec(4)
    lik = preset.likelihood.calibrated(spec)
    g = generate_duplication_divergence(DupDivParams(3, 30, 0.7, 0.7, seed=2))
    cfg = preset.train_config(seed=5, epochs=5)
    a, la = train(g.edges, g.num_nodes, spec, lik, cfg)
    b, lb = train(g.edges, g.num_nodes, spec, lik, cfg)
    assert la == lb
    np.testing.assert_array_equal(a.coords, b.coords)
    assert a.is_valid()


def test_training_reduces_loss_on_cycle():
    spec = ManifoldSpec(Kind.CYLINDRICAL_MINKOWSKI, 1, 10.0)
    lik = Likelihood.tfd(0.4, 0.07, 0.09, wrap_m=3).calibrated(spec)
    cfg = TrainConfig(lr=0.08, epochs=300, batch_size=2, negatives="all", seed=0)
    _, losses = train(generate_cycle(5).edges, 5, spec, lik, cfg)
    assert losses[-1] < 0.5 * losses[0]


def test_callback_sees_every_epoch():
    seen = []
    spec = ManifoldSpec(Kind.EUCLIDEAN, 2)
    train(generate_cycle(5).edges, 5, spec, Likelihood.fd(0.4), TrainConfig(epochs=4, negatives="all"),
          callback=lambda e, t, m: seen.append((e, m)))
    assert [e for e, _ in seen] == [0, 1, 2, 3]


@pytest.mark.parametrize("kind", list(Kind))
@pytest.mark.parametrize("lik", [Likelihood.fd(0.3, r=0.1, alpha=0.8),
                                 Likelihood.tfd(0.4, 0.3, 0.2, r=-0.1),
                                 Likelihood.tfd(0.4, 0.3, 0.2, r=-0.1, wrap_m=3)],
                         ids=["fd", "tfd", "wrapped"])
def test_grad_check_small_sample(kind, lik):
    circ = 4.0 if kind in (Kind.CYLINDRICAL_MINKOWSKI, Kind.CYLINDRICAL_EUCLIDEAN) else None
    spec = ManifoldSpec(kind, 2, circ)
    lik = lik.calibrated(spec)  # keeps the wrapped sum below the NLL clamp
    rng = np.random.default_rng(11)
    for label in (0, 1):
        p, q = random_point(spec, 0.6, rng, size=2)
        assert grad_check(spec, lik, p, q, label) < 1e-4


def test_checkpoint_round_trip(tmp_path):
    spec = ManifoldSpec(Kind.CYLINDRICAL_MINKOWSKI, 2, 10.0)
    table = EmbeddingTable(spec, random_point(spec, 0.5, 0, size=7))
    save_checkpoint(table, tmp_path / "ck.tsv")
    back = load_checkpoint(tmp_path / "ck.tsv")
    assert back.spec == spec
    np.testing.assert_array_equal(back.coords, table.coords)
    (tmp_path / "bad.tsv").write_text("hello\n")
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "bad.tsv")


def test_backend_selector():
    assert kernels.get_impl("numpy") is kernels.numpy_impl
    with pytest.raises(ValueError):
        kernels.get_impl("cuda")


def test_epoch_lr_endpoints():
    cfg = TrainConfig(lr=1.0, epochs=100, burnin_epochs=10)
    assert epoch_lr(cfg, 0) == pytest.approx(0.01)
    assert epoch_lr(cfg, 99) == pytest.approx(0.25)


def test_coincident_euclidean_pair_has_zero_gradient():
    spec = ManifoldSpec(Kind.EUCLIDEAN, 3)
    lik = Likelihood.fd(0.4)
    p = random_point(spec, 0.5, 2)
    X = np.stack([p, p])
    _, gp, gq = kernels.get_impl(None).pair_gradients(
        spec.code, spec.circ, lik.code, lik.as_array(), 0, X,
        np.array([0], np.int64), np.array([1], np.int64), np.array([1], np.uint8))
    np.testing.assert_array_equal(gp, 0.0)
    np.testing.assert_array_equal(gq, 0.0)


def test_single_edge_puts_target_in_future():
    spec = ManifoldSpec(Kind.MINKOWSKI, 2)
    for seed in range(3):
        cfg = TrainConfig(lr=0.05, epochs=100, batch_size=1, negatives="all", seed=seed)
        table, _ = train(np.array([[0, 1]]), 2, spec, Likelihood.tfd(0.4, 0.07, 0.09), cfg)
        assert time_delta(spec, table.coords[0], table.coords[1]) > 0


def test_cycle_defaults_separate_edges_from_non_edges():
    spec = ManifoldSpec(Kind.CYLINDRICAL_MINKOWSKI, 1, 10.0)
    lik = Likelihood.tfd(0.4, 0.07, 0.09, wrap_m=3).calibrated(spec)
    g = generate_cycle(5)
    table, _ = train(g.edges, 5, spec, lik, TrainConfig(epochs=300, neg_ratio=2, seed=0))
    edges = set(map(tuple, g.edges.tolist()))
    non = np.array([(u, v) for u in range(5) for v in range(5) if u != v and (u, v) not in edges])
    pos = lik.probability(spec, table.coords[g.edges[:, 0]], table.coords[g.edges[:, 1]])
    neg = lik.probability(spec, table.coords[non[:, 0]], table.coords[non[:, 1]])
    assert pos.mean() > neg.mean()


@pytest.mark.parametrize("graph,spec,lik", [
    (generate_cycle(5), ManifoldSpec(Kind.CYLINDRICAL_MINKOWSKI, 1, 10.0), Likelihood.tfd(0.4, 0.07, 0.09, wrap_m=3)),
    (generate_chain(10), ManifoldSpec(Kind.MINKOWSKI, 1), Likelihood.tfd(0.4, 0.07, 0.075)),
    (generate_transitive_chain(10), ManifoldSpec(Kind.EUCLIDEAN, 2), Likelihood.fd(0.4)),
    (generate_chain(10), ManifoldSpec(Kind.ANTI_DE_SITTER, 1),
     Likelihood.tfd(0.4, 0.07, 0.075, r=-0.1, wrap_m=3)),
], ids=["cycle", "chain", "transitive", "ads-chain"])
def test_loss_mostly_decreases_after_burnin(graph, spec, lik):
    cfg = TrainConfig(lr=0.05, epochs=25, negatives="all", seed=0)
    _, losses = train(graph.edges, graph.num_nodes, spec, lik.calibrated(spec), cfg)
    steps = np.diff(losses[cfg.burnin_epochs:cfg.burnin_epochs + 11])
    assert np.sum(steps <= 0) >= 8
