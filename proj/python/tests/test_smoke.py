import json
import math

import numpy as np
import pytest

import planet

TINY = "train.epochs = 1\ntrain.steps_per_epoch = 4\nmodel.dim = 8\nmodel.heads = 2\nmodel.codebook_size = 8\n"


@pytest.fixture(scope="module")
def graph():
    return planet.gen_sbm(3, blocks=[15, 15], dims=[4, 5])


def test_graph_accessors(graph, tmp_path):
    assert graph.num_nodes == 30
    assert graph.dims == [4, 5]
    assert graph.modality_names == ["text", "image"]
    feats = graph.features(1)
    assert feats.shape == (30, 5)
    edges = graph.edges()
    assert edges.shape == (graph.num_edges, 2)
    assert np.all(edges[:, 0] < edges[:, 1])
    assert sorted(graph.nodes_in("train") + graph.nodes_in("val") + graph.nodes_in("test")) == list(range(30))

    path = tmp_path / "g.mag"
    graph.save(path)
    assert planet.Graph.load(path) == graph


def test_pretrain_is_deterministic(graph, tmp_path):
    model_a, steps_a, hash_a = planet.pretrain([graph], TINY, seed=4)
    _, steps_b, hash_b = planet.pretrain([graph], TINY, seed=4)
    assert hash_a == hash_b
    assert [s["total"] for s in steps_a] == [s["total"] for s in steps_b]
    assert len(steps_a) == 4
    assert model_a.checkpoint_hash() == hash_a

    emb = model_a.embed(graph)
    assert emb.shape == (30, 2 * 2 * 8)
    assert np.all(np.isfinite(emb))
    np.testing.assert_allclose(model_a.embed(graph, chunk_size=7), emb, rtol=0, atol=1e-12)

    path = tmp_path / "m.plnt"
    model_a.save(path)
    assert np.array_equal(planet.Model.load(path).embed(graph), emb)


def test_config_errors_map_to_exceptions(graph):
    with pytest.raises(planet.ConfigError):
        planet.pretrain([graph], "model.colour = 3\n")
    with pytest.raises(planet.ConfigError):
        planet.pretrain([graph], TINY, set=["model.heads=3"])
    with pytest.raises(planet.ContractError):
        planet.pretrain([], TINY)
    assert issubclass(planet.FormatError, planet.Error)


def test_transport_and_w1():
    cost, plan = planet.solve_transport([0.5, 0.5], [0.5, 0.5], np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert cost == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(plan, np.diag([0.5, 0.5]))

    tokens = np.array([[0.0, 0.0], [3.0, 4.0]])
    assert planet.wasserstein1([0], [1.0], [1], [1.0], tokens) == pytest.approx(5.0, rel=1e-12)
    with pytest.raises(planet.ContractError):
        planet.solve_transport([1.0], [0.5], np.zeros((1, 1)))


def test_fewshot_and_probe():
    emb = np.zeros((40, 2))
    labels = [i % 2 for i in range(40)]
    emb[np.arange(40), labels] = 1.0
    mean, std, per_task = planet.fewshot(emb, labels, k_shot=5, n_query=10)
    assert mean == 1.0 and std == 0.0 and len(per_task) == 10

    r = planet.node_probe(emb, labels, 2, list(range(20)), list(range(20, 40)))
    assert r["accuracy"] == 1.0
    assert len(r["predictions"]) == 20


def test_gradcheck_report():
    report = json.loads(planet.gradcheck(1))
    assert report["pass"] is True
    assert report["checked"] == report["params"]


def test_cli_in_process(tmp_path):
    code, out, err = planet.run_cli(["synth", "--kind", "sbm", "--out", str(tmp_path), "--set", "sbm.blocks=[5,5]"])
    assert code == 0, err
    assert (tmp_path / "graph.mag").exists()
    code, _, err = planet.run_cli(["synth", "--kind", "lattice", "--out", str(tmp_path)])
    assert code == 1
    assert err.startswith("error: config:")


def test_synergy_generator_shapes():
    g = planet.gen_synergy(2, nodes=100, density=0.01)
    assert g.num_nodes == 100
    assert g.num_classes == 2
    assert all(math.isfinite(x) for x in g.features(0).ravel())
