import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from advrgraph.attribution import (ActivationProfile, Condition, InfluenceTable,
                                   aggregate_influence, aggregate_profile, build_graph,
                                   candidate_channels, graph_from_doc, graph_to_doc,
                                   influence_from_table, influence_to_table,
                                   per_input_influence, profile_from_table,
                                   profile_to_table, top_channels)
from advrgraph.errors import ConfigError, MissingDependencyError, UnsupportedLayerError
from advrgraph.model import EditSet, NeuronId, channel_activation, kernel_slice, masked
from advrgraph.store import canonical_bytes

from conftest import build_tiny, naive_influence

BENIGN = Condition("benign", 0, "ref0")


def two_conv_model(rng, c1=3, c2=3, h=6):
    layers = [
        {"name": "input", "kind": "input", "predecessors": []},
        {"name": "conv1", "kind": "conv", "channels": c1, "kernelShape": [3, 3],
         "predecessors": ["input"]},
        {"name": "conv2", "kind": "conv", "channels": c2, "kernelShape": [3, 3],
         "predecessors": ["conv1"]},
        {"name": "dense", "kind": "dense", "channels": 2, "predecessors": ["conv2"]},
    ]
    flat = (h - 4) * (h - 4) * c2
    weights = {
        "conv1": {"W": rng.normal(size=(c1, 1, 3, 3)), "b": rng.normal(size=c1) * 0.1},
        "conv2": {"W": rng.normal(size=(c2, c1, 3, 3)), "b": rng.normal(size=c2) * 0.1},
        "dense": {"W": rng.normal(size=(2, flat)), "b": np.zeros(2)},
    }
    return build_tiny(layers, weights, (h, h, 1))


def test_influence_zero_predecessor_map():
    rng = np.random.default_rng(0)
    m = two_conv_model(rng)
    assert per_input_influence(m, np.zeros((6, 6, 1)), "conv1", 0, 0) >= 0.0
    # conv1 on all-zero input: the input map itself is zero, so influence is 0
    assert per_input_influence(m, np.zeros((6, 6, 1)), "conv1", 0, 1) == 0.0


def test_influence_nested_loop_oracle():
    rng = np.random.default_rng(1)
    from advrgraph.model import feature_maps

    for _ in range(25):
        m = two_conv_model(rng, h=int(rng.integers(6, 9)))
        x = rng.uniform(0, 1, m.input_shape)
        c_prev = int(rng.integers(0, m.layer("conv1").channels))
        c = int(rng.integers(0, m.layer("conv2").channels))
        got = per_input_influence(m, x, "conv2", c_prev, c)
        prev_map = feature_maps(m, x, "conv1")[..., c_prev]
        want = naive_influence(prev_map, kernel_slice(m, "conv2", c_prev, c))
        assert got == pytest.approx(want, abs=1e-5)


def test_influence_nonnegative():
    rng = np.random.default_rng(2)
    m = two_conv_model(rng)
    for _ in range(10):
        x = rng.uniform(0, 1, m.input_shape)
        assert per_input_influence(m, x, "conv2", 0, 0) >= 0.0


def test_influence_non_conv_unsupported(model, dataset):
    with pytest.raises(UnsupportedLayerError):
        per_input_influence(model, dataset.images[0], "dense", 0, 0)


def test_profile_single_input_equals_activations(model, dataset):
    x = dataset.images[:1]
    profile = aggregate_profile(model, x, ("conv1", "conv2"), BENIGN)
    for layer in ("conv1", "conv2"):
        np.testing.assert_allclose(profile.values[layer],
                                   channel_activation(model, x[0], layer))


def test_profile_order_free(model, dataset):
    inputs = dataset.images[:5]
    p1 = aggregate_profile(model, inputs, ("conv1",), BENIGN)
    p2 = aggregate_profile(model, inputs[::-1], ("conv1",), BENIGN)
    np.testing.assert_array_equal(p1.values["conv1"], p2.values["conv1"])


def test_profile_median_of_three(model, dataset):
    inputs = dataset.images[:3]
    profile = aggregate_profile(model, inputs, ("conv2",), BENIGN)
    per_input = np.stack([channel_activation(model, x, "conv2") for x in inputs])
    middle = np.sort(per_input, axis=0)[1]
    np.testing.assert_allclose(profile.values["conv2"], middle)


def test_profile_empty_inputs(model):
    with pytest.raises(ConfigError):
        aggregate_profile(model, np.zeros((0, 16, 16, 1)), ("conv1",), BENIGN)


def test_aggregate_influence_single_input(model, dataset):
    x = dataset.images[:1]
    cands = (0, 1, 2)
    table = aggregate_influence(model, x, "conv2", cands, cands, BENIGN)
    for (cp, c), v in table.entries.items():
        assert v == pytest.approx(max(per_input_influence(model, x[0], "conv2", cp, c), 0.0))


def test_aggregate_influence_masked_predecessor(model, dataset):
    edited = masked(model, EditSet.of([NeuronId("conv1", 1)]))
    cands = (0, 1, 2)
    table = aggregate_influence(edited, dataset.images[:4], "conv2", cands, cands, BENIGN)
    for c in cands:
        assert table.entries[(1, c)] == 0.0


@pytest.mark.parametrize("n_inputs", [3, 4])
def test_aggregate_influence_brute_force(n_inputs):
    # n=4 exercises the even-count median: the floor applies per input, before
    # aggregation, so negative peaks clamp to 0 first.
    rng = np.random.default_rng(3)
    from advrgraph.model import feature_maps

    m = two_conv_model(rng, c1=2, c2=2, h=7)
    inputs = rng.uniform(0, 1, (n_inputs,) + m.input_shape)
    table = aggregate_influence(m, inputs, "conv2", (0, 1), (0, 1), BENIGN)
    maps = feature_maps(m, inputs, "conv1")
    for cp in (0, 1):
        for c in (0, 1):
            per_input = [naive_influence(maps[i, :, :, cp], kernel_slice(m, "conv2", cp, c))
                         for i in range(n_inputs)]
            assert table.entries[(cp, c)] == pytest.approx(np.median(per_input), abs=1e-5)


def test_pool_influence_passthrough():
    rng = np.random.default_rng(4)
    layers = [
        {"name": "input", "kind": "input", "predecessors": []},
        {"name": "conv1", "kind": "conv", "channels": 2, "kernelShape": [3, 3],
         "predecessors": ["input"]},
        {"name": "pool1", "kind": "pool", "poolSize": 2, "stride": 2, "predecessors": ["conv1"]},
        {"name": "dense", "kind": "dense", "channels": 2, "predecessors": ["pool1"]},
    ]
    weights = {
        "conv1": {"W": rng.normal(size=(2, 1, 3, 3)), "b": np.zeros(2)},
        "dense": {"W": rng.normal(size=(2, 2 * 3 * 3)), "b": np.zeros(2)},
    }
    m = build_tiny(layers, weights, (8, 8, 1))
    inputs = rng.uniform(0, 1, (3, 8, 8, 1))
    table = aggregate_influence(m, inputs, "pool1", (0, 1), (0, 1), BENIGN)
    acts = np.stack([channel_activation(m, x, "conv1") for x in inputs])
    med = np.median(acts, axis=0)
    assert set(table.entries) == {(0, 0), (1, 1)}
    assert table.entries[(0, 0)] == pytest.approx(med[0])
    assert table.entries[(1, 1)] == pytest.approx(med[1])


def make_profile(scores_by_layer, layers=None):
    layers = layers or tuple(scores_by_layer)
    return ActivationProfile(BENIGN, "d" * 64, "median-of-spatial-max", tuple(layers),
                             {l: np.asarray(v, dtype=np.float64) for l, v in scores_by_layer.items()})


def full_influence(layer, prev_n, n, value_fn):
    entries = {(cp, c): float(value_fn(cp, c)) for cp in range(prev_n) for c in range(n)}
    return InfluenceTable(BENIGN, layer, tuple(range(prev_n)), tuple(range(n)), entries)


def test_build_graph_k_covers_all(model):
    profile = make_profile({"conv1": [1, 2, 3, 4, 5, 6, 7, 8],
                            "conv2": [8, 7, 6, 5, 4, 3, 2, 1]})
    infl = {"conv2": full_influence("conv2", 8, 8, lambda cp, c: cp + c)}
    g = build_graph(model, profile, infl, k=8, m=3)
    assert all(len(g.nodes[l]) == 8 for l in ("conv1", "conv2"))


def test_build_graph_k1_argmax(model):
    profile = make_profile({"conv1": [0, 9, 1, 0, 0, 0, 0, 0],
                            "conv2": [0, 0, 0, 0, 0, 7, 0, 0]})
    infl = {"conv2": full_influence("conv2", 8, 8, lambda cp, c: 1.0)}
    g = build_graph(model, profile, infl, k=1, m=1)
    assert [n.neuron.channel for n in g.nodes["conv1"]] == [1]
    assert [n.neuron.channel for n in g.nodes["conv2"]] == [5]


def test_build_graph_tie_break(model):
    profile = make_profile({"conv1": [5, 3, 3, 1, 0, 0, 0, 0],
                            "conv2": [1, 0, 0, 0, 0, 0, 0, 0]})
    infl = {"conv2": full_influence("conv2", 8, 8, lambda cp, c: 0.0)}
    g = build_graph(model, profile, infl, k=2, m=1)
    assert [n.neuron.channel for n in g.nodes["conv1"]] == [0, 1]


def test_build_graph_edge_selection_then_drop(model):
    # Channel 2 in conv1 carries the strongest influence but is not selected,
    # so the edge budget spent on it is lost after the drop.
    profile = make_profile({"conv1": [9, 8, 0, 0, 0, 0, 0, 0],
                            "conv2": [9, 0, 0, 0, 0, 0, 0, 0]})
    values = {(0, 0): 1.0, (1, 0): 2.0, (2, 0): 3.0}
    infl = {"conv2": full_influence("conv2", 8, 8, lambda cp, c: values.get((cp, c), 0.0))}
    g = build_graph(model, profile, infl, k=2, m=2)
    incoming = g.incoming(NeuronId("conv2", 0))
    assert [e.source.channel for e in incoming] == [1]
    assert incoming[0].weight == 2.0


def test_build_graph_missing_pair_named(model):
    profile = make_profile({"conv1": [1, 0, 0, 0, 0, 0, 0, 0],
                            "conv2": [1, 0, 0, 0, 0, 0, 0, 0]})
    table = InfluenceTable(BENIGN, "conv2", (0,), (0,), {})
    with pytest.raises(MissingDependencyError, match=r"\(0, 0\)"):
        build_graph(model, profile, {"conv2": table}, k=1, m=1)


def test_build_graph_monotone_in_k(model, dataset):
    profile = aggregate_profile(model, dataset.images[:6], ("conv1", "conv2"), BENIGN)
    cands = tuple(range(8))
    infl = {"conv2": aggregate_influence(model, dataset.images[:6], "conv2", cands, cands, BENIGN)}
    selected = []
    for k in (1, 2, 4, 8):
        g = build_graph(model, profile, infl, k=k, m=3)
        selected.append(g.node_set())
    for small, large in zip(selected, selected[1:]):
        assert small <= large


def test_build_graph_deterministic_bytes(model, dataset):
    profile = aggregate_profile(model, dataset.images[:6], ("conv1", "conv2"), BENIGN)
    cands = tuple(range(8))
    infl = {"conv2": aggregate_influence(model, dataset.images[:6], "conv2", cands, cands, BENIGN)}
    g1 = build_graph(model, profile, infl, k=4, m=3)
    g2 = build_graph(model, profile, infl, k=4, m=3)
    assert canonical_bytes(graph_to_doc(g1)) == canonical_bytes(graph_to_doc(g2))


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_build_graph_validity_property(model, data):
    n = 8
    scores1 = data.draw(st.lists(st.floats(0, 10, allow_nan=False), min_size=n, max_size=n))
    scores2 = data.draw(st.lists(st.floats(0, 10, allow_nan=False), min_size=n, max_size=n))
    k = data.draw(st.integers(1, 10))
    m = data.draw(st.integers(1, 10))
    values = data.draw(st.lists(st.floats(0, 5, allow_nan=False),
                                min_size=n * n, max_size=n * n))
    profile = make_profile({"conv1": scores1, "conv2": scores2})
    infl = {"conv2": full_influence("conv2", n, n, lambda cp, c: values[cp * n + c])}
    g = build_graph(model, profile, infl, k=k, m=m)

    for layer in ("conv1", "conv2"):
        assert len(g.nodes[layer]) <= k
        assert len({node.neuron for node in g.nodes[layer]}) == len(g.nodes[layer])
    nodes = g.node_set()
    incoming_counts = {}
    for e in g.edges:
        assert e.source in nodes and e.target in nodes
        assert e.source.layer == "conv1" and e.target.layer == "conv2"
        assert e.weight >= 0
        incoming_counts[e.target] = incoming_counts.get(e.target, 0) + 1
    assert all(c <= m for c in incoming_counts.values())


def test_candidate_channels_union(model):
    p1 = make_profile({"conv1": [9, 0, 0, 0, 0, 0, 0, 0]})
    p2 = make_profile({"conv1": [0, 0, 0, 0, 0, 0, 0, 9]})
    cands = candidate_channels([p1, p2], "conv1", k=1)
    assert 0 in cands and 7 in cands
    assert cands == tuple(sorted(cands))


def test_top_channels_tie_break():
    p = make_profile({"conv1": [5, 3, 3, 1, 0, 0, 0, 0]})
    assert top_channels(p, "conv1", 2) == [0, 1]


def test_profile_table_roundtrip(model, dataset):
    profile = aggregate_profile(model, dataset.images[:4], ("conv1", "conv2"), BENIGN)
    text = profile_to_table(profile)
    back = profile_from_table(text, BENIGN)
    assert back.layers == profile.layers
    assert back.reducer == profile.reducer
    for layer in profile.layers:
        np.testing.assert_allclose(back.values[layer], profile.values[layer], rtol=1e-5)


def test_influence_table_roundtrip(model, dataset):
    cands = (0, 2, 5)
    table = aggregate_influence(model, dataset.images[:4], "conv2", cands, cands, BENIGN)
    back = influence_from_table(influence_to_table(table), BENIGN)
    assert back.layer == "conv2"
    assert back.prev_channels == cands and back.channels == cands
    assert set(back.entries) == set(table.entries)
    for pair, v in table.entries.items():
        assert back.entries[pair] == pytest.approx(v, rel=1e-5, abs=1e-9)


def test_graph_doc_roundtrip(model, dataset):
    profile = aggregate_profile(model, dataset.images[:4], ("conv1", "conv2"), BENIGN)
    cands = tuple(range(8))
    infl = {"conv2": aggregate_influence(model, dataset.images[:4], "conv2", cands, cands, BENIGN)}
    g = build_graph(model, profile, infl, k=3, m=2)
    back = graph_from_doc(graph_to_doc(g), BENIGN)
    assert back.node_set() == g.node_set()
    assert back.edge_set() == g.edge_set()
    assert canonical_bytes(graph_to_doc(back)) == canonical_bytes(graph_to_doc(g))
