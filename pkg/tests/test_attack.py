import json

import numpy as np
import pytest

from advrgraph.attack import AttackConfig, attack_sweep, fgm_step, success_rate, sweep_from_doc, sweep_to_doc
from advrgraph.errors import ConfigError
from advrgraph.model import predict
from advrgraph.store import Store

from conftest import REPO, build_tiny


@pytest.fixture(scope="module")
def benign(dataset):
    ids = dataset.subset(label=0, split="test")
    return dataset.images[ids], ids


def test_config_validation():
    with pytest.raises(ConfigError):
        AttackConfig("FGM_L2", 0, 0, (0.5,))
    with pytest.raises(ConfigError):
        AttackConfig("FGM_L2", 0, 1, (1.0, 0.5))
    with pytest.raises(ConfigError):
        AttackConfig("FGM_L2", 0, 1, (0.5, 0.5))
    with pytest.raises(ConfigError):
        AttackConfig("PGD", 0, 1, (0.5,))
    cfg = AttackConfig("FGM_LINF", 2, 1, (0, 0.5))
    assert cfg.strengths == (0.0, 0.5)


def test_eps_zero_exact(model, benign):
    x = benign[0][0]
    adv, flag = fgm_step(model, x, 1, 0.0, "FGM_L2", (0, 1))
    assert not flag
    np.testing.assert_array_equal(adv, x)


def test_linf_interior_shift(model):
    # Interior pixels (away from 0/1) move by exactly eps wherever the sign is nonzero.
    x = np.full(model.input_shape, 0.5)
    eps = 0.05
    adv, _ = fgm_step(model, x, 1, eps, "FGM_LINF", (0, 1))
    from advrgraph.model import input_gradient

    g = input_gradient(model, x, 1)
    moved = np.abs(adv - x)
    assert np.all(moved[g != 0] == pytest.approx(eps))
    assert np.all(moved[g == 0] == 0.0)


def test_small_l2_step_decreases_target_ce(model, benign):
    x = benign[0][0]
    target = 1
    adv, _ = fgm_step(model, x, target, 0.01, "FGM_L2", (0, 1))
    before = -np.log(predict(model, x)[target])
    after = -np.log(predict(model, adv)[target])
    assert after < before


def test_zero_gradient_flagged():
    layers = [
        {"name": "input", "kind": "input", "predecessors": []},
        {"name": "conv", "kind": "conv", "channels": 1, "kernelShape": [3, 3],
         "predecessors": ["input"]},
        {"name": "dense", "kind": "dense", "channels": 2, "predecessors": ["conv"]},
    ]
    weights = {
        "conv": {"W": np.zeros((1, 1, 3, 3)), "b": np.zeros(1)},
        "dense": {"W": np.zeros((2, 16)), "b": np.zeros(2)},
    }
    m = build_tiny(layers, weights, (6, 6, 1))
    x = np.random.default_rng(0).uniform(size=(6, 6, 1))
    adv, flag = fgm_step(m, x, 0, 0.5, "FGM_L2", (0, 1))
    assert flag
    np.testing.assert_array_equal(adv, x)


@pytest.fixture(scope="module")
def default_sweep(model, benign, tmp_path_factory):
    store = Store(tmp_path_factory.mktemp("sweep"))
    cfg = AttackConfig("FGM_L2", 0, 1, (0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5))
    return attack_sweep(model, benign[0], benign[1], cfg, store), store, cfg


def test_sweep_keys_match_strengths(default_sweep):
    sweep, _, cfg = default_sweep
    assert tuple(sorted(sweep.per_strength)) == cfg.strengths


def test_sweep_eps_zero_bitwise_identity(default_sweep, benign):
    sweep, store, _ = default_sweep
    attacked = store.get_arrays(sweep.per_strength[0.0].attacked_ref)["images"]
    np.testing.assert_array_equal(attacked, benign[0])


def test_sweep_norm_and_range_bounds(default_sweep, benign):
    sweep, store, cfg = default_sweep
    for eps in cfg.strengths:
        attacked = store.get_arrays(sweep.per_strength[eps].attacked_ref)["images"]
        delta = attacked - benign[0]
        norms = np.sqrt((delta ** 2).sum(axis=(1, 2, 3)))
        assert (norms <= eps * (1 + 1e-6)).all()
        assert attacked.min() >= 0.0 and attacked.max() <= 1.0


def test_linf_norm_bound(model, benign, tmp_path):
    cfg = AttackConfig("FGM_LINF", 0, 1, (0.0, 0.02, 0.05))
    sweep = attack_sweep(model, benign[0], benign[1], cfg, Store(tmp_path))
    for eps in cfg.strengths:
        attacked = Store(tmp_path).get_arrays(sweep.per_strength[eps].attacked_ref)["images"]
        assert np.abs(attacked - benign[0]).max() <= eps * (1 + 1e-6)


def test_sweep_success_monotone_ends(default_sweep):
    sweep, _, cfg = default_sweep
    assert sweep.per_strength[cfg.strengths[-1]].success_rate >= sweep.per_strength[0.0].success_rate


def test_sweep_matches_golden_curve(default_sweep):
    golden = json.loads((REPO / "data" / "golden" / "attack_curve.json").read_text())
    sweep, _, _ = default_sweep
    assert golden["modelDigest"] == sweep.model_digest
    for point in golden["curve"]:
        got = sweep.per_strength[float(point["strength"])].success_rate
        assert got == pytest.approx(point["successRate"], abs=0.05)


def test_sweep_deterministic(model, benign, tmp_path):
    cfg = AttackConfig("FGM_L2", 0, 1, (0.0, 1.0))
    s1 = attack_sweep(model, benign[0], benign[1], cfg, Store(tmp_path / "a"))
    s2 = attack_sweep(model, benign[0], benign[1], cfg, Store(tmp_path / "b"))
    for eps in cfg.strengths:
        assert s1.per_strength[eps].attacked_ref == s2.per_strength[eps].attacked_ref


def test_sweep_empty_inputs(model, tmp_path):
    cfg = AttackConfig("FGM_L2", 0, 1, (0.5,))
    with pytest.raises(ConfigError):
        attack_sweep(model, np.zeros((0, 16, 16, 1)), np.zeros(0), cfg, Store(tmp_path))


def test_success_rate_extremes(model, dataset):
    cls1 = dataset.subset(label=1)[:10]
    assert success_rate(model, dataset.images[cls1], 1) == 1.0
    assert success_rate(model, dataset.images[cls1], 2) == 0.0
    with pytest.raises(ConfigError):
        success_rate(model, np.zeros((0, 16, 16, 1)), 1)


def test_success_rate_recount_oracle(default_sweep, model):
    sweep, store, cfg = default_sweep
    eps = cfg.strengths[-1]
    attacked = store.get_arrays(sweep.per_strength[eps].attacked_ref)["images"].astype(np.float64)
    flags = [int(predict(model, attacked[i]).argmax()) == cfg.target_class
             for i in range(len(attacked))]
    assert sweep.per_strength[eps].success_rate == pytest.approx(sum(flags) / len(flags))


def test_sweep_doc_roundtrip(default_sweep):
    sweep, _, _ = default_sweep
    doc = sweep_to_doc(sweep)
    back = sweep_from_doc(doc)
    assert back.config == sweep.config
    assert back.per_strength == sweep.per_strength
    assert back.input_set_ref == sweep.input_set_ref
