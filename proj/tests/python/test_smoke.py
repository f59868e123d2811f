import json

import numpy as np
import pytest

import neuron_steer as ns


def small_dump():
    high = np.array([[1, 0], [3, 0]], dtype=np.float32)
    low = np.array([[0, 0], [2, 0]], dtype=np.float32)
    return ns.ActivationDump("smoke", "openness", {0: (high, low)})


def test_stats_worked_example():
    dump = small_dump()
    (st,) = ns.compute_stats(dump)
    np.testing.assert_array_equal(st.steering, [1.0, 0.0])
    np.testing.assert_allclose(st.cohens_d, [2 ** -0.5, 0.0], rtol=0, atol=1e-15)
    np.testing.assert_array_equal(ns.steering_vector(dump.high(0), dump.low(0)), st.steering)


def test_dump_round_trip(tmp_path):
    dump = small_dump()
    path = tmp_path / "x.dpna"
    ns.write_dump(path, dump)
    back = ns.read_dump(path)
    assert back == dump
    assert ns.ActivationDump.from_bytes(dump.to_bytes()) == dump
    np.testing.assert_array_equal(back.high(0), dump.high(0))


def test_errors_map_to_python_exceptions(tmp_path):
    with pytest.raises(ns.IoError):
        ns.read_dump(tmp_path / "missing.dpna")
    bad = bytearray(small_dump().to_bytes())
    bad[0:4] = b"XXXX"
    with pytest.raises(ns.DumpError, match="bad magic"):
        ns.ActivationDump.from_bytes(bytes(bad))
    with pytest.raises(ValueError):
        ns.quantile_threshold(np.array([]), 0.5)


def test_quantile_example():
    assert ns.quantile_threshold(np.array([0.0, 1.0, 2.0, 3.0]), 0.5) == 1.5


def test_planted_pipeline():
    dump, oracle = ns.plant(512, [0, 1], n_pairs=300, seed=3)
    stats = ns.compute_stats(dump)
    sel = ns.select(stats, "openness", q=0.95, tau_d=0.8)
    rec = ns.evaluate_recovery(oracle, sel)
    assert rec["overall_rate"] >= 0.95
    assert rec["max_unplanted_per_layer"] <= 3

    again = ns.NeuronSelection.from_json(sel.to_json())
    assert again.to_json() == sel.to_json()

    cfg = ns.build_config(sel, stats, 2.0, mode="weighted", direction="enhance")
    weights = ns.assign_weights(sel)
    assert all(0.75 <= w <= 1.0 for layer in weights.values() for w in layer.values())
    hidden = np.zeros(512)
    out = ns.apply_edits(hidden, cfg, 0)
    edits = cfg.edits(0)
    assert set(np.flatnonzero(out)) == set(edits)
    back = ns.apply_edits(out, ns.build_config(sel, stats, 2.0, mode="weighted", direction="suppress"), 0)
    np.testing.assert_allclose(back, hidden, atol=1e-12)

    zero = json.loads(ns.build_config(sel, stats, 0.0).to_json())
    assert all(e["delta"] == 0 for layer in zero["layers"] for e in layer["edits"])


def test_toy_model_intervention():
    model = ns.ToyModel(seed=5)
    tokens = [1, 2, 3, 40]
    plain = model.forward(tokens)
    empty = model.forward_intervened(tokens, ns.InterventionConfig())
    np.testing.assert_array_equal(plain["logits"], empty["logits"])

    dump = model.capture_dump(100, trait="agreeableness")
    assert dump.layers == [0, 1, 2, 3]
    assert dump.high(0).shape == (100, 128)
    stats = ns.compute_stats(dump)
    sel = ns.select(stats, "agreeableness", q=0.9, tau_d=0.3)
    cfg = ns.build_config(sel, stats, 1.0)
    run = model.forward_intervened(tokens, cfg)
    for layer in cfg.layers:
        np.testing.assert_array_equal(run["captures"][layer], ns.apply_edits(run["pre_edit"][layer], cfg, layer))


def test_pca_and_census():
    dump, _ = ns.plant(64, [0], n_pairs=100, seed=1)
    r = ns.pca_layer(dump, 0)
    assert r["components"].shape == (2, 64)
    assert r["projections"].shape == (200, 2)
    assert r["explained_variance_ratio"][0] >= r["explained_variance_ratio"][1]
    assert r["separation"] > 2
    assert [c for _, c, _ in ns.census(np.array([0.4, 0.9, -1.2]), [0.5, 0.8, 1.0])] == [2, 2, 1]
    assert ns.render_census(np.array([0.4, 0.9, -1.2]), [0.8]) == "|d| > 0.8 → 2 (66.7%)\n"
