import json
import math

import numpy as np
import pytest

import hazgam

SMALL_SYNTH = json.dumps({"n_events": 30, "min_records_per_event": 5, "max_records_per_event": 12})


def test_hazard_spot_values():
    c = hazgam.reference_hazard_coeffs()
    assert len(c) == 7
    a, b = hazgam.eval_hazard([3.814, 7.9], [0.0, 10.0])
    assert abs(a - (2.683 - 0.263 * 3.814) * math.log(5.046)) < 1e-12
    assert abs(b - 2.2207) < 1e-3


def test_fit_hazard_noise_free():
    rng = np.random.default_rng(0)
    mw = rng.uniform(3.5, 7.9, 300)
    rrup = rng.uniform(1, 300, 300)
    y = hazgam.eval_hazard(mw.tolist(), rrup.tolist())
    fit = hazgam.fit_hazard(mw.tolist(), rrup.tolist(), y)
    pred = np.array(hazgam.eval_hazard(mw.tolist(), rrup.tolist(), fit["coeffs"]))
    assert np.sqrt(np.mean((pred - np.array(y)) ** 2)) <= 1e-6
    with pytest.raises(hazgam.FitError):
        hazgam.fit_hazard([6.0] * 20, rrup[:20].tolist(), y[:20])


def test_weights_and_loss():
    assert hazgam.sigmoid_scale(0.5) == 0.5
    assert abs(hazgam.sigmoid_scale(1.0) - 0.8808) < 1e-4
    B = hazgam.bin_count_component([3.5] * 500 + [7.5] * 5, [150.0] * 500 + [10.0] * 5)
    assert len(B) == 36 and max(B) == 1.0
    W = hazgam.combine_and_scale(B, [1.0] * 36, 0.0)
    assert all(0 < w < 1 for w in W)
    with pytest.raises(hazgam.HazgamError):
        hazgam.combine_and_scale(B, [1.0] * 36, 2.0)

    rng = np.random.default_rng(1)
    p, t = rng.normal(size=(10, 27)), rng.normal(size=(10, 27))
    assert hazgam.hazbin_loss(p, t, [1.0] * 10) == pytest.approx(np.mean((p - t) ** 2), rel=1e-12)
    assert hazgam.metrics(p, t)["mse"] == pytest.approx(np.mean((p - t) ** 2), rel=1e-12)


def test_synth_screen_and_variance_components():
    text = hazgam.synth_flatfile(5, json.dumps({"n_events": 80}))
    kept, report = hazgam.screen_flatfile(text)
    assert "min_event_records" in json.loads(report)
    arr = hazgam.flatfile_arrays(kept)
    y = np.asarray(arr["targets"])
    assert y.shape == (len(arr["mw"]), 27)
    resid = y - y.mean(axis=0)
    vc = hazgam.fit_variance_components(resid, arr["event_id"], arr["region_flag"])
    for k in ("tau", "phi_r", "phi", "sigma"):
        assert len(vc[k]) == 27
    s = np.sqrt(np.square(vc["tau"]) + np.square(vc["phi_r"]) + np.square(vc["phi"]))
    assert np.allclose(s, vc["sigma"], rtol=0, atol=1e-15)


def test_train_predict_roundtrip():
    text = hazgam.synth_flatfile(3, SMALL_SYNTH)
    cfg = json.dumps({"train": {"max_epochs": 2, "batch_size": 64}, "width": 4, "depth": 1})
    model = hazgam.train_model(text, cfg, 3)
    assert "mag" in model.pathways and len(model.history) >= 1
    args = ([6.0, 7.0], [20.0, 80.0], [400.0, 760.0], [5.0, 2.0], [1, 2], [1, 3])
    pred = np.asarray(model.predict(*args))
    assert pred.shape == (2, 27)
    parts = model.contributions(*args)
    total = np.asarray(parts.pop("bias"))[None, :] + sum(np.asarray(v) for v in parts.values())
    assert np.allclose(total, pred, rtol=1e-12, atol=1e-12)
    again = hazgam.Model.from_json(model.to_json())
    assert np.array_equal(np.asarray(again.predict(*args)), pred)


def test_cli_in_process(tmp_path):
    code, out, _ = hazgam.run_cli(["--version"])
    assert code == 0 and hazgam.__version__ in out
    assert hazgam.run_cli(["bogus"])[0] == 1
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"synth": json.loads(SMALL_SYNTH)}))
    code, _, err = hazgam.run_cli(["synth-data", "--seed", "2", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert code == 0, err
    first = (tmp_path / "o" / "flatfile.csv").read_text().splitlines()[0]
    assert first == f"# seed=2 version={hazgam.__version__}"
