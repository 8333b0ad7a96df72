import numpy as np
import pytest

import spikedec as sd


def test_preset_geometry():
    cfg = sd.preset(sd.Track.track2, sd.Recurrence.gru)
    assert cfg.stage_lengths() == [1024, 1028, 514, 514, 257]
    assert cfg.keypoint_count() == 257
    assert sd.parameter_count(cfg) == 5102
    assert sd.receptive_field(cfg) == (10, 4, 5)


def test_forward_shapes_and_zero_model():
    cfg = sd.preset(sd.Track.track2, sd.Recurrence.lif)
    x = np.random.default_rng(0).poisson(0.3, size=(96, 1024)).astype(float)
    v, k = sd.forward(sd.Model.initialize(cfg), x)
    assert v.shape == (1024, 2)
    assert k.shape == (257, 2)
    v0, _ = sd.forward(sd.Model.zeros(cfg), x)
    assert not v0.any()


def test_forward_rejects_wrong_channels():
    model = sd.Model.initialize(sd.preset(sd.Track.track2, sd.Recurrence.gru))
    with pytest.raises(sd.DimensionError):
        sd.forward(model, np.zeros((95, 1024)))


def test_parameters_round_trip(tmp_path):
    model = sd.Model.initialize(sd.preset(sd.Track.track2, sd.Recurrence.sgru))
    params = model.parameters()
    assert sum(p.size for p in params.values()) == model.parameter_count()
    sd.save_checkpoint(model, str(tmp_path / "m"))
    back = sd.load_checkpoint(str(tmp_path / "m"))
    for name, p in back.parameters().items():
        np.testing.assert_array_equal(p, params[name].astype(np.float32).astype(float))
    with pytest.raises(sd.ConfigError):
        model.set_parameter("nope", np.zeros(1))


def test_recording_io(tmp_path):
    rec = sd.synth_reaching(seed=3, seconds=20.0, channels=8)
    assert rec.spikes.shape == (rec.steps, 8)
    assert rec.velocities.shape == (rec.steps, 2)
    sd.save_ndr(rec, str(tmp_path / "r.ndr"))
    sd.save_csv(rec, str(tmp_path / "r.csv"))
    assert sd.load_ndr(str(tmp_path / "r.ndr")) == rec
    assert sd.load_csv(str(tmp_path / "r.csv")) == rec
    again = sd.Recording(rec.spikes, rec.velocities)
    assert again == rec


def test_interpolation_oracle():
    v = sd.synth_reaching(seed=1, seconds=60.0, channels=4).velocities.astype(float)
    v = v[: len(v) // 16 * 16]
    assert sd.interp_oracle_r2(v, 1) == 1.0
    assert sd.interp_oracle_r2(v, 4) >= sd.interp_oracle_r2(v, 16)


def test_fit_bench_and_stream():
    rec = sd.synth_reaching(seed=2, seconds=120.0)
    train, val, test = sd.split(rec)
    cfg = sd.TrainConfig()
    cfg.epochs = 2
    cfg.seed = 1
    model = sd.Model.initialize(sd.preset(sd.Track.track2, sd.Recurrence.gru))
    best, history = sd.fit(model, train, val, cfg)
    assert [h[0] for h in history] == [1, 2]
    report = sd.run_bench(best, test)
    assert set(report) == {"footprint_bytes", "connection_sparsity", "activation_sparsity",
                           "dense", "macs", "acs", "r2"}
    assert report["activation_sparsity"] == 0.0

    x = test.spikes[:1024].T.astype(float)
    batch, _ = sd.forward(best, x)
    state = sd.stream_init(best)
    rows = [seg for t in range(1024)
            if (seg := sd.stream_push(best, state, x[:, t])) is not None]
    online = np.concatenate(rows)
    emitted, interior = sd.stream_boundary(best.config)
    assert online.shape == (emitted, 2)
    np.testing.assert_array_equal(online[:interior], batch[:interior])
    assert sd.stream_latency(best) == (40.0, 62.5)
