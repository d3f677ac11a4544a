import json
from datetime import date

import numpy as np
import pytest

from hydroseq.checkpoint import load_checkpoint, save_checkpoint
from hydroseq.dates import DateRange, SplitSpec
from hydroseq.experiments import ExperimentSpec, FeatureSet, TrainedModel
from hydroseq.lstm import TrainConfig, init_params
from hydroseq.seasonal import (HybridModel, MonthlyNormStats, SeasonalModel,
                               SeasonalSpec, init_encoder_decoder)
from hydroseq.timeseries import NormStats


def tiny_daily_model(seed=0):
    params = init_params(6, 2, seed)
    # irrational-ish values exercise full float precision
    params.Wx[0, 0] = 1.0 / 3.0
    params.b_out = np.pi
    norm = NormStats(channel_stats={"precip_mm": (1.1, 2.2), "static:a": (0.5, 0.25)},
                     discharge_stats={"s1": (3.3, 4.4)},
                     constant_flags=["static:a"])
    spec = ExperimentSpec(
        feature_set=FeatureSet("precip_only"), sequence_length=10, hidden_size=6,
        train_config=TrainConfig(seed=seed),
        split=SplitSpec(train=DateRange(date(2001, 1, 1), date(2001, 6, 30)),
                        validation=DateRange(date(2001, 7, 1), date(2001, 9, 30)),
                        test=DateRange(date(2001, 10, 1), date(2001, 12, 31))))
    return TrainedModel(params=params, norm=norm, feature_schema=["precip_mm", "static:a"],
                        spec=spec, best_epoch=3, validation_nse=0.123456789012345,
                        n_train_windows=42)


def test_daily_round_trip_lossless(tmp_path):
    model = tiny_daily_model()
    path = tmp_path / "ckpt.json"
    save_checkpoint(model, path)
    back = load_checkpoint(path)
    assert np.array_equal(back.params.flatten(), model.params.flatten())
    assert back.feature_schema == model.feature_schema
    assert back.norm.channel_stats == model.norm.channel_stats
    assert back.norm.discharge_stats == model.norm.discharge_stats
    assert back.spec.split == model.spec.split
    assert back.validation_nse == model.validation_nse
    assert back.n_train_windows == 42


def test_save_is_byte_deterministic(tmp_path):
    model = tiny_daily_model()
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_checkpoint(model, a)
    save_checkpoint(model, b)
    assert a.read_bytes() == b.read_bytes()


def test_schema_mismatch_rejected(tmp_path):
    model = tiny_daily_model()
    path = tmp_path / "ckpt.json"
    save_checkpoint(model, path)
    doc = json.loads(path.read_text())
    doc["feature_schema"] = ["precip_mm"]  # params expect 2 features
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="schema"):
        load_checkpoint(path)


def test_unknown_version_rejected(tmp_path):
    model = tiny_daily_model()
    path = tmp_path / "ckpt.json"
    save_checkpoint(model, path)
    doc = json.loads(path.read_text())
    doc["schema_version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="schema_version"):
        load_checkpoint(path)


def test_hybrid_round_trip(tmp_path):
    stats = MonthlyNormStats(station_id="s9", precip=(10.0, 3.0), natural=(2.0, 0.7),
                             discharge=(2.5, 0.9))
    model = HybridModel(params=init_params(8, 2, 5), stats=stats, station_id="s9",
                        best_epoch=7, validation_nse=-0.25)
    path = tmp_path / "h.json"
    save_checkpoint(model, path)
    back = load_checkpoint(path)
    assert isinstance(back, HybridModel)
    assert np.array_equal(back.params.flatten(), model.params.flatten())
    assert back.stats == stats
    assert back.station_id == "s9"


def test_seasonal_round_trip(tmp_path):
    spec = SeasonalSpec(encoder_length=6, horizon=2, hidden_size=5)
    params = init_encoder_decoder(spec, 3)
    stats = MonthlyNormStats(station_id="s2", precip=(1.0, 1.0), natural=(0.0, 1.0),
                             discharge=(4.0, 2.0))
    model = SeasonalModel(params=params, spec=spec, stats=stats, station_id="s2",
                          best_epoch=2, validation_nse=0.5)
    path = tmp_path / "s.json"
    save_checkpoint(model, path)
    back = load_checkpoint(path)
    assert isinstance(back, SeasonalModel)
    assert np.array_equal(back.params.encoder.flatten(), params.encoder.flatten())
    assert np.array_equal(back.params.decoder.flatten(), params.decoder.flatten())
    assert back.spec == spec
