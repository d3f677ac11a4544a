"""Model checkpoints as single JSON documents.

Floats are emitted through ``repr`` (the json module's default), which
round-trips IEEE-754 doubles exactly, so save/load is lossless and two saves
of the same model are byte-identical. Parameter arrays are flattened row-major
in the documented order Wx, Wh, b, w_out, b_out.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .experiments import ExperimentSpec, TrainedModel
from .lstm import LstmParams
from .seasonal import (EncoderDecoderParams, HybridModel, MonthlyNormStats,
                       SeasonalModel, SeasonalSpec)
from .timeseries import NormStats

SCHEMA_VERSION = 1


def _params_json(p: LstmParams) -> dict:
    return {
        "hidden_size": p.H,
        "feature_count": p.F,
        "wx": p.Wx.ravel().tolist(),
        "wh": p.Wh.ravel().tolist(),
        "b": p.b.tolist(),
        "w_out": p.w_out.tolist(),
        "b_out": p.b_out,
    }


def _params_from_json(obj: dict) -> LstmParams:
    H, F = int(obj["hidden_size"]), int(obj["feature_count"])
    return LstmParams(
        Wx=np.array(obj["wx"], dtype=np.float64).reshape(4 * H, F),
        Wh=np.array(obj["wh"], dtype=np.float64).reshape(4 * H, H),
        b=np.array(obj["b"], dtype=np.float64),
        w_out=np.array(obj["w_out"], dtype=np.float64),
        b_out=float(obj["b_out"]),
    )


def _dump(doc: dict, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_checkpoint(model, path) -> None:
    """Serialize a daily, hybrid, or seasonal model."""
    if isinstance(model, TrainedModel):
        if model.params.F != len(model.feature_schema):
            raise ValueError("feature schema length does not match parameter feature count")
        doc = {
            "schema_version": SCHEMA_VERSION,
            "kind": "daily",
            "feature_schema": list(model.feature_schema),
            "norm_stats": model.norm.to_json(),
            "params": _params_json(model.params),
            "experiment": model.spec.to_json(),
            "best_epoch": model.best_epoch,
            "validation_nse": model.validation_nse,
            "n_train_windows": model.n_train_windows,
            "seed": model.spec.train_config.seed,
        }
    elif isinstance(model, HybridModel):
        doc = {
            "schema_version": SCHEMA_VERSION,
            "kind": "hybrid",
            "station_id": model.station_id,
            "monthly_stats": model.stats.to_json(),
            "params": _params_json(model.params),
            "best_epoch": model.best_epoch,
            "validation_nse": model.validation_nse,
        }
    elif isinstance(model, SeasonalModel):
        doc = {
            "schema_version": SCHEMA_VERSION,
            "kind": "seasonal",
            "station_id": model.station_id,
            "monthly_stats": model.stats.to_json(),
            "seasonal_spec": model.spec.to_json(),
            "encoder": _params_json(model.params.encoder),
            "decoder": _params_json(model.params.decoder),
            "best_epoch": model.best_epoch,
            "validation_nse": model.validation_nse,
        }
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    _dump(doc, path)


def load_checkpoint(path):
    """Load whichever model kind the file holds; validates schema consistency."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported checkpoint schema_version {version}")
    kind = doc.get("kind")

    if kind == "daily":
        params = _params_from_json(doc["params"])
        schema = list(doc["feature_schema"])
        if params.F != len(schema):
            raise ValueError(f"checkpoint feature schema has {len(schema)} entries "
                             f"but parameters expect {params.F}")
        return TrainedModel(
            params=params,
            norm=NormStats.from_json(doc["norm_stats"]),
            feature_schema=schema,
            spec=ExperimentSpec.from_json(doc["experiment"]),
            best_epoch=int(doc["best_epoch"]),
            validation_nse=float(doc["validation_nse"]),
            n_train_windows=int(doc.get("n_train_windows", 0)),
        )
    if kind == "hybrid":
        return HybridModel(
            params=_params_from_json(doc["params"]),
            stats=MonthlyNormStats.from_json(doc["monthly_stats"]),
            station_id=doc["station_id"],
            best_epoch=int(doc["best_epoch"]),
            validation_nse=float(doc["validation_nse"]),
        )
    if kind == "seasonal":
        return SeasonalModel(
            params=EncoderDecoderParams(encoder=_params_from_json(doc["encoder"]),
                                        decoder=_params_from_json(doc["decoder"])),
            spec=SeasonalSpec.from_json(doc["seasonal_spec"]),
            stats=MonthlyNormStats.from_json(doc["monthly_stats"]),
            station_id=doc["station_id"],
            best_epoch=int(doc["best_epoch"]),
            validation_nse=float(doc["validation_nse"]),
        )
    raise ValueError(f"unknown checkpoint kind {kind!r}")
