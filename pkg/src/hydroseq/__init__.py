"""hydroseq: sequence-model streamflow forecasting with a verifiable synthetic
regulated-basin oracle.

The pieces: daily gauge/driver ingest with quality masking and gap handling
(:mod:`hydroseq.timeseries`, :mod:`hydroseq.ingest`), a from-scratch LSTM with
exact BPTT gradients (:mod:`hydroseq.lstm`), feature-regime experiments with
dam-level augmentation (:mod:`hydroseq.experiments`), monthly hybrid
correction and an encoder-decoder seasonal forecaster
(:mod:`hydroseq.seasonal`), NSE evaluation reports (:mod:`hydroseq.metrics`),
and the synthetic basin generator everything is verified against
(:mod:`hydroseq.synthbasin`).
"""

from .dates import DateIndex, DateRange, MonthIndex, SplitSpec
from .experiments import (ExperimentSpec, FeatureSet, TrainedModel, assemble_features,
                          evaluate_model, predict_series, train_model)
from .lstm import (LstmParams, LstmState, TrainConfig, adam_step, backward, cell_step,
                   forward_batch, forward_seq, grad_check, init_params, mse_loss,
                   predict_batch)
from .metrics import EvalReport, UndefinedNSE, cdf_points, nse, summarize
from .seasonal import (EncoderDecoderParams, HybridModel, MonthlySample, SeasonalModel,
                       SeasonalSpec, build_monthly_samples, build_seasonal_samples,
                       fit_monthly_normalizer, seasonal_forecast, train_hybrid,
                       train_seasonal)
from .synthbasin import (BasinSpec, DamSpec, apply_dam, gen_forcing, linear_reservoir,
                         make_dataset, simulate_basin)
from .timeseries import (Dataset, ForcingSeries, GaugeSeries, NormStats, StaticAttributes,
                         WindowPolicy, WindowSample, build_dataset, fit_normalizer,
                         make_windows, monthly_aggregate, transform)

__version__ = "0.1.0"
