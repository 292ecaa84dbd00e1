"""Clustering of time series with a shared unitary RNN encoder, several
decoders and a variational-Bayes mixture over their reconstruction errors."""

from .autoencoder import (
    DecoderParams,
    EncoderParams,
    ModelParams,
    TimeSeries,
    decode,
    encode,
    error_matrix,
    init_model,
    loss_gradients,
    reconstruction_error,
    weighted_loss,
)
from .errors import (
    ConfigurationError,
    DataError,
    DivergenceError,
    InvalidResponsibilitiesError,
    MDRAError,
    ShapeError,
)
from .training import OptimizerConfig, TrainConfig, TrainedModel, extract, rnn_substep, train
from .unitary import UnitaryParams, apply_unitary, build_unitary_params, unitary_backward
from .vb import ErrorMatrix, Hyperparams, VBState, run_vb

__version__ = "0.1.0"
