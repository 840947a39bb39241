"""Audio-visual correlation models, log-mel features and sound recommendation."""

from ._core import (
    DataError,
    EmbeddingStore,
    Error,
    Model,
    NumericError,
    class_tone_hz,
    generate_synthetic,
    info_nce,
    load_frame,
    log_mel,
    nt_xent,
    run_cli,
)

__all__ = [
    "DataError",
    "EmbeddingStore",
    "Error",
    "Model",
    "NumericError",
    "class_tone_hz",
    "generate_synthetic",
    "info_nce",
    "load_frame",
    "log_mel",
    "nt_xent",
    "run_cli",
]

__version__ = "0.1.0"
