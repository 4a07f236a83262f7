"""Transductive one-shot classification by nonnegative subspace decomposition.

Support and query embeddings are jointly factorized into a per-class basis
and a nonnegative coefficient matrix; query labels are read off the
coefficient columns.  The package also ships the classical prototype
baselines, an episodic benchmark harness with deterministic sampling, bank
file formats, and a CLI (``subspace-shot``).
"""

__version__ = "0.1.0"

from .baselines import PrototypeSet, fit_prototypes, predict_cosine, predict_euclidean
from .data_io import (
    BankDimensionError,
    BankError,
    BankMagicError,
    BankNegativeEntryError,
    BankTruncatedError,
    EmbeddingBank,
    gen_synthetic,
    l2_normalize_columns,
    load_bank,
    save_bank,
)
from .decomposition import (
    Decomposition,
    EpisodeMatrices,
    SolverConfig,
    SolverError,
    grad_basis,
    grad_coefficients,
    init_basis,
    init_coefficients,
    predict_labels,
    solve,
)
from .harness import (
    BenchmarkReport,
    EpisodeSpec,
    confidence_interval,
    run_benchmark,
    sample_episode,
)
from .linalg import frobenius_norm_sq, matmul, project_nonneg, softmax_cols

__all__ = [
    "__version__",
    "BankDimensionError",
    "BankError",
    "BankMagicError",
    "BankNegativeEntryError",
    "BankTruncatedError",
    "BenchmarkReport",
    "Decomposition",
    "EmbeddingBank",
    "EpisodeMatrices",
    "EpisodeSpec",
    "PrototypeSet",
    "SolverConfig",
    "SolverError",
    "confidence_interval",
    "fit_prototypes",
    "frobenius_norm_sq",
    "gen_synthetic",
    "grad_basis",
    "grad_coefficients",
    "init_basis",
    "init_coefficients",
    "l2_normalize_columns",
    "load_bank",
    "matmul",
    "predict_cosine",
    "predict_euclidean",
    "predict_labels",
    "project_nonneg",
    "run_benchmark",
    "sample_episode",
    "save_bank",
    "softmax_cols",
    "solve",
]
