"""Joint nonnegative factorization of support and query embeddings.

An episode's embeddings form the columns of a (dim x n_total) matrix,
support columns first.  The solver approximates that matrix as
``basis @ coefficients`` with both factors nonnegative: the basis holds one
column per class (the class's dominant primitive) and each coefficient
column describes how strongly a sample loads on every primitive.  Support
coefficient columns start one-hot from the known labels; minimizing the
reconstruction error propagates those labels into the query columns, which
are then read out by per-column argmax.

Optimization is alternating projected gradient descent: each half-step
takes a gradient step on one factor, clips it at zero, and backtracks the
step size until the candidate satisfies the Armijo sufficient-decrease
inequality along the projection arc.  Acceptance is only possible when the
objective does not increase, so the recorded trace is non-increasing by
construction.  The objective used internally is half the squared Frobenius
reconstruction error (which keeps the gradients free of stray factors of
two); the reported trace is the unscaled squared error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix, softmax_cols

_MAX_BACKTRACKS = 60


class SolverError(RuntimeError):
    """Raised when the descent loop encounters a non-finite objective."""


@dataclass(frozen=True)
class SolverConfig:
    """Optimizer knobs for the factorization solver.

    max_iters:
        Full (basis, coefficients) sweeps.  Zero skips descent entirely and
        reads coefficients by direct projection (basis transposed times the
        embeddings), which reduces the method to a nearest-prototype
        classifier; see docs in :func:`solve`.
    rel_tol:
        Stop once the relative objective decrease over one sweep falls
        below this.
    armijo_shrink / armijo_c / init_step:
        Backtracking line-search parameters; the trial step resets to
        ``init_step`` at every half-step.
    freeze_support_columns:
        Keep support coefficient columns clamped to their one-hot values
        instead of letting the descent move them.
    basis_jitter_eps:
        Constant added to every basis entry at initialization so sparse
        support embeddings do not start with exactly-zero rows.
    seed:
        Recorded in run digests for provenance; the solver itself is
        deterministic and draws no random numbers.
    """

    max_iters: int = 500
    rel_tol: float = 1e-6
    armijo_shrink: float = 0.5
    armijo_c: float = 1e-4
    init_step: float = 1.0
    freeze_support_columns: bool = False
    basis_jitter_eps: float = 1e-6
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be >= 0, got {self.max_iters}")
        if self.rel_tol <= 0.0:
            raise ValueError(f"rel_tol must be positive, got {self.rel_tol}")
        if not 0.0 < self.armijo_shrink < 1.0:
            raise ValueError(
                f"armijo_shrink must lie in (0, 1), got {self.armijo_shrink}"
            )
        if not 0.0 < self.armijo_c < 1.0:
            raise ValueError(f"armijo_c must lie in (0, 1), got {self.armijo_c}")
        if self.init_step <= 0.0:
            raise ValueError(f"init_step must be positive, got {self.init_step}")
        if self.basis_jitter_eps < 0.0:
            raise ValueError(
                f"basis_jitter_eps must be nonnegative, got {self.basis_jitter_eps}"
            )
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")


@dataclass
class EpisodeMatrices:
    """One sampled task: embedding columns plus the support labeling.

    ``embeddings`` is dim x (n_support + n_query), all entries >= 0, with
    the support columns first.  Support columns are grouped by class: the
    columns of one class are consecutive and every class contributes the
    same number of them.  ``support_labels[i]`` is the class index of
    support column i.  Query ground truth is deliberately not stored here;
    the harness keeps it aside for scoring only.
    """

    embeddings: np.ndarray
    n_classes: int
    n_support: int
    n_query: int
    support_labels: np.ndarray

    def __post_init__(self) -> None:
        self.embeddings = as_matrix(self.embeddings, "embeddings")
        if (self.embeddings < 0.0).any():
            raise ValueError("embeddings must be nonnegative (ReLU-output contract)")
        if self.n_classes < 1:
            raise ValueError(f"n_classes must be positive, got {self.n_classes}")
        if self.n_query < 0:
            raise ValueError(f"n_query must be nonnegative, got {self.n_query}")
        if self.embeddings.shape[1] != self.n_support + self.n_query:
            raise ValueError(
                f"embeddings have {self.embeddings.shape[1]} columns, expected "
                f"n_support + n_query = {self.n_support + self.n_query}"
            )
        labels = np.asarray(self.support_labels, dtype=np.int64)
        if labels.shape != (self.n_support,):
            raise ValueError(
                f"support_labels must have shape ({self.n_support},), got {labels.shape}"
            )
        if self.n_support % self.n_classes != 0:
            raise ValueError(
                f"n_support={self.n_support} is not a multiple of "
                f"n_classes={self.n_classes}"
            )
        k_shot = self.n_support // self.n_classes
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise ValueError(
                f"support labels must lie in [0, {self.n_classes}), "
                f"got range [{labels.min()}, {labels.max()}]"
            )
        for c in range(self.n_classes):
            positions = np.flatnonzero(labels == c)
            if positions.size != k_shot:
                raise ValueError(
                    f"class {c} has {positions.size} support columns, expected {k_shot}"
                )
            if positions.size and positions[-1] - positions[0] != k_shot - 1:
                raise ValueError(f"support columns of class {c} are not consecutive")
        self.support_labels = labels

    @property
    def dim(self) -> int:
        return self.embeddings.shape[0]

    @property
    def n_total(self) -> int:
        return self.embeddings.shape[1]

    @property
    def k_shot(self) -> int:
        return self.n_support // self.n_classes

    @property
    def support_embeddings(self) -> np.ndarray:
        return self.embeddings[:, : self.n_support]

    @property
    def query_embeddings(self) -> np.ndarray:
        return self.embeddings[:, self.n_support :]


@dataclass
class Decomposition:
    """Result of :func:`solve`.

    ``objective_trace`` holds the squared reconstruction error: entry 0 at
    initialization and one entry after each accepted sweep.  It is
    non-increasing.  ``basis`` and ``coefficients`` are entrywise >= 0.
    """

    basis: np.ndarray
    coefficients: np.ndarray
    objective_trace: list[float]
    iterations_run: int
    converged: bool

    def class_probabilities(self) -> np.ndarray:
        """Coefficients as per-column distributions (column softmax).

        Argmax is unchanged by the softmax, so predictions read the raw
        coefficients; this view exists for callers that want probabilities.
        """
        return softmax_cols(self.coefficients)


def init_basis(ep: EpisodeMatrices, cfg: SolverConfig) -> np.ndarray:
    """Per-class mean of support embeddings plus the configured jitter.

    With one shot per class each basis column is that class's support
    embedding itself (plus jitter).
    """
    basis = np.empty((ep.dim, ep.n_classes))
    for c in range(ep.n_classes):
        cols = ep.support_embeddings[:, ep.support_labels == c]
        if cols.shape[1] == 0:
            raise ValueError(f"class {c} has no support columns")
        basis[:, c] = cols.mean(axis=1)
    return basis + cfg.basis_jitter_eps


def init_coefficients(ep: EpisodeMatrices, cfg: SolverConfig) -> np.ndarray:
    """One-hot support columns from the known labels, uniform query columns."""
    del cfg  # no knobs affect initialization today; kept for signature parity
    coeffs = np.zeros((ep.n_classes, ep.n_total))
    coeffs[ep.support_labels, np.arange(ep.n_support)] = 1.0
    coeffs[:, ep.n_support :] = 1.0 / ep.n_classes
    return coeffs


def _check_factor_dims(embeddings, basis, coefficients) -> tuple[np.ndarray, ...]:
    e = as_matrix(embeddings, "embeddings")
    b = as_matrix(basis, "basis")
    c = as_matrix(coefficients, "coefficients")
    if b.shape[0] != e.shape[0] or c.shape[1] != e.shape[1] or b.shape[1] != c.shape[0]:
        raise ValueError(
            f"inconsistent shapes: embeddings {e.shape}, basis {b.shape}, "
            f"coefficients {c.shape}"
        )
    return e, b, c


def grad_basis(embeddings, basis, coefficients) -> np.ndarray:
    """Gradient of 0.5 * squared reconstruction error in the basis.

    Equals (reconstruction - embeddings) @ coefficients.T.
    """
    e, b, c = _check_factor_dims(embeddings, basis, coefficients)
    return (b @ c - e) @ c.T


def grad_coefficients(embeddings, basis, coefficients) -> np.ndarray:
    """Gradient of 0.5 * squared reconstruction error in the coefficients.

    Equals basis.T @ (reconstruction - embeddings).
    """
    e, b, c = _check_factor_dims(embeddings, basis, coefficients)
    return b.T @ (b @ c - e)


def _half_objective(emb: np.ndarray, basis: np.ndarray, coeffs: np.ndarray) -> float:
    resid = basis @ coeffs
    resid -= emb
    flat = resid.ravel()
    return 0.5 * float(np.dot(flat, flat))


def _armijo_half_step(x, grad, f_old, evaluate, cfg):
    """One projected-gradient half-step with backtracking.

    Returns (new_x, new_f).  A candidate is accepted only if it satisfies
    f_new <= f_old + c * min(<grad, new_x - x>, 0), which cannot exceed
    f_old, so the objective never increases.  If no step is acceptable the
    iterate is left unchanged.
    """
    step = cfg.init_step
    grad_flat = grad.ravel()
    for _ in range(_MAX_BACKTRACKS):
        cand = np.maximum(x - step * grad, 0.0)
        delta = cand - x
        if not delta.any():
            # every coordinate is pinned at the constraint; stationary block
            return x, f_old
        descent = float(np.dot(grad_flat, delta.ravel()))
        f_new = evaluate(cand)
        if f_new <= f_old + cfg.armijo_c * min(descent, 0.0):
            return cand, f_new
        step *= cfg.armijo_shrink
    return x, f_old


def solve(ep: EpisodeMatrices, cfg: SolverConfig | None = None) -> Decomposition:
    """Alternating projected gradient descent on the episode's embeddings.

    Each sweep takes one backtracked projected-gradient half-step on the
    basis and one on the coefficients (query columns only when
    ``freeze_support_columns`` is set).  The loop stops once the relative
    objective decrease of a sweep drops below ``rel_tol`` or after
    ``max_iters`` sweeps.

    ``max_iters == 0`` is the nearest-prototype special case: no descent
    runs and the coefficients are the direct projection of the embeddings
    onto the initialized basis, so with unit-norm columns the argmax readout
    coincides with a cosine nearest-prototype classifier.

    Raises SolverError (with the sweep index) if the objective is ever
    non-finite, which indicates badly scaled inputs.
    """
    if cfg is None:
        cfg = SolverConfig()
    emb = ep.embeddings
    basis = init_basis(ep, cfg)

    if cfg.max_iters == 0:
        coeffs = basis.T @ emb
        f = _half_objective(emb, basis, coeffs)
        if not math.isfinite(f):
            raise SolverError(
                "objective is non-finite at initialization (sweep 0); "
                "rescale the input embeddings"
            )
        return Decomposition(basis, coeffs, [2.0 * f], 0, False)

    coeffs = init_coefficients(ep, cfg)
    f = _half_objective(emb, basis, coeffs)
    if not math.isfinite(f):
        raise SolverError(
            "objective is non-finite at initialization (sweep 0); "
            "rescale the input embeddings"
        )
    trace = [2.0 * f]
    converged = False
    sweeps = 0
    n_sup = ep.n_support

    for sweep in range(1, cfg.max_iters + 1):
        f_start = f

        g_basis = (basis @ coeffs - emb) @ coeffs.T
        basis, f = _armijo_half_step(
            basis, g_basis, f, lambda cand: _half_objective(emb, cand, coeffs), cfg
        )

        g_coeffs = basis.T @ (basis @ coeffs - emb)
        if cfg.freeze_support_columns:
            # restrict the update to query columns; support columns stay
            # one-hot, which keeps the accepted objective consistent with
            # what the caller observes
            query = coeffs[:, n_sup:]

            def eval_query(cand: np.ndarray) -> float:
                full = coeffs.copy()
                full[:, n_sup:] = cand
                return _half_objective(emb, basis, full)

            new_query, f = _armijo_half_step(
                query, g_coeffs[:, n_sup:], f, eval_query, cfg
            )
            if new_query is not query:
                coeffs = coeffs.copy()
                coeffs[:, n_sup:] = new_query
        else:
            coeffs, f = _armijo_half_step(
                coeffs, g_coeffs, f, lambda cand: _half_objective(emb, basis, cand), cfg
            )

        if not math.isfinite(f):
            raise SolverError(f"objective became non-finite at sweep {sweep}")
        trace.append(2.0 * f)
        sweeps = sweep
        if f_start <= 0.0 or (f_start - f) / f_start < cfg.rel_tol:
            converged = True
            break

    return Decomposition(basis, coeffs, trace, sweeps, converged)


def predict_labels(dec: Decomposition, ep: EpisodeMatrices) -> np.ndarray:
    """Predicted class per query column: row index of that column's maximum.

    Ties resolve to the lowest class index.
    """
    if dec.coefficients.shape != (ep.n_classes, ep.n_total):
        raise ValueError(
            f"decomposition has coefficients {dec.coefficients.shape}, episode "
            f"expects ({ep.n_classes}, {ep.n_total})"
        )
    return np.argmax(dec.coefficients[:, ep.n_support :], axis=0).astype(np.int64)
