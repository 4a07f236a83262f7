"""Episodic benchmark harness: sample tasks, run a method, aggregate accuracy.

Every episode is a deterministic function of (bank, run seed, episode
index): episode i draws from its own generator seeded with the i-th value
of the run seed's splitmix64 stream.  Episodes are therefore independent
and may be evaluated concurrently; results are merged in episode order, so
reports are identical regardless of the thread count.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .baselines import fit_prototypes, predict_cosine, predict_euclidean
from .data_io import EmbeddingBank
from .decomposition import (
    EpisodeMatrices,
    SolverConfig,
    SolverError,
    predict_labels,
    solve,
)
from .rng import SplitMix64, stream_seed

METHODS = ("subspace", "proto_euclidean", "proto_cosine")

_CI95_FACTOR = 1.96


@dataclass(frozen=True)
class EpisodeSpec:
    """Shape of one benchmark run: task layout, episode count, and seed."""

    n_way: int
    k_shot: int
    n_query_per_class: int
    n_episodes: int
    seed: int

    def __post_init__(self) -> None:
        for name in ("n_way", "k_shot", "n_query_per_class", "n_episodes"):
            value = getattr(self, name)
            if value < 1:
                raise ValueError(f"{name} must be positive, got {value}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(
                f"seed must be an unsigned 64-bit integer, got {self.seed}"
            )


@dataclass
class BenchmarkReport:
    """Aggregated accuracies for one (bank, spec, method, config) run.

    ``per_episode_accuracy`` lists successful episodes in episode order;
    failed episodes are recorded in ``failures`` and excluded from the
    mean, with ``warning`` set so silent degradation is impossible.
    """

    method_name: str
    spec: EpisodeSpec
    config_digest: str
    per_episode_accuracy: list[float]
    mean_accuracy: float
    ci95_halfwidth: float
    n_failures: int = 0
    warning: str | None = None
    failures: list[dict] = field(default_factory=list)

    def summary_line(self) -> str:
        """Human one-liner, accuracy in percent: 'method: mean% ± halfwidth%'."""
        return (
            f"{self.method_name}: {100.0 * self.mean_accuracy:.2f}% "
            f"± {100.0 * self.ci95_halfwidth:.2f}%"
        )

    def to_dict(self) -> dict:
        """JSON-ready representation (schema in docs/formats.md)."""
        return {
            "method": self.method_name,
            "spec": asdict(self.spec),
            "config_digest": self.config_digest,
            "per_episode_accuracy": self.per_episode_accuracy,
            "mean_accuracy": self.mean_accuracy,
            "ci95_halfwidth": self.ci95_halfwidth,
            "n_failures": self.n_failures,
            "warning": self.warning,
            "failures": self.failures,
            "summary": self.summary_line(),
        }


def confidence_interval(accuracies) -> tuple[float, float]:
    """Mean and 95% halfwidth (1.96 * sample std / sqrt(n)) of a sequence.

    The sample standard deviation uses the n-1 denominator; a length-1
    sequence gets halfwidth 0 by convention.
    """
    values = [float(a) for a in accuracies]
    if not values:
        raise ValueError("cannot aggregate an empty accuracy sequence")
    n = len(values)
    if n == 1 or min(values) == max(values):
        # constant sequences get an exact zero halfwidth instead of
        # accumulated rounding noise
        return values[0], 0.0
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, _CI95_FACTOR * math.sqrt(var) / math.sqrt(n)


def check_feasible(bank: EmbeddingBank, spec: EpisodeSpec) -> None:
    """Reject specs the bank cannot support, naming the violated bound."""
    if spec.n_way > bank.n_classes:
        raise ValueError(
            f"n_way={spec.n_way} exceeds the {bank.n_classes} classes in the bank"
        )
    name, size = bank.min_class_size()
    needed = spec.k_shot + spec.n_query_per_class
    if needed > size:
        raise ValueError(
            f"class '{name}' has {size} vectors, fewer than "
            f"k_shot + n_query_per_class = {needed}"
        )


def sample_episode(
    bank: EmbeddingBank, spec: EpisodeSpec, episode_index: int
) -> tuple[EpisodeMatrices, np.ndarray]:
    """Draw one task; returns the episode and its hidden query labels.

    Classes, then support and query vectors within each class, are sampled
    without replacement.  The episode is a pure function of
    (bank, spec.seed, episode_index).  Query ground truth comes back as a
    separate array and never enters the EpisodeMatrices.
    """
    if episode_index < 0:
        raise ValueError(f"episode_index must be nonnegative, got {episode_index}")
    check_feasible(bank, spec)
    rng = SplitMix64(stream_seed(spec.seed, episode_index))
    class_ids = rng.shuffle_prefix(bank.n_classes, spec.n_way)

    k, q = spec.k_shot, spec.n_query_per_class
    support = np.empty((bank.dim, spec.n_way * k))
    query = np.empty((bank.dim, spec.n_way * q))
    for slot, class_id in enumerate(class_ids):
        vecs = bank.vectors[class_id]
        picks = rng.shuffle_prefix(vecs.shape[0], k + q)
        support[:, slot * k : (slot + 1) * k] = vecs[picks[:k]].T
        query[:, slot * q : (slot + 1) * q] = vecs[picks[k:]].T

    episode = EpisodeMatrices(
        embeddings=np.concatenate([support, query], axis=1),
        n_classes=spec.n_way,
        n_support=spec.n_way * k,
        n_query=spec.n_way * q,
        support_labels=np.repeat(np.arange(spec.n_way), k),
    )
    query_labels = np.repeat(np.arange(spec.n_way), q)
    return episode, query_labels


def run_episode(
    bank: EmbeddingBank,
    spec: EpisodeSpec,
    method: str,
    cfg: SolverConfig,
    episode_index: int,
) -> float:
    """Accuracy of one method on one sampled episode."""
    episode, truth = sample_episode(bank, spec, episode_index)
    predictions = _predict(episode, method, cfg)
    return float(np.mean(predictions == truth))


def _predict(episode: EpisodeMatrices, method: str, cfg: SolverConfig) -> np.ndarray:
    if method == "subspace":
        return predict_labels(solve(episode, cfg), episode)
    prototypes = fit_prototypes(episode)
    if method == "proto_euclidean":
        return predict_euclidean(prototypes, episode.query_embeddings)
    if method == "proto_cosine":
        return predict_cosine(prototypes, episode.query_embeddings)
    raise ValueError(f"unknown method '{method}' (expected one of {METHODS})")


def config_digest(cfg: SolverConfig) -> str:
    """Stable hex digest of a solver configuration."""
    payload = json.dumps(asdict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


_WORKER_TASK: tuple | None = None


def _worker_init(bank, spec, method, cfg) -> None:
    global _WORKER_TASK
    _WORKER_TASK = (bank, spec, method, cfg)


def _worker_episode(index: int):
    bank, spec, method, cfg = _WORKER_TASK
    try:
        return run_episode(bank, spec, method, cfg, index), None
    except SolverError as exc:
        return None, {"episode_index": index, "error": str(exc)}


def run_benchmark(
    bank: EmbeddingBank,
    spec: EpisodeSpec,
    method: str,
    cfg: SolverConfig | None = None,
    threads: int = 1,
) -> BenchmarkReport:
    """Run ``method`` over every episode of ``spec`` and aggregate.

    A SolverError in an episode is recorded (index and message) and the
    episode is excluded from the mean; any other exception propagates.
    ``threads`` > 1 fans episodes out to that many worker processes
    (episodes are pure functions of their index, so the merged report is
    identical to the single-worker one).
    """
    if method not in METHODS:
        raise ValueError(f"unknown method '{method}' (expected one of {METHODS})")
    if cfg is None:
        cfg = SolverConfig()
    if threads < 1:
        raise ValueError(f"threads must be positive, got {threads}")
    check_feasible(bank, spec)

    def one(index: int):
        try:
            return run_episode(bank, spec, method, cfg, index), None
        except SolverError as exc:
            return None, {"episode_index": index, "error": str(exc)}

    indices = range(spec.n_episodes)
    if threads == 1:
        outcomes = [one(i) for i in indices]
    else:
        chunk = max(1, spec.n_episodes // (threads * 8))
        with ProcessPoolExecutor(
            max_workers=threads,
            initializer=_worker_init,
            initargs=(bank, spec, method, cfg),
        ) as pool:
            outcomes = list(pool.map(_worker_episode, indices, chunksize=chunk))

    accuracies = [acc for acc, _ in outcomes if acc is not None]
    failures = [err for _, err in outcomes if err is not None]
    if not accuracies:
        raise SolverError(
            f"all {spec.n_episodes} episodes failed; first error: "
            f"{failures[0]['error']}"
        )
    mean, halfwidth = confidence_interval(accuracies)
    warning = (
        f"{len(failures)} of {spec.n_episodes} episodes failed; "
        "mean computed over the remainder"
        if failures
        else None
    )
    return BenchmarkReport(
        method_name=method,
        spec=spec,
        config_digest=config_digest(cfg),
        per_episode_accuracy=accuracies,
        mean_accuracy=mean,
        ci95_halfwidth=halfwidth,
        n_failures=len(failures),
        warning=warning,
        failures=failures,
    )
