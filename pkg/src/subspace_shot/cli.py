"""Command-line entry point.

Three subcommands tie the library into user-runnable workflows:

* ``evaluate``  - episodic benchmark of one method over a bank file.
* ``decompose`` - solve a single, explicitly selected episode and dump the
  basis, coefficients, and objective trace.
* ``gen-synth`` - write a synthetic bank for desk-scale verification.

Every successful run emits a run manifest (tool version, resolved flags,
seed, input digests) embedded in the output document; re-running the
manifest's argv reproduces the output byte for byte.  Report JSON goes to
stdout or ``--out``; the one-line human summary goes to stderr so stdout
stays machine-readable.  Exit codes: 0 success, 1 runtime failure (with an
error JSON on stdout), 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data_io import (
    PROTO_STYLES,
    BankError,
    gen_synthetic,
    l2_normalize_columns,
    load_bank,
    save_bank,
)
from .decomposition import (
    EpisodeMatrices,
    SolverConfig,
    SolverError,
    predict_labels,
    solve,
)
from .harness import EpisodeSpec, confidence_interval, run_benchmark

_METHOD_BY_FLAG = {
    "subspace": "subspace",
    "proto-euclid": "proto_euclidean",
    "proto-cosine": "proto_cosine",
}

_ENV_THREADS = "SUBSPACE_SHOT_THREADS"


def _default_threads() -> int:
    raw = os.environ.get(_ENV_THREADS, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return f"sha256:{digest.hexdigest()}"


def build_manifest(subcommand: str, args: argparse.Namespace, input_digests: dict) -> dict:
    """Everything needed to reproduce the run exactly.

    ``--out`` and ``--threads`` are omitted: neither influences report
    content (thread-count invariance is part of the harness contract), and
    keeping them out makes reports byte-comparable across locations and
    machines.
    """
    flags = {
        key: value
        for key, value in sorted(vars(args).items())
        if key not in ("func", "subcommand", "out", "threads")
    }
    return {
        "tool": "subspace-shot",
        "version": __version__,
        "subcommand": subcommand,
        "flags": flags,
        "seed": getattr(args, "seed", None),
        "input_digests": input_digests,
    }


def manifest_to_argv(manifest: dict) -> list[str]:
    """Reconstruct the argv of the run a manifest describes."""
    argv = [manifest["subcommand"]]
    for key, value in manifest["flags"].items():
        if value is None:
            continue
        flag = "--" + key.replace("_", "-")
        if isinstance(value, bool):
            if value:
                argv.append(flag)
        else:
            argv.extend([flag, str(value)])
    return argv


def _dump_json(document: dict) -> str:
    return json.dumps(document, sort_keys=True, indent=2) + "\n"


def _emit(document: dict, out: str | None) -> None:
    text = _dump_json(document)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load_bank_for(args: argparse.Namespace):
    bank = load_bank(args.bank, allow_negative=args.allow_negative)
    if args.l2_normalize_columns:
        bank = l2_normalize_columns(bank)
    return bank


def _solver_config(args: argparse.Namespace) -> SolverConfig:
    return SolverConfig(
        max_iters=args.max_iters,
        rel_tol=args.rel_tol,
        freeze_support_columns=args.freeze_support,
        seed=args.seed,
    )


def cmd_evaluate(args: argparse.Namespace) -> int:
    bank = _load_bank_for(args)
    cfg = _solver_config(args)
    method = _METHOD_BY_FLAG[args.method]
    manifest = build_manifest("evaluate", args, {"bank": _sha256_file(args.bank)})

    runs = []
    for repeat in range(args.repeats):
        spec = EpisodeSpec(
            n_way=args.n_way,
            k_shot=args.k_shot,
            n_query_per_class=args.n_query,
            n_episodes=args.episodes,
            seed=(args.seed + repeat) % 2**64,
        )
        runs.append(run_benchmark(bank, spec, method, cfg, threads=args.threads))

    run_means = [report.mean_accuracy for report in runs]
    agg_mean, agg_half = confidence_interval(run_means)
    summary = (
        runs[0].summary_line()
        if len(runs) == 1
        else f"{method}: {100.0 * agg_mean:.2f}% ± {100.0 * agg_half:.2f}%"
    )
    document = {
        "manifest": manifest,
        "runs": [report.to_dict() for report in runs],
        "aggregate": {
            "n_runs": len(runs),
            "mean_of_means": agg_mean,
            "ci95_halfwidth_over_runs": agg_half,
            "summary": summary,
        },
    }
    _emit(document, args.out)
    print(summary, file=sys.stderr)
    return 0


def _parse_index_groups(text: str, n_groups: int, flag: str) -> list[list[int]]:
    groups = text.split(";")
    if len(groups) != n_groups:
        raise ValueError(
            f"{flag} has {len(groups)} ';'-separated groups, expected {n_groups} "
            "(one per selected class)"
        )
    try:
        return [[int(tok) for tok in group.split(",") if tok != ""] for group in groups]
    except ValueError:
        raise ValueError(f"{flag} must contain comma-separated integers") from None


def build_manual_episode(bank, class_names, support_groups, query_groups=None):
    """Assemble an EpisodeMatrices from explicit class and sample choices.

    ``query_groups=None`` takes every non-support vector of each class.
    Returns (episode, episode_class_names).
    """
    name_to_id = {name: i for i, name in enumerate(bank.class_names)}
    missing = [name for name in class_names if name not in name_to_id]
    if missing:
        raise ValueError(f"classes not in bank: {missing}")
    k_shots = {len(group) for group in support_groups}
    if len(k_shots) != 1 or 0 in k_shots:
        raise ValueError("every class needs the same positive number of support indices")
    k = k_shots.pop()

    support_cols, query_cols = [], []
    for slot, name in enumerate(class_names):
        vecs = bank.vectors[name_to_id[name]]
        sup = support_groups[slot]
        if query_groups is None:
            qry = [i for i in range(vecs.shape[0]) if i not in set(sup)]
        else:
            qry = query_groups[slot]
        chosen = sup + qry
        bad = [i for i in chosen if not 0 <= i < vecs.shape[0]]
        if bad:
            raise ValueError(
                f"class '{name}' has {vecs.shape[0]} vectors; indices {bad} out of range"
            )
        if len(set(sup)) != len(sup) or set(sup) & set(qry):
            raise ValueError(f"class '{name}': support/query indices overlap or repeat")
        support_cols.append(vecs[sup].T)
        query_cols.append(vecs[qry].T)

    n_way = len(class_names)
    support = np.concatenate(support_cols, axis=1)
    query_list = [q for q in query_cols if q.shape[1] > 0]
    n_query = sum(q.shape[1] for q in query_cols)
    parts = [support] + query_list
    episode = EpisodeMatrices(
        embeddings=np.concatenate(parts, axis=1),
        n_classes=n_way,
        n_support=n_way * k,
        n_query=n_query,
        support_labels=np.repeat(np.arange(n_way), k),
    )
    return episode, list(class_names)


def cmd_decompose(args: argparse.Namespace) -> int:
    bank = _load_bank_for(args)
    class_names = [name for name in args.classes.split(",") if name]
    if not class_names:
        raise ValueError("--classes must name at least one class")
    support_groups = _parse_index_groups(
        args.support_indices, len(class_names), "--support-indices"
    )
    query_groups = (
        _parse_index_groups(args.query_indices, len(class_names), "--query-indices")
        if args.query_indices
        else None
    )
    episode, episode_classes = build_manual_episode(
        bank, class_names, support_groups, query_groups
    )
    cfg = _solver_config(args)
    decomposition = solve(episode, cfg)
    predicted = predict_labels(decomposition, episode)

    manifest = build_manifest("decompose", args, {"bank": _sha256_file(args.bank)})
    payload = {
        "class_names": episode_classes,
        "n_classes": episode.n_classes,
        "n_support": episode.n_support,
        "n_query": episode.n_query,
        "support_labels": episode.support_labels.tolist(),
        "basis": decomposition.basis.tolist(),
        "coefficients": decomposition.coefficients.tolist(),
        "objective_trace": decomposition.objective_trace,
        "iterations_run": decomposition.iterations_run,
        "converged": decomposition.converged,
        "predicted_labels": predicted.tolist(),
        "predicted_class_names": [episode_classes[i] for i in predicted],
    }

    if args.format == "json":
        _emit({"manifest": manifest, "decomposition": payload}, args.out)
    else:
        out_dir = Path(args.out or "decomposition_out")
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_matrix_csv(out_dir / "basis.csv", decomposition.basis)
        _write_matrix_csv(out_dir / "coefficients.csv", decomposition.coefficients)
        trace_lines = "\n".join(repr(v) for v in decomposition.objective_trace)
        (out_dir / "objective_trace.csv").write_text(trace_lines + "\n", encoding="utf-8")
        (out_dir / "manifest.json").write_text(_dump_json(manifest), encoding="utf-8")
    print(
        f"objective {decomposition.objective_trace[0]:.6g} -> "
        f"{decomposition.objective_trace[-1]:.6g} in "
        f"{decomposition.iterations_run} sweeps",
        file=sys.stderr,
    )
    return 0


def _write_matrix_csv(path: Path, matrix: np.ndarray) -> None:
    lines = [",".join(repr(float(v)) for v in row) for row in matrix]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_gen_synth(args: argparse.Namespace) -> int:
    bank = gen_synthetic(
        n_classes=args.n_classes,
        per_class=args.per_class,
        dim=args.dim,
        noise_sigma=args.noise_sigma,
        proto_style=args.proto_style.replace("-", "_"),
        seed=args.seed,
    )
    save_bank(bank, args.out, args.format)
    manifest = build_manifest("gen-synth", args, {})
    Path(str(args.out) + ".manifest.json").write_text(
        _dump_json(manifest), encoding="utf-8"
    )
    print(
        f"wrote {bank.n_classes} classes x {args.per_class} vectors "
        f"(dim {bank.dim}) to {args.out}",
        file=sys.stderr,
    )
    return 0


def _add_bank_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--bank", required=True, help="bank file (EMB1 binary or CSV)")
    parser.add_argument(
        "--allow-negative",
        action="store_true",
        help="clamp negative bank entries to zero instead of rejecting the file",
    )
    parser.add_argument(
        "--l2-normalize-columns",
        action="store_true",
        help="scale every embedding vector to unit L2 norm after loading",
    )


def _add_solver_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--max-iters", type=int, default=500, help="solver sweep cap")
    parser.add_argument(
        "--rel-tol", type=float, default=1e-6, help="relative objective-decrease stop"
    )
    parser.add_argument(
        "--freeze-support",
        action="store_true",
        help="keep support coefficient columns clamped to their one-hot values",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subspace-shot",
        description="Transductive one-shot classification benchmarks",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    evaluate = sub.add_parser("evaluate", help="episodic benchmark over a bank")
    _add_bank_flags(evaluate)
    evaluate.add_argument(
        "--method", required=True, choices=sorted(_METHOD_BY_FLAG), help="classifier"
    )
    evaluate.add_argument("--n-way", type=int, default=5)
    evaluate.add_argument("--k-shot", type=int, default=1)
    evaluate.add_argument(
        "--n-query", type=int, default=15, help="query samples per class"
    )
    evaluate.add_argument("--episodes", type=int, default=10000)
    evaluate.add_argument("--seed", type=int, default=0)
    evaluate.add_argument(
        "--repeats",
        type=int,
        default=1,
        help="independent benchmark repetitions; run r uses seed+r",
    )
    evaluate.add_argument(
        "--threads",
        type=int,
        default=_default_threads(),
        help=f"episode worker threads (default ${_ENV_THREADS} or 1)",
    )
    _add_solver_flags(evaluate)
    evaluate.add_argument("--out", default=None, help="write report JSON here instead of stdout")
    evaluate.set_defaults(func=cmd_evaluate)

    decompose = sub.add_parser(
        "decompose", help="solve one explicit episode and dump its factors"
    )
    _add_bank_flags(decompose)
    decompose.add_argument(
        "--classes", required=True, help="comma-separated class names"
    )
    decompose.add_argument(
        "--support-indices",
        required=True,
        help="per-class support rows: comma within a class, ';' between classes",
    )
    decompose.add_argument(
        "--query-indices",
        default=None,
        help="per-class query rows (same syntax); default: all remaining rows",
    )
    decompose.add_argument("--seed", type=int, default=0)
    _add_solver_flags(decompose)
    decompose.add_argument("--format", choices=("json", "csv"), default="json")
    decompose.add_argument(
        "--out",
        default=None,
        help="JSON file (json format) or output directory (csv format)",
    )
    decompose.set_defaults(func=cmd_decompose)

    synth = sub.add_parser("gen-synth", help="generate a synthetic bank file")
    synth.add_argument("--n-classes", type=int, required=True)
    synth.add_argument("--per-class", type=int, required=True)
    synth.add_argument("--dim", type=int, required=True)
    synth.add_argument("--noise-sigma", type=float, default=0.0)
    synth.add_argument(
        "--proto-style",
        choices=tuple(style.replace("_", "-") for style in PROTO_STYLES),
        default="onehot-blocks",
    )
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--format", choices=("binary", "csv"), default=None)
    synth.add_argument("--out", required=True)
    synth.set_defaults(func=cmd_gen_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (BankError, SolverError, ValueError, OSError) as exc:
        error = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        sys.stdout.write(_dump_json(error))
        return 1


def run() -> None:
    raise SystemExit(main())
