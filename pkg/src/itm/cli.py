"""Command-line interface.

Commands: ``score`` one model, ``rank`` a manifest, ``synth`` a synthetic
benchmark, ``stability`` subset analysis, ``metrics`` standalone
correlation of two score files. Heavy imports happen after argument
parsing so BLAS threading can be pinned for multi-process runs. The
``ITM_LOG`` environment variable (debug/info/warning/error) controls
verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

log = logging.getLogger("itm.cli")

_EXIT_ERROR = 2


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="global random seed")
    parser.add_argument(
        "--centers",
        choices=["onehot", "random", "pca", "laplacian"],
        default="onehot",
        help="pseudo-cluster center scheme",
    )
    parser.add_argument(
        "--shift-centers",
        action="store_true",
        help="shift centers to the feature distribution (mu + mean(sigma)*c)",
    )
    parser.add_argument(
        "--eval-mode",
        choices=["evolved", "static"],
        default="evolved",
        help="score evolved embeddings (label-conditioned) or static logits",
    )
    parser.add_argument(
        "--n",
        default="auto",
        help="evolution iteration count: 'auto' (adaptive) or an integer",
    )
    parser.add_argument("--eta", type=float, default=0.01, help="evolution step size")
    parser.add_argument("--iters", type=int, default=500, help="training iterations")
    parser.add_argument("--batch", type=int, default=256, help="batch size")
    parser.add_argument("--lr", type=float, default=5e-3, help="AdamW learning rate")
    parser.add_argument(
        "--pc-loss",
        choices=["mse", "mae", "ce"],
        default="mse",
        help="inner evolution loss (closed-form scoring supports mse only)",
    )
    parser.add_argument(
        "--standardize",
        action="store_true",
        help="z-score features with training-split statistics",
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="itm",
        description="Estimate and rank model transferability from embedding files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_score = sub.add_parser("score", help="score a single embedding file")
    p_score.add_argument("--features", required=True, help="ITMF embedding file")
    p_score.add_argument("--out", help="write the score report JSON here")
    _add_train_flags(p_score)

    p_rank = sub.add_parser("rank", help="score and rank a manifest of models")
    p_rank.add_argument("--manifest", required=True, help="manifest JSON")
    p_rank.add_argument("--out", help="write the rank result JSON here")
    p_rank.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                        help="concurrent model scorings")
    _add_train_flags(p_rank)

    p_synth = sub.add_parser("synth", help="generate a synthetic benchmark")
    p_synth.add_argument("--models", type=int, required=True)
    p_synth.add_argument("--classes", type=int, required=True)
    p_synth.add_argument("--dim", type=int, required=True)
    p_synth.add_argument("--samples-per-class", type=int, default=200)
    p_synth.add_argument("--sep", type=float, nargs=2, default=[0.5, 3.5],
                         metavar=("LOW", "HIGH"), help="class-separation radius range")
    p_synth.add_argument("--noise", type=float, default=1.0, help="feature noise sigma")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out-dir", required=True, help="directory for ITMF files")

    p_stab = sub.add_parser("stability", help="subset-stability analysis")
    p_stab.add_argument("--manifest", required=True)
    p_stab.add_argument("--k", type=int, required=True, help="subset size")
    p_stab.add_argument("--mode", choices=["exhaustive", "sampled"], default="exhaustive")
    p_stab.add_argument("--count", type=int, help="subsets to draw in sampled mode")
    p_stab.add_argument(
        "--scores",
        action="append",
        default=[],
        metavar="NAME=FILE",
        help="precomputed method scores (flat JSON name->score); repeatable",
    )
    p_stab.add_argument("--out", help="write CSV here instead of stdout")
    p_stab.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    _add_train_flags(p_stab)

    p_met = sub.add_parser("metrics", help="correlate two score files")
    p_met.add_argument("--truth", required=True, help="flat JSON name->score")
    p_met.add_argument("--pred", required=True, help="flat JSON name->score")
    p_met.add_argument("--out", help="write the rank result JSON here")

    return parser


def _configure_logging() -> None:
    level = os.environ.get("ITM_LOG", "warning").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        stream=sys.stderr,
        format="%(name)s: %(message)s",
    )


def _pin_blas_threads() -> None:
    # single-threaded BLAS per worker; user-set values win
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, "1")


def _pipeline_options(args: argparse.Namespace):
    from .dva import AdaptiveN, DvaConfig, FixedN, PcLoss
    from .errors import ArgumentError
    from .pseudocluster import CenterScheme
    from .scoring import PipelineOptions
    from .trainer import EvalMode, TrainConfig

    if args.n == "auto":
        n_mode = AdaptiveN()
    else:
        try:
            n_mode = FixedN(int(args.n))
        except ValueError:
            raise ArgumentError(f"--n must be 'auto' or an integer, got {args.n!r}")
    dva_cfg = DvaConfig(
        eta=args.eta,
        n_mode=n_mode,
        batch_size=args.batch,
        pc_loss=PcLoss(args.pc_loss),
    )
    train_cfg = TrainConfig(
        iterations=args.iters,
        lr=args.lr,
        dva=dva_cfg,
        seed=args.seed,
        eval_mode=EvalMode.EVOLVED_WITH_LABELS
        if args.eval_mode == "evolved"
        else EvalMode.STATIC_LOGITS,
        standardize=args.standardize,
    )
    scheme = {
        "onehot": CenterScheme.ONE_HOT,
        "random": CenterScheme.RANDOM_ORTHO,
        "pca": CenterScheme.PCA_ORTHO,
        "laplacian": CenterScheme.LAPLACIAN_ORTHO,
    }[args.centers]
    return PipelineOptions(train_cfg=train_cfg, scheme=scheme, shift=args.shift_centers)


def _emit_json(payload: dict | list, out: str | None) -> None:
    text = json.dumps(payload, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _aligned_table(rows: list[list[str]], header: list[str]) -> str:
    table = [header] + rows
    widths = [max(len(r[c]) for r in table) for c in range(len(header))]
    lines = []
    for i, row in enumerate(table):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _cmd_score(args: argparse.Namespace) -> int:
    from .scoring import score_model_file

    opts = _pipeline_options(args)
    name = Path(args.features).stem
    log.info("eval mode: %s", args.eval_mode)
    report = score_model_file(args.features, name, opts, args.seed)
    _emit_json(report.to_json_dict(), args.out)
    if args.out:
        print(f"{name}: best_score={report.best_score:.4f} n={report.n_used}")
    return 0


def _cmd_rank(args: argparse.Namespace) -> int:
    from .embedstore import load_manifest
    from .metrics import RankResult
    from .scoring import score_entries

    opts = _pipeline_options(args)
    entries = load_manifest(args.manifest)
    reports = score_entries(entries, opts, args.seed, jobs=args.jobs)
    scores = {r.name: r.best_score for r in reports}
    with_truth = [e for e in entries if e.ground_truth is not None]
    skipped = [e.name for e in entries if e.ground_truth is None]
    result = None
    if len(with_truth) >= 2:
        result = RankResult.compute(
            [e.name for e in with_truth],
            [e.ground_truth for e in with_truth],
            [scores[e.name] for e in with_truth],
        )
    elif skipped:
        print(
            "warning: fewer than 2 models carry ground truth; correlations skipped",
            file=sys.stderr,
        )

    rows = []
    for e in entries:
        truth = "-" if e.ground_truth is None else f"{e.ground_truth:.4f}"
        rows.append([e.name, f"{scores[e.name]:.4f}", truth])
    print(_aligned_table(rows, ["model", "score", "ground_truth"]))
    if result is not None:
        print(f"tau_w={result.tau_w:.4f}  tau={result.tau:.4f}  rho={result.rho:.4f}")
    if skipped:
        print(f"no ground truth (excluded from correlations): {', '.join(skipped)}")

    payload = {
        "scores": [
            {
                "name": e.name,
                "best_score": scores[e.name],
                "ground_truth": e.ground_truth,
            }
            for e in entries
        ],
        "correlations": None
        if result is None
        else {"tau_w": result.tau_w, "tau": result.tau, "rho": result.rho},
        "excluded_from_correlations": skipped,
    }
    if args.out:
        _emit_json(payload, args.out)
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    from .embedstore import ManifestEntry, SynthSpec, save_embedding_set, save_manifest
    from .embedstore import synth_generate

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = SynthSpec(
        num_models=args.models,
        num_classes=args.classes,
        dim=args.dim,
        samples_per_class=args.samples_per_class,
        separability_range=(args.sep[0], args.sep[1]),
        noise_sigma=args.noise,
    )
    entries = []
    for dataset, accuracy in synth_generate(spec, args.seed):
        path = out_dir / f"{dataset.name}.itmf"
        save_embedding_set(dataset, path)
        entries.append(ManifestEntry(name=dataset.name, features=path, ground_truth=accuracy))
        log.info("wrote %s (oracle accuracy %.4f)", path, accuracy)
    save_manifest(entries, out_dir / "manifest.json")
    print(f"wrote {len(entries)} models + manifest.json to {out_dir}")
    return 0


def _load_score_file(path: str) -> dict[str, float]:
    from .errors import FormatError

    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict) or not all(
        isinstance(v, (int, float)) for v in data.values()
    ):
        raise FormatError(f"{path}: expected a flat JSON object of name -> score")
    return {str(k): float(v) for k, v in data.items()}


def _cmd_stability(args: argparse.Namespace) -> int:
    from .embedstore import load_manifest
    from .errors import ArgumentError
    from .metrics import stability_subsample
    from .scoring import score_entries

    entries = [e for e in load_manifest(args.manifest) if e.ground_truth is not None]
    if len(entries) < args.k:
        raise ArgumentError(
            f"pool has {len(entries)} models with ground truth, need >= k={args.k}"
        )
    truth = [e.ground_truth for e in entries]
    names = [e.name for e in entries]

    methods: dict[str, list[float]] = {}
    for item in args.scores:
        if "=" not in item:
            raise ArgumentError(f"--scores expects NAME=FILE, got {item!r}")
        method, path = item.split("=", 1)
        table = _load_score_file(path)
        missing = [n for n in names if n not in table]
        if missing:
            raise ArgumentError(f"score file {path} lacks models: {missing}")
        methods[method] = [table[n] for n in names]
    if not methods:
        opts = _pipeline_options(args)
        reports = score_entries(entries, opts, args.seed, jobs=args.jobs)
        methods["itm"] = [r.best_score for r in reports]

    result = stability_subsample(
        truth,
        methods,
        args.k,
        mode=args.mode,
        count=args.count,
        seed=args.seed,
    )
    lines = ["method,subset_id,tau_w"]
    for method, values in result.values.items():
        for subset_id, value in enumerate(values):
            lines.append(f"{method},{subset_id},{value!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {sum(len(v) for v in result.values.values())} rows to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_metrics(args: argparse.Namespace) -> int:
    from .errors import ArgumentError
    from .metrics import RankResult

    truth_table = _load_score_file(args.truth)
    pred_table = _load_score_file(args.pred)
    names = sorted(set(truth_table) & set(pred_table))
    if len(names) < 2:
        raise ArgumentError("need at least 2 models common to both files")
    result = RankResult.compute(
        names, [truth_table[n] for n in names], [pred_table[n] for n in names]
    )
    print(f"models={len(names)}")
    print(f"tau_w={result.tau_w:.6f}")
    print(f"tau={result.tau:.6f}")
    print(f"rho={result.rho:.6f}")
    if args.out:
        _emit_json(result.to_json_dict(), args.out)
    return 0


_COMMANDS = {
    "score": _cmd_score,
    "rank": _cmd_rank,
    "synth": _cmd_synth,
    "stability": _cmd_stability,
    "metrics": _cmd_metrics,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    _configure_logging()
    if getattr(args, "jobs", 1) > 1:
        _pin_blas_threads()
    from .errors import ItmError

    try:
        return _COMMANDS[args.command](args)
    except (ItmError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
