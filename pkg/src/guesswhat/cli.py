"""Command-line entry point: corpus statistics, splitting, training the three
agents, evaluation, self-play, gradient checks, and the play service."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from . import data, engine, stats
from .agents import (
    EncoderKind,
    GuesserConfig,
    GuesserModel,
    ORACLE_FEATURES,
    OracleConfig,
    OracleModel,
    QGenConfig,
    QGenModel,
    QgenMode,
    dominant_class_error,
)
from .core import GameRecord
from .diff import AdamConfig, load_checkpoint
from .stats import SubsetFilter
from .trainer import GuesserTask, OracleTask, QGenTask, TrainConfig, evaluate, train


def _load_games(path: str, official: bool) -> List[GameRecord]:
    reader = data.iter_official_games if official else data.iter_games
    return list(reader(path))


def _add_input_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="game record file (.jsonl or .jsonl.gz)")
    p.add_argument("--official", action="store_true", help="input uses the public download schema")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--min-count", type=int, default=3, help="vocabulary count cutoff")
    p.add_argument("--word-dim", type=int, default=64)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--n-categories", type=int, default=100)
    p.add_argument("--d-img", type=int, default=1000)
    p.add_argument("--metrics-out", default=None, help="per-epoch TSV (default: <out>.metrics.tsv)")


def _prepare_splits(games: Sequence[GameRecord], subset: SubsetFilter, seed: int):
    assignment = data.split_by_image(games, seed=seed)
    parts = assignment.partition(stats.select(games, subset))
    if not parts["train"] or not parts["valid"]:
        raise SystemExit("error: corpus too small to produce train and valid splits")
    return parts


def _finish_training(args, model, task, parts, seed: int) -> None:
    config = TrainConfig(
        max_epochs=args.epochs,
        batch_size=args.batch_size,
        patience=args.patience,
        seed=seed,
        adam=AdamConfig(lr=args.lr),
    )
    result = train(task, parts["train"], parts["valid"], config)
    model.save(args.out)
    metrics_path = args.metrics_out or (args.out + ".metrics.tsv")
    Path(metrics_path).write_text(result.render_log())
    manifest = {
        "kind": task.kind,
        "checkpoint": args.out,
        "seed": seed,
        "config": model.config.to_meta(),
        "train": {
            "max_epochs": config.max_epochs,
            "batch_size": config.batch_size,
            "patience": config.patience,
            "lr": config.adam.lr,
        },
        "best_epoch": result.best_epoch,
        "best_valid_err": result.best_valid_err,
    }
    Path(args.out + ".manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    test_err = evaluate(task, parts["test"], config.batch_size) if parts["test"] else None
    print(
        f"{task.kind}: best epoch {result.best_epoch}, valid error {result.best_valid_err:.4f}"
        + (f", test error {test_err:.4f}" if test_err is not None else "")
    )


def cmd_stats(args) -> int:
    games = _load_games(args.input, args.official)
    if args.metric == "table":
        reports = {
            name: stats.corpus_stats(games, subset)
            for name, subset in (
                ("full", SubsetFilter.FULL),
                ("finished", SubsetFilter.FINISHED),
                ("success", SubsetFilter.SUCCESS),
            )
        }
        if args.format == "json":
            print(json.dumps({k: v.to_dict() for k, v in reports.items()}, indent=2))
        else:
            sys.stdout.write(stats.render_table(reports))
        return 0
    subset = SubsetFilter(args.subset)
    if args.metric == "answers":
        dist = stats.answer_distribution(games, subset)
        if dist is None:
            raise SystemExit("error: empty subset")
        payload = {"yes": dist[0], "no": dist[1], "na": dist[2]}
        print(json.dumps(payload) if args.format == "json" else f"yes\t{dist[0]:.4f}\nno\t{dist[1]:.4f}\nna\t{dist[2]:.4f}")
    elif args.metric == "histogram":
        hist = stats.questions_histogram(games, subset)
        print(json.dumps(hist) if args.format == "json" else stats.render_mapping(hist, ("questions", "dialogues")), end="")
    elif args.metric == "objects":
        mapping = stats.questions_vs_object_count(games, subset)
        print(json.dumps(mapping) if args.format == "json" else stats.render_mapping(mapping, ("objects", "mean_questions")), end="")
    elif args.metric == "success":
        breakdowns = stats.success_breakdowns(games)
        if args.format == "json":
            print(
                json.dumps(
                    {
                        "by_object_count": breakdowns.by_object_count,
                        "by_area_decile": breakdowns.by_area_decile,
                        "by_category": breakdowns.by_category,
                        "by_dialogue_length": breakdowns.by_dialogue_length,
                    }
                )
            )
        else:
            sys.stdout.write(stats.render_mapping(breakdowns.by_object_count, ("objects", "success_rate")))
    elif args.metric == "evolution":
        evolution = stats.answer_evolution(games, subset)
        print(json.dumps({str(k): v for k, v in evolution.items()}))
    elif args.metric == "words":
        ws = stats.word_stats(games, subset, top_n=args.top_n)
        if args.format == "json":
            print(json.dumps({"tokens": ws.tokens, "frequencies": ws.frequencies, "cooccurrence": ws.cooccurrence.tolist()}))
        else:
            sys.stdout.write(stats.render_mapping(ws.frequencies, ("token", "count")))
    return 0


def cmd_split(args) -> int:
    games = _load_games(args.input, args.official)
    ratios = tuple(float(r) for r in args.ratios.split(","))
    if len(ratios) != 3:
        raise SystemExit("error: --ratios needs three comma-separated values")
    assignment = data.split_by_image(games, ratios=ratios, seed=args.seed)
    lines = [f"{image_id}\t{name}" for image_id, name in sorted(assignment.by_image.items())]
    text = "\n".join(lines) + "\n"
    if args.output:
        Path(args.output).write_text(text)
        counts = {name: len(assignment.images(name)) for name in data.SPLIT_NAMES}
        print(json.dumps(counts))
    else:
        sys.stdout.write(text)
    return 0


def cmd_train_oracle(args) -> int:
    games = _load_games(args.input, args.official)
    parts = _prepare_splits(games, SubsetFilter(args.subset), args.seed)
    vocab = data.build_vocab(parts["train"], min_count=args.min_count)
    features = frozenset(f.strip().lower() for f in args.features.split(","))
    config = OracleConfig(
        features=features,
        vocab_size=vocab.size,
        n_categories=args.n_categories,
        word_dim=args.word_dim,
        lstm_hidden=args.hidden,
        category_dim=args.word_dim,
        mlp_hidden=args.hidden,
        d_img=args.d_img,
    )
    model = OracleModel(config, vocab, seed=args.seed)
    _finish_training(args, model, OracleTask(model), parts, args.seed)
    return 0


def cmd_train_guesser(args) -> int:
    games = _load_games(args.input, args.official)
    parts = _prepare_splits(games, SubsetFilter(args.subset), args.seed)
    vocab = data.build_vocab(parts["train"], min_count=args.min_count)
    config = GuesserConfig(
        vocab_size=vocab.size,
        encoder=EncoderKind(args.encoder),
        use_image=args.use_image,
        n_categories=args.n_categories,
        word_dim=args.word_dim,
        lstm_hidden=args.hidden,
        utterance_hidden=args.hidden,
        context_hidden=args.hidden,
        category_dim=args.word_dim,
        obj_mlp_hidden=args.hidden,
        d_img=args.d_img,
    )
    model = GuesserModel(config, vocab, seed=args.seed)
    _finish_training(args, model, GuesserTask(model), parts, args.seed)
    return 0


def cmd_train_qgen(args) -> int:
    mode = QgenMode(args.mode)
    oracle = None
    if mode is QgenMode.ORACLE:
        if not args.oracle_checkpoint:
            raise SystemExit("error: --mode oracle requires --oracle-checkpoint")
        oracle = OracleModel.load(args.oracle_checkpoint)
    games = _load_games(args.input, args.official)
    parts = _prepare_splits(games, SubsetFilter(args.subset), args.seed)
    vocab = data.build_vocab(parts["train"], min_count=args.min_count)
    config = QGenConfig(
        vocab_size=vocab.size,
        word_dim=args.word_dim,
        utterance_hidden=args.hidden,
        context_hidden=args.hidden,
        decoder_hidden=args.hidden,
        d_img=args.d_img,
        max_question_len=args.max_question_len,
        beam_width=args.beam,
    )
    model = QGenModel(config, vocab, seed=args.seed)
    _finish_training(args, model, QGenTask(model, mode, oracle), parts, args.seed)
    return 0


def cmd_eval(args) -> int:
    games = _load_games(args.input, args.official)
    if args.split != "all":
        assignment = data.split_by_image(games, seed=args.seed)
        games = assignment.partition(games)[args.split]
    games = stats.select(games, SubsetFilter(args.subset))
    if not games:
        raise SystemExit("error: empty evaluation split")
    if args.baseline == "dominant":
        err = dominant_class_error(games)
        print(f"dominant-class oracle error: {err:.4f}")
        return 0
    if args.baseline == "random":
        analytic = engine.random_guess_error(games)
        measured = engine.measured_random_guess_error(games, seed=args.seed)
        print(f"random guesser error: analytic {analytic:.4f}, measured {measured:.4f}")
        return 0
    if not args.checkpoint:
        raise SystemExit("error: --checkpoint required unless --baseline is given")
    kind, _, _ = load_checkpoint(args.checkpoint)
    if kind == "oracle":
        task = OracleTask(OracleModel.load(args.checkpoint))
    elif kind == "guesser":
        task = GuesserTask(GuesserModel.load(args.checkpoint))
    elif kind == "qgen":
        task = QGenTask(QGenModel.load(args.checkpoint))
    else:
        raise SystemExit(f"error: unknown checkpoint kind {kind!r}")
    err = evaluate(task, games, args.batch_size)
    print(f"{kind} error on {args.split}/{args.subset}: {err:.4f} ({len(games)} games)")
    return 0


def cmd_selfplay(args) -> int:
    games = _load_games(args.input, args.official)
    if args.split != "all":
        assignment = data.split_by_image(games, seed=args.seed)
        games = assignment.partition(games)[args.split]
    if args.n and args.n < len(games):
        games = games[: args.n]
    if not games:
        raise SystemExit("error: no games to play")
    qgen = QGenModel.load(args.qgen)
    oracle = OracleModel.load(args.oracle)
    guesser = GuesserModel.load(args.guesser)
    result = engine.eval_pipeline(
        games, qgen, oracle, guesser, n_questions=args.questions, beam_width=args.beam
    )
    if args.out:
        count = data.write_games(result.records, args.out)
        print(f"wrote {count} generated games to {args.out}")
    baseline = engine.random_guess_error(games)
    print(
        f"self-play over {len(games)} games: success rate {result.success_rate:.4f}, "
        f"error {result.error:.4f} (random baseline error {baseline:.4f})"
    )
    return 0


def cmd_gradcheck(args) -> int:
    from .gradchecks import run_all

    results = run_all(seed=args.seed)
    worst = 0.0
    for name, err in sorted(results.items()):
        flag = "ok" if err <= args.tolerance else "FAIL"
        print(f"{name}\t{err:.3e}\t{flag}")
        worst = max(worst, err)
    if worst > args.tolerance:
        print(f"error: max relative error {worst:.3e} exceeds {args.tolerance:.1e}", file=sys.stderr)
        return 1
    return 0


def cmd_serve(args) -> int:
    from .service import build_store, create_app, load_service_config

    overrides = {
        "corpus_path": args.corpus,
        "data_dir": args.data_dir,
        "oracle_checkpoint": args.oracle,
        "guesser_checkpoint": args.guesser,
        "qgen_checkpoint": args.qgen,
        "static_dir": args.static,
        "images_dir": args.images,
        "host": args.host,
        "port": args.port,
    }
    config = load_service_config(args.config, overrides)
    store = build_store(config)
    app = create_app(store, static_dir=config.static_dir, images_dir=config.images_dir)
    import uvicorn

    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="guesswhat", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="corpus statistics")
    _add_input_flags(p)
    p.add_argument("--subset", choices=["full", "finished", "success"], default="full")
    p.add_argument(
        "--metric",
        choices=["table", "answers", "histogram", "objects", "success", "evolution", "words"],
        default="table",
    )
    p.add_argument("--format", choices=["tsv", "json"], default="tsv")
    p.add_argument("--top-n", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", help="image-level train/valid/test split")
    _add_input_flags(p)
    p.add_argument("--ratios", default="0.7,0.15,0.15")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train-oracle", help="train the answering model")
    _add_input_flags(p)
    _add_train_flags(p)
    p.add_argument("--features", default="question,category,spatial",
                   help=f"comma-separated subset of {','.join(ORACLE_FEATURES)}")
    p.add_argument("--subset", choices=["full", "finished", "success"], default="full")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_oracle)

    p = sub.add_parser("train-guesser", help="train the object picker")
    _add_input_flags(p)
    _add_train_flags(p)
    p.add_argument("--encoder", choices=["lstm", "hred"], default="lstm")
    p.add_argument("--use-image", action="store_true")
    p.add_argument("--subset", choices=["full", "finished", "success"], default="success")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_guesser)

    p = sub.add_parser("train-qgen", help="train the question generator")
    _add_input_flags(p)
    _add_train_flags(p)
    p.add_argument("--mode", choices=["gt", "oracle"], default="gt")
    p.add_argument("--oracle-checkpoint", default=None)
    p.add_argument("--max-question-len", type=int, default=12)
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--subset", choices=["full", "finished", "success"], default="success")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_qgen)

    p = sub.add_parser("eval", help="evaluate a checkpoint or a counting baseline")
    _add_input_flags(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--baseline", choices=["dominant", "random"], default=None)
    p.add_argument("--split", choices=["train", "valid", "test", "all"], default="test")
    p.add_argument("--subset", choices=["full", "finished", "success"], default="full")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("selfplay", help="generator asks, oracle answers, guesser picks")
    _add_input_flags(p)
    p.add_argument("--qgen", required=True)
    p.add_argument("--oracle", required=True)
    p.add_argument("--guesser", required=True)
    p.add_argument("--n", type=int, default=None, help="cap on the number of games")
    p.add_argument("--questions", type=int, default=5)
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--split", choices=["train", "valid", "test", "all"], default="all")
    p.add_argument("--out", default=None, help="write generated records here")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selfplay)

    p = sub.add_parser("gradcheck", help="finite-difference check of ops and models")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("serve", help="run the play service")
    p.add_argument("--corpus", default=None)
    p.add_argument("--data-dir", default=None)
    p.add_argument("--oracle", default=None)
    p.add_argument("--guesser", default=None)
    p.add_argument("--qgen", default=None)
    p.add_argument("--static", default=None, help="directory with the browser client build")
    p.add_argument("--images", default=None, help="directory with image files (served at /images)")
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
