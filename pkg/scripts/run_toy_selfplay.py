#!/usr/bin/env python3
"""Train the three agents on the scripted toy world, run self-play, and write
checkpoints plus a generated-game corpus.

Produces everything the play service needs for a model-backed demo:

    python3 scripts/run_toy_selfplay.py --out-dir runs/toy
    guesswhat serve --corpus runs/toy/corpus.jsonl --data-dir runs/toy/sessions \
        --oracle runs/toy/oracle.ckpt --guesser runs/toy/guesser.ckpt \
        --qgen runs/toy/qgen.ckpt --static frontend/dist
"""

import argparse
import sys
import time
from pathlib import Path

from guesswhat.agents import (
    EncoderKind,
    GuesserConfig,
    GuesserModel,
    OracleConfig,
    OracleModel,
    QGenConfig,
    QGenModel,
)
from guesswhat.data import build_vocab, write_games
from guesswhat.engine import eval_pipeline, random_guess_error
from guesswhat.synthetic import scripted_dialogue_corpus
from guesswhat.trainer import GuesserTask, OracleTask, QGenTask, TrainConfig, train


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="runs/toy")
    parser.add_argument("--n-train", type=int, default=240)
    parser.add_argument("--n-eval", type=int, default=200)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    games = scripted_dialogue_corpus(args.n_train, seed=args.seed)
    cut = int(0.85 * len(games))
    train_games, valid_games = games[:cut], games[cut:]
    vocab = build_vocab(train_games, min_count=1)
    write_games(games, out / "corpus.jsonl")

    started = time.time()
    oracle = OracleModel(
        OracleConfig(features=frozenset({"question", "category", "spatial"}),
                     vocab_size=vocab.size, n_categories=8, word_dim=16, lstm_hidden=24,
                     category_dim=16, mlp_hidden=24, d_img=8),
        vocab, seed=args.seed)
    result = train(OracleTask(oracle), train_games, valid_games,
                   TrainConfig(max_epochs=60, batch_size=32, patience=60,
                               seed=args.seed, stop_at_train_error=0.01))
    oracle.save(out / "oracle.ckpt")
    print(f"oracle: valid error {result.best_valid_err:.3f} (epoch {result.best_epoch})")

    guesser = GuesserModel(
        GuesserConfig(vocab_size=vocab.size, encoder=EncoderKind.LSTM, n_categories=8,
                      word_dim=16, lstm_hidden=32, category_dim=16, obj_mlp_hidden=32, d_img=8),
        vocab, seed=args.seed)
    result = train(GuesserTask(guesser), train_games, valid_games,
                   TrainConfig(max_epochs=80, batch_size=32, patience=80,
                               seed=args.seed, stop_at_train_error=0.02))
    guesser.save(out / "guesser.ckpt")
    print(f"guesser: valid error {result.best_valid_err:.3f} (epoch {result.best_epoch})")

    qgen = QGenModel(
        QGenConfig(vocab_size=vocab.size, word_dim=16, utterance_hidden=32,
                   context_hidden=32, decoder_hidden=32, d_img=8,
                   max_question_len=8, beam_width=3),
        vocab, seed=args.seed)
    result = train(QGenTask(qgen), train_games, valid_games,
                   TrainConfig(max_epochs=60, batch_size=32, patience=60,
                               seed=args.seed, stop_at_train_error=0.01))
    qgen.save(out / "qgen.ckpt")
    print(f"qgen: valid token error {result.best_valid_err:.3f} (epoch {result.best_epoch})")
    print(f"training took {time.time() - started:.1f}s")

    fresh = scripted_dialogue_corpus(args.n_eval, seed=args.seed + 1000)
    pipeline = eval_pipeline(fresh, qgen, oracle, guesser)
    write_games(pipeline.records, out / "selfplay.jsonl")
    baseline = 1.0 - random_guess_error(fresh)
    print(f"self-play over {args.n_eval} fresh games: success {pipeline.success_rate:.3f} "
          f"(random baseline {baseline:.3f})")
    sample = pipeline.records[0]
    for qa in sample.qas:
        print(f"  {qa.question}  ->  {qa.answer.value}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
