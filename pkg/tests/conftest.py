import os

import numpy as np
import pytest

from guesswhat.core import Answer, GameRecord, ImageMeta, ObjectRef, QAPair, Status

OFFICIAL_CORPUS_ENV = "GUESSWHAT_CORPUS_DIR"


def official_corpus_paths():
    """Paths of the publicly downloadable corpus files, if present."""
    root = os.environ.get(OFFICIAL_CORPUS_ENV)
    if not root:
        return None
    paths = {}
    for split in ("train", "valid", "test"):
        for name in (f"guesswhat.{split}.jsonl.gz", f"guesswhat.{split}.jsonl"):
            candidate = os.path.join(root, name)
            if os.path.exists(candidate):
                paths[split] = candidate
                break
        else:
            return None
    return paths


def make_object(object_id=1, category_id=1, category="person", bbox=(10, 10, 30, 20), area=None):
    return ObjectRef(
        object_id=object_id,
        category_id=category_id,
        category_name=category,
        bbox=tuple(float(v) for v in bbox),
        area=float(area if area is not None else bbox[2] * bbox[3]),
    )


def make_game(
    game_id=1,
    n_objects=3,
    target_index=0,
    qas=(("is it a person ?", Answer.YES),),
    status=Status.SUCCESS,
    image_id=None,
    guess_index=None,
):
    objects = tuple(
        make_object(object_id=game_id * 100 + k, category_id=k + 1, category=f"cat{k + 1}",
                    bbox=(5 + 25 * k, 10, 24, 30))
        for k in range(n_objects)
    )
    if guess_index is None:
        guess_index = target_index if status is Status.SUCCESS else (target_index + 1) % n_objects
    guess_id = None if status is Status.INCOMPLETE else objects[guess_index].object_id
    width = max(120, 5 + 25 * n_objects + 30)
    return GameRecord(
        game_id=game_id,
        image=ImageMeta(image_id=image_id if image_id is not None else game_id, width=width, height=90),
        objects=objects,
        target_id=objects[target_index].object_id,
        qas=tuple(QAPair(q, a) for q, a in qas),
        status=status,
        guess_id=guess_id,
    )


@pytest.fixture
def small_corpus():
    return [
        make_game(game_id=1, qas=(("is it red ?", Answer.NO), ("is it a person ?", Answer.YES))),
        make_game(game_id=2, status=Status.FAILURE,
                  qas=(("is it blue ?", Answer.YES), ("left ?", Answer.NO), ("right ?", Answer.NA))),
        make_game(game_id=3, status=Status.INCOMPLETE, qas=(("is it red ?", Answer.YES),)),
    ]


def train_toy_triple(seed=7, n_games=240):
    """Train all three agents on the scripted toy world (shared by the
    self-play acceptance run and the demo script)."""
    from guesswhat.agents import (
        EncoderKind,
        GuesserConfig,
        GuesserModel,
        OracleConfig,
        OracleModel,
        QGenConfig,
        QGenModel,
    )
    from guesswhat.data import build_vocab
    from guesswhat.synthetic import scripted_dialogue_corpus
    from guesswhat.trainer import GuesserTask, OracleTask, QGenTask, TrainConfig, train

    games = scripted_dialogue_corpus(n_games, seed=seed)
    cut = int(0.85 * len(games))
    train_games, valid_games = games[:cut], games[cut:]
    vocab = build_vocab(train_games, min_count=1)

    oracle = OracleModel(
        OracleConfig(
            features=frozenset({"question", "category", "spatial"}),
            vocab_size=vocab.size, n_categories=8, word_dim=16, lstm_hidden=24,
            category_dim=16, mlp_hidden=24, d_img=8,
        ),
        vocab, seed=seed)
    train(OracleTask(oracle), train_games, valid_games,
          TrainConfig(max_epochs=60, batch_size=32, patience=60, seed=seed,
                      stop_at_train_error=0.01))

    guesser = GuesserModel(
        GuesserConfig(
            vocab_size=vocab.size, encoder=EncoderKind.LSTM, n_categories=8,
            word_dim=16, lstm_hidden=32, category_dim=16, obj_mlp_hidden=32, d_img=8,
        ),
        vocab, seed=seed)
    train(GuesserTask(guesser), train_games, valid_games,
          TrainConfig(max_epochs=80, batch_size=32, patience=80, seed=seed,
                      stop_at_train_error=0.02))

    qgen = QGenModel(
        QGenConfig(
            vocab_size=vocab.size, word_dim=16, utterance_hidden=32, context_hidden=32,
            decoder_hidden=32, d_img=8, max_question_len=8, beam_width=3,
        ),
        vocab, seed=seed)
    train(QGenTask(qgen), train_games, valid_games,
          TrainConfig(max_epochs=60, batch_size=32, patience=60, seed=seed,
                      stop_at_train_error=0.01))
    return qgen, oracle, guesser, games


@pytest.fixture(scope="session")
def toy_triple():
    return train_toy_triple()
