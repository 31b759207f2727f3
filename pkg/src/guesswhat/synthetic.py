"""Synthetic toy corpora with known structure, for overfitting runs,
learnability checks, and end-to-end self-play at desk scale."""

from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np

from .core import Answer, GameRecord, ImageMeta, ObjectRef, QAPair, Status

CATEGORY_NAMES = {
    1: "square",
    2: "circle",
    3: "triangle",
    4: "star",
    5: "heart",
    6: "cross",
    7: "ring",
    8: "arrow",
    9: "wave",
    10: "dot",
}

IMAGE_SIZE = 100
BOX = 25  # object side length; area 625 clears the eligibility threshold


def _make_object(object_id: int, category_id: int, left: bool, y: float) -> ObjectRef:
    x = 5.0 if left else 65.0
    return ObjectRef(
        object_id=object_id,
        category_id=category_id,
        category_name=CATEGORY_NAMES[category_id],
        bbox=(x, y, float(BOX), float(BOX)),
        area=float(BOX * BOX),
    )


def _make_game(
    game_id: int,
    layout: Sequence[Tuple[int, bool]],
    target_index: int,
    qas: Sequence[QAPair],
) -> GameRecord:
    objects = tuple(
        _make_object(game_id * 100 + k, cat, left, y=5.0 + 17.0 * k)
        for k, (cat, left) in enumerate(layout)
    )
    return GameRecord(
        game_id=game_id,
        image=ImageMeta(image_id=game_id, width=IMAGE_SIZE, height=IMAGE_SIZE),
        objects=objects,
        target_id=objects[target_index].object_id,
        qas=tuple(qas),
        status=Status.SUCCESS,
        guess_id=objects[target_index].object_id,
    )


def is_left(obj: ObjectRef) -> bool:
    return obj.bbox[0] + obj.bbox[2] / 2.0 < IMAGE_SIZE / 2.0


PARITY_QUESTIONS = (
    "is it even ?",
    "does it have an even id ?",
    "is the number even ?",
)


def parity_answer_corpus(n_games: int, seed: int = 0, n_categories: int = 10) -> List[GameRecord]:
    """Answers depend only on the target's category parity: yes iff even."""
    rng = np.random.default_rng(seed)
    games = []
    for i in range(n_games):
        k = int(rng.integers(3, 6))
        layout = [
            (int(rng.integers(1, n_categories + 1)), bool(rng.integers(2))) for _ in range(k)
        ]
        target = int(rng.integers(k))
        question = PARITY_QUESTIONS[int(rng.integers(len(PARITY_QUESTIONS)))]
        answer = Answer.YES if layout[target][0] % 2 == 0 else Answer.NO
        games.append(_make_game(i, layout, target, [QAPair(question, answer)]))
    return games


def category_side_corpus(n_games: int, seed: int = 0) -> List[GameRecord]:
    """Four objects spanning two categories x two sides; the single question
    names the target's category and side ("circle left"), answered yes.  The
    guesser must use both words to identify the target."""
    rng = np.random.default_rng(seed)
    games = []
    for i in range(n_games):
        cat_a, cat_b = rng.choice(np.arange(1, 11), size=2, replace=False)
        layout = [(int(cat_a), True), (int(cat_a), False), (int(cat_b), True), (int(cat_b), False)]
        order = rng.permutation(4)
        layout = [layout[j] for j in order]
        target = int(rng.integers(4))
        cat, left = layout[target]
        question = f"{CATEGORY_NAMES[cat]} {'left' if left else 'right'}"
        games.append(_make_game(i, layout, target, [QAPair(question, Answer.YES)]))
    return games


def scripted_dialogue_corpus(n_games: int, seed: int = 0) -> List[GameRecord]:
    """Four objects with categories 1..4 shuffled; dialogues follow a fixed
    five-question script (three category probes, then the two side probes)
    with truthful answers, so all three agents can learn the game."""
    rng = np.random.default_rng(seed)
    games = []
    for i in range(n_games):
        cats = [int(c) for c in rng.permutation(np.arange(1, 5))]
        layout = [(cat, bool(rng.integers(2))) for cat in cats]
        target = int(rng.integers(4))
        target_cat, target_left = layout[target]
        qas = []
        for cat in (1, 2, 3):
            qas.append(
                QAPair(
                    f"is it a {CATEGORY_NAMES[cat]} ?",
                    Answer.YES if target_cat == cat else Answer.NO,
                )
            )
        qas.append(QAPair("is it on the left ?", Answer.YES if target_left else Answer.NO))
        qas.append(QAPair("is it on the right ?", Answer.NO if target_left else Answer.YES))
        games.append(_make_game(i, layout, target, qas))
    return games
