"""Game state machine and the self-play evaluation loop.

The questioner sees only the image until it declares itself ready to guess;
the object list is revealed for the guess phase.  Self-play chains the
question generator, oracle, and guesser for a fixed number of questions and
emits records in the corpus format."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .agents import GuesserModel, OracleModel, QGenModel
from .core import Answer, GameRecord, ImageMeta, ObjectRef, QAPair, Status


class ProtocolError(Exception):
    """An event that is illegal in the current phase; the state is unchanged."""


class Phase(enum.Enum):
    QUESTIONING = "questioning"
    AWAITING_ANSWER = "awaiting_answer"
    GUESSING = "guessing"
    FINISHED = "finished"


@dataclass(frozen=True)
class AskQuestion:
    text: str


@dataclass(frozen=True)
class GiveAnswer:
    answer: Answer


@dataclass(frozen=True)
class ReadyToGuess:
    pass


@dataclass(frozen=True)
class Guess:
    object_id: int


Event = Union[AskQuestion, GiveAnswer, ReadyToGuess, Guess]


@dataclass(frozen=True)
class TranscriptEntry:
    question: str
    answer: Optional[Answer] = None


@dataclass(frozen=True)
class SessionState:
    image: ImageMeta
    objects: Tuple[ObjectRef, ...]
    target_id: int
    phase: Phase = Phase.QUESTIONING
    transcript: Tuple[TranscriptEntry, ...] = ()
    outcome: Optional[Status] = None
    guess_id: Optional[int] = None

    @classmethod
    def new(cls, image: ImageMeta, objects: Sequence[ObjectRef], target_id: int) -> "SessionState":
        if target_id not in {o.object_id for o in objects}:
            raise ValueError(f"target {target_id} not among objects")
        return cls(image=image, objects=tuple(objects), target_id=target_id)

    def qa_pairs(self) -> Tuple[QAPair, ...]:
        return tuple(
            QAPair(e.question, e.answer) for e in self.transcript if e.answer is not None
        )

    @property
    def answered_count(self) -> int:
        return sum(1 for e in self.transcript if e.answer is not None)


def apply_event(state: SessionState, event: Event) -> SessionState:
    """Deterministic transition; raises ProtocolError on an illegal event."""
    if state.phase is Phase.FINISHED:
        raise ProtocolError(f"game is finished; {type(event).__name__} rejected")
    if isinstance(event, AskQuestion):
        if state.phase is not Phase.QUESTIONING:
            raise ProtocolError(f"cannot ask in phase {state.phase.value}")
        if not event.text.strip():
            raise ProtocolError("question must be non-empty")
        entry = TranscriptEntry(question=event.text)
        return replace(state, phase=Phase.AWAITING_ANSWER, transcript=state.transcript + (entry,))
    if isinstance(event, GiveAnswer):
        if state.phase is not Phase.AWAITING_ANSWER:
            raise ProtocolError(f"no question pending in phase {state.phase.value}")
        answered = replace(state.transcript[-1], answer=event.answer)
        return replace(
            state, phase=Phase.QUESTIONING, transcript=state.transcript[:-1] + (answered,)
        )
    if isinstance(event, ReadyToGuess):
        if state.phase is not Phase.QUESTIONING:
            raise ProtocolError(f"cannot move to guessing in phase {state.phase.value}")
        if state.answered_count < 1:
            raise ProtocolError("need at least one answered question before guessing")
        return replace(state, phase=Phase.GUESSING)
    if isinstance(event, Guess):
        if state.phase is not Phase.GUESSING:
            raise ProtocolError(f"cannot guess in phase {state.phase.value}")
        if event.object_id not in {o.object_id for o in state.objects}:
            raise ProtocolError(f"unknown object {event.object_id}")
        outcome = Status.SUCCESS if event.object_id == state.target_id else Status.FAILURE
        return replace(state, phase=Phase.FINISHED, outcome=outcome, guess_id=event.object_id)
    raise ProtocolError(f"unknown event {event!r}")


def abandon(state: SessionState) -> SessionState:
    """Close a session without an outcome (timeout / disconnect)."""
    if state.phase is Phase.FINISHED:
        raise ProtocolError("game is already finished")
    return replace(state, phase=Phase.FINISHED, outcome=Status.INCOMPLETE, guess_id=None)


def state_to_record(state: SessionState, game_id: int) -> GameRecord:
    if state.phase is not Phase.FINISHED:
        raise ValueError("only finished sessions export to records")
    return GameRecord(
        game_id=game_id,
        image=state.image,
        objects=state.objects,
        target_id=state.target_id,
        qas=state.qa_pairs(),
        status=state.outcome,
        guess_id=state.guess_id,
    )


# ---------------------------------------------------------------------------
# self-play


def self_play(
    game: GameRecord,
    qgen: QGenModel,
    oracle: OracleModel,
    guesser: GuesserModel,
    n_questions: int = 5,
    beam_width: Optional[int] = None,
) -> GameRecord:
    """Play one game with the trained triple: the generator asks, the oracle
    answers with the true target's features, n_questions rounds, then the
    guesser picks.  Deterministic given the checkpoints and beam settings."""
    state = SessionState.new(game.image, game.objects, game.target_id)
    for _ in range(n_questions):
        tokens = qgen.generate(state.qa_pairs(), game.image, width=beam_width)
        text = qgen.question_text(tokens) or "?"
        state = apply_event(state, AskQuestion(text))
        answer = oracle.answer(text, game.target, game.image)
        state = apply_event(state, GiveAnswer(answer))
    state = apply_event(state, ReadyToGuess())
    index, _ = guesser.predict(
        GameRecord(
            game_id=game.game_id,
            image=game.image,
            objects=game.objects,
            target_id=game.target_id,
            qas=state.qa_pairs(),
        )
    )
    state = apply_event(state, Guess(game.objects[index].object_id))
    return state_to_record(state, game.game_id)


@dataclass(frozen=True)
class PipelineResult:
    error: float
    records: Tuple[GameRecord, ...]

    @property
    def success_rate(self) -> float:
        return 1.0 - self.error


def eval_pipeline(
    games: Sequence[GameRecord],
    qgen: QGenModel,
    oracle: OracleModel,
    guesser: GuesserModel,
    n_questions: int = 5,
    beam_width: Optional[int] = None,
) -> PipelineResult:
    """Guesser error under generated dialogues (human QAs are ignored)."""
    if not games:
        raise ValueError("empty evaluation split")
    records = tuple(
        self_play(g, qgen, oracle, guesser, n_questions=n_questions, beam_width=beam_width)
        for g in games
    )
    wrong = sum(1 for r in records if r.status is not Status.SUCCESS)
    return PipelineResult(error=wrong / len(records), records=records)


def eval_human_dialogues(games: Sequence[GameRecord], guesser: GuesserModel) -> float:
    """Guesser error when fed the recorded human dialogues."""
    if not games:
        raise ValueError("empty evaluation split")
    wrong = sum(1 for g in games if guesser.predict(g)[0] != g.target_index())
    return wrong / len(games)


def random_guess_error(games: Sequence[GameRecord]) -> float:
    """Analytic error of a uniform random guess: 1 - mean(1/K)."""
    if not games:
        raise ValueError("empty evaluation split")
    return 1.0 - float(np.mean([1.0 / g.object_count for g in games]))


def measured_random_guess_error(games: Sequence[GameRecord], seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    wrong = sum(
        1 for g in games if int(rng.integers(g.object_count)) != g.target_index()
    )
    return wrong / len(games)
