import io

import numpy as np
import pytest

from guesswhat.agents import EncoderKind, GuesserConfig, GuesserModel, OracleConfig, OracleModel, QGenConfig, QGenModel
from guesswhat.core import Answer, GameRecord, Status
from guesswhat.data import build_vocab, parse_games, write_games
from guesswhat.engine import (
    AskQuestion,
    GiveAnswer,
    Guess,
    Phase,
    ProtocolError,
    ReadyToGuess,
    SessionState,
    abandon,
    apply_event,
    eval_human_dialogues,
    eval_pipeline,
    measured_random_guess_error,
    random_guess_error,
    self_play,
    state_to_record,
)
from guesswhat.synthetic import scripted_dialogue_corpus

from conftest import make_game


@pytest.fixture
def fresh_state():
    game = make_game(n_objects=4)
    return SessionState.new(game.image, game.objects, game.target_id)


class TestStateMachine:
    def test_ask_moves_to_awaiting(self, fresh_state):
        state = apply_event(fresh_state, AskQuestion("is it red ?"))
        assert state.phase is Phase.AWAITING_ANSWER
        assert len(state.transcript) == 1
        assert state.transcript[0].answer is None  # pending

    def test_answer_completes_pair(self, fresh_state):
        state = apply_event(fresh_state, AskQuestion("is it red ?"))
        state = apply_event(state, GiveAnswer(Answer.NO))
        assert state.phase is Phase.QUESTIONING
        assert state.qa_pairs()[0].answer is Answer.NO

    def test_guess_target_succeeds(self, fresh_state):
        state = apply_event(fresh_state, AskQuestion("q ?"))
        state = apply_event(state, GiveAnswer(Answer.YES))
        state = apply_event(state, ReadyToGuess())
        state = apply_event(state, Guess(fresh_state.target_id))
        assert state.phase is Phase.FINISHED
        assert state.outcome is Status.SUCCESS

    def test_wrong_guess_fails(self, fresh_state):
        state = apply_event(fresh_state, AskQuestion("q ?"))
        state = apply_event(state, GiveAnswer(Answer.YES))
        state = apply_event(state, ReadyToGuess())
        other = next(o.object_id for o in state.objects if o.object_id != state.target_id)
        state = apply_event(state, Guess(other))
        assert state.outcome is Status.FAILURE

    def test_answer_without_question_rejected(self, fresh_state):
        with pytest.raises(ProtocolError):
            apply_event(fresh_state, GiveAnswer(Answer.YES))

    def test_ready_requires_an_answered_question(self, fresh_state):
        with pytest.raises(ProtocolError):
            apply_event(fresh_state, ReadyToGuess())
        state = apply_event(fresh_state, AskQuestion("q ?"))
        with pytest.raises(ProtocolError):
            apply_event(state, ReadyToGuess())

    def test_guess_outside_guessing_phase_rejected(self, fresh_state):
        with pytest.raises(ProtocolError):
            apply_event(fresh_state, Guess(fresh_state.target_id))

    def test_unknown_object_rejected(self, fresh_state):
        state = apply_event(fresh_state, AskQuestion("q ?"))
        state = apply_event(state, GiveAnswer(Answer.YES))
        state = apply_event(state, ReadyToGuess())
        with pytest.raises(ProtocolError):
            apply_event(state, Guess(999999))

    def test_finished_is_terminal(self, fresh_state):
        state = apply_event(fresh_state, AskQuestion("q ?"))
        state = apply_event(state, GiveAnswer(Answer.YES))
        state = apply_event(state, ReadyToGuess())
        state = apply_event(state, Guess(fresh_state.target_id))
        for event in (AskQuestion("more ?"), GiveAnswer(Answer.NO), ReadyToGuess(), Guess(1)):
            with pytest.raises(ProtocolError):
                apply_event(state, event)

    def test_only_guess_finishes_with_outcome(self, fresh_state):
        # walking every legal non-guess event never reaches an outcome
        state = fresh_state
        for _ in range(3):
            state = apply_event(state, AskQuestion("q ?"))
            assert state.phase is not Phase.FINISHED
            state = apply_event(state, GiveAnswer(Answer.NO))
            assert state.outcome is None
        state = apply_event(state, ReadyToGuess())
        assert state.phase is Phase.GUESSING and state.outcome is None

    def test_abandon_marks_incomplete(self, fresh_state):
        state = abandon(fresh_state)
        assert state.phase is Phase.FINISHED
        assert state.outcome is Status.INCOMPLETE
        record = state_to_record(state, game_id=7)
        assert record.status is Status.INCOMPLETE
        assert record.guess_id is None

    def test_empty_question_rejected(self, fresh_state):
        with pytest.raises(ProtocolError):
            apply_event(fresh_state, AskQuestion("   "))


class FixedQGen:
    """Degenerate generator: always the same question."""

    def __init__(self, text="is it red ?"):
        self.text = text

    def generate(self, qas, image, width=None, max_len=None):
        return list(range(len(self.text.split())))

    def question_text(self, tokens):
        return self.text


class FixedOracle:
    def __init__(self, answer=Answer.NO):
        self._answer = answer

    def answer(self, question, obj, image):
        return self._answer


def build_toy_models(games, seed=0):
    vocab = build_vocab(games, min_count=1)
    oracle = OracleModel(
        OracleConfig(features=frozenset({"question", "category", "spatial"}),
                     vocab_size=vocab.size, n_categories=12, word_dim=4, lstm_hidden=6,
                     category_dim=4, mlp_hidden=6, d_img=4),
        vocab, seed=seed)
    guesser = GuesserModel(
        GuesserConfig(vocab_size=vocab.size, encoder=EncoderKind.LSTM, n_categories=12,
                      word_dim=4, lstm_hidden=6, category_dim=4, obj_mlp_hidden=6, d_img=4),
        vocab, seed=seed)
    qgen = QGenModel(
        QGenConfig(vocab_size=vocab.size, word_dim=4, utterance_hidden=6, context_hidden=6,
                   decoder_hidden=6, d_img=4, max_question_len=6, beam_width=2),
        vocab, seed=seed)
    return qgen, oracle, guesser


class TestSelfPlay:
    def test_degenerate_pipeline_shape(self):
        games = scripted_dialogue_corpus(3, seed=0)
        _, _, guesser = build_toy_models(games)
        record = self_play(games[0], FixedQGen(), FixedOracle(), guesser, n_questions=5)
        assert len(record.qas) == 5
        assert all(qa.question == "is it red ?" for qa in record.qas)
        assert all(qa.answer is Answer.NO for qa in record.qas)
        assert record.guess_id in {o.object_id for o in record.objects}
        assert record.status in (Status.SUCCESS, Status.FAILURE)

    def test_records_valid_and_round_trip(self):
        games = scripted_dialogue_corpus(4, seed=1)
        qgen, oracle, guesser = build_toy_models(games)
        result = eval_pipeline(games, qgen, oracle, guesser, n_questions=3, beam_width=2)
        buf = io.StringIO()
        write_games(result.records, buf)
        reparsed = parse_games(io.StringIO(buf.getvalue()))
        assert tuple(reparsed) == result.records

    def test_deterministic(self):
        games = scripted_dialogue_corpus(3, seed=2)
        qgen, oracle, guesser = build_toy_models(games)
        a = eval_pipeline(games, qgen, oracle, guesser, n_questions=3, beam_width=2)
        b = eval_pipeline(games, qgen, oracle, guesser, n_questions=3, beam_width=2)
        assert a.records == b.records

    def test_single_object_game_never_errs(self):
        game = make_game(n_objects=1, qas=(("q ?", Answer.YES),))
        games = [game]
        qgen, oracle, guesser = build_toy_models(scripted_dialogue_corpus(2, seed=0))
        result = eval_pipeline(games, qgen, oracle, guesser, n_questions=2, beam_width=2)
        assert result.error == 0.0


class TestRandomBaseline:
    def test_analytic_value(self):
        games = [make_game(game_id=i, n_objects=k) for i, k in enumerate([2, 4, 4, 8])]
        expected = 1.0 - np.mean([1 / 2, 1 / 4, 1 / 4, 1 / 8])
        assert random_guess_error(games) == pytest.approx(expected, abs=1e-12)

    def test_measured_converges(self):
        games = [make_game(game_id=i, n_objects=4) for i in range(2000)]
        measured = measured_random_guess_error(games, seed=0)
        # 3-sigma binomial band around 0.75
        sigma = np.sqrt(0.75 * 0.25 / len(games))
        assert abs(measured - 0.75) <= 3 * sigma

    def test_human_dialogue_mode(self):
        games = scripted_dialogue_corpus(5, seed=3)
        _, _, guesser = build_toy_models(games)
        err = eval_human_dialogues(games, guesser)
        assert 0.0 <= err <= 1.0

    def test_empty_split_rejected(self):
        with pytest.raises(ValueError):
            random_guess_error([])
