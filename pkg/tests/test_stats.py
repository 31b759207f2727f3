import numpy as np
import pytest

from guesswhat import stats
from guesswhat.core import Answer, Status
from guesswhat.stats import (
    SubsetFilter,
    answer_distribution,
    answer_evolution,
    corpus_stats,
    questions_histogram,
    questions_vs_object_count,
    success_breakdowns,
    word_frequencies_by_index,
    word_stats,
)

from conftest import make_game


@pytest.fixture
def two_game_fixture():
    success = make_game(game_id=1, status=Status.SUCCESS,
                        qas=(("q1 ?", Answer.YES), ("q2 ?", Answer.NO)))
    failure = make_game(game_id=2, status=Status.FAILURE,
                        qas=(("q1 ?", Answer.NO), ("q2 ?", Answer.NO), ("q3 ?", Answer.YES)))
    return [success, failure]


class TestCorpusStats:
    def test_two_game_counts(self, two_game_fixture):
        full = corpus_stats(two_game_fixture, SubsetFilter.FULL)
        assert full.n_dialogues == 2
        assert full.n_questions == 5
        success = corpus_stats(two_game_fixture, SubsetFilter.SUCCESS)
        assert success.n_dialogues == 1
        assert success.n_questions == 2

    def test_subset_monotonicity(self, small_corpus):
        reports = {s: corpus_stats(small_corpus, s) for s in SubsetFilter}
        for field in ("n_dialogues", "n_questions", "n_words", "vocab_size",
                      "vocab_size_min3", "n_images", "n_objects"):
            assert getattr(reports[SubsetFilter.SUCCESS], field) <= getattr(
                reports[SubsetFilter.FINISHED], field
            ) <= getattr(reports[SubsetFilter.FULL], field)

    def test_empty_subset_flags_rates_absent(self):
        incomplete = [make_game(status=Status.INCOMPLETE)]
        report = corpus_stats(incomplete, SubsetFilter.SUCCESS)
        assert report.n_dialogues == 0
        assert report.answer_fractions is None
        assert report.avg_questions_per_dialogue is None
        assert report.success_rate is None

    def test_word_counting_modes(self, two_game_fixture):
        questions_only = corpus_stats(two_game_fixture, SubsetFilter.FULL)
        with_answers = corpus_stats(two_game_fixture, SubsetFilter.FULL, count_answers_as_words=True)
        assert with_answers.n_words == questions_only.n_words + 5

    def test_success_rate(self, two_game_fixture):
        report = corpus_stats(two_game_fixture, SubsetFilter.FULL)
        assert report.success_rate == pytest.approx(0.5)


class TestAnswerDistribution:
    def test_hand_count(self):
        game = make_game(qas=(("a ?", Answer.YES), ("b ?", Answer.YES),
                              ("c ?", Answer.NO), ("d ?", Answer.NA)))
        assert answer_distribution([game]) == pytest.approx((0.5, 0.25, 0.25))

    def test_all_yes(self):
        game = make_game(qas=(("a ?", Answer.YES), ("b ?", Answer.YES)))
        assert answer_distribution([game]) == pytest.approx((1.0, 0.0, 0.0))

    def test_empty_subset(self):
        assert answer_distribution([], SubsetFilter.FULL) is None

    def test_sums_to_one(self, small_corpus):
        dist = answer_distribution(small_corpus)
        assert sum(dist) == pytest.approx(1.0, abs=1e-9)


class TestQuestionCounts:
    def test_histogram(self):
        games = [
            make_game(game_id=1, qas=(("a ?", Answer.YES), ("b ?", Answer.NO))),
            make_game(game_id=2, qas=(("a ?", Answer.YES), ("b ?", Answer.NO))),
            make_game(game_id=3, qas=tuple((f"q{i} ?", Answer.YES) for i in range(5))),
        ]
        assert questions_histogram(games) == {2: 2, 5: 1}

    def test_histogram_empty_and_single(self):
        assert questions_histogram([]) == {}
        one = make_game(qas=tuple((f"q{i} ?", Answer.YES) for i in range(7)))
        assert questions_histogram([one]) == {7: 1}

    def test_histogram_totals_dialogue_count(self, small_corpus):
        hist = questions_histogram(small_corpus)
        assert sum(hist.values()) == len(small_corpus)

    def test_mean_by_object_count(self):
        games = [
            make_game(game_id=1, n_objects=3, qas=(("a ?", Answer.YES), ("b ?", Answer.NO))),
            make_game(game_id=2, n_objects=3, qas=tuple((f"q{i} ?", Answer.YES) for i in range(4))),
        ]
        assert questions_vs_object_count(games) == {3: 3.0}

    def test_single_game_mean(self):
        game = make_game(n_objects=4, qas=tuple((f"q{i} ?", Answer.YES) for i in range(6)))
        assert questions_vs_object_count([game]) == {4: 6.0}

    def test_means_bounded_by_observed_lengths(self, small_corpus):
        lengths = [len(g.qas) for g in small_corpus]
        for mean in questions_vs_object_count(small_corpus).values():
            assert min(lengths) <= mean <= max(lengths)


class TestSuccessBreakdowns:
    def test_half_rate_at_k4(self):
        games = [
            make_game(game_id=1, n_objects=4, status=Status.SUCCESS),
            make_game(game_id=2, n_objects=4, status=Status.FAILURE),
        ]
        b = success_breakdowns(games)
        assert b.by_object_count == {4: 0.5}

    def test_all_success(self):
        games = [make_game(game_id=i, n_objects=3 + i, status=Status.SUCCESS) for i in range(3)]
        b = success_breakdowns(games)
        assert all(rate == 1.0 for rate in b.by_object_count.values())
        assert all(rate == 1.0 for rate in b.by_category.values())

    def test_incomplete_games_excluded(self):
        games = [
            make_game(game_id=1, status=Status.SUCCESS),
            make_game(game_id=2, status=Status.INCOMPLETE),
        ]
        b = success_breakdowns(games)
        assert b.by_object_count == {3: 1.0}

    def test_rates_in_unit_interval(self, small_corpus):
        b = success_breakdowns(small_corpus)
        for mapping in (b.by_object_count, b.by_area_decile, b.by_category,
                        b.by_center_cell, b.by_dialogue_length):
            assert all(0.0 <= r <= 1.0 for r in mapping.values())


class TestAnswerEvolution:
    def test_final_yes(self):
        games = [
            make_game(game_id=i, qas=(("a ?", Answer.NO), ("b ?", Answer.YES)))
            for i in range(3)
        ]
        evolution = answer_evolution(games)
        assert evolution[2][-1] == pytest.approx((1.0, 0.0, 0.0))

    def test_two_dialogue_fixture(self):
        games = [
            make_game(game_id=1, qas=(("a ?", Answer.YES), ("b ?", Answer.NO))),
            make_game(game_id=2, qas=(("a ?", Answer.NO), ("b ?", Answer.NO))),
        ]
        evolution = answer_evolution(games)
        assert evolution[2][0] == pytest.approx((0.5, 0.5, 0.0))
        assert evolution[2][1] == pytest.approx((0.0, 1.0, 0.0))

    def test_empty_groups_omitted(self):
        games = [make_game(qas=(("a ?", Answer.YES),))]
        evolution = answer_evolution(games)
        assert set(evolution) == {1}

    def test_rows_sum_to_one(self, small_corpus):
        for rows in answer_evolution(small_corpus).values():
            for row in rows:
                assert sum(row) == pytest.approx(1.0, abs=1e-9)


class TestWordStats:
    def test_three_token_cooccurrence_uniform(self):
        games = [make_game(qas=(("is it red", Answer.YES),))]
        ws = word_stats(games, top_n=10)
        assert set(ws.tokens) == {"is", "it", "red"}
        for i in range(3):
            row = ws.cooccurrence[i]
            assert row[i] == 0.0
            others = [row[j] for j in range(3) if j != i]
            assert others == pytest.approx([0.5, 0.5])

    def test_top_n_larger_than_vocab(self):
        games = [make_game(qas=(("a b", Answer.YES),))]
        ws = word_stats(games, top_n=100)
        assert len(ws.tokens) == 2

    def test_absent_token_frequency_zero(self, small_corpus):
        ws = word_stats(small_corpus, top_n=5)
        assert ws.frequency("zebra") == 0

    def test_rows_l1_normalized(self, small_corpus):
        ws = word_stats(small_corpus, top_n=10)
        for row in ws.cooccurrence:
            total = row.sum()
            assert total == pytest.approx(1.0, abs=1e-9) or total == 0.0

    def test_frequencies_by_index(self):
        games = [
            make_game(game_id=1, qas=(("alpha ?", Answer.YES), ("beta ?", Answer.NO))),
            make_game(game_id=2, qas=(("alpha ?", Answer.NO),)),
        ]
        by_index = word_frequencies_by_index(games, top_n=2)
        assert dict(by_index[0])["alpha"] == 2
        assert dict(by_index[1])["beta"] == 1


def test_render_table(small_corpus):
    reports = {
        "full": corpus_stats(small_corpus, SubsetFilter.FULL),
        "success": corpus_stats(small_corpus, SubsetFilter.SUCCESS),
    }
    text = stats.render_table(reports)
    lines = text.strip().splitlines()
    assert lines[0] == "metric\tfull\tsuccess"
    assert any(line.startswith("n_dialogues\t3\t1") for line in lines)
