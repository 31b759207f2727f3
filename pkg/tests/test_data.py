import gzip
import io
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from guesswhat import data
from guesswhat.core import Answer, Status
from guesswhat.data import (
    NA,
    PAD,
    SPECIAL_TOKENS,
    UNK,
    InsufficientDataError,
    ParseError,
    Vocabulary,
    build_vocab,
    encode,
    game_from_official_dict,
    game_to_dict,
    iter_official_games,
    parse_games,
    read_features,
    split_by_image,
    tokenize,
    write_games,
)

from conftest import make_game


class TestTokenize:
    def test_question_with_punctuation(self):
        assert tokenize("Is it a person?") == ["is", "it", "a", "person", "?"]

    def test_empty(self):
        assert tokenize("") == []

    def test_hyphenated(self):
        assert tokenize("left-hand side") == ["left", "-", "hand", "side"]

    def test_runs_of_symbols(self):
        assert tokenize("what?! really...") == ["what", "?!", "really", "..."]

    @given(st.text())
    def test_tokens_have_no_whitespace_and_are_lowercase(self, text):
        for token in tokenize(text):
            assert token
            assert not any(ch.isspace() for ch in token)
            assert token == token.lower()

    @given(st.lists(st.text(alphabet="abc123", min_size=1), max_size=8))
    def test_idempotent_on_alphanumeric_tokens(self, words):
        once = tokenize(" ".join(words))
        assert tokenize(" ".join(once)) == once


class TestVocabulary:
    def test_min_count_two(self, small_corpus):
        games = [
            make_game(game_id=1, qas=(("is it red ?", Answer.YES),)),
            make_game(game_id=2, qas=(("is it blue ?", Answer.YES),)),
        ]
        vocab = build_vocab(games, min_count=2)
        non_special = set(vocab.id_to_token[len(SPECIAL_TOKENS):])
        assert non_special == {"is", "it", "?"}

    def test_min_count_one_keeps_all(self):
        games = [
            make_game(game_id=1, qas=(("is it red ?", Answer.YES),)),
            make_game(game_id=2, qas=(("is it blue ?", Answer.YES),)),
        ]
        vocab = build_vocab(games, min_count=1)
        assert set(vocab.id_to_token[len(SPECIAL_TOKENS):]) == {"is", "it", "?", "red", "blue"}

    def test_empty_corpus_gives_specials_only(self):
        vocab = build_vocab([], min_count=3)
        assert vocab.id_to_token == SPECIAL_TOKENS

    def test_deterministic_ordering(self):
        games = [
            make_game(game_id=1, qas=(("b a ?", Answer.YES), ("a b ?", Answer.NO))),
        ]
        vocab = build_vocab(games, min_count=1)
        # counts: a=2, b=2, ?=2 -> tie broken lexicographically
        assert vocab.id_to_token[len(SPECIAL_TOKENS):] == ("?", "a", "b")
        again = build_vocab(games, min_count=1)
        assert again.id_to_token == vocab.id_to_token

    def test_encode_known_and_unknown(self):
        games = [make_game(game_id=1, qas=(("is it red ?", Answer.YES),))]
        vocab = build_vocab(games, min_count=1)
        ids = encode("is it red ?", vocab)
        assert len(ids) == 4
        assert all(i >= len(SPECIAL_TOKENS) for i in ids)
        assert encode("complete nonsense", vocab) == [UNK, UNK]
        assert encode("", vocab) == []

    def test_min_count_must_be_positive(self):
        with pytest.raises(ValueError):
            build_vocab([], min_count=0)


class TestRecordIO:
    def test_round_trip(self, small_corpus):
        buf = io.StringIO()
        count = write_games(small_corpus, buf)
        assert count == 3
        parsed = parse_games(io.StringIO(buf.getvalue()))
        assert parsed == small_corpus

    def test_empty_stream(self):
        assert parse_games([]) == []
        buf = io.StringIO()
        assert write_games([], buf) == 0
        assert buf.getvalue() == ""

    def test_line_count_matches(self, small_corpus, tmp_path):
        path = tmp_path / "games.jsonl"
        write_games(small_corpus * 4, path)
        assert len(path.read_text().splitlines()) == 12

    def test_gzip_round_trip(self, small_corpus, tmp_path):
        path = tmp_path / "games.jsonl.gz"
        write_games(small_corpus, path)
        with gzip.open(path, "rt") as fh:
            assert len(fh.readlines()) == 3
        assert parse_games(path) == small_corpus

    def test_parse_error_carries_line_number(self, small_corpus):
        buf = io.StringIO()
        write_games(small_corpus, buf)
        lines = buf.getvalue().splitlines()
        lines[1] = "{not json"
        with pytest.raises(ParseError, match="line 2"):
            parse_games(lines)

    def test_missing_object_reference_rejected(self, small_corpus):
        payload = game_to_dict(small_corpus[0])
        payload["guess_id"] = 424242
        with pytest.raises(ParseError, match="guess_id"):
            parse_games([json.dumps(payload)])

    def test_constructed_fixture_shape(self):
        game = make_game(n_objects=3, qas=(("a ?", Answer.YES), ("b ?", Answer.NO)))
        parsed = parse_games([json.dumps(game_to_dict(game))])
        assert parsed[0].object_count == 3
        assert len(parsed[0].qas) == 2


class TestOfficialAdapter:
    def _official_payload(self):
        return {
            "id": 7,
            "status": "success",
            "image": {"id": 11, "width": 640, "height": 480, "file_name": "img.jpg"},
            "objects": [
                {"id": 1, "category_id": 1, "category": "person", "bbox": [0, 0, 100, 100], "area": 9000.0},
                {"id": 2, "category_id": 3, "category": "car", "bbox": [200, 50, 80, 60], "area": 4000.0},
            ],
            "object_id": 2,
            "qas": [{"question": "Is it a car?", "answer": "Yes", "id": 1}],
        }

    def test_basic_mapping(self):
        game = game_from_official_dict(self._official_payload())
        assert game.game_id == 7
        assert game.target_id == 2
        assert game.status is Status.SUCCESS
        assert game.guess_id == 2  # synthesized for successes
        assert game.qas[0].answer is Answer.YES

    def test_picture_key_and_dict_objects(self):
        payload = self._official_payload()
        payload["picture"] = payload.pop("image")
        payload["objects"] = {str(o["id"]): {k: v for k, v in o.items() if k != "id"}
                              for o in payload["objects"]}
        game = game_from_official_dict(payload)
        assert game.image.image_id == 11
        assert [o.object_id for o in game.objects] == [1, 2]

    def test_failure_gets_synthetic_guess(self):
        payload = self._official_payload()
        payload["status"] = "failure"
        game = game_from_official_dict(payload)
        assert game.status is Status.FAILURE
        assert game.guess_id == 1  # lowest-id non-target

    def test_stream_reader(self):
        lines = [json.dumps(self._official_payload())]
        games = list(iter_official_games(lines))
        assert len(games) == 1


class TestSplit:
    def _corpus(self, n_images):
        return [make_game(game_id=i, image_id=i % n_images) for i in range(2 * n_images)]

    def test_ten_images_rounding(self):
        games = self._corpus(10)
        assignment = split_by_image(games, seed=3)
        counts = {name: len(assignment.images(name)) for name in ("train", "valid", "test")}
        assert counts["train"] == 7
        assert sum(counts.values()) == 10

    def test_determinism(self):
        games = self._corpus(23)
        a = split_by_image(games, seed=11)
        b = split_by_image(games, seed=11)
        assert a.by_image == b.by_image
        c = split_by_image(games, seed=12)
        assert c.by_image != a.by_image

    def test_partition_is_disjoint_and_complete(self):
        games = self._corpus(23)
        assignment = split_by_image(games, seed=0)
        parts = assignment.partition(games)
        assert sum(len(v) for v in parts.values()) == len(games)
        image_sets = [
            {g.image.image_id for g in part} for part in parts.values()
        ]
        assert not (image_sets[0] & image_sets[1])
        assert not (image_sets[0] & image_sets[2])
        assert not (image_sets[1] & image_sets[2])

    def test_games_follow_their_image(self):
        games = self._corpus(10)
        assignment = split_by_image(games, seed=5)
        for game in games:
            assert assignment.split_of(game) == assignment.by_image[game.image.image_id]

    def test_too_few_images(self):
        games = self._corpus(2)
        with pytest.raises(InsufficientDataError):
            split_by_image(games, seed=0)

    def test_bad_ratios(self):
        with pytest.raises(ValueError):
            split_by_image(self._corpus(10), ratios=(0.5, 0.2, 0.2), seed=0)


class TestFeatureSidecar:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        feats = {5: rng.normal(size=16).astype(np.float32), 9: rng.normal(size=16).astype(np.float32)}
        path = tmp_path / "feats.bin"
        data.write_features(feats, 16, path)
        loaded = read_features(path, 16)
        assert set(loaded) == {5, 9}
        np.testing.assert_allclose(loaded[5], feats[5], rtol=0, atol=0)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
        with pytest.raises(ValueError, match="magic"):
            read_features(path, 4)

    def test_wrong_width_detected(self, tmp_path):
        path = tmp_path / "feats.bin"
        data.write_features({1: np.zeros(8, dtype=np.float32)}, 8, path)
        with pytest.raises(ValueError, match="truncated"):
            read_features(path, 5)

    def test_attach_features(self, small_corpus):
        game = small_corpus[0]
        image_vec = np.arange(4.0)
        crop_vec = np.ones(4)
        attached = data.attach_features(
            small_corpus,
            image_features={game.image.image_id: image_vec},
            crop_features={game.objects[0].object_id: crop_vec},
        )
        assert attached[0].image.features == tuple(image_vec)
        assert attached[0].objects[0].crop_features == tuple(crop_vec)
        assert attached[0].objects[1].crop_features is None
        assert attached[1].image.features is None
        # originals untouched
        assert game.image.features is None
