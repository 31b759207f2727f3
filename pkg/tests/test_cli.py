import json

import pytest

from guesswhat import cli, data
from guesswhat.synthetic import parity_answer_corpus, scripted_dialogue_corpus


@pytest.fixture(scope="module")
def corpus_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "games.jsonl"
    data.write_games(scripted_dialogue_corpus(30, seed=0), path)
    return str(path)


class TestStats:
    def test_table(self, corpus_file, capsys):
        assert cli.main(["stats", "--input", corpus_file]) == 0
        out = capsys.readouterr().out
        assert out.startswith("metric\tfull\tfinished\tsuccess")
        assert "n_dialogues\t30\t30\t30" in out

    def test_answers_json(self, corpus_file, capsys):
        assert cli.main(["stats", "--input", corpus_file, "--metric", "answers",
                         "--format", "json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["yes"] + payload["no"] + payload["na"] == pytest.approx(1.0)

    def test_histogram(self, corpus_file, capsys):
        assert cli.main(["stats", "--input", corpus_file, "--metric", "histogram"]) == 0
        assert "5\t30" in capsys.readouterr().out


class TestSplit:
    def test_writes_assignment(self, corpus_file, tmp_path, capsys):
        out = tmp_path / "split.tsv"
        assert cli.main(["split", "--input", corpus_file, "--seed", "4",
                         "--output", str(out)]) == 0
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 30
        counts = json.loads(capsys.readouterr().out)
        assert counts["train"] == 21

    def test_deterministic(self, corpus_file, capsys):
        cli.main(["split", "--input", corpus_file, "--seed", "4"])
        first = capsys.readouterr().out
        cli.main(["split", "--input", corpus_file, "--seed", "4"])
        assert capsys.readouterr().out == first


@pytest.fixture(scope="module")
def oracle_ckpt(corpus_file, tmp_path_factory):
    out = tmp_path_factory.mktemp("ckpt") / "oracle.ckpt"
    rc = cli.main([
        "train-oracle", "--input", corpus_file, "--out", str(out),
        "--features", "question,category,spatial",
        "--epochs", "2", "--batch-size", "16", "--min-count", "1",
        "--word-dim", "8", "--hidden", "12", "--n-categories", "12",
        "--d-img", "4", "--seed", "0",
    ])
    assert rc == 0
    return str(out)


class TestTrainingAndEval:
    def test_train_oracle_outputs(self, oracle_ckpt):
        assert json.loads(open(oracle_ckpt + ".manifest.json").read())["kind"] == "oracle"
        metrics = open(oracle_ckpt + ".metrics.tsv").read().splitlines()
        assert metrics[0] == "epoch\ttrain_err\tvalid_err"
        assert len(metrics) >= 2

    def test_eval_checkpoint(self, oracle_ckpt, corpus_file, capsys):
        assert cli.main(["eval", "--checkpoint", oracle_ckpt, "--input", corpus_file,
                         "--split", "test"]) == 0
        assert "oracle error" in capsys.readouterr().out

    def test_eval_dominant_baseline(self, corpus_file, capsys):
        assert cli.main(["eval", "--input", corpus_file, "--baseline", "dominant",
                         "--split", "all"]) == 0
        assert "dominant-class" in capsys.readouterr().out

    def test_eval_random_baseline(self, corpus_file, capsys):
        assert cli.main(["eval", "--input", corpus_file, "--baseline", "random",
                         "--split", "all"]) == 0
        out = capsys.readouterr().out
        assert "analytic 0.7500" in out

    def test_eval_requires_checkpoint_or_baseline(self, corpus_file):
        with pytest.raises(SystemExit):
            cli.main(["eval", "--input", corpus_file])

    def test_qgen_oracle_mode_needs_checkpoint(self, corpus_file, tmp_path):
        with pytest.raises(SystemExit, match="oracle-checkpoint"):
            cli.main(["train-qgen", "--input", corpus_file, "--mode", "oracle",
                      "--out", str(tmp_path / "q.ckpt")])


class TestSelfplayWiring:
    def test_end_to_end(self, corpus_file, tmp_path, capsys):
        common = ["--input", corpus_file, "--epochs", "1", "--batch-size", "16",
                  "--min-count", "1", "--word-dim", "8", "--hidden", "12",
                  "--n-categories", "12", "--d-img", "4", "--seed", "0"]
        oracle = tmp_path / "o.ckpt"
        guesser = tmp_path / "g.ckpt"
        qgen = tmp_path / "q.ckpt"
        assert cli.main(["train-oracle", "--out", str(oracle),
                         "--features", "category"] + common) == 0
        assert cli.main(["train-guesser", "--out", str(guesser)] + common) == 0
        assert cli.main(["train-qgen", "--out", str(qgen), "--beam", "2",
                         "--max-question-len", "6"] + common) == 0
        generated = tmp_path / "generated.jsonl"
        rc = cli.main(["selfplay", "--qgen", str(qgen), "--oracle", str(oracle),
                       "--guesser", str(guesser), "--input", corpus_file,
                       "--n", "4", "--questions", "3", "--beam", "2",
                       "--out", str(generated), "--seed", "0"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "success rate" in out
        records = data.parse_games(str(generated))
        assert len(records) == 4
        assert all(len(r.qas) == 3 for r in records)


class TestErrors:
    def test_unknown_flag_rejected(self, corpus_file):
        with pytest.raises(SystemExit):
            cli.main(["stats", "--input", corpus_file, "--bogus"])

    def test_missing_file_is_one_line_error(self, capsys):
        assert cli.main(["stats", "--input", "/nonexistent/games.jsonl"]) == 1
        err = capsys.readouterr().err
        assert err.startswith("error: ")
        assert err.count("\n") == 1

    def test_help_lists_subcommands(self, capsys):
        with pytest.raises(SystemExit):
            cli.main(["--help"])
        out = capsys.readouterr().out
        for name in ("stats", "split", "train-oracle", "train-guesser", "train-qgen",
                     "eval", "selfplay", "gradcheck", "serve"):
            assert name in out
