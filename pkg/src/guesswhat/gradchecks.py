"""Finite-difference verification of every operator and every full model.

Each check builds a tiny scalar-valued function of trainable tensors and
compares reverse-mode gradients against central differences.  Inputs stay
away from the relu kink so the numeric derivative is well defined."""

from __future__ import annotations

from typing import Callable, Dict

import numpy as np

from . import diff
from .agents import (
    EncoderKind,
    GuesserConfig,
    GuesserModel,
    OracleConfig,
    OracleModel,
    QGenConfig,
    QGenModel,
)
from .data import build_vocab
from .diff import Parameters, gradcheck, init_lstm, lstm_cell, param, tensor
from .synthetic import category_side_corpus, parity_answer_corpus, scripted_dialogue_corpus


def _away_from_zero(rng: np.random.Generator, shape) -> np.ndarray:
    x = rng.uniform(0.1, 1.0, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


def op_checks(seed: int = 0) -> Dict[str, Callable[[], float]]:
    rng = np.random.default_rng(seed)

    def r(shape):
        return _away_from_zero(rng, shape)

    checks: Dict[str, Callable[[], float]] = {}

    def check(name):
        def register(builder):
            checks[name] = builder
            return builder
        return register

    @check("matmul")
    def _():
        a, b = param(r((3, 4))), param(r((4, 2)))
        return gradcheck(lambda: diff.sum_all(diff.matmul(a, b)), [a, b])

    @check("matmul_vec")
    def _():
        a, b = param(r(4)), param(r((4, 3)))
        return gradcheck(lambda: diff.sum_all(diff.matmul(a, b)), [a, b])

    @check("add")
    def _():
        a, b = param(r((3, 3))), param(r((3, 3)))
        return gradcheck(lambda: diff.sum_all(diff.mul(diff.add(a, b), diff.add(a, b))), [a, b])

    @check("add_bias")
    def _():
        a, b = param(r((4, 3))), param(r(3))
        return gradcheck(lambda: diff.sum_all(diff.tanh(diff.add(a, b))), [a, b])

    @check("mul")
    def _():
        a, b = param(r((2, 5))), param(r((2, 5)))
        return gradcheck(lambda: diff.sum_all(diff.mul(a, b)), [a, b])

    @check("concat")
    def _():
        a, b = param(r((2, 3))), param(r((2, 2)))
        return gradcheck(lambda: diff.sum_all(diff.sigmoid(diff.concat([a, b], axis=1))), [a, b])

    @check("embedding_lookup")
    def _():
        table = param(r((6, 3)))
        ids = np.array([0, 2, 2, 5])  # repeated row exercises scatter-add
        return gradcheck(lambda: diff.sum_all(diff.tanh(diff.embedding_lookup(table, ids))), [table])

    @check("sigmoid")
    def _():
        a = param(r((3, 4)))
        return gradcheck(lambda: diff.sum_all(diff.sigmoid(a)), [a])

    @check("tanh")
    def _():
        a = param(r((3, 4)))
        return gradcheck(lambda: diff.sum_all(diff.tanh(a)), [a])

    @check("relu")
    def _():
        a = param(r((3, 4)))
        return gradcheck(lambda: diff.sum_all(diff.relu(a)), [a])

    @check("softmax")
    def _():
        a = param(r((2, 5)))
        w = tensor(r((2, 5)))
        return gradcheck(lambda: diff.sum_all(diff.mul(diff.softmax(a, axis=1), w)), [a])

    @check("log")
    def _():
        a = param(np.abs(r((3, 3))) + 0.5)
        return gradcheck(lambda: diff.sum_all(diff.log(a)), [a])

    @check("slice")
    def _():
        a = param(r((3, 6)))
        return gradcheck(
            lambda: diff.sum_all(diff.mul(diff.slice_axis(a, 1, 1, 4), diff.slice_axis(a, 1, 2, 5))),
            [a],
        )

    @check("sum_axis")
    def _():
        a = param(r((3, 4)))
        return gradcheck(lambda: diff.sum_all(diff.tanh(diff.sum_axis(a, 0))), [a])

    @check("reshape")
    def _():
        a = param(r((2, 6)))
        return gradcheck(lambda: diff.sum_all(diff.tanh(diff.reshape(a, (3, 4)))), [a])

    @check("dot")
    def _():
        a, b = param(r(5)), param(r(5))
        return gradcheck(lambda: diff.dot(a, b), [a, b])

    @check("cross_entropy_vector")
    def _():
        logits = param(r(4))
        return gradcheck(lambda: diff.cross_entropy(logits, 2), [logits])

    @check("cross_entropy_masked")
    def _():
        logits = param(r((3, 4)))
        targets = np.array([1, 0, 3])
        mask = np.array([1.0, 0.0, 1.0])
        return gradcheck(lambda: diff.cross_entropy(logits, targets, mask=mask), [logits])

    @check("linear_cross_entropy")
    def _():
        x = tensor(r((3, 4)))
        w, b = param(r((4, 5))), param(r(5))
        targets = np.array([0, 4, 2])
        return gradcheck(
            lambda: diff.cross_entropy(diff.add(diff.matmul(x, w), b), targets), [w, b]
        )

    @check("lstm_cell")
    def _():
        params = Parameters()
        lstm = init_lstm(params, "cell", 3, 4, np.random.default_rng(seed + 1))
        x = tensor(r((2, 3)))
        h0, c0 = diff.lstm_zero_state(2, 4)

        def fn():
            h, c = lstm_cell(x, h0, c0, lstm)
            h2, _ = lstm_cell(x, h, c, lstm)
            return diff.sum_all(h2)

        return gradcheck(fn, params.tensors())

    return checks


def model_checks(seed: int = 0) -> Dict[str, Callable[[], float]]:
    # Step sizes balance truncation against float64 roundoff on the deep
    # graphs: the all-smooth generator tolerates 1e-3; models with a relu MLP
    # stay at 3e-4 so no kink falls inside the stencil.
    def check_oracle():
        games = parity_answer_corpus(3, seed=seed)
        vocab = build_vocab(games, min_count=1)
        config = OracleConfig(
            features=frozenset({"question", "category", "spatial", "crop", "image"}),
            vocab_size=vocab.size,
            n_categories=12,
            word_dim=3,
            lstm_hidden=4,
            category_dim=3,
            mlp_hidden=5,
            d_img=3,
        )
        model = OracleModel(config, vocab, seed=seed)
        samples = [(g.qas[0], g.target, g.image) for g in games]
        batch = model.make_batch(samples)
        return gradcheck(lambda: model.loss(batch), model.params.tensors(), epsilon=3e-4)

    def check_guesser_lstm():
        games = category_side_corpus(3, seed=seed)
        vocab = build_vocab(games, min_count=1)
        config = GuesserConfig(
            vocab_size=vocab.size,
            encoder=EncoderKind.LSTM,
            use_image=True,
            n_categories=12,
            word_dim=3,
            lstm_hidden=4,
            category_dim=3,
            obj_mlp_hidden=5,
            d_img=3,
        )
        model = GuesserModel(config, vocab, seed=seed)
        return gradcheck(lambda: model.batch_loss(games), model.params.tensors(), epsilon=3e-4)

    def check_guesser_hred():
        games = scripted_dialogue_corpus(3, seed=seed)
        vocab = build_vocab(games, min_count=1)
        config = GuesserConfig(
            vocab_size=vocab.size,
            encoder=EncoderKind.HRED,
            n_categories=12,
            word_dim=3,
            utterance_hidden=4,
            context_hidden=4,
            category_dim=3,
            obj_mlp_hidden=5,
            d_img=3,
        )
        model = GuesserModel(config, vocab, seed=seed)
        return gradcheck(lambda: model.batch_loss(games), model.params.tensors(), epsilon=3e-4)

    def check_qgen():
        games = scripted_dialogue_corpus(3, seed=seed)
        vocab = build_vocab(games, min_count=1)
        config = QGenConfig(
            vocab_size=vocab.size,
            word_dim=3,
            utterance_hidden=4,
            context_hidden=4,
            decoder_hidden=4,
            d_img=3,
        )
        model = QGenModel(config, vocab, seed=seed)
        return gradcheck(lambda: model.batch_loss(games), model.params.tensors(), epsilon=1e-3)

    return {
        "oracle": check_oracle,
        "guesser_lstm": check_guesser_lstm,
        "guesser_hred": check_guesser_hred,
        "qgen": check_qgen,
    }


def run_all(seed: int = 0) -> Dict[str, float]:
    """Name -> max relative error, for every op and every model."""
    results = {}
    for name, runner in {**op_checks(seed), **model_checks(seed)}.items():
        results[name] = runner()
    return results
