"""The three baseline agents: oracle, guesser, and question generator.

All share the same building blocks: word embeddings + LSTM encoders on the
differentiation core, with either a flat dialogue encoding (questions and
answer tokens as one token stream) or a hierarchical one (an utterance RNN
feeding a dialogue-level context RNN).  Training goes through the graph ops;
decoding and prediction run the identical arithmetic on plain numpy buffers,
and tests pin both paths together.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import diff
from .core import Answer, GameRecord, ImageMeta, ObjectRef, QAPair, spatial_features
from .data import ANSWER_TOKEN, PAD, START, STOP, Vocabulary
from .diff import (
    LstmWeights,
    Parameters,
    Tensor,
    add,
    concat,
    cross_entropy,
    embedding_lookup,
    glorot_uniform,
    init_lstm,
    lstm_cell,
    lstm_zero_state,
    matmul,
    mul,
    relu,
    scale,
    slice_axis,
    tanh,
    tensor,
)

# Answer class indices shared by the oracle head and the dominant-class baseline.
ANSWER_CLASSES = (Answer.YES, Answer.NO, Answer.NA)
ANSWER_INDEX = {a: i for i, a in enumerate(ANSWER_CLASSES)}

# Concatenation order of the oracle input embeddings (fixed for checkpoint
# stability).
ORACLE_FEATURES = ("image", "crop", "spatial", "category", "question")

SPATIAL_DIM = 8


class ConfigError(ValueError):
    pass


def image_vector(image: ImageMeta, d_img: int) -> np.ndarray:
    if image.features is None:
        return np.zeros(d_img)
    return np.asarray(image.features, dtype=np.float64)


def crop_vector(obj: ObjectRef, d_img: int) -> np.ndarray:
    if obj.crop_features is None:
        return np.zeros(d_img)
    return np.asarray(obj.crop_features, dtype=np.float64)


def flatten_dialogue(qas: Sequence[QAPair], vocab: Vocabulary) -> List[int]:
    """Dialogue as one flat token stream: question tokens, then the answer as a
    special token, for each pair in order."""
    ids: List[int] = []
    for qa in qas:
        ids.extend(vocab.encode(qa.question))
        ids.append(ANSWER_TOKEN[qa.answer])
    return ids


def pair_utterances(qas: Sequence[QAPair], vocab: Vocabulary) -> List[List[int]]:
    """One utterance per QA pair: the question tokens followed by the answer token."""
    return [vocab.encode(qa.question) + [ANSWER_TOKEN[qa.answer]] for qa in qas]


def pad_sequences(seqs: Sequence[Sequence[int]]) -> Tuple[np.ndarray, np.ndarray]:
    """Pad with PAD to the max length; returns (ids, lengths)."""
    n = len(seqs)
    width = max((len(s) for s in seqs), default=0)
    ids = np.full((n, max(width, 1)), PAD, dtype=np.int64)
    lengths = np.zeros(n, dtype=np.int64)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
        lengths[i] = len(s)
    return ids, lengths


# ---------------------------------------------------------------------------
# graph-side encoders


def encode_token_batch(
    table: Tensor, lstm: LstmWeights, ids: np.ndarray, lengths: np.ndarray
) -> Tensor:
    """Final LSTM state over padded token rows; finished rows are frozen."""
    batch, width = ids.shape
    hidden = lstm.hidden
    h, c = lstm_zero_state(batch, hidden)
    for t in range(width):
        if t >= lengths.max():
            break
        x = embedding_lookup(table, ids[:, t])
        h_new, c_new = lstm_cell(x, h, c, lstm)
        if t < lengths.min():
            h, c = h_new, c_new
        else:
            active = (lengths > t).astype(np.float64)
            keep = tensor(np.repeat(active[:, None], hidden, axis=1))
            freeze = tensor(np.repeat(1.0 - active[:, None], hidden, axis=1))
            h = add(mul(h_new, keep), mul(h, freeze))
            c = add(mul(c_new, keep), mul(c, freeze))
    return h


def _np_lstm_step(
    x: np.ndarray, h: np.ndarray, c: np.ndarray, w: LstmWeights
) -> Tuple[np.ndarray, np.ndarray]:
    """Inference twin of lstm_cell on raw buffers (same math, no graph)."""
    hidden = w.hidden
    z = x @ w.wx.data + h @ w.wh.data + w.bias.data
    i = diff._sigmoid_values(z[..., :hidden])
    f = diff._sigmoid_values(z[..., hidden : 2 * hidden])
    g = np.tanh(z[..., 2 * hidden : 3 * hidden])
    o = diff._sigmoid_values(z[..., 3 * hidden :])
    c_new = f * c + i * g
    return o * np.tanh(c_new), c_new


def _np_encode_tokens(table: Tensor, lstm: LstmWeights, ids: Sequence[int]) -> np.ndarray:
    h = np.zeros((1, lstm.hidden))
    c = np.zeros((1, lstm.hidden))
    for token in ids:
        h, c = _np_lstm_step(table.data[token][None, :], h, c, lstm)
    return h[0]


def _stable_softmax(scores: np.ndarray) -> np.ndarray:
    # Denominator summed in sorted order so element order cannot perturb it.
    exps = np.exp(scores - scores.max())
    return exps / np.sort(exps).sum()


# ---------------------------------------------------------------------------
# oracle


@dataclass(frozen=True)
class OracleConfig:
    """Which input embeddings feed the answer MLP, and their sizes."""

    features: frozenset
    vocab_size: int
    n_categories: int = 100
    word_dim: int = 64
    lstm_hidden: int = 128
    category_dim: int = 64
    mlp_hidden: int = 128
    d_img: int = 1000

    def __post_init__(self):
        feats = frozenset(self.features)
        object.__setattr__(self, "features", feats)
        unknown = feats - set(ORACLE_FEATURES)
        if unknown:
            raise ConfigError(f"unknown oracle features {sorted(unknown)}")
        if not feats:
            raise ConfigError("oracle feature set must be non-empty")

    @property
    def input_dim(self) -> int:
        dims = {
            "image": self.d_img,
            "crop": self.d_img,
            "spatial": SPATIAL_DIM,
            "category": self.category_dim,
            "question": self.lstm_hidden,
        }
        return sum(dims[f] for f in ORACLE_FEATURES if f in self.features)

    def to_meta(self) -> dict:
        return {
            "features": sorted(self.features),
            "vocab_size": self.vocab_size,
            "n_categories": self.n_categories,
            "word_dim": self.word_dim,
            "lstm_hidden": self.lstm_hidden,
            "category_dim": self.category_dim,
            "mlp_hidden": self.mlp_hidden,
            "d_img": self.d_img,
        }

    @classmethod
    def from_meta(cls, meta: dict) -> "OracleConfig":
        meta = dict(meta)
        meta["features"] = frozenset(meta["features"])
        return cls(**meta)


@dataclass
class OracleBatch:
    question_ids: np.ndarray   # (B, T)
    lengths: np.ndarray        # (B,)
    category_ids: np.ndarray   # (B,)
    spatial: np.ndarray        # (B, 8)
    crop: np.ndarray           # (B, d_img)
    image: np.ndarray          # (B, d_img)
    answers: np.ndarray        # (B,) class indices

    def __len__(self) -> int:
        return len(self.answers)


def oracle_samples(games: Iterable[GameRecord]) -> List[Tuple[QAPair, ObjectRef, ImageMeta]]:
    """One training sample per question, paired with the true target object."""
    return [(qa, g.target, g.image) for g in games for qa in g.qas]


class OracleModel:
    """Answers a question about one object with a 3-way distribution.

    Selected per-input embeddings (image, crop, spatial, category, question)
    are concatenated and passed through a single-hidden-layer MLP with a
    softmax head.  Dialogue history is deliberately not an input.
    """

    KIND = "oracle"

    def __init__(self, config: OracleConfig, vocab: Vocabulary, seed: int = 0):
        if config.vocab_size != vocab.size:
            raise ConfigError(f"vocab size {vocab.size} != config {config.vocab_size}")
        self.config = config
        self.vocab = vocab
        self.params = Parameters()
        rng = np.random.default_rng(seed)
        p, c = self.params, config
        if "question" in c.features:
            self.word_table = p.add(
                "word_table", glorot_uniform(rng, (c.vocab_size, c.word_dim), c.vocab_size, c.word_dim)
            )
            self.lstm = init_lstm(p, "question_lstm", c.word_dim, c.lstm_hidden, rng)
        if "category" in c.features:
            self.cat_table = p.add(
                "category_table",
                glorot_uniform(rng, (c.n_categories, c.category_dim), c.n_categories, c.category_dim),
            )
        self.w1 = p.add("mlp.w1", glorot_uniform(rng, (c.input_dim, c.mlp_hidden), c.input_dim, c.mlp_hidden))
        self.b1 = p.add("mlp.b1", np.zeros(c.mlp_hidden))
        self.w2 = p.add("mlp.w2", glorot_uniform(rng, (c.mlp_hidden, 3), c.mlp_hidden, 3))
        self.b2 = p.add("mlp.b2", np.zeros(3))

    # -- batch preparation

    def make_batch(self, samples: Sequence[Tuple[QAPair, ObjectRef, ImageMeta]]) -> OracleBatch:
        c = self.config
        questions = []
        for qa, _, _ in samples:
            ids = self.vocab.encode(qa.question)
            if "question" in c.features and not ids:
                raise ConfigError("empty question with the question feature enabled")
            questions.append(ids)
        ids, lengths = pad_sequences(questions)
        return OracleBatch(
            question_ids=ids,
            lengths=lengths,
            category_ids=np.array([obj.category_id for _, obj, _ in samples], dtype=np.int64),
            spatial=np.array(
                [spatial_features(obj.bbox, img).as_tuple() for _, obj, img in samples]
            ),
            crop=np.array([crop_vector(obj, c.d_img) for _, obj, _ in samples]),
            image=np.array([image_vector(img, c.d_img) for _, _, img in samples]),
            answers=np.array([ANSWER_INDEX[qa.answer] for qa, _, _ in samples], dtype=np.int64),
        )

    # -- graph forward

    def logits(self, batch: OracleBatch) -> Tensor:
        c = self.config
        parts: List[Tensor] = []
        if "image" in c.features:
            parts.append(tensor(batch.image))
        if "crop" in c.features:
            parts.append(tensor(batch.crop))
        if "spatial" in c.features:
            parts.append(tensor(batch.spatial))
        if "category" in c.features:
            parts.append(embedding_lookup(self.cat_table, batch.category_ids))
        if "question" in c.features:
            parts.append(encode_token_batch(self.word_table, self.lstm, batch.question_ids, batch.lengths))
        x = parts[0] if len(parts) == 1 else concat(parts, axis=1)
        hidden = relu(add(matmul(x, self.w1), self.b1))
        return add(matmul(hidden, self.w2), self.b2)

    def loss(self, batch: OracleBatch) -> Tensor:
        return cross_entropy(self.logits(batch), batch.answers)

    def errors(self, batch: OracleBatch) -> Tuple[int, int]:
        predicted = self.logits(batch).data.argmax(axis=1)
        return int((predicted != batch.answers).sum()), len(batch)

    # -- inference

    def distribution(self, question: str, obj: ObjectRef, image: ImageMeta) -> np.ndarray:
        c = self.config
        parts: List[np.ndarray] = []
        if "image" in c.features:
            parts.append(image_vector(image, c.d_img))
        if "crop" in c.features:
            parts.append(crop_vector(obj, c.d_img))
        if "spatial" in c.features:
            parts.append(np.array(spatial_features(obj.bbox, image).as_tuple()))
        if "category" in c.features:
            parts.append(self.cat_table.data[obj.category_id])
        if "question" in c.features:
            ids = self.vocab.encode(question)
            if not ids:
                raise ConfigError("empty question with the question feature enabled")
            parts.append(_np_encode_tokens(self.word_table, self.lstm, ids))
        x = np.concatenate(parts)
        hidden = np.maximum(x @ self.w1.data + self.b1.data, 0.0)
        logits = hidden @ self.w2.data + self.b2.data
        return _stable_softmax(logits)

    def answer(self, question: str, obj: ObjectRef, image: ImageMeta) -> Answer:
        return ANSWER_CLASSES[int(self.distribution(question, obj, image).argmax())]

    # -- persistence

    def save(self, path) -> None:
        diff.save_checkpoint(
            path,
            self.KIND,
            self.params,
            meta={"config": self.config.to_meta(), "vocab": list(self.vocab.id_to_token)},
        )

    @classmethod
    def load(cls, path) -> "OracleModel":
        kind, meta, values = diff.load_checkpoint(path)
        if kind != cls.KIND:
            raise ConfigError(f"checkpoint kind {kind!r}, expected {cls.KIND!r}")
        vocab = Vocabulary(id_to_token=tuple(meta["vocab"]), min_count=1)
        model = cls(OracleConfig.from_meta(meta["config"]), vocab)
        model.params.load_values(values)
        return model


def dominant_class_error(games: Iterable[GameRecord], answer: Answer = Answer.NO) -> float:
    """Error of always answering the majority class; pure counting."""
    total = 0
    wrong = 0
    for game in games:
        for qa in game.qas:
            total += 1
            wrong += int(qa.answer is not answer)
    if total == 0:
        raise ValueError("no questions to evaluate")
    return wrong / total


# ---------------------------------------------------------------------------
# hierarchical dialogue encoder (shared by the HRED guesser and the generator)


class HredEncoder:
    """Utterance RNN whose per-pair vectors feed a dialogue-level context RNN.

    The state after j pairs depends only on the first j pairs; an empty
    dialogue yields the context RNN's zero initial state.
    """

    def __init__(
        self,
        params: Parameters,
        prefix: str,
        word_table: Tensor,
        utterance_hidden: int,
        context_hidden: int,
        rng: np.random.Generator,
    ):
        self.word_table = word_table
        word_dim = word_table.data.shape[1]
        self.utterance_lstm = init_lstm(params, f"{prefix}.utterance", word_dim, utterance_hidden, rng)
        self.context_lstm = init_lstm(params, f"{prefix}.context", utterance_hidden, context_hidden, rng)

    @property
    def context_hidden(self) -> int:
        return self.context_lstm.hidden

    def encode_games(self, utterances_per_game: Sequence[Sequence[Sequence[int]]]) -> List[Tensor]:
        """Batched context states.  Returns states[j] of shape (B, Hc) for
        j = 0..J_max pairs consumed; rows of shorter games freeze."""
        batch = len(utterances_per_game)
        j_max = max((len(u) for u in utterances_per_game), default=0)
        flat: List[Sequence[int]] = [u for game in utterances_per_game for u in game]
        hc = self.context_hidden
        states: List[Tensor] = [tensor(np.zeros((batch, hc)))]
        if j_max == 0:
            return states
        ids, lengths = pad_sequences(flat)
        utt = encode_token_batch(self.word_table, self.utterance_lstm, ids, lengths)
        # one zero row for games that ran out of pairs
        utt = concat([utt, tensor(np.zeros((1, utt.data.shape[1])))], axis=0)
        dummy = len(flat)
        offsets = np.cumsum([0] + [len(u) for u in utterances_per_game])
        h, c = lstm_zero_state(batch, hc)
        for j in range(j_max):
            rows = np.array(
                [
                    offsets[b] + j if j < len(utterances_per_game[b]) else dummy
                    for b in range(batch)
                ],
                dtype=np.int64,
            )
            x = embedding_lookup(utt, rows)
            h_new, c_new = lstm_cell(x, h, c, self.context_lstm)
            active = np.array(
                [1.0 if j < len(utterances_per_game[b]) else 0.0 for b in range(batch)]
            )
            if active.min() == 1.0:
                h, c = h_new, c_new
            else:
                keep = tensor(np.repeat(active[:, None], hc, axis=1))
                freeze = tensor(np.repeat(1.0 - active[:, None], hc, axis=1))
                h = add(mul(h_new, keep), mul(h, freeze))
                c = add(mul(c_new, keep), mul(c, freeze))
            states.append(h)
        return states

    def state_np(self, utterances: Sequence[Sequence[int]]) -> np.ndarray:
        """Inference twin of encode_games for one dialogue prefix."""
        h = np.zeros((1, self.context_hidden))
        c = np.zeros((1, self.context_hidden))
        for utterance in utterances:
            vec = _np_encode_tokens(self.word_table, self.utterance_lstm, utterance)
            h, c = _np_lstm_step(vec[None, :], h, c, self.context_lstm)
        return h[0]


# ---------------------------------------------------------------------------
# guesser


class EncoderKind(enum.Enum):
    LSTM = "lstm"  # dialogue as one flat token sequence
    HRED = "hred"  # utterance RNN + context RNN


@dataclass(frozen=True)
class GuesserConfig:
    vocab_size: int
    encoder: EncoderKind = EncoderKind.LSTM
    use_image: bool = False
    n_categories: int = 100
    word_dim: int = 64
    lstm_hidden: int = 128
    utterance_hidden: int = 128
    context_hidden: int = 128
    category_dim: int = 64
    obj_mlp_hidden: int = 128
    d_img: int = 1000

    @property
    def dialogue_dim(self) -> int:
        base = self.lstm_hidden if self.encoder is EncoderKind.LSTM else self.context_hidden
        return base + (self.d_img if self.use_image else 0)

    def to_meta(self) -> dict:
        meta = {f: getattr(self, f) for f in self.__dataclass_fields__}
        meta["encoder"] = self.encoder.value
        return meta

    @classmethod
    def from_meta(cls, meta: dict) -> "GuesserConfig":
        meta = dict(meta)
        meta["encoder"] = EncoderKind(meta["encoder"])
        return cls(**meta)


class GuesserModel:
    """Picks the target from the candidate list given the dialogue.

    Every object is embedded by one shared MLP over (spatial descriptor,
    category embedding); the dialogue vector is dotted with each object
    embedding and softmaxed over the K candidates.
    """

    KIND = "guesser"

    def __init__(self, config: GuesserConfig, vocab: Vocabulary, seed: int = 0):
        if config.vocab_size != vocab.size:
            raise ConfigError(f"vocab size {vocab.size} != config {config.vocab_size}")
        self.config = config
        self.vocab = vocab
        self.params = Parameters()
        rng = np.random.default_rng(seed)
        p, c = self.params, config
        self.word_table = p.add(
            "word_table", glorot_uniform(rng, (c.vocab_size, c.word_dim), c.vocab_size, c.word_dim)
        )
        if c.encoder is EncoderKind.LSTM:
            self.flat_lstm = init_lstm(p, "dialogue_lstm", c.word_dim, c.lstm_hidden, rng)
            self.hred = None
        else:
            self.hred = HredEncoder(p, "hred", self.word_table, c.utterance_hidden, c.context_hidden, rng)
        self.cat_table = p.add(
            "category_table",
            glorot_uniform(rng, (c.n_categories, c.category_dim), c.n_categories, c.category_dim),
        )
        obj_in = SPATIAL_DIM + c.category_dim
        self.obj_w1 = p.add("obj.w1", glorot_uniform(rng, (obj_in, c.obj_mlp_hidden), obj_in, c.obj_mlp_hidden))
        self.obj_b1 = p.add("obj.b1", np.zeros(c.obj_mlp_hidden))
        self.obj_w2 = p.add(
            "obj.w2", glorot_uniform(rng, (c.obj_mlp_hidden, c.dialogue_dim), c.obj_mlp_hidden, c.dialogue_dim)
        )
        self.obj_b2 = p.add("obj.b2", np.zeros(c.dialogue_dim))

    # -- shared object featurization

    def _object_inputs(self, game: GameRecord) -> Tuple[np.ndarray, np.ndarray]:
        spatial = np.array([spatial_features(o.bbox, game.image).as_tuple() for o in game.objects])
        cats = np.array([o.category_id for o in game.objects], dtype=np.int64)
        return spatial, cats

    def _dialogue_states(self, games: Sequence[GameRecord]) -> Tensor:
        c = self.config
        if c.encoder is EncoderKind.LSTM:
            ids, lengths = pad_sequences([flatten_dialogue(g.qas, self.vocab) for g in games])
            states = encode_token_batch(self.word_table, self.flat_lstm, ids, lengths)
        else:
            states = self.hred.encode_games([pair_utterances(g.qas, self.vocab) for g in games])[-1]
        if c.use_image:
            img = tensor(np.array([image_vector(g.image, c.d_img) for g in games]))
            states = concat([states, img], axis=1)
        return states

    # -- graph forward

    def scores(self, game: GameRecord, dialogue_row: Optional[Tensor] = None) -> Tensor:
        """Unnormalized K-way scores for one game (softmax/cross-entropy follow)."""
        if game.object_count == 0:
            raise ConfigError("guesser needs at least one candidate object")
        if dialogue_row is None:
            dialogue_row = self._dialogue_states([game])
        spatial, cats = self._object_inputs(game)
        obj_in = concat([tensor(spatial), embedding_lookup(self.cat_table, cats)], axis=1)
        hidden = relu(add(matmul(obj_in, self.obj_w1), self.obj_b1))
        emb = add(matmul(hidden, self.obj_w2), self.obj_b2)  # (K, dialogue_dim)
        # row -> vector so matmul produces the (K,) score vector
        row = slice_axis(dialogue_row, 0, 0, 1)
        vec = diff.reshape(row, (dialogue_row.data.shape[1],))
        return matmul(emb, vec)

    def batch_loss(self, games: Sequence[GameRecord]) -> Tensor:
        states = self._dialogue_states(games)
        total: Optional[Tensor] = None
        for b, game in enumerate(games):
            row = slice_axis(states, 0, b, b + 1)
            loss = cross_entropy(self.scores(game, row), game.target_index())
            total = loss if total is None else add(total, loss)
        return scale(total, 1.0 / len(games))

    def batch_errors(self, games: Sequence[GameRecord]) -> Tuple[int, int]:
        wrong = sum(int(self.predict(g)[0] != g.target_index()) for g in games)
        return wrong, len(games)

    # -- inference

    def dialogue_vector(self, qas: Sequence[QAPair], image: ImageMeta) -> np.ndarray:
        c = self.config
        if c.encoder is EncoderKind.LSTM:
            state = np.zeros(c.lstm_hidden)
            ids = flatten_dialogue(qas, self.vocab)
            if ids:
                state = _np_encode_tokens(self.word_table, self.flat_lstm, ids)
        else:
            state = self.hred.state_np(pair_utterances(qas, self.vocab))
        if c.use_image:
            state = np.concatenate([state, image_vector(image, c.d_img)])
        return state

    def distribution(
        self, qas: Sequence[QAPair], objects: Sequence[ObjectRef], image: ImageMeta
    ) -> np.ndarray:
        """K-way prediction distribution.

        Each object is scored independently and the softmax denominator is
        summed in sorted order, so permuting the object list permutes the
        output exactly.
        """
        if not objects:
            raise ConfigError("guesser needs at least one candidate object")
        dialogue = self.dialogue_vector(qas, image)
        scores = np.empty(len(objects))
        for k, obj in enumerate(objects):
            x = np.concatenate(
                [
                    np.array(spatial_features(obj.bbox, image).as_tuple()),
                    self.cat_table.data[obj.category_id],
                ]
            )
            hidden = np.maximum(x @ self.obj_w1.data + self.obj_b1.data, 0.0)
            scores[k] = (hidden @ self.obj_w2.data + self.obj_b2.data) @ dialogue
        return _stable_softmax(scores)

    def predict(self, game: GameRecord) -> Tuple[int, np.ndarray]:
        """(argmax object index, distribution); ties go to the lowest index."""
        dist = self.distribution(game.qas, game.objects, game.image)
        return int(dist.argmax()), dist

    def hred_state(self, qas: Sequence[QAPair]) -> np.ndarray:
        if self.hred is None:
            raise ConfigError("flat-LSTM guesser has no hierarchical state")
        return self.hred.state_np(pair_utterances(qas, self.vocab))

    # -- persistence

    def save(self, path) -> None:
        diff.save_checkpoint(
            path,
            self.KIND,
            self.params,
            meta={"config": self.config.to_meta(), "vocab": list(self.vocab.id_to_token)},
        )

    @classmethod
    def load(cls, path) -> "GuesserModel":
        kind, meta, values = diff.load_checkpoint(path)
        if kind != cls.KIND:
            raise ConfigError(f"checkpoint kind {kind!r}, expected {cls.KIND!r}")
        vocab = Vocabulary(id_to_token=tuple(meta["vocab"]), min_count=1)
        model = cls(GuesserConfig.from_meta(meta["config"]), vocab)
        model.params.load_values(values)
        return model


# ---------------------------------------------------------------------------
# question generator


class QgenMode(enum.Enum):
    GT = "gt"          # condition on the recorded human answers
    ORACLE = "oracle"  # condition on a trained oracle's argmax answers


@dataclass(frozen=True)
class QGenConfig:
    vocab_size: int
    word_dim: int = 64
    utterance_hidden: int = 128
    context_hidden: int = 128
    decoder_hidden: int = 128
    d_img: int = 1000
    max_question_len: int = 12
    beam_width: int = 5

    def to_meta(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}

    @classmethod
    def from_meta(cls, meta: dict) -> "QGenConfig":
        return cls(**meta)


@dataclass(frozen=True)
class DecoderState:
    h: np.ndarray
    c: np.ndarray


class QGenModel:
    """Generates the next question given the dialogue so far and the image.

    A hierarchical encoder summarizes the previous QA pairs; its state is
    concatenated with the image features and projected to the initial state of
    the decoder LSTM, which emits the question token by token.  Training
    maximizes the log-likelihood of the recorded questions with teacher
    forcing; decoding uses beam search.
    """

    KIND = "qgen"

    def __init__(self, config: QGenConfig, vocab: Vocabulary, seed: int = 0):
        if config.vocab_size != vocab.size:
            raise ConfigError(f"vocab size {vocab.size} != config {config.vocab_size}")
        self.config = config
        self.vocab = vocab
        self.params = Parameters()
        rng = np.random.default_rng(seed)
        p, c = self.params, config
        # the encoder and decoder share one word look-up table
        self.word_table = p.add(
            "word_table", glorot_uniform(rng, (c.vocab_size, c.word_dim), c.vocab_size, c.word_dim)
        )
        self.encoder = HredEncoder(p, "hred", self.word_table, c.utterance_hidden, c.context_hidden, rng)
        init_in = c.context_hidden + c.d_img
        self.init_w = p.add(
            "decoder_init.w", glorot_uniform(rng, (init_in, 2 * c.decoder_hidden), init_in, 2 * c.decoder_hidden)
        )
        self.init_b = p.add("decoder_init.b", np.zeros(2 * c.decoder_hidden))
        self.decoder = init_lstm(p, "decoder", c.word_dim, c.decoder_hidden, rng)
        self.out_w = p.add(
            "out.w", glorot_uniform(rng, (c.decoder_hidden, c.vocab_size), c.decoder_hidden, c.vocab_size)
        )
        self.out_b = p.add("out.b", np.zeros(c.vocab_size))

    # -- training

    def conditioning_qas(
        self, game: GameRecord, mode: QgenMode, oracle: Optional[OracleModel]
    ) -> List[QAPair]:
        """The answers the encoder sees.  Target token streams never change
        with the mode; only the conditioning answers do."""
        if mode is QgenMode.GT:
            return list(game.qas)
        if oracle is None:
            raise ConfigError("oracle-answer conditioning requires an oracle checkpoint")
        return [
            QAPair(qa.question, oracle.answer(qa.question, game.target, game.image))
            for qa in game.qas
        ]

    def batch_loss(
        self,
        games: Sequence[GameRecord],
        mode: QgenMode = QgenMode.GT,
        oracle: Optional[OracleModel] = None,
    ) -> Tensor:
        """Mean per-token negative log-likelihood with teacher forcing.

        One decoding unit per (game, question); units gather their context
        state (the encoder state after the preceding pairs) from the batched
        encoder run.
        """
        c = self.config
        contexts = self.encoder.encode_games(
            [pair_utterances(self.conditioning_qas(g, mode, oracle), self.vocab)[:-1] for g in games]
        )
        units: List[Tuple[int, int, List[int]]] = []  # (game index, pairs consumed, target ids)
        for b, game in enumerate(games):
            for j, qa in enumerate(game.qas):
                units.append((b, j, self.vocab.encode(qa.question) + [STOP]))
        if not units:
            raise ConfigError("no questions to train on")
        batch = len(games)
        stacked = concat(contexts, axis=0)  # ((J_max+1)*B, Hc)
        rows = np.array([j * batch + b for b, j, _ in units], dtype=np.int64)
        ctx = embedding_lookup(stacked, rows)
        img = tensor(np.array([image_vector(games[b].image, c.d_img) for b, _, _ in units]))
        init = tanh(add(matmul(concat([ctx, img], axis=1), self.init_w), self.init_b))
        h = slice_axis(init, 1, 0, c.decoder_hidden)
        cell = slice_axis(init, 1, c.decoder_hidden, 2 * c.decoder_hidden)
        targets, lengths = pad_sequences([t for _, _, t in units])
        total: Optional[Tensor] = None
        n_tokens = int(lengths.sum())
        for t in range(targets.shape[1]):
            if t >= lengths.max():
                break
            inputs = np.full(len(units), START, dtype=np.int64) if t == 0 else targets[:, t - 1]
            x = embedding_lookup(self.word_table, inputs)
            h, cell = lstm_cell(x, h, cell, self.decoder)
            logits = add(matmul(h, self.out_w), self.out_b)
            mask = (lengths > t).astype(np.float64)
            step_loss = cross_entropy(logits, targets[:, t], mask=mask, reduction="sum")
            total = step_loss if total is None else add(total, step_loss)
        return scale(total, 1.0 / n_tokens)

    def batch_errors(
        self,
        games: Sequence[GameRecord],
        mode: QgenMode = QgenMode.GT,
        oracle: Optional[OracleModel] = None,
    ) -> Tuple[int, int]:
        """Next-token argmax mispredictions under teacher forcing."""
        wrong = 0
        total = 0
        for game in games:
            conditioning = self.conditioning_qas(game, mode, oracle)
            utterances = pair_utterances(conditioning, self.vocab)
            for j, qa in enumerate(game.qas):
                state = self.decoder_init(self.context_state(utterances[:j]), game.image)
                target = self.vocab.encode(qa.question) + [STOP]
                prev = START
                for token in target:
                    logprobs, state = self.step(prev, state)
                    wrong += int(int(logprobs.argmax()) != token)
                    total += 1
                    prev = token
        return wrong, total

    # -- inference

    def context_state(self, utterances: Sequence[Sequence[int]]) -> np.ndarray:
        return self.encoder.state_np(utterances)

    def decoder_init(self, context: np.ndarray, image: ImageMeta) -> DecoderState:
        x = np.concatenate([context, image_vector(image, self.config.d_img)])
        init = np.tanh(x @ self.init_w.data + self.init_b.data)
        hd = self.config.decoder_hidden
        return DecoderState(h=init[:hd][None, :], c=init[hd:][None, :])

    def step(self, token_id: int, state: DecoderState) -> Tuple[np.ndarray, DecoderState]:
        """Log-probabilities over the vocabulary after consuming one token."""
        x = self.word_table.data[token_id][None, :]
        h, c = _np_lstm_step(x, state.h, state.c, self.decoder)
        logits = (h[0] @ self.out_w.data + self.out_b.data)
        shifted = logits - logits.max()
        logprobs = shifted - np.log(np.exp(shifted).sum())
        return logprobs, DecoderState(h=h, c=c)

    def generate(
        self,
        qas: Sequence[QAPair],
        image: ImageMeta,
        width: Optional[int] = None,
        max_len: Optional[int] = None,
    ) -> List[int]:
        """Most probable next question (token ids, STOP stripped)."""
        state = self.decoder_init(self.context_state(pair_utterances(qas, self.vocab)), image)
        best = beam_search(
            self.step,
            state,
            width=width or self.config.beam_width,
            max_len=max_len or self.config.max_question_len,
        )
        return [t for t in best.tokens if t != STOP]

    def question_text(self, token_ids: Sequence[int]) -> str:
        return " ".join(
            self.vocab.id_to_token[t] for t in token_ids if t not in (PAD, START, STOP)
        )

    # -- persistence

    def save(self, path) -> None:
        diff.save_checkpoint(
            path,
            self.KIND,
            self.params,
            meta={"config": self.config.to_meta(), "vocab": list(self.vocab.id_to_token)},
        )

    @classmethod
    def load(cls, path) -> "QGenModel":
        kind, meta, values = diff.load_checkpoint(path)
        if kind != cls.KIND:
            raise ConfigError(f"checkpoint kind {kind!r}, expected {cls.KIND!r}")
        vocab = Vocabulary(id_to_token=tuple(meta["vocab"]), min_count=1)
        model = cls(QGenConfig.from_meta(meta["config"]), vocab)
        model.params.load_values(values)
        return model


# ---------------------------------------------------------------------------
# beam search


@dataclass(frozen=True)
class BeamHypothesis:
    """Token prefix with its cumulative log-probability.  A hypothesis is
    finished exactly when its last token is STOP."""

    tokens: Tuple[int, ...]
    logp: float
    finished: bool


@dataclass(frozen=True)
class _Beam:
    tokens: Tuple[int, ...]
    logp: float
    last: int
    state: object


def beam_search(step_fn, init_state, width: int, max_len: int, stop_id: int = STOP) -> BeamHypothesis:
    """Return the most probable finished sequence.

    Standard beam: each step expands every live prefix over the whole
    vocabulary, keeps the ``width`` best candidates by cumulative log-prob
    (ties broken by lexicographically smallest token sequence), and sets
    finished ones aside.  No length normalization.  A prefix reaching
    ``max_len`` tokens is forced to emit STOP.  With width 1 this is exactly
    the greedy argmax rollout.
    """
    if width < 1 or max_len < 1:
        raise ValueError(f"width and max_len must be >= 1, got {width}, {max_len}")
    live = [_Beam(tokens=(), logp=0.0, last=START, state=init_state)]
    finished: List[BeamHypothesis] = []
    while live:
        candidates: List[_Beam] = []
        for beam in live:
            logprobs, state = step_fn(beam.last, beam.state)
            if len(beam.tokens) >= max_len:
                candidates.append(
                    _Beam(
                        tokens=beam.tokens + (stop_id,),
                        logp=beam.logp + float(logprobs[stop_id]),
                        last=stop_id,
                        state=state,
                    )
                )
                continue
            for token in range(len(logprobs)):
                candidates.append(
                    _Beam(
                        tokens=beam.tokens + (token,),
                        logp=beam.logp + float(logprobs[token]),
                        last=token,
                        state=state,
                    )
                )
        candidates.sort(key=lambda b: (-b.logp, b.tokens))
        live = []
        for beam in candidates[:width]:
            if beam.last == stop_id:
                finished.append(BeamHypothesis(tokens=beam.tokens, logp=beam.logp, finished=True))
            else:
                live.append(beam)
    return min(finished, key=lambda h: (-h.logp, h.tokens))
