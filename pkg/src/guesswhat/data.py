"""Reading and writing game-record streams, tokenization, vocabulary, splits.

The canonical on-disk format is one JSON object per line, UTF-8:

    {"game_id": int, "status": "success"|"failure"|"incomplete",
     "image": {"image_id": int, "width": int, "height": int, "file_name": str?},
     "objects": [{"object_id": int, "category_id": int, "category": str,
                  "bbox": [x, y, w, h], "area": float, "segment": [[x, y], ...]?}],
     "target_id": int,
     "qas": [{"question": str, "answer": "Yes"|"No"|"N/A"}],
     "guess_id": int?}

Plain and gzip-compressed files are both accepted.  An import adapter maps the
publicly downloadable corpus format onto this schema.
"""

from __future__ import annotations

import gzip
import itertools
import json
import random
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, IO, Iterable, Iterator, List, Sequence, Tuple, Union

import numpy as np

from .core import (
    Answer,
    GameRecord,
    ImageMeta,
    ObjectRef,
    QAPair,
    Status,
    ValidationError,
)

PAD, UNK, START, STOP, YES, NO, NA = 0, 1, 2, 3, 4, 5, 6
SPECIAL_TOKENS = ("<pad>", "<unk>", "<start>", "<stop>", "<yes>", "<no>", "<na>")
ANSWER_TOKEN = {Answer.YES: YES, Answer.NO: NO, Answer.NA: NA}

FEATURE_MAGIC = b"GWFEAT1"


class ParseError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class InsufficientDataError(ValueError):
    pass


def tokenize(text: str) -> List[str]:
    """Lowercase, then split into maximal alphanumeric runs and maximal runs of
    other non-whitespace characters.  "Is it a person?" -> is/it/a/person/? ."""
    tokens: List[str] = []
    for is_space, run in itertools.groupby(text.lower(), key=str.isspace):
        if is_space:
            continue
        for _, chars in itertools.groupby(run, key=str.isalnum):
            tokens.append("".join(chars))
    return tokens


@dataclass(frozen=True)
class Vocabulary:
    """Token<->id mapping.  Ids 0..6 are reserved for the special tokens;
    corpus tokens follow, ordered by (descending count, ascending token)."""

    id_to_token: Tuple[str, ...]
    min_count: int

    def __post_init__(self):
        object.__setattr__(
            self, "_token_to_id", {t: i for i, t in enumerate(self.id_to_token)}
        )

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def token_id(self, token: str) -> int:
        return self._token_to_id.get(token, UNK)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def encode(self, question: str) -> List[int]:
        return [self.token_id(t) for t in tokenize(question)]

    def decode(self, ids: Sequence[int]) -> List[str]:
        return [self.id_to_token[i] for i in ids]


def build_vocab(games: Iterable[GameRecord], min_count: int = 3) -> Vocabulary:
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    counts: Dict[str, int] = {}
    for game in games:
        for qa in game.qas:
            for token in tokenize(qa.question):
                counts[token] = counts.get(token, 0) + 1
    kept = sorted(
        (t for t, c in counts.items() if c >= min_count),
        key=lambda t: (-counts[t], t),
    )
    return Vocabulary(id_to_token=SPECIAL_TOKENS + tuple(kept), min_count=min_count)


def encode(question: str, vocab: Vocabulary) -> List[int]:
    return vocab.encode(question)


# ---------------------------------------------------------------------------
# record (de)serialization


def game_to_dict(game: GameRecord) -> dict:
    d = {
        "game_id": game.game_id,
        "status": game.status.value,
        "image": {
            "image_id": game.image.image_id,
            "width": game.image.width,
            "height": game.image.height,
        },
        "objects": [
            {
                "object_id": o.object_id,
                "category_id": o.category_id,
                "category": o.category_name,
                "bbox": list(o.bbox),
                "area": o.area,
                **({"segment": [list(p) for p in o.segment]} if o.segment else {}),
            }
            for o in game.objects
        ],
        "target_id": game.target_id,
        "qas": [{"question": qa.question, "answer": qa.answer.value} for qa in game.qas],
    }
    if game.image.file_name is not None:
        d["image"]["file_name"] = game.image.file_name
    if game.guess_id is not None:
        d["guess_id"] = game.guess_id
    return d


def game_from_dict(d: dict) -> GameRecord:
    img = d["image"]
    image = ImageMeta(
        image_id=int(img["image_id"]),
        width=int(img["width"]),
        height=int(img["height"]),
        file_name=img.get("file_name"),
    )
    objects = tuple(
        ObjectRef(
            object_id=int(o["object_id"]),
            category_id=int(o["category_id"]),
            category_name=o["category"],
            bbox=tuple(float(v) for v in o["bbox"]),
            area=float(o["area"]),
            segment=tuple(tuple(float(v) for v in p) for p in o["segment"])
            if o.get("segment")
            else None,
        )
        for o in d["objects"]
    )
    qas = tuple(
        QAPair(question=qa["question"], answer=Answer(qa["answer"])) for qa in d["qas"]
    )
    return GameRecord(
        game_id=int(d["game_id"]),
        image=image,
        objects=objects,
        target_id=int(d["target_id"]),
        qas=qas,
        status=Status(d["status"]),
        guess_id=int(d["guess_id"]) if d.get("guess_id") is not None else None,
    )


Source = Union[str, Path, IO[str], Iterable[str]]


def _open_lines(source: Source) -> Iterator[str]:
    if isinstance(source, (str, Path)):
        path = Path(source)
        opener = gzip.open if path.suffix == ".gz" else open
        with opener(path, "rt", encoding="utf-8") as fh:
            yield from fh
    else:
        yield from source


def iter_games(source: Source) -> Iterator[GameRecord]:
    """Stream games from a file path, file object, or iterable of lines."""
    for line_no, line in enumerate(_open_lines(source), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(line_no, f"invalid JSON ({exc.msg})") from exc
        try:
            yield game_from_dict(payload)
        except (KeyError, TypeError) as exc:
            raise ParseError(line_no, f"missing or malformed field: {exc}") from exc
        except ValidationError as exc:
            raise ParseError(line_no, str(exc)) from exc


def parse_games(source: Source) -> List[GameRecord]:
    return list(iter_games(source))


def write_games(games: Iterable[GameRecord], sink: Union[str, Path, IO[str]]) -> int:
    """Write one JSON line per game; returns the record count."""
    if isinstance(sink, (str, Path)):
        path = Path(sink)
        opener = gzip.open if path.suffix == ".gz" else open
        with opener(path, "wt", encoding="utf-8") as fh:
            return write_games(games, fh)
    count = 0
    for game in games:
        sink.write(json.dumps(game_to_dict(game), ensure_ascii=False) + "\n")
        count += 1
    return count


# ---------------------------------------------------------------------------
# official-download adapter

_OFFICIAL_ANSWERS = {"yes": Answer.YES, "no": Answer.NO, "n/a": Answer.NA}


def game_from_official_dict(d: dict) -> GameRecord:
    """Map one record of the public corpus download onto the canonical schema.

    Tolerates the known format variants: image metadata under "image" or
    "picture", objects as a list or as a dict keyed by object id.  Segments are
    dropped (only the bbox is consumed downstream).  The download does not
    record the guessed object, so finished games get a synthetic guess:
    the target for successes, the lowest-id other object for failures.
    """
    img = d.get("image") or d["picture"]
    image = ImageMeta(
        image_id=int(img["id"]),
        width=int(img["width"]),
        height=int(img["height"]),
        file_name=img.get("file_name"),
    )
    raw_objects = d["objects"]
    if isinstance(raw_objects, dict):
        raw_objects = [
            {"id": int(oid), **obj} if "id" not in obj else obj
            for oid, obj in sorted(raw_objects.items(), key=lambda kv: int(kv[0]))
        ]
    objects = tuple(
        ObjectRef(
            object_id=int(o["id"]),
            category_id=int(o["category_id"]),
            category_name=o.get("category", str(o["category_id"])),
            bbox=tuple(float(v) for v in o["bbox"]),
            area=float(o["area"]),
        )
        for o in raw_objects
    )
    qas = tuple(
        QAPair(
            question=qa.get("question", qa.get("q", "")),
            answer=_OFFICIAL_ANSWERS[qa.get("answer", qa.get("a", "")).strip().lower()],
        )
        for qa in d["qas"]
    )
    status = Status(d["status"])
    target_id = int(d["object_id"])
    guess_id = d.get("guess_object_id")
    if guess_id is None:
        if status is Status.SUCCESS:
            guess_id = target_id
        elif status is Status.FAILURE:
            guess_id = min(o.object_id for o in objects if o.object_id != target_id)
    return GameRecord(
        game_id=int(d["id"]),
        image=image,
        objects=objects,
        target_id=target_id,
        qas=qas,
        status=status,
        guess_id=int(guess_id) if guess_id is not None else None,
    )


def iter_official_games(source: Source) -> Iterator[GameRecord]:
    for line_no, line in enumerate(_open_lines(source), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            yield game_from_official_dict(json.loads(line))
        except (KeyError, ValueError, TypeError) as exc:
            raise ParseError(line_no, str(exc)) from exc


# ---------------------------------------------------------------------------
# train/valid/test split

SPLIT_NAMES = ("train", "valid", "test")


@dataclass(frozen=True)
class SplitAssignment:
    """image_id -> split name; every game inherits the split of its image."""

    by_image: Dict[int, str]
    seed: int

    def split_of(self, game: GameRecord) -> str:
        return self.by_image[game.image.image_id]

    def images(self, name: str) -> List[int]:
        return sorted(i for i, s in self.by_image.items() if s == name)

    def partition(self, games: Sequence[GameRecord]) -> Dict[str, List[GameRecord]]:
        out: Dict[str, List[GameRecord]] = {name: [] for name in SPLIT_NAMES}
        for game in games:
            out[self.split_of(game)].append(game)
        return out


def split_by_image(
    games: Sequence[GameRecord],
    ratios: Tuple[float, float, float] = (0.70, 0.15, 0.15),
    seed: int = 0,
) -> SplitAssignment:
    """Shuffle the unique image ids with a seeded generator and cut at the
    cumulative ratio boundaries (floor), so train holds exactly
    floor(n * ratios[0]) images.  Games sharing an image share a split."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    image_ids = sorted({g.image.image_id for g in games})
    if len(image_ids) < 3:
        raise InsufficientDataError(f"need at least 3 images, got {len(image_ids)}")
    rng = random.Random(seed)
    rng.shuffle(image_ids)
    n = len(image_ids)
    b1 = int(n * ratios[0])
    b2 = int(n * (ratios[0] + ratios[1]))
    by_image: Dict[int, str] = {}
    for i, image_id in enumerate(image_ids):
        by_image[image_id] = "train" if i < b1 else ("valid" if i < b2 else "test")
    return SplitAssignment(by_image=by_image, seed=seed)


# ---------------------------------------------------------------------------
# sidecar feature file: magic, then (int64 id, d_img float32 LE) records

_ID_FMT = "<q"


def write_features(features: Dict[int, np.ndarray], d_img: int, path: Union[str, Path]) -> None:
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        for key in sorted(features):
            vec = np.asarray(features[key], dtype="<f4")
            if vec.shape != (d_img,):
                raise ValueError(f"feature {key} has shape {vec.shape}, want ({d_img},)")
            fh.write(struct.pack(_ID_FMT, key))
            fh.write(vec.tobytes())


def attach_features(
    games: Sequence[GameRecord],
    image_features: Dict[int, np.ndarray] = None,
    crop_features: Dict[int, np.ndarray] = None,
) -> List[GameRecord]:
    """Rebuild records with sidecar vectors attached by image/object id.
    Records without a matching entry keep features absent (zero fallback)."""
    from dataclasses import replace

    out = []
    for game in games:
        image = game.image
        if image_features and image.image_id in image_features:
            image = replace(image, features=tuple(image_features[image.image_id]))
        objects = tuple(
            replace(o, crop_features=tuple(crop_features[o.object_id]))
            if crop_features and o.object_id in crop_features
            else o
            for o in game.objects
        )
        out.append(replace(game, image=image, objects=objects))
    return out


def read_features(path: Union[str, Path], d_img: int) -> Dict[int, np.ndarray]:
    record = struct.calcsize(_ID_FMT) + 4 * d_img
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(FEATURE_MAGIC):
        raise ValueError(f"{path}: bad magic")
    body = blob[len(FEATURE_MAGIC):]
    if len(body) % record != 0:
        raise ValueError(f"{path}: truncated feature file for d_img={d_img}")
    out: Dict[int, np.ndarray] = {}
    for off in range(0, len(body), record):
        (key,) = struct.unpack_from(_ID_FMT, body, off)
        vec = np.frombuffer(body, dtype="<f4", count=d_img, offset=off + struct.calcsize(_ID_FMT))
        out[key] = vec.astype(np.float64)
    return out
