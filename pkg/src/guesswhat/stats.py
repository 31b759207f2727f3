"""Corpus statistics: per-subset counts, answer balance, question distributions,
success-rate breakdowns, and word frequency/co-occurrence tables."""

from __future__ import annotations

import enum
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .core import Answer, GameRecord, Status, spatial_features
from .data import tokenize


class SubsetFilter(enum.Enum):
    FULL = "full"          # every dialogue
    FINISHED = "finished"  # success + failure
    SUCCESS = "success"    # success only

    def keeps(self, status: Status) -> bool:
        if self is SubsetFilter.FULL:
            return True
        if self is SubsetFilter.FINISHED:
            return status in (Status.SUCCESS, Status.FAILURE)
        return status is Status.SUCCESS


def select(games: Iterable[GameRecord], subset: SubsetFilter) -> List[GameRecord]:
    return [g for g in games if subset.keeps(g.status)]


@dataclass(frozen=True)
class StatsReport:
    n_dialogues: int
    n_questions: int
    n_words: int
    vocab_size: int
    vocab_size_min3: int
    n_images: int
    n_objects: int
    answer_fractions: Optional[Tuple[float, float, float]]  # (yes, no, na)
    avg_questions_per_dialogue: Optional[float]
    success_rate: Optional[float]

    def to_dict(self) -> dict:
        d = {
            "n_dialogues": self.n_dialogues,
            "n_questions": self.n_questions,
            "n_words": self.n_words,
            "vocab_size": self.vocab_size,
            "vocab_size_min3": self.vocab_size_min3,
            "n_images": self.n_images,
            "n_objects": self.n_objects,
        }
        if self.answer_fractions is not None:
            yes, no, na = self.answer_fractions
            d["answer_fractions"] = {"yes": yes, "no": no, "na": na}
        if self.avg_questions_per_dialogue is not None:
            d["avg_questions_per_dialogue"] = self.avg_questions_per_dialogue
        if self.success_rate is not None:
            d["success_rate"] = self.success_rate
        return d


def corpus_stats(
    games: Sequence[GameRecord],
    subset: SubsetFilter = SubsetFilter.FULL,
    count_answers_as_words: bool = False,
) -> StatsReport:
    """Headline per-subset counts.

    Word tokens are counted over questions; ``count_answers_as_words`` adds one
    token per answer for the alternative counting mode.  ``n_objects`` counts
    distinct target objects, ``n_images`` distinct images.
    """
    kept = select(games, subset)
    counts: Counter = Counter()
    n_questions = 0
    n_words = 0
    for game in kept:
        n_questions += len(game.qas)
        for qa in game.qas:
            tokens = tokenize(qa.question)
            n_words += len(tokens)
            counts.update(tokens)
            if count_answers_as_words:
                n_words += 1
    n_dialogues = len(kept)
    fractions = answer_distribution(kept, SubsetFilter.FULL)
    return StatsReport(
        n_dialogues=n_dialogues,
        n_questions=n_questions,
        n_words=n_words,
        vocab_size=len(counts),
        vocab_size_min3=sum(1 for c in counts.values() if c >= 3),
        n_images=len({g.image.image_id for g in kept}),
        n_objects=len({g.target_id for g in kept}),
        answer_fractions=fractions,
        avg_questions_per_dialogue=(n_questions / n_dialogues) if n_dialogues else None,
        success_rate=(
            sum(1 for g in kept if g.status is Status.SUCCESS) / n_dialogues
            if n_dialogues
            else None
        ),
    )


def answer_distribution(
    games: Sequence[GameRecord], subset: SubsetFilter = SubsetFilter.FULL
) -> Optional[Tuple[float, float, float]]:
    """(yes, no, na) fractions over all QA pairs of the subset; None when empty."""
    counts = Counter(qa.answer for g in select(games, subset) for qa in g.qas)
    total = sum(counts.values())
    if total == 0:
        return None
    return (
        counts[Answer.YES] / total,
        counts[Answer.NO] / total,
        counts[Answer.NA] / total,
    )


def questions_histogram(
    games: Sequence[GameRecord], subset: SubsetFilter = SubsetFilter.FULL
) -> Dict[int, int]:
    return dict(Counter(len(g.qas) for g in select(games, subset)))


def questions_vs_object_count(
    games: Sequence[GameRecord], subset: SubsetFilter = SubsetFilter.FULL
) -> Dict[int, float]:
    """Mean question count per number of candidate objects."""
    lengths: Dict[int, List[int]] = defaultdict(list)
    for g in select(games, subset):
        lengths[g.object_count].append(len(g.qas))
    return {k: sum(v) / len(v) for k, v in sorted(lengths.items())}


@dataclass(frozen=True)
class SuccessBreakdowns:
    by_object_count: Dict[int, float]
    by_area_decile: Dict[int, float]
    by_category: Dict[str, float]
    by_center_cell: Dict[Tuple[int, int], float]
    by_dialogue_length: Dict[int, float]


def _rate(buckets: Dict) -> Dict:
    return {k: wins / total for k, (wins, total) in sorted(buckets.items()) if total}


def success_breakdowns(games: Sequence[GameRecord], grid: int = 5) -> SuccessBreakdowns:
    """Success rate per bucket; only finished games contribute.

    Area deciles are 10 equal-population bins over the object-area distribution
    of the corpus under analysis; the spatial breakdown uses a ``grid`` x
    ``grid`` partition of normalized target centers.
    """
    finished = select(games, SubsetFilter.FINISHED)
    areas = np.sort(np.array([o.area for g in finished for o in g.objects]))

    def area_decile(area: float) -> int:
        if len(areas) == 0:
            return 0
        return min(9, int(np.searchsorted(areas, area, side="right") * 10 / len(areas)))

    def center_cell(game: GameRecord) -> Tuple[int, int]:
        vec = spatial_features(game.target.bbox, game.image)
        col = min(grid - 1, int((vec.x_center + 1.0) / 2.0 * grid))
        row = min(grid - 1, int((vec.y_center + 1.0) / 2.0 * grid))
        return (row, col)

    buckets = {
        "k": defaultdict(lambda: [0, 0]),
        "area": defaultdict(lambda: [0, 0]),
        "cat": defaultdict(lambda: [0, 0]),
        "cell": defaultdict(lambda: [0, 0]),
        "len": defaultdict(lambda: [0, 0]),
    }
    for game in finished:
        won = game.status is Status.SUCCESS
        keys = {
            "k": game.object_count,
            "area": area_decile(game.target.area),
            "cat": game.target.category_name,
            "cell": center_cell(game),
            "len": len(game.qas),
        }
        for name, key in keys.items():
            buckets[name][key][0] += int(won)
            buckets[name][key][1] += 1
    return SuccessBreakdowns(
        by_object_count=_rate(buckets["k"]),
        by_area_decile=_rate(buckets["area"]),
        by_category=_rate(buckets["cat"]),
        by_center_cell=_rate(buckets["cell"]),
        by_dialogue_length=_rate(buckets["len"]),
    )


def answer_evolution(
    games: Sequence[GameRecord], subset: SubsetFilter = SubsetFilter.FULL
) -> Dict[int, List[Tuple[float, float, float]]]:
    """Per dialogue-length group, the (yes, no, na) fractions at each question
    index.  Groups with no dialogues are omitted."""
    groups: Dict[int, List[Counter]] = {}
    for game in select(games, subset):
        length = len(game.qas)
        if length == 0:
            continue
        slots = groups.setdefault(length, [Counter() for _ in range(length)])
        for i, qa in enumerate(game.qas):
            slots[i][qa.answer] += 1
    out: Dict[int, List[Tuple[float, float, float]]] = {}
    for length, slots in sorted(groups.items()):
        rows = []
        for counter in slots:
            total = sum(counter.values())
            rows.append(
                (
                    counter[Answer.YES] / total,
                    counter[Answer.NO] / total,
                    counter[Answer.NA] / total,
                )
            )
        out[length] = rows
    return out


@dataclass(frozen=True)
class WordStats:
    tokens: Tuple[str, ...]                 # top-n tokens, most frequent first
    frequencies: Dict[str, int]
    cooccurrence: np.ndarray                # rows L1-normalized; zero rows stay zero

    def frequency(self, token: str) -> int:
        return self.frequencies.get(token, 0)


def word_stats(
    games: Sequence[GameRecord],
    subset: SubsetFilter = SubsetFilter.FULL,
    top_n: int = 50,
) -> WordStats:
    """Frequency table plus within-question co-occurrence over the top-n tokens.

    Co-occurrence counts ordered position pairs of distinct positions inside
    one question; each row is then L1-normalized.
    """
    counts: Counter = Counter()
    questions: List[List[str]] = []
    for game in select(games, subset):
        for qa in game.qas:
            tokens = tokenize(qa.question)
            counts.update(tokens)
            questions.append(tokens)
    top = sorted(counts, key=lambda t: (-counts[t], t))[:top_n]
    index = {t: i for i, t in enumerate(top)}
    matrix = np.zeros((len(top), len(top)), dtype=np.float64)
    for tokens in questions:
        present = [index[t] for t in tokens if t in index]
        for i, a in enumerate(present):
            for j, b in enumerate(present):
                if i != j:
                    matrix[a, b] += 1.0
    sums = matrix.sum(axis=1, keepdims=True)
    matrix = np.divide(matrix, sums, out=np.zeros_like(matrix), where=sums > 0)
    return WordStats(
        tokens=tuple(top),
        frequencies={t: counts[t] for t in top},
        cooccurrence=matrix,
    )


def word_frequencies_by_index(
    games: Sequence[GameRecord],
    subset: SubsetFilter = SubsetFilter.FULL,
    top_n: int = 10,
) -> Dict[int, List[Tuple[str, int]]]:
    """Most common tokens at each question index; tracks how the vocabulary
    shifts over the course of a dialogue."""
    per_index: Dict[int, Counter] = defaultdict(Counter)
    for game in select(games, subset):
        for i, qa in enumerate(game.qas):
            per_index[i].update(tokenize(qa.question))
    return {
        i: counter.most_common(top_n) for i, counter in sorted(per_index.items())
    }


# ---------------------------------------------------------------------------
# report rendering

TABLE_FIELDS = (
    "n_dialogues",
    "n_questions",
    "n_words",
    "vocab_size",
    "vocab_size_min3",
    "n_images",
    "n_objects",
)


def render_table(reports: Dict[str, StatsReport]) -> str:
    """Tab-separated per-subset count table, one metric per row."""
    names = list(reports)
    lines = ["metric\t" + "\t".join(names)]
    for field in TABLE_FIELDS:
        lines.append(field + "\t" + "\t".join(str(getattr(reports[n], field)) for n in names))
    return "\n".join(lines) + "\n"


def render_mapping(mapping: Dict, header: Tuple[str, str]) -> str:
    lines = ["\t".join(header)]
    for key, value in mapping.items():
        key_text = ",".join(str(k) for k in key) if isinstance(key, tuple) else str(key)
        lines.append(f"{key_text}\t{value}")
    return "\n".join(lines) + "\n"
