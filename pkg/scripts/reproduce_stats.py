#!/usr/bin/env python3
"""Reproduce the headline corpus statistics from the public download.

Point --corpus-dir at a directory holding guesswhat.{train,valid,test}.jsonl
(optionally .gz) and this prints the per-subset count table, the answer
balance, and the success rate at 3 and 20 candidate objects.
"""

import argparse
import sys
from pathlib import Path

from guesswhat.data import iter_official_games
from guesswhat.stats import (
    SubsetFilter,
    answer_distribution,
    corpus_stats,
    render_table,
    success_breakdowns,
)


def find(corpus_dir: Path, split: str) -> Path:
    for name in (f"guesswhat.{split}.jsonl.gz", f"guesswhat.{split}.jsonl"):
        candidate = corpus_dir / name
        if candidate.exists():
            return candidate
    raise SystemExit(f"error: missing {split} file under {corpus_dir}")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--corpus-dir", required=True)
    args = parser.parse_args()
    corpus_dir = Path(args.corpus_dir)

    games = []
    for split in ("train", "valid", "test"):
        path = find(corpus_dir, split)
        print(f"reading {path} ...", file=sys.stderr)
        games.extend(iter_official_games(path))

    reports = {
        name: corpus_stats(games, subset)
        for name, subset in (("full", SubsetFilter.FULL),
                             ("finished", SubsetFilter.FINISHED),
                             ("success", SubsetFilter.SUCCESS))
    }
    print(render_table(reports), end="")
    yes, no, na = answer_distribution(games, SubsetFilter.FULL)
    print(f"\nanswers: no {no:.1%}, yes {yes:.1%}, n/a {na:.1%}")
    rates = success_breakdowns(games).by_object_count
    print(f"success rate at K=3: {rates.get(3, float('nan')):.3f}")
    print(f"success rate at K=20: {rates.get(20, float('nan')):.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
