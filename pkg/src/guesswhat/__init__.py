"""GuessWhat?!: a two-player visual guessing game.

Corpus tools, the three baseline agents (oracle, guesser, question generator)
on a self-contained differentiation core, a self-play evaluation loop, and a
session service for human-vs-agent play."""

__version__ = "0.1.0"
