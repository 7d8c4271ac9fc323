"""Markov-kernel calculus and Littlewood-Paley square functionals on finite weighted graphs."""

__version__ = "0.1.0"
