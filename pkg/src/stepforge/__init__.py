"""Tactic-tree proof search with best-first and critic-guided selection, preference-pair critics and expert iteration."""

__version__ = "0.1.0"
