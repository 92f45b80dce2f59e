"""Certified (q, eta)-learnability and provably unlearnable examples for small classifiers."""

__version__ = "0.1.0"
