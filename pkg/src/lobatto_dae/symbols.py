"""Runge-Kutta symbol words and the vanishing combinations for Lobatto pairs.

A word is the scalar ``e_s^T C^alpha A M_1 ... M_k tail`` where each ``M_i``
is a letter from a five-letter alphabet of s x s matrices and the tail is
one of two fixed columns built from the first columns of ``A`` and ``Ahat``.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import HypothesisError
from .tableau import CONDITION_THRESHOLD, PartitionedTableau, condition_number, condition_order

LETTERS = ("A", "Ahat", "C", "AinvCA", "ACAinv")
TAILS = ("CONJ", "TAILC")

VANISHING_TOL = 1e-10
NONZERO_TOL = 1e-6
MAX_LETTERS = 4


class OutOfTheoremRangeWarning(UserWarning):
    """Words beyond the vanishing range were requested."""


@dataclass(frozen=True)
class DerivedMatrices:
    """Matrices that appear in the symbol words of a stiffly accurate pair."""

    A: np.ndarray
    Ahat: np.ndarray
    C: np.ndarray
    Aminus: np.ndarray
    A1: np.ndarray
    Ahat1: np.ndarray
    e_s: np.ndarray
    b: np.ndarray

    @classmethod
    def from_pair(cls, pair: PartitionedTableau) -> "DerivedMatrices":
        s = pair.s
        At = pair.first.A_tilde
        if condition_number(At) > CONDITION_THRESHOLD:
            raise HypothesisError(f"A-tilde is singular for {pair.first.name}")
        Aminus = np.zeros((s, s))
        Aminus[1:, 1:] = np.linalg.inv(At)
        e_s = np.zeros(s)
        e_s[-1] = 1.0
        return cls(
            A=np.array(pair.A),
            Ahat=np.array(pair.Ahat),
            C=np.diag(pair.c),
            Aminus=Aminus,
            A1=np.array(pair.A[:, 0]),
            Ahat1=np.array(pair.Ahat[:, 0]),
            e_s=e_s,
            b=np.array(pair.b),
        )

    def letter(self, name: str) -> np.ndarray:
        if name == "A":
            return self.A
        if name == "Ahat":
            return self.Ahat
        if name == "C":
            return self.C
        if name == "AinvCA":
            return self.Aminus @ self.C @ self.A
        if name == "ACAinv":
            return self.A @ self.C @ self.Aminus
        raise ValueError(f"unknown letter {name!r}")

    def tail(self, name: str) -> np.ndarray:
        if name == "CONJ":
            return self.Ahat1 - self.Ahat @ self.Aminus @ self.A1
        if name == "TAILC":
            return self.C @ self.Aminus @ self.A1
        raise ValueError(f"unknown tail {name!r}")


@dataclass(frozen=True)
class SymbolWord:
    alpha: int
    letters: tuple[str, ...]
    tail: str

    def __post_init__(self):
        object.__setattr__(self, "letters", tuple(self.letters))
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        for name in self.letters:
            if name not in LETTERS:
                raise ValueError(f"unknown letter {name!r}")
        if self.tail not in TAILS:
            raise ValueError(f"unknown tail {self.tail!r}")
        if self.tail == "CONJ" and self.letters and self.letters[-1] == "ACAinv":
            raise ValueError("ACAinv cannot precede the CONJ tail")

    @property
    def k(self) -> int:
        return len(self.letters)

    def __str__(self) -> str:
        return ".".join([f"C^{self.alpha}", "A", *self.letters]) + "|" + self.tail

    @classmethod
    def parse(cls, text: str) -> "SymbolWord":
        body, tail = text.split("|")
        parts = body.split(".")
        if not parts[0].startswith("C^") or parts[1] != "A":
            raise ValueError(f"malformed word {text!r}")
        return cls(int(parts[0][2:]), tuple(parts[2:]), tail)


def eval_word(pair: PartitionedTableau | DerivedMatrices, w: SymbolWord) -> float:
    d = pair if isinstance(pair, DerivedMatrices) else DerivedMatrices.from_pair(pair)
    row = d.e_s @ np.linalg.matrix_power(d.C, w.alpha) @ d.A
    for name in w.letters:
        row = row @ d.letter(name)
    return float(row @ d.tail(w.tail))


def words(k: int, alphas: tuple[int, ...] = (0, 1)) -> Iterator[SymbolWord]:
    """All admissible words with exactly k letters."""
    for alpha in alphas:
        for tail in TAILS:
            for letters in itertools.product(LETTERS, repeat=k):
                if tail == "CONJ" and letters and letters[-1] == "ACAinv":
                    continue
                yield SymbolWord(alpha, letters, tail)


def theorem_range(pair: PartitionedTableau) -> int:
    """Largest k for which every word is guaranteed to vanish.

    Computed from the measured orders of B, C and D as
    ``min(r, q, p - r, p - q) - 1``.
    """
    p = condition_order(pair, "B")
    q = condition_order(pair, "C")
    r = condition_order(pair, "D")
    return min(r, q, p - r, p - q) - 1


def verdict(value: float) -> str:
    a = abs(value)
    if a < VANISHING_TOL:
        return "vanishing"
    if a <= NONZERO_TOL:
        return "indeterminate"
    return "nonzero"


@dataclass(frozen=True)
class WordValue:
    word: SymbolWord
    value: float

    @property
    def verdict(self) -> str:
        return verdict(self.value)


def evaluate_words(pair: PartitionedTableau, k_max: int, alphas: tuple[int, ...] = (0, 1)) -> list[WordValue]:
    if k_max > MAX_LETTERS:
        raise ValueError(f"word enumeration is capped at {MAX_LETTERS} letters")
    d = DerivedMatrices.from_pair(pair)
    return [WordValue(w, eval_word(d, w)) for k in range(k_max + 1) for w in words(k, alphas)]


def verify_vanishing(pair: PartitionedTableau, k_max: int) -> float:
    """Maximum absolute value over all admissible words with at most k_max letters."""
    limit = theorem_range(pair)
    if k_max > limit:
        warnings.warn(
            f"k_max={k_max} exceeds the vanishing range k <= {limit}; values need not vanish",
            OutOfTheoremRangeWarning,
            stacklevel=2,
        )
    values = evaluate_words(pair, k_max)
    return max(abs(v.value) for v in values)


def reduced_combo1(pair: PartitionedTableau, k: int) -> float:
    """``b C^(k-1) (Ahat_1 - Ahat A^- A_1)``."""
    d = DerivedMatrices.from_pair(pair)
    return float(d.b @ np.linalg.matrix_power(d.C, k - 1) @ d.tail("CONJ"))


def reduced_combo2(pair: PartitionedTableau, k: int) -> float:
    """``b C^k A^- A_1``."""
    d = DerivedMatrices.from_pair(pair)
    return float(d.b @ np.linalg.matrix_power(d.C, k) @ d.Aminus @ d.A1)


def d_identity_residual(pair: PartitionedTableau, k: int) -> np.ndarray:
    """Componentwise residual of ``b C^k A^- = e_s^T - k b C^(k-1)``.

    The identity follows from D(k) multiplied by ``A^-``. Because the first
    column of ``A^-`` is zero, the left side always has a zero first entry,
    while the right side has ``-k b_1 c_1^(k-1)`` there; that entry only
    vanishes for k >= 2. The first component is therefore masked when k = 1.
    """
    d = DerivedMatrices.from_pair(pair)
    lhs = d.b @ np.linalg.matrix_power(d.C, k) @ d.Aminus
    rhs = d.e_s - k * d.b @ np.linalg.matrix_power(d.C, k - 1)
    res = lhs - rhs
    if k == 1:
        res[0] = 0.0
    return res


def format_word_csv(values: list[WordValue]) -> str:
    lines = ["word,k,value,verdict"]
    for v in values:
        lines.append(f"{v.word},{v.word.k},{v.value:.17g},{v.verdict}")
    return "\n".join(lines) + "\n"
