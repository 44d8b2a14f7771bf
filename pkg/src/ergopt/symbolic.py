"""Finite words and eventually periodic points of the full shift on ``d`` symbols.

Symbols are ``0, ..., d-1``.  An eventually periodic point is stored as a
transient ``head`` followed by a repeating ``cycle`` and is always kept in
canonical form, so two representations of the same sequence compare and hash
equal.  Text form is ``"head|cycle"``, e.g. ``"01|10"``; a purely periodic
point is ``"|1"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator

__all__ = [
    "AlphabetMismatch",
    "Word",
    "EventuallyPeriodicPoint",
    "Cylinder",
    "lex_compare",
    "symbol_distance",
    "shift_truncate",
    "preimage_words",
    "lyndon_words",
    "parse_point",
    "parse_word",
]


class AlphabetMismatch(ValueError):
    """Two objects over different alphabets were combined."""


def _primitive_root(cycle: tuple[int, ...]) -> tuple[int, ...]:
    n = len(cycle)
    for p in range(1, n + 1):
        if n % p == 0 and cycle[:p] * (n // p) == cycle:
            return cycle[:p]
    return cycle


@dataclass(frozen=True)
class Word:
    """Finite word over ``{0, ..., d-1}``.

    Parameters
    ----------
    symbols : tuple of int
        The letters, first symbol first.
    d : int
        Alphabet size.
    """

    symbols: tuple[int, ...]
    d: int = 2

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(int(s) for s in self.symbols))
        if self.d < 1:
            raise ValueError("alphabet size must be positive")
        for s in self.symbols:
            if not 0 <= s < self.d:
                raise ValueError(f"symbol {s} outside alphabet of size {self.d}")

    def __len__(self) -> int:
        return len(self.symbols)

    def __iter__(self) -> Iterator[int]:
        return iter(self.symbols)

    def __getitem__(self, item):
        if isinstance(item, slice):
            return Word(self.symbols[item], self.d)
        return self.symbols[item]

    def __add__(self, other: "Word") -> "Word":
        if other.d != self.d:
            raise AlphabetMismatch("cannot concatenate words over different alphabets")
        return Word(self.symbols + other.symbols, self.d)

    def __str__(self) -> str:
        return "".join(str(s) for s in self.symbols) if self.d <= 10 else ",".join(
            str(s) for s in self.symbols
        )

    def prefix(self, k: int) -> "Word":
        return Word(self.symbols[:k], self.d)


@dataclass(frozen=True, init=False)
class EventuallyPeriodicPoint:
    """The sequence ``head + cycle + cycle + ...`` in canonical form.

    The cycle is reduced to its primitive root and the head is shortened as
    far as possible (trailing head symbols are absorbed by rotating the cycle).
    The rotation of the cycle is then fixed by the sequence itself.
    """

    head: tuple[int, ...]
    cycle: tuple[int, ...]
    d: int

    def __init__(self, head: Iterable[int], cycle: Iterable[int], d: int = 2):
        head = tuple(int(s) for s in head)
        cycle = tuple(int(s) for s in cycle)
        if not cycle:
            raise ValueError("cycle must be nonempty")
        for s in head + cycle:
            if not 0 <= s < d:
                raise ValueError(f"symbol {s} outside alphabet of size {d}")
        cycle = _primitive_root(cycle)
        while head and head[-1] == cycle[-1]:
            head = head[:-1]
            cycle = cycle[-1:] + cycle[:-1]
        object.__setattr__(self, "head", head)
        object.__setattr__(self, "cycle", cycle)
        object.__setattr__(self, "d", int(d))

    @classmethod
    def periodic(cls, cycle: Iterable[int], d: int = 2) -> "EventuallyPeriodicPoint":
        return cls((), cycle, d)

    def symbol(self, n: int) -> int:
        """Symbol at 0-based index ``n``."""
        if n < len(self.head):
            return self.head[n]
        return self.cycle[(n - len(self.head)) % len(self.cycle)]

    def expand(self, k: int) -> tuple[int, ...]:
        """First ``k`` symbols."""
        h = len(self.head)
        if k <= h:
            return self.head[:k]
        reps = -(-(k - h) // len(self.cycle))
        return self.head + (self.cycle * reps)[: k - h]

    def truncate(self, k: int) -> Word:
        return Word(self.expand(k), self.d)

    def prepend(self, symbols: Iterable[int]) -> "EventuallyPeriodicPoint":
        return EventuallyPeriodicPoint(tuple(symbols) + self.head, self.cycle, self.d)

    def shift(self, k: int = 1) -> "EventuallyPeriodicPoint":
        return shift_truncate(self, k)[0]

    @property
    def preperiod(self) -> int:
        return len(self.head)

    @property
    def period(self) -> int:
        return len(self.cycle)

    @property
    def is_periodic(self) -> bool:
        return not self.head

    def cycle_rotations(self) -> list["EventuallyPeriodicPoint"]:
        """The points of the periodic orbit this sequence falls into."""
        c = self.cycle
        return [EventuallyPeriodicPoint.periodic(c[i:] + c[:i], self.d) for i in range(len(c))]

    def __str__(self) -> str:
        return f"{Word(self.head, self.d)}|{Word(self.cycle, self.d)}"


@dataclass(frozen=True)
class Cylinder:
    """The set of sequences whose first ``len(word)`` symbols equal ``word``."""

    defining_word: Word

    def __contains__(self, point: EventuallyPeriodicPoint) -> bool:
        if point.d != self.defining_word.d:
            raise AlphabetMismatch("cylinder and point use different alphabets")
        return point.expand(len(self.defining_word)) == self.defining_word.symbols


def _agree_len(a: EventuallyPeriodicPoint, b: EventuallyPeriodicPoint) -> tuple[int, int]:
    if a.d != b.d:
        raise AlphabetMismatch("points use different alphabets")
    horizon = max(len(a.head), len(b.head)) + math.lcm(len(a.cycle), len(b.cycle))
    for n in range(horizon):
        if a.symbol(n) != b.symbol(n):
            return n, horizon
    return -1, horizon


def lex_compare(a: EventuallyPeriodicPoint, b: EventuallyPeriodicPoint) -> int:
    """Lexicographic order of the infinite expansions: -1, 0 or 1."""
    n, _ = _agree_len(a, b)
    if n < 0:
        return 0
    return -1 if a.symbol(n) < b.symbol(n) else 1


def symbol_distance(a: EventuallyPeriodicPoint, b: EventuallyPeriodicPoint) -> float:
    """``2**-n`` where ``n`` is the first index of disagreement; 0 if equal."""
    n, _ = _agree_len(a, b)
    return 0.0 if n < 0 else 2.0 ** (-n)


def shift_truncate(
    omega: EventuallyPeriodicPoint, k: int
) -> tuple[EventuallyPeriodicPoint, Word]:
    """Split ``omega`` into its first ``k`` symbols and the shifted tail."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    prefix = omega.truncate(k)
    if k <= len(omega.head):
        shifted = EventuallyPeriodicPoint(omega.head[k:], omega.cycle, omega.d)
    else:
        r = (k - len(omega.head)) % len(omega.cycle)
        shifted = EventuallyPeriodicPoint((), omega.cycle[r:] + omega.cycle[:r], omega.d)
    return shifted, prefix


def preimage_words(omega: EventuallyPeriodicPoint) -> list[EventuallyPeriodicPoint]:
    """The ``d`` shift preimages ``s + omega``, in symbol order."""
    return [omega.prepend((s,)) for s in range(omega.d)]


def lyndon_words(d: int, max_len: int) -> Iterator[tuple[int, ...]]:
    """Lyndon words of length at most ``max_len`` in lexicographic order (Duval)."""
    w = [-1]
    while w:
        w[-1] += 1
        yield tuple(w)
        m = len(w)
        while len(w) < max_len:
            w.append(w[len(w) - m])
        while w and w[-1] == d - 1:
            w.pop()


def parse_word(text: str, d: int = 2) -> Word:
    text = text.strip()
    parts = text.split(",") if "," in text else list(text)
    return Word(tuple(int(c) for c in parts if c != ""), d)


def parse_point(text: str, d: int = 2) -> EventuallyPeriodicPoint:
    """Parse ``"head|cycle"``."""
    if "|" not in text:
        raise ValueError(f"expected 'head|cycle', got {text!r}")
    head, cycle = text.split("|", 1)
    return EventuallyPeriodicPoint(parse_word(head, d).symbols, parse_word(cycle, d).symbols, d)
