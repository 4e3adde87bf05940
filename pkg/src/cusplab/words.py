"""Words in a finitely generated group, as signed generator indices.

A word is a tuple of nonzero ints: +k means the k-th generator
(1-based), -k its inverse.  Free-homotopy classes are cyclically
reduced words up to rotation; the canonical representative is the
lexicographically smallest rotation.  A class and its inverse word are
distinct classes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence


def free_reduce(word: Sequence[int]) -> tuple[int, ...]:
    out: list[int] = []
    for letter in word:
        if letter == 0:
            raise ValueError("0 is not a valid signed generator index")
        if out and out[-1] == -letter:
            out.pop()
        else:
            out.append(letter)
    return tuple(out)


def cyclic_reduce(word: Sequence[int]) -> tuple[int, ...]:
    w = list(free_reduce(word))
    while len(w) >= 2 and w[0] == -w[-1]:
        w = w[1:-1]
    return tuple(w)


def canonical_rotation(word: Sequence[int]) -> tuple[int, ...]:
    w = tuple(word)
    if not w:
        return w
    return min(tuple(w[i:] + w[:i]) for i in range(len(w)))


def inverse_word(word: Sequence[int]) -> tuple[int, ...]:
    return tuple(-letter for letter in reversed(word))


@dataclass(frozen=True)
class HomotopyClass:
    """A free-homotopy class, stored as its canonical cyclic word."""

    word: tuple[int, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "word",
                           canonical_rotation(cyclic_reduce(self.word)))

    @property
    def is_trivial(self) -> bool:
        return len(self.word) == 0

    def inverse(self) -> "HomotopyClass":
        return HomotopyClass(inverse_word(self.word))

    def power(self, n: int) -> "HomotopyClass":
        if n == 0:
            return HomotopyClass(())
        base = self.word if n > 0 else inverse_word(self.word)
        return HomotopyClass(base * abs(n))

    def key(self) -> str:
        """Deterministic string key, e.g. '1,2,-1'."""
        return ",".join(str(k) for k in self.word)

    @classmethod
    def from_key(cls, key: str) -> "HomotopyClass":
        if not key:
            return cls(())
        return cls(tuple(int(tok) for tok in key.split(",")))


def _reduced_words(n_gens: int, length: int) -> Iterator[tuple[int, ...]]:
    """All freely reduced words of exactly `length` letters."""
    letters = [k for g in range(1, n_gens + 1) for k in (g, -g)]

    def build(prefix: list[int]) -> Iterator[tuple[int, ...]]:
        if len(prefix) == length:
            yield tuple(prefix)
            return
        for letter in letters:
            if prefix and prefix[-1] == -letter:
                continue
            prefix.append(letter)
            yield from build(prefix)
            prefix.pop()

    yield from build([])


def enumerate_classes(n_gens: int, max_length: int) -> list[HomotopyClass]:
    """Nontrivial classes with canonical word length <= max_length.

    Deterministic order: by (word length, lexicographic word).
    """
    seen: set[tuple[int, ...]] = set()
    out: list[HomotopyClass] = []
    for length in range(1, max_length + 1):
        for w in _reduced_words(n_gens, length):
            if w[0] == -w[-1]:
                continue  # not cyclically reduced
            canon = canonical_rotation(w)
            if canon in seen:
                continue
            seen.add(canon)
            out.append(HomotopyClass(canon))
    out.sort(key=lambda c: (len(c.word), c.word))
    return out
