"""Fuchsian group presentations and word evaluation.

Presentations are free on a list of Moebius generators.  Two presets
ship with the laboratory:

* ``thrice-punctured``: the level-two congruence-style pair
  ((1,2),(0,1)), ((1,0),(2,1)); both generators parabolic, three cusps.
* ``one-cusp-genus-1``: a once-punctured-torus pair ((1,1),(1,2)),
  ((1,-1),(-1,2)); the generators are hyperbolic and the commutator
  [a,b] is parabolic (trace -2), giving a single cusp.

Presentations can also be read from a TOML config table; see
`load_presentation`.
"""

from __future__ import annotations

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .mobius import MobiusMap, classify
from .words import HomotopyClass, enumerate_classes, free_reduce

PRESET_TABLES = {
    "thrice-punctured": {
        "names": ("g", "h"),
        "matrices": (((1.0, 2.0), (0.0, 1.0)), ((1.0, 0.0), (2.0, 1.0))),
        "cusp_word": (1,),
    },
    "one-cusp-genus-1": {
        "names": ("a", "b"),
        "matrices": (((1.0, 1.0), (1.0, 2.0)), ((1.0, -1.0), (-1.0, 2.0))),
        "cusp_word": (1, 2, -1, -2),
    },
}


@dataclass(frozen=True)
class GroupPresentation:
    generators: tuple[MobiusMap, ...]
    names: tuple[str, ...]
    cusp_word: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if len(self.generators) != len(self.names):
            raise ValueError("one name per generator")
        for i, g in enumerate(self.generators):
            if g.is_identity():
                raise ValueError(f"generator {self.names[i]} is degenerate")
        if self.cusp_word:
            kind = classify(self.evaluate(self.cusp_word))
            if kind != "parabolic":
                raise ValueError(f"declared cusp word evaluates {kind}")

    @property
    def rank(self) -> int:
        return len(self.generators)

    def evaluate(self, word: Sequence[int]) -> MobiusMap:
        """Product of generators along the word; empty word -> identity."""
        out = MobiusMap.identity()
        for letter in free_reduce(word):
            idx = abs(letter)
            if idx > len(self.generators):
                raise ValueError(f"generator index {letter} out of range "
                                 f"(rank {self.rank})")
            g = self.generators[idx - 1]
            out = out @ (g if letter > 0 else g.inverse())
        return out

    def holonomy(self, cls: HomotopyClass) -> MobiusMap:
        return self.evaluate(cls.word)

    def hyperbolic_classes(self, max_word_length: int,
                           count: int | None = None) -> list[HomotopyClass]:
        """Hyperbolic classes sorted by (translation length, word).

        Deterministic: ties in length break on the canonical word.
        """
        from .mobius import trace_length
        scored = []
        for cls in enumerate_classes(self.rank, max_word_length):
            m = self.holonomy(cls)
            if classify(m) == "hyperbolic":
                scored.append((trace_length(m), cls))
        scored.sort(key=lambda pair: (pair[0], pair[1].word))
        classes = [cls for _, cls in scored]
        return classes[:count] if count is not None else classes

    def conjugate(self, s: MobiusMap) -> "GroupPresentation":
        gens = tuple(s @ g @ s.inverse() for g in self.generators)
        return GroupPresentation(gens, self.names, self.cusp_word)


def preset(name: str) -> GroupPresentation:
    try:
        table = PRESET_TABLES[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; "
                         f"have {sorted(PRESET_TABLES)}") from None
    gens = tuple(MobiusMap.from_matrix(m) for m in table["matrices"])
    return GroupPresentation(gens, table["names"], table["cusp_word"])


def load_presentation(source) -> GroupPresentation:
    """Read a presentation from a TOML file path or a parsed dict.

    Expected shape::

        [group]
        preset = "one-cusp-genus-1"        # or explicit generators:
        # names = ["a", "b"]
        # matrices = [[[1,1],[1,2]], [[1,-1],[-1,2]]]
        # cusp_word = [1, 2, -1, -2]
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "rb") as fh:
            data = tomllib.load(fh)
    else:
        data = dict(source)
    table = data.get("group", data)
    if "preset" in table:
        return preset(table["preset"])
    matrices = table["matrices"]
    names = tuple(table.get("names",
                            [f"g{i+1}" for i in range(len(matrices))]))
    gens = tuple(MobiusMap.from_matrix(np.asarray(m, dtype=float))
                 for m in matrices)
    cusp_word = tuple(table.get("cusp_word", ()))
    return GroupPresentation(gens, names, cusp_word)
