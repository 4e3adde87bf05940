"""One-cusp quotient surfaces of the hyperbolic plane.

A presentation is normalized so the cusp holonomy becomes z -> z +- 1:
the parabolic fixed point is sent to infinity, then heights are scaled
to make the translation length one.  In these coordinates the cusp
chart of the quotient is simply (theta, y) = (Re z mod 1, Im z) above
the chart floor, and the excursion height of a geodesic is the
Euclidean radius of its circle.

Point reduction into a fundamental region is greedy: wrap the real
part, then apply whichever generator raises the imaginary part most,
until none does.  For the distance between nearby points of the
quotient this is followed by a minimum over a small ball of deck
moves, which is exact once both points are reduced and the distance is
below the injectivity scale of the thick part.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cusp import CuspChart, PhasePoint
from .groups import GroupPresentation
from .halfplane import PhaseState, angle_wrap, distance
from .mobius import MobiusMap, classify
from .words import enumerate_classes

_REDUCE_CAP = 2000


def _parabolic_fixed_point(m: MobiusMap):
    if abs(m.m21) < 1e-12:
        return None  # fixes infinity
    return (m.m11 - m.m22) / (2.0 * m.m21)


def normalize_cusp(group: GroupPresentation) -> tuple[GroupPresentation,
                                                      MobiusMap]:
    """Conjugate the presentation so the cusp word acts as z -> z +- 1.

    Returns the normalized presentation and the conjugating map.
    """
    hol = group.evaluate(group.cusp_word)
    if classify(hol) != "parabolic":
        raise ValueError("cusp word is not parabolic")
    p = _parabolic_fixed_point(hol)
    if p is None:
        s = MobiusMap.identity()
    else:
        s = MobiusMap.from_matrix([[0.0, -1.0], [1.0, -p]])
    h1 = s @ hol @ s.inverse()
    if abs(h1.m21) > 1e-9:
        raise ValueError("failed to move the cusp to infinity")
    tau = h1.m12 / h1.m11
    lam = 1.0 / math.sqrt(abs(tau))
    s = MobiusMap.from_matrix([[lam, 0.0], [0.0, 1.0 / lam]]) @ s
    return group.conjugate(s), s


@dataclass
class CuspedSurface:
    """Normalized one-cusp surface with reduction and distance helpers."""

    group: GroupPresentation
    conjugator: MobiusMap
    translation_sign: float
    chart: CuspChart = field(default_factory=CuspChart)
    _moves: list = field(default_factory=list, repr=False)
    _ball: list = field(default_factory=list, repr=False)

    @classmethod
    def from_presentation(cls, group: GroupPresentation,
                          ball_length: int = 3) -> "CuspedSurface":
        norm, s = normalize_cusp(group)
        t = norm.evaluate(norm.cusp_word)
        sign = math.copysign(1.0, t.m12 / t.m11)
        surf = cls(group=norm, conjugator=s, translation_sign=sign)
        gens = list(norm.generators)
        surf._moves = gens + [g.inverse() for g in gens]
        surf._ball = [MobiusMap.identity()]
        for c in enumerate_classes(norm.rank, ball_length):
            surf._ball.append(norm.evaluate(c.word))
        return surf

    # -- reduction ---------------------------------------------------------

    def wrap_count(self, z: complex) -> int:
        """Power k of the cusp translation with Re(T^-k z) in [-1/2, 1/2)."""
        return int(math.floor(z.real + 0.5)) * int(self.translation_sign)

    def _wrap(self, z: complex) -> tuple[complex, int]:
        k = self.wrap_count(z)
        return z - math.floor(z.real + 0.5), k

    def reduce(self, z: complex) -> tuple[complex, MobiusMap]:
        """(z', g) with z' = g(z) in the fundamental region."""
        t = self.group.evaluate(self.group.cusp_word)
        z_cur = complex(z)
        g = MobiusMap.identity()
        for _ in range(_REDUCE_CAP):
            z_cur, k = self._wrap(z_cur)
            if k:
                g = _mobius_power(t, -k) @ g
            best, best_im = None, z_cur.imag * (1.0 + 1e-14)
            for move in self._moves:
                im = move(z_cur).imag
                if im > best_im:
                    best, best_im = move, im
            if best is None:
                return z_cur, g
            z_cur = best(z_cur)
            g = best @ g
        raise RuntimeError("point reduction did not terminate")

    def reduce_state(self, st: PhaseState) -> tuple[PhaseState, MobiusMap]:
        from .halfplane import transport
        _, g = self.reduce(st.z)
        return transport(g, st), g

    # -- distances ---------------------------------------------------------

    def quotient_distance(self, z1: complex, z2: complex) -> float:
        """Distance on the quotient, exact for nearby points."""
        r1, _ = self.reduce(z1)
        r2, _ = self.reduce(z2)
        return self._reduced_distance(r1, r2)[0]

    def _reduced_distance(self, r1: complex, r2: complex
                          ) -> tuple[float, MobiusMap]:
        t = self.group.evaluate(self.group.cusp_word)
        best = (math.inf, MobiusMap.identity())
        for g in self._ball:
            for k in (-1, 0, 1):
                h = _mobius_power(t, k) @ g
                d = distance(r1, h(r2))
                if d < best[0]:
                    best = (d, h)
        return best

    def phase_distance(self, s1: PhaseState, s2: PhaseState) -> float:
        """Product-type proxy: base distance plus angle mismatch after
        transporting s2 by the deck move that realizes the base
        minimum."""
        r1, _ = self.reduce_state(s1)
        r2, _ = self.reduce_state(s2)
        d, h = self._reduced_distance(r1.z, r2.z)
        turn = np.angle(h.derivative(r2.z))
        dang = abs(float(angle_wrap(r1.alpha - r2.alpha - turn)))
        return d + dang

    # -- cusp chart --------------------------------------------------------

    def to_cusp_chart(self, st: PhaseState) -> PhasePoint:
        """Phase point in cusp coordinates; requires y above the floor.

        The vertical-from-up angle is phi = arccos(sin alpha) and the
        horizontal sign u = +-1 absorbs the direction of travel.
        """
        if st.y < self.chart.a * (1.0 - 1e-12):
            raise ValueError("point below the cusp chart floor")
        phi = math.acos(max(-1.0, min(1.0, math.sin(st.alpha))))
        u = 1.0 if math.cos(st.alpha) >= 0 else -1.0
        return PhasePoint(st.y, st.x % 1.0, phi, u)

    def excursion_height(self, st: PhaseState) -> float:
        """Peak height of the geodesic through st: the radius of its
        circle, infinite for vertical rays."""
        ca = math.cos(st.alpha)
        if abs(ca) < 1e-13:
            return math.inf
        return st.y / abs(ca)

    def embedding_height(self) -> float:
        """1 / min |c| over the deck ball: horoballs above this height
        are embedded in the quotient."""
        cs = [abs(g.m21) for g in self._ball if abs(g.m21) > 1e-9]
        if not cs:
            return 0.0
        return 1.0 / min(cs)


def _mobius_power(m: MobiusMap, k: int) -> MobiusMap:
    if k == 0:
        return MobiusMap.identity()
    base = m if k > 0 else m.inverse()
    out = base
    for _ in range(abs(k) - 1):
        out = out @ base
    return out


def punctured_torus(ball_length: int = 3) -> CuspedSurface:
    """The standard once-punctured torus, cusp normalized."""
    from .groups import preset
    return CuspedSurface.from_presentation(preset("one-cusp-genus-1"),
                                           ball_length=ball_length)
