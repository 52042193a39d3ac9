"""Trapezoidal fuzzy sets over the hour-of-day axis.

Membership functions ramp up between ``a`` and ``b``, hold 1 on the plateau
``[b, c]`` and ramp down between ``c`` and ``d``.  Degenerate ramps encode
crisp intervals: the left edge is closed, the right edge open, so a crisp
``[6, 10]`` rectangle has unit membership on ``[6, 10)`` and its hourly
quadrature area is exactly 4.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

HOURS_PER_DAY = 24.0


@dataclass(frozen=True)
class TrapezoidFuzzySet:
    a: float
    b: float
    c: float
    d: float
    wraps_midnight: bool = False

    def __post_init__(self) -> None:
        for v in (self.a, self.b, self.c, self.d):
            if not 0.0 <= v <= HOURS_PER_DAY:
                raise ValueError(f"trapezoid corner {v} outside [0, 24]")
        if self.wraps_midnight:
            ub, uc, ud = self._unwrapped()
            if not (self.a <= ub <= uc <= ud):
                raise ValueError("wrapped trapezoid corners not circularly ordered")
            if ud - self.a > HOURS_PER_DAY:
                raise ValueError("wrapped trapezoid spans more than 24 hours")
        elif not self.a <= self.b <= self.c <= self.d:
            raise ValueError("trapezoid requires a <= b <= c <= d")

    def _unwrapped(self) -> tuple[float, float, float]:
        # Corners after a, measured forward around the clock from a.
        ub = self.a + (self.b - self.a) % HOURS_PER_DAY
        uc = ub + (self.c - self.b) % HOURS_PER_DAY
        ud = uc + (self.d - self.c) % HOURS_PER_DAY
        return ub, uc, ud

    def membership(self, hour: float) -> float:
        h = hour % HOURS_PER_DAY
        if self.wraps_midnight:
            ub, uc, ud = self._unwrapped()
            h = self.a + (h - self.a) % HOURS_PER_DAY
        else:
            ub, uc, ud = self.b, self.c, self.d
        if h < self.a or h >= ud:
            return 0.0
        if h < ub:
            return (h - self.a) / (ub - self.a)
        if h <= uc:
            return 1.0
        return (ud - h) / (ud - uc)

    def __call__(self, hour: float) -> float:
        return self.membership(hour)


MembershipFn = Callable[[float], float]


def hourly_area(fn: MembershipFn) -> float:
    """Trapezoidal quadrature of a membership function at integer hours.

    Sums (x_i + x_{i+1})/2 over the 23 unit segments between hours 0 and 23.
    """
    samples = [fn(float(h)) for h in range(24)]
    return sum((samples[i] + samples[i + 1]) / 2.0 for i in range(23))


def fuzzy_area(ts: TrapezoidFuzzySet) -> float:
    return hourly_area(ts.membership)


def fuzzy_union(sets: Iterable[MembershipFn]) -> MembershipFn:
    fns = list(sets)
    if not fns:
        return lambda h: 0.0
    return lambda h: max(fn(h) for fn in fns)


def fuzzy_intersection(p: MembershipFn, q: MembershipFn) -> MembershipFn:
    return lambda h: min(p(h), q(h))
