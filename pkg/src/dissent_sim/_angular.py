"""Exact Wigner 3j and 6j symbols via the Racah formulas.

Arguments may be ints, Fractions or half-integer floats. Values are returned
as ``SqrtRational`` (a signed rational times the square root of a rational),
so products of coupling coefficients stay exact until converted to float.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache


def as_half_integer(x) -> Fraction:
    f = Fraction(x).limit_denominator(2)
    if f.denominator not in (1, 2) or abs(float(f) - float(x)) > 1e-12:
        raise ValueError(f"{x!r} is not a half-integer")
    return f


@dataclass(frozen=True)
class SqrtRational:
    """coeff * sqrt(radicand) with radicand >= 0."""
    coeff: Fraction
    radicand: Fraction = Fraction(1)

    def __mul__(self, other):
        if isinstance(other, SqrtRational):
            return SqrtRational(self.coeff * other.coeff, self.radicand * other.radicand).simplify()
        return SqrtRational(self.coeff * Fraction(other), self.radicand)

    __rmul__ = __mul__

    def squared(self) -> Fraction:
        return self.coeff * self.coeff * self.radicand

    def simplify(self) -> "SqrtRational":
        if self.coeff == 0 or self.radicand == 0:
            return SqrtRational(Fraction(0), Fraction(1))
        # pull perfect squares out of numerator and denominator
        num, den = self.radicand.numerator, self.radicand.denominator
        out_n, in_n = _split_square(num)
        out_d, in_d = _split_square(den)
        return SqrtRational(self.coeff * Fraction(out_n, out_d), Fraction(in_n, in_d))

    def __float__(self):
        return float(self.coeff) * math.sqrt(float(self.radicand))

    def __bool__(self):
        return self.coeff != 0 and self.radicand != 0


def _split_square(n: int) -> tuple[int, int]:
    r = math.isqrt(n)
    if r * r == n:
        return r, 1
    out, rest, p = 1, n, 2
    while p * p <= rest:
        while rest % (p * p) == 0:
            out *= p
            rest //= p * p
        p += 1
    return out, rest


ZERO = SqrtRational(Fraction(0))


def _fact(x: Fraction) -> int:
    if x.denominator != 1 or x < 0:
        raise ValueError("factorial of non-natural number")
    return math.factorial(int(x))


def _triangle(a, b, c) -> bool:
    return (a + b + c).denominator == 1 and abs(a - b) <= c <= a + b


def _delta(a, b, c) -> Fraction:
    return Fraction(_fact(a + b - c) * _fact(a - b + c) * _fact(-a + b + c), _fact(a + b + c + 1))


@lru_cache(maxsize=None)
def _three_j(j1, j2, j3, m1, m2, m3) -> SqrtRational:
    if m1 + m2 + m3 != 0 or not _triangle(j1, j2, j3):
        return ZERO
    for j, m in ((j1, m1), (j2, m2), (j3, m3)):
        if abs(m) > j or (j - m).denominator != 1:
            return ZERO
    radicand = _delta(j1, j2, j3) * (
        _fact(j1 + m1) * _fact(j1 - m1) * _fact(j2 + m2) * _fact(j2 - m2) * _fact(j3 + m3) * _fact(j3 - m3))
    kmin = int(max(0, j2 - j3 - m1, j1 - j3 + m2))
    kmax = int(min(j1 + j2 - j3, j1 - m1, j2 + m2))
    total = Fraction(0)
    for k in range(kmin, kmax + 1):
        den = (_fact(Fraction(k)) * _fact(j1 + j2 - j3 - k) * _fact(j1 - m1 - k) * _fact(j2 + m2 - k)
               * _fact(j3 - j2 + m1 + k) * _fact(j3 - j1 - m2 + k))
        total += Fraction((-1) ** k, den)
    phase = (j1 - j2 - m3)
    sign = -1 if int(phase) % 2 else 1
    return SqrtRational(sign * total, Fraction(radicand)).simplify()


def wigner_3j(j1, j2, j3, m1, m2, m3) -> SqrtRational:
    args = tuple(as_half_integer(a) for a in (j1, j2, j3, m1, m2, m3))
    return _three_j(*args)


@lru_cache(maxsize=None)
def _six_j(j1, j2, j3, j4, j5, j6) -> SqrtRational:
    triads = ((j1, j2, j3), (j1, j5, j6), (j4, j2, j6), (j4, j5, j3))
    if not all(_triangle(*t) for t in triads):
        return ZERO
    radicand = Fraction(1)
    for t in triads:
        radicand *= _delta(*t)
    sums = [sum(t) for t in triads]
    pairs = (j1 + j2 + j4 + j5, j2 + j3 + j5 + j6, j3 + j1 + j6 + j4)
    total = Fraction(0)
    for k in range(int(max(sums)), int(min(pairs)) + 1):
        kk = Fraction(k)
        den = _fact(pairs[0] - kk) * _fact(pairs[1] - kk) * _fact(pairs[2] - kk)
        for s in sums:
            den *= _fact(kk - s)
        total += Fraction((-1) ** k * math.factorial(k + 1), den)
    return SqrtRational(total, radicand).simplify()


def wigner_6j(j1, j2, j3, j4, j5, j6) -> SqrtRational:
    args = tuple(as_half_integer(a) for a in (j1, j2, j3, j4, j5, j6))
    return _six_j(*args)


def clebsch_gordan(j1, m1, j2, m2, j, m) -> SqrtRational:
    """<j1 m1; j2 m2 | j m> from the 3j symbol."""
    j1, m1, j2, m2, j, m = (as_half_integer(a) for a in (j1, m1, j2, m2, j, m))
    three = _three_j(j1, j2, j, m1, m2, -m)
    if not three:
        return ZERO
    sign = -1 if int(j1 - j2 + m) % 2 else 1
    return (three * SqrtRational(Fraction(sign), 2 * j + 1)).simplify()
