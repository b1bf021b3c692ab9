"""Exact scalar arithmetic for square-root-bearing quantities.

All gating comparisons in this package happen in exact arithmetic.  Three
kinds of numbers occur:

* plain rationals (``fractions.Fraction``),
* single radicals ``c * sqrt(r)`` with ``c, r`` rational, ``r >= 0``,
* short sums of such radicals (e.g. the value of a functional applied to a
  vector whose coordinates are square roots of rationals).

``RadSum`` stores a sum keyed by canonicalized integer radicand.  Distinct
squarefree radicands are linearly independent over the rationals, so after
canonicalization a ``RadSum`` is zero iff it has no terms, and sign
determination terminates.  Canonicalization extracts square factors by
trial division; radicands in this package stay small (supports, block
lengths), so this is exact in practice and guarded by an error if a sign
ever fails to resolve.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterable, Sequence, Union

Rational = Union[int, Fraction]

_TRIAL_LIMIT = 10_000


def is_perfect_square(n: int) -> bool:
    if n < 0:
        return False
    r = math.isqrt(n)
    return r * r == n


def split_square(n: int) -> tuple[int, int]:
    """Return ``(s, m)`` with ``n == s*s*m`` and ``m`` square-free up to
    primes above the trial-division limit."""
    if n == 0:
        return 0, 1
    if n < 0:
        raise ValueError("radicand must be nonnegative")
    s, m = 1, n
    r = math.isqrt(m)
    if r * r == m:
        return r, 1
    p = 2
    while p <= _TRIAL_LIMIT and p * p <= m:
        while m % (p * p) == 0:
            m //= p * p
            s *= p
        p += 1 if p == 2 else 2
    r = math.isqrt(m)
    if r * r == m:
        return s * r, 1
    return s, m


def canonical_radical(coeff: Fraction, radicand: Fraction) -> tuple[Fraction, int]:
    """Rewrite ``coeff * sqrt(radicand)`` as ``c * sqrt(m)`` with integer
    ``m`` square-free (up to the trial limit).  Returns ``(c, m)``."""
    if radicand < 0:
        raise ValueError("radicand must be nonnegative")
    if coeff == 0 or radicand == 0:
        return Fraction(0), 1
    a, b = radicand.numerator, radicand.denominator
    # sqrt(a/b) = sqrt(a*b)/b
    s, m = split_square(a * b)
    return coeff * Fraction(s, b), m


def sqrt_exact(q: Fraction) -> Fraction | None:
    """Exact rational square root of ``q`` if it exists, else ``None``."""
    if q < 0:
        return None
    if is_perfect_square(q.numerator) and is_perfect_square(q.denominator):
        return Fraction(math.isqrt(q.numerator), math.isqrt(q.denominator))
    return None


def sqrt_bounds(q: Fraction, rel_tol: Fraction = Fraction(1, 10**12)) -> tuple[Fraction, Fraction]:
    """Rational ``(lo, hi)`` with ``lo <= sqrt(q) <= hi`` and
    ``hi - lo <= rel_tol * sqrt(q)`` (exact bracketing, no floats)."""
    if q < 0:
        raise ValueError("negative radicand")
    if q == 0:
        return Fraction(0), Fraction(0)
    exact = sqrt_exact(q)
    if exact is not None:
        return exact, exact
    scale = 1
    while True:
        n = q.numerator * scale * scale
        lo_i = math.isqrt(n // q.denominator)
        lo = Fraction(lo_i, scale)
        hi = Fraction(lo_i + 1, scale)
        if lo > 0 and (hi - lo) <= rel_tol * lo:
            return lo, hi
        scale *= 1 << 16


def sqrt_lower(q: Fraction, rel_tol: Fraction = Fraction(1, 10**12)) -> Fraction:
    return sqrt_bounds(q, rel_tol)[0]


def sqrt_upper(q: Fraction, rel_tol: Fraction = Fraction(1, 10**12)) -> Fraction:
    return sqrt_bounds(q, rel_tol)[1]


def sqrt_float(q: Fraction) -> float:
    """Float approximation of sqrt(q); only for reporting, never for gates."""
    if q < 0:
        raise ValueError("negative radicand")
    try:
        return math.sqrt(q.numerator / q.denominator)
    except OverflowError:
        lo, _ = sqrt_bounds(q, Fraction(1, 10**6))
        return float(lo)


class RadSum:
    """Exact finite sum ``sum_i c_i * sqrt(m_i)`` over canonical radicands."""

    __slots__ = ("terms",)

    def __init__(self, terms: dict[int, Fraction] | None = None):
        self.terms: dict[int, Fraction] = {}
        if terms:
            for m, c in terms.items():
                if c != 0:
                    self.terms[m] = self.terms.get(m, Fraction(0)) + c
            self.terms = {m: c for m, c in self.terms.items() if c != 0}

    @staticmethod
    def from_rational(q: Rational) -> "RadSum":
        q = Fraction(q)
        return RadSum({1: q}) if q else RadSum()

    @staticmethod
    def radical(coeff: Rational, radicand: Rational) -> "RadSum":
        c, m = canonical_radical(Fraction(coeff), Fraction(radicand))
        return RadSum({m: c}) if c else RadSum()

    def is_rational(self) -> bool:
        return all(m == 1 for m in self.terms)

    def as_rational(self) -> Fraction:
        if not self.terms:
            return Fraction(0)
        if not self.is_rational():
            raise ValueError(f"not rational: {self}")
        return self.terms[1]

    def __add__(self, other) -> "RadSum":
        other = _coerce(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, Fraction(0)) + c
        return RadSum(out)

    __radd__ = __add__

    def __neg__(self) -> "RadSum":
        return RadSum({m: -c for m, c in self.terms.items()})

    def __sub__(self, other) -> "RadSum":
        return self + (-_coerce(other))

    def __rsub__(self, other) -> "RadSum":
        return _coerce(other) + (-self)

    def __mul__(self, other) -> "RadSum":
        other = _coerce(other)
        out: dict[int, Fraction] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                c, m = canonical_radical(c1 * c2, Fraction(m1 * m2))
                if c:
                    out[m] = out.get(m, Fraction(0)) + c
        return RadSum(out)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "RadSum":
        other = _coerce(other)
        if not other.terms:
            raise ZeroDivisionError
        if other.is_rational():
            q = other.as_rational()
            return RadSum({m: c / q for m, c in self.terms.items()})
        if len(other.terms) == 1:
            ((m, c),) = other.terms.items()
            # 1/(c*sqrt(m)) = sqrt(m)/(c*m)
            return self * RadSum({m: Fraction(1, 1) / (c * m)})
        raise NotImplementedError("division by multi-term radical sums")

    def square(self) -> "RadSum":
        return self * self

    def sign(self) -> int:
        """Exact sign of the sum."""
        if not self.terms:
            return 0
        if len(self.terms) == 1:
            ((_, c),) = self.terms.items()
            return 1 if c > 0 else -1
        pos = {m: c for m, c in self.terms.items() if c > 0}
        neg = {m: -c for m, c in self.terms.items() if c < 0}
        if not pos:
            return -1
        if not neg:
            return 1
        return _compare_sums(pos, neg)

    def __eq__(self, other) -> bool:
        return (self - other).terms == {}

    def __lt__(self, other) -> bool:
        return (self - _coerce(other)).sign() < 0

    def __le__(self, other) -> bool:
        return (self - _coerce(other)).sign() <= 0

    def __gt__(self, other) -> bool:
        return (self - _coerce(other)).sign() > 0

    def __ge__(self, other) -> bool:
        return (self - _coerce(other)).sign() >= 0

    def __hash__(self):
        return hash(tuple(sorted(self.terms.items())))

    def to_float(self) -> float:
        return sum(float(c) * math.sqrt(m) for m, c in self.terms.items())

    def __repr__(self):
        if not self.terms:
            return "RadSum(0)"
        bits = []
        for m in sorted(self.terms):
            c = self.terms[m]
            bits.append(str(c) if m == 1 else f"{c}*sqrt({m})")
        return "RadSum(" + " + ".join(bits) + ")"


def _coerce(x) -> RadSum:
    if isinstance(x, RadSum):
        return x
    if isinstance(x, (int, Fraction)):
        return RadSum.from_rational(x)
    raise TypeError(f"cannot coerce {type(x)} to RadSum")


def _compare_sums(pos: dict[int, Fraction], neg: dict[int, Fraction]) -> int:
    """Sign of ``sum(pos) - sum(neg)``, all coefficients positive."""
    if len(pos) == 1 and len(neg) == 1:
        ((mp, cp),) = pos.items()
        ((mn, cn),) = neg.items()
        lhs, rhs = cp * cp * mp, cn * cn * mn
        return (lhs > rhs) - (lhs < rhs)
    # Squares of distinct canonical radicals never coincide term-by-term,
    # so refine rational brackets until zero is excluded; exact zero was
    # already ruled out by canonical cancellation in RadSum.
    tol = Fraction(1, 1 << 16)
    for _ in range(40):
        lo = Fraction(0)
        hi = Fraction(0)
        for m, c in pos.items():
            l, h = sqrt_bounds(Fraction(m), tol)
            lo += c * l
            hi += c * h
        for m, c in neg.items():
            l, h = sqrt_bounds(Fraction(m), tol)
            lo -= c * h
            hi -= c * l
        if lo > 0:
            return 1
        if hi < 0:
            return -1
        tol /= 1 << 16
    raise ArithmeticError("sign determination failed; radicand canonicalization incomplete")


def pava_nonincreasing(values: Sequence) -> list:
    """Euclidean projection of ``values`` onto the nonincreasing cone
    (pool adjacent violators).  Exact over rationals and over RadSum."""
    blocks: list[list] = []  # [sum, count], means must be nonincreasing
    for v in values:
        cur_sum = v if isinstance(v, RadSum) else Fraction(v)
        cur_cnt = 1
        while blocks and blocks[-1][0] * cur_cnt < cur_sum * blocks[-1][1]:
            ps, pc = blocks.pop()
            cur_sum = cur_sum + ps
            cur_cnt += pc
        blocks.append([cur_sum, cur_cnt])
    out: list = []
    for s, c in blocks:
        out.extend([s / c] * c)
    return out


def _pos_part(x):
    zero = RadSum() if isinstance(x, RadSum) else Fraction(0)
    return x if x > zero else zero


def cone_sup_sq(values: Sequence):
    """``max{ <g, v> : g nonincreasing, g >= 0, sum g^2 <= 1 }`` squared.

    Equals the squared norm of the projection of ``v`` onto the
    nonincreasing-nonnegative cone (monotone regression clipped at zero).
    """
    proj = [_pos_part(x) for x in pava_nonincreasing(values)]
    out = sum((x * x for x in proj), Fraction(0))
    return out


def cone_argmax(values: Sequence) -> list:
    """The projection direction achieving ``cone_sup_sq`` (unnormalized)."""
    return [_pos_part(x) for x in pava_nonincreasing(values)]


def sqrt_lower_common(squares: Sequence[Fraction], bits: int = 48) -> list[Fraction]:
    """Downward-rounded square roots at one common scale: monotone in the
    input, each at most the true root, so squared sums never grow."""
    n = 1 << bits
    out = []
    for q in squares:
        q = Fraction(q)
        if q < 0:
            raise ValueError("negative square")
        out.append(Fraction(math.isqrt((q.numerator * n * n) // q.denominator), n))
    return out


def rationalize_unit(values: Sequence[Fraction], tol: Fraction = Fraction(1, 10**9)) -> list[Fraction]:
    """Rational ``g_i`` close to ``v_i / ||v||_2`` with ``sum g^2 <= 1`` exactly.

    Nonincreasing inputs yield nonincreasing outputs (a single rounding
    scale is used for all entries).  Each ``g_i`` is the downward-rounded
    square root of ``v_i^2 / sum v^2``, so the magnitude never exceeds the
    true ratio and the squares sum to at most one.
    """
    vals = [Fraction(v) for v in values]
    total = sum((v * v for v in vals), Fraction(0))
    if total == 0:
        return [Fraction(0)] * len(vals)
    scale = max(16, (Fraction(1) / tol).numerator.bit_length())
    n = 1 << scale
    out = []
    for v in vals:
        ratio = (v * v) / total
        root_i = math.isqrt((ratio.numerator * n * n) // ratio.denominator)
        root = Fraction(root_i, n)
        out.append(root if v >= 0 else -root)
    return out
