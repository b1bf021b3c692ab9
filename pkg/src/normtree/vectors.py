"""Finitely supported vectors with exact coordinates, and index streams.

``SparseVector`` holds exact rational coordinates.  ``SqrtVector`` holds
coordinates of the form ``sign * sqrt(square)`` with rational squares; the
hierarchy averages and every vector built from them live here, and all
norm-relevant checks run on the squares.  ``IndexStream`` is a strictly
increasing integer stream (arithmetic progression or explicit list with an
error on exhaustion).
"""

from __future__ import annotations

import hashlib
import json
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Mapping

from .qmath import RadSum, sqrt_exact, sqrt_float


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    raise TypeError(f"not an exact rational: {x!r}")


class SparseVector:
    """Map from positive integer index to nonzero exact rational value."""

    __slots__ = ("coords",)

    def __init__(self, coords: Mapping[int, Fraction] | Iterable[tuple[int, Fraction]] = ()):
        items = coords.items() if isinstance(coords, Mapping) else coords
        self.coords: dict[int, Fraction] = {}
        for k, v in items:
            if not isinstance(k, int) or k < 1:
                raise ValueError(f"index must be a positive integer: {k}")
            v = _frac(v)
            if v != 0:
                self.coords[k] = v

    @staticmethod
    def unit(k: int) -> "SparseVector":
        return SparseVector({k: Fraction(1)})

    def __getitem__(self, k: int) -> Fraction:
        return self.coords.get(k, Fraction(0))

    def __bool__(self) -> bool:
        return bool(self.coords)

    def __eq__(self, other) -> bool:
        return isinstance(other, SparseVector) and self.coords == other.coords

    def __hash__(self):
        return hash(tuple(sorted(self.coords.items())))

    def support(self) -> tuple[int, ...]:
        return tuple(sorted(self.coords))

    def range(self) -> tuple[int, int]:
        """Smallest integer interval covering the support."""
        if not self.coords:
            raise ValueError("range of the zero vector is undefined")
        s = self.support()
        return s[0], s[-1]

    def add(self, other: "SparseVector") -> "SparseVector":
        out = dict(self.coords)
        for k, v in other.coords.items():
            w = out.get(k, Fraction(0)) + v
            if w == 0:
                out.pop(k, None)
            else:
                out[k] = w
        return SparseVector(out)

    def scale(self, c) -> "SparseVector":
        c = _frac(c)
        if c == 0:
            return SparseVector()
        return SparseVector({k: c * v for k, v in self.coords.items()})

    def restrict(self, lo: int, hi: int | None) -> "SparseVector":
        """Restriction to the integer interval [lo, hi] (hi None = unbounded)."""
        return SparseVector({k: v for k, v in self.coords.items()
                             if lo <= k and (hi is None or k <= hi)})

    def coord_sum(self) -> Fraction:
        return sum(self.coords.values(), Fraction(0))

    def l2_sq(self) -> Fraction:
        return sum((v * v for v in self.coords.values()), Fraction(0))

    def l1(self) -> Fraction:
        return sum((abs(v) for v in self.coords.values()), Fraction(0))

    def max_abs(self) -> Fraction:
        return max((abs(v) for v in self.coords.values()), default=Fraction(0))

    def dot(self, other: "SparseVector") -> Fraction:
        small, big = sorted((self, other), key=lambda v: len(v.coords))
        return sum((v * big.coords.get(k, Fraction(0))
                    for k, v in small.coords.items()), Fraction(0))

    def to_json_dict(self) -> dict:
        return {"coords": {str(k): str(v) for k, v in sorted(self.coords.items())}}

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json_dict(d: dict) -> "SparseVector":
        return SparseVector({int(k): Fraction(v) for k, v in d["coords"].items()})

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()

    def __repr__(self):
        inner = ", ".join(f"{k}: {v}" for k, v in sorted(self.coords.items())[:8])
        more = "" if len(self.coords) <= 8 else f", ... ({len(self.coords)} coords)"
        return f"SparseVector({{{inner}{more}}})"


class SqrtVector:
    """Vector whose coordinate at ``k`` is ``sign_k * sqrt(squares[k])``.

    ``squares`` is a SparseVector with nonnegative rational entries; signs
    default to +1.  Exact checks (coordinate sums of squares, Schreier
    masses, functional values) run on the squares or in ``RadSum``
    arithmetic; square roots materialize only as floats for reporting.
    """

    __slots__ = ("squares", "signs")

    def __init__(self, squares: SparseVector, signs: Mapping[int, int] | None = None):
        if any(v < 0 for v in squares.coords.values()):
            raise ValueError("squares must be nonnegative")
        self.squares = squares
        self.signs: dict[int, int] = {}
        for k, s in (signs or {}).items():
            if s not in (1, -1):
                raise ValueError("signs must be +1 or -1")
            if s == -1 and k in squares.coords:
                self.signs[k] = -1

    @staticmethod
    def from_rational(v: SparseVector) -> "SqrtVector":
        sq = SparseVector({k: c * c for k, c in v.coords.items()})
        sg = {k: -1 for k, c in v.coords.items() if c < 0}
        return SqrtVector(sq, sg)

    def sign(self, k: int) -> int:
        return self.signs.get(k, 1)

    def coord(self, k: int) -> RadSum:
        sq = self.squares[k]
        if sq == 0:
            return RadSum()
        return RadSum.radical(self.sign(k), sq)

    def coord_exact_rational(self, k: int) -> Fraction | None:
        r = sqrt_exact(self.squares[k])
        return None if r is None else self.sign(k) * r

    def as_rational_vector(self) -> SparseVector:
        """Exact conversion when every coordinate square is a perfect square."""
        out = {}
        for k in self.squares.coords:
            r = self.coord_exact_rational(k)
            if r is None:
                raise ValueError(f"coordinate {k} is irrational")
            out[k] = r
        return SparseVector(out)

    def support(self) -> tuple[int, ...]:
        return self.squares.support()

    def range(self) -> tuple[int, int]:
        return self.squares.range()

    def sum_squares(self) -> Fraction:
        return self.squares.coord_sum()

    def l1_sq(self) -> Fraction:
        """Exact square of the l1 norm (all cross terms via squares).

        Valid whenever all coordinate squares are exact rationals:
        ``(sum |x_k|)^2`` expands over RadSum arithmetic.
        """
        total = RadSum()
        for k in self.squares.coords:
            total = total + RadSum.radical(1, self.squares[k])
        sq = total.square()
        return sq.as_rational()

    def scale_sqrt(self, square_factor: Fraction, negate: bool = False) -> "SqrtVector":
        """Multiply by ``sqrt(square_factor)`` (and optionally by -1)."""
        square_factor = _frac(square_factor)
        if square_factor < 0:
            raise ValueError("square factor must be nonnegative")
        sq = SparseVector({k: v * square_factor for k, v in self.squares.coords.items()})
        sg = dict(self.signs)
        if negate:
            sg = {k: -self.sign(k) for k in self.squares.coords}
        return SqrtVector(sq, {k: s for k, s in sg.items() if s == -1})

    def scale_exact(self, c: Fraction) -> "SqrtVector":
        """Multiply by an exact rational ``c``."""
        c = _frac(c)
        return self.scale_sqrt(c * c, negate=c < 0)

    def scale_rad(self, rad: RadSum, invert: bool = False) -> "SqrtVector":
        """Multiply (or divide) by a single-term exact radical scalar."""
        if isinstance(rad, (int, Fraction)):
            rad = RadSum.from_rational(rad)
        if len(rad.terms) != 1:
            raise ValueError("only single-term radical scalings stay coordinatewise exact")
        ((m, c),) = rad.terms.items()
        factor = c * c * m
        if invert:
            factor = Fraction(1) / factor
        return self.scale_sqrt(Fraction(factor), negate=c < 0)

    def add_disjoint(self, other: "SqrtVector") -> "SqrtVector":
        """Sum of vectors with disjoint supports (the only sum we need)."""
        if set(self.squares.coords) & set(other.squares.coords):
            raise ValueError("supports overlap; coordinate sums of radicals are not stored")
        sq = self.squares.add(other.squares)
        sg = {**self.signs, **other.signs}
        return SqrtVector(sq, sg)

    def restrict(self, lo: int, hi: int | None) -> "SqrtVector":
        sq = self.squares.restrict(lo, hi)
        return SqrtVector(sq, {k: s for k, s in self.signs.items() if k in sq.coords})

    def eval_with(self, coeffs: SparseVector) -> RadSum:
        """Exact value of ``sum_k coeffs[k] * coord_k``."""
        total = RadSum()
        for k, c in coeffs.coords.items():
            sq = self.squares[k]
            if sq:
                total = total + RadSum.radical(c * self.sign(k), sq)
        return total

    def to_float_dict(self) -> dict[int, float]:
        return {k: self.sign(k) * sqrt_float(v) for k, v in self.squares.coords.items()}

    def to_json_dict(self) -> dict:
        d = {"squares": self.squares.to_json_dict()}
        if self.signs:
            d["signs"] = {str(k): v for k, v in sorted(self.signs.items())}
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json_dict(d: dict) -> "SqrtVector":
        return SqrtVector(
            SparseVector.from_json_dict(d["squares"]),
            {int(k): int(v) for k, v in d.get("signs", {}).items()},
        )

    def __repr__(self):
        s = self.support()
        return f"SqrtVector(support={s[:6]}{'...' if len(s) > 6 else ''}, n={len(s)})"


class IndexStream:
    """Strictly increasing stream of positive integers.

    Arithmetic progressions continue forever; explicit streams raise when
    the recursion consumes past their end.
    """

    def __init__(self, kind: str, start: int = 1, step: int = 1,
                 values: tuple[int, ...] = ()):
        if kind not in ("arith", "explicit"):
            raise ValueError(f"unknown stream kind {kind!r}")
        self.kind = kind
        self.start = start
        self.step = step
        self.values = values
        if kind == "arith" and (start < 1 or step < 1):
            raise ValueError("arithmetic stream needs start >= 1, step >= 1")
        if kind == "explicit":
            if any(values[i] >= values[i + 1] for i in range(len(values) - 1)):
                raise ValueError("explicit stream must be strictly increasing")
            if values and values[0] < 1:
                raise ValueError("stream elements must be positive")

    @staticmethod
    def arithmetic(start: int, step: int = 1) -> "IndexStream":
        return IndexStream("arith", start=start, step=step)

    @staticmethod
    def explicit(values: Iterable[int]) -> "IndexStream":
        return IndexStream("explicit", values=tuple(values))

    def first(self) -> int:
        if self.kind == "arith":
            return self.start
        if not self.values:
            raise IndexError("explicit stream exhausted")
        return self.values[0]

    def take(self, n: int) -> list[int]:
        if self.kind == "arith":
            return [self.start + i * self.step for i in range(n)]
        if len(self.values) < n:
            raise IndexError(
                f"explicit stream exhausted: needs {n} elements, has {len(self.values)}"
            )
        return list(self.values[:n])

    def tail_above(self, x: int) -> "IndexStream":
        """The stream of elements strictly greater than ``x``."""
        if self.kind == "arith":
            if x < self.start:
                return self
            k = (x - self.start) // self.step + 1
            return IndexStream.arithmetic(self.start + k * self.step, self.step)
        return IndexStream.explicit(tuple(v for v in self.values if v > x))

    def to_json_dict(self) -> dict:
        if self.kind == "arith":
            return {"kind": "arith", "start": self.start, "step": self.step}
        return {"kind": "explicit", "values": list(self.values)}

    @staticmethod
    def from_json_dict(d: dict) -> "IndexStream":
        if d["kind"] == "arith":
            return IndexStream.arithmetic(d["start"], d["step"])
        return IndexStream.explicit(d["values"])
