"""The four integer parameter sequences and their validity constraints.

A system carries sequences m, l, f, n (n indexed from 0 with n[0] = 0).
Two modes:

* ``paper_faithful``: canonical minimal choices.  m1 = 247, each next m is
  the previous squared plus one, l_i is minimal with 2**l_i > m_i, f_1 = 1,
  f_j for j >= 2 is the exact maximum of ``sum rho_i * n_i`` over
  nonnegative integer vectors with ``prod m_i**rho_i < m_j**3``, and
  n_j = l_j * (f_j + 1) + 1.  All constraints hold by construction.
* ``toy``: explicit override sequences for desk-scale work.  Overrides are
  accepted verbatim (positivity is enforced); a validity report lists every
  constraint of the strict regime that fails.

Everything is big-integer exact; no floats.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

PAPER = "paper_faithful"
TOY = "toy"


def minimal_pow2_exponent(m: int) -> int:
    """Smallest l with 2**l > m."""
    return m.bit_length()


def _ilog_strict(base: int, bound: int) -> int:
    """Largest e >= 0 with base**e < bound (exact integer arithmetic)."""
    if bound <= 1:
        return 0
    e = max((bound.bit_length() - 1) // max(base.bit_length() - 1, 1), 0) + 2
    p = base ** e
    while p >= bound:
        p //= base
        e -= 1
    return e


def compute_f(j: int, m: Sequence[int], n: Sequence[int]) -> int:
    """Exact maximum of ``sum_{1<=i<j} rho_i * n_i`` subject to
    ``prod m_i**rho_i < m_j**3`` over nonnegative integers rho.

    ``m`` is 1-based as ``m[1..j]``; ``n`` is 0-based with ``n[0] = 0``.
    Branch and bound over descending indices with exact products; the
    pruning bound sums each remaining index's score at its solo budget
    (an integer-log computation, no floats).  Ties cannot occur since the
    objective is a single number.
    """
    if j < 2:
        raise ValueError("f_1 is pinned to 1; compute_f applies to j >= 2")
    limit = m[j] ** 3
    for i in range(1, j):
        if m[i] < 2:
            raise ValueError(f"m_{i} = {m[i]} < 2 makes the exponent program unbounded")
    idxs = sorted(range(1, j), key=lambda i: -m[i])
    best = 0

    def solo_bound(pos: int, budget: int) -> int:
        return sum(n[i] * _ilog_strict(m[i], budget) for i in idxs[pos:])

    def rec(pos: int, budget: int, score: int) -> None:
        nonlocal best
        if score > best:
            best = score
        if pos == len(idxs) or budget <= 1:
            return
        if score + solo_bound(pos, budget) <= best:
            return
        i = idxs[pos]
        rho_max = _ilog_strict(m[i], budget)
        power = m[i] ** rho_max
        for rho in range(rho_max, -1, -1):
            # budget for the remaining indices given rho copies of m_i
            rec(pos + 1, (budget + power - 1) // power, score + rho * n[i])
            power //= m[i] if rho else 1
    # budget semantics: remaining product must stay strictly below budget
    rec(0, limit, 0)
    return best


@dataclass
class ParameterSystem:
    mode: str
    _m: list[int]
    _ell: list[int]
    _f: list[int]
    _n: list[int]  # n[0] == 0 slot included
    extendable: bool = True

    @property
    def length(self) -> int:
        return len(self._m)

    def m(self, i: int) -> int:
        self.ensure_length(i)
        return self._m[i - 1]

    def ell(self, i: int) -> int:
        self.ensure_length(i)
        return self._ell[i - 1]

    def f(self, i: int) -> int:
        self.ensure_length(i)
        return self._f[i - 1]

    def n(self, i: int) -> int:
        if i == 0:
            return 0
        self.ensure_length(i)
        return self._n[i]

    def ensure_length(self, k: int) -> None:
        """Extend the sequences through index ``k`` (lazy generation)."""
        if k <= self.length:
            return
        if not self.extendable:
            raise IndexError(
                f"explicit toy system of length {self.length} cannot supply index {k}"
            )
        while self.length < k:
            j = self.length + 1
            if self.mode == PAPER:
                mj = 247 if j == 1 else self._m[-1] ** 2 + 1
                self._append_index(mj)
            else:
                mj = self._m[-1] + 1 if self._m else 2
                self._append_index(mj, toy_n=(j + 1) // 2)

    def _append_index(self, mj: int, toy_n: int | None = None) -> None:
        j = self.length + 1
        self._m.append(mj)
        self._ell.append(minimal_pow2_exponent(mj))
        fj = 1 if j == 1 else compute_f(j, [0] + self._m, self._n)
        self._f.append(fj)
        if self.mode == PAPER:
            nj = self._ell[-1] * (fj + 1) + 1
        else:
            nj = toy_n if toy_n is not None else (j + 1) // 2
        self._n.append(nj)

    # -- weight lookups -------------------------------------------------

    def index_of_weight(self, w: int, search_limit: int = 4096) -> int:
        """Index i with m_i == w; extends lazily.  Raises if not found."""
        while True:
            for i in range(1, self.length + 1):
                if self._m[i - 1] == w:
                    return i
            if self._m and self._m[-1] > w:
                raise ValueError(f"{w} is not a weight of this parameter system")
            if self.length >= search_limit:
                raise ValueError(f"weight {w} not found within {search_limit} indices")
            self.ensure_length(self.length + 1)

    def n_for_weight(self, w: int) -> int:
        return self.n(self.index_of_weight(w))

    def even_weights(self, start_index: int = 2) -> Iterator[tuple[int, int]]:
        """Yield (index, weight) over even indices ascending, extending lazily."""
        i = start_index if start_index % 2 == 0 else start_index + 1
        while True:
            yield i, self.m(i)
            i += 2

    # -- validation ------------------------------------------------------

    def validate(self, check_length: int | None = None) -> list[dict]:
        """One report line per constraint of the strict regime."""
        k = check_length or self.length
        self.ensure_length(max(k, 3))
        k = max(k, 3)
        lines: list[dict] = []

        def add(name: str, ok: bool, witness: str = "") -> None:
            lines.append({"constraint": name, "status": "PASS" if ok else "FAIL",
                          "witness": witness})

        add("m_1 > 246", self._m[0] > 246, f"m_1 = {self._m[0]}")
        bad = [i for i in range(1, k) if self._m[i - 1] ** 2 >= self._m[i]]
        add("m_i^2 < m_{i+1}", not bad, f"violated at i = {bad}" if bad else "")
        bad = [i for i in range(1, k + 1) if 2 ** self._ell[i - 1] <= self._m[i - 1]]
        add("2^l_i > m_i", not bad, f"violated at i = {bad}" if bad else "")
        add("f_1 = 1", self._f[0] == 1, f"f_1 = {self._f[0]}")
        add("n_0 = 0", self._n[0] == 0, f"n_0 = {self._n[0]}")
        bad = []
        for j in range(2, k + 1):
            if self._f[j - 1] != compute_f(j, [0] + self._m, self._n):
                bad.append(j)
        add("f_j attains the exponent-program maximum", not bad,
            f"violated at j = {bad}" if bad else "")
        bad = [j for j in range(1, k + 1)
               if self._ell[j - 1] * (self._f[j - 1] + 1) >= self._n[j]]
        add("l_j (f_j + 1) < n_j", not bad, f"violated at j = {bad}" if bad else "")
        # derived facts used downstream
        add("m_3 >= m_1^4", self._m[2] >= self._m[0] ** 4,
            f"m_3 = {self._m[2]}, m_1^4 = {self._m[0] ** 4}")
        add("m_1^4 >= 496", self._m[0] ** 4 >= 496, f"m_1^4 = {self._m[0] ** 4}")
        add("123/m_1 < 1/2", Fraction(123, self._m[0]) < Fraction(1, 2),
            f"123/m_1 = {Fraction(123, self._m[0])}")
        return lines

    def all_valid(self) -> bool:
        return all(line["status"] == "PASS" for line in self.validate())

    # -- serialization (decimal strings, bit-exact round trip) -----------

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode,
            "m": [str(x) for x in self._m],
            "ell": [str(x) for x in self._ell],
            "f": [str(x) for x in self._f],
            "n": [str(x) for x in self._n],
            "extendable": self.extendable,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json_dict(d: dict) -> "ParameterSystem":
        return ParameterSystem(
            mode=d["mode"],
            _m=[int(x) for x in d["m"]],
            _ell=[int(x) for x in d["ell"]],
            _f=[int(x) for x in d["f"]],
            _n=[int(x) for x in d["n"]],
            extendable=bool(d.get("extendable", True)),
        )

    @staticmethod
    def loads(s: str) -> "ParameterSystem":
        return ParameterSystem.from_json_dict(json.loads(s))

    def fingerprint(self) -> str:
        import hashlib

        return hashlib.sha256(self.dumps().encode()).hexdigest()[:16]


def generate(mode: str, length: int, overrides: dict | None = None) -> ParameterSystem:
    """Build a parameter system.

    ``paper_faithful`` ignores overrides unless they break a hard constraint
    (then it errors naming the constraint).  ``toy`` accepts override
    sequences verbatim; positivity is enforced, everything else is reported
    by ``validate`` rather than rejected.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    if mode not in (PAPER, TOY):
        raise ValueError(f"unknown mode {mode!r}")

    if mode == PAPER:
        if overrides:
            probe = ParameterSystem(PAPER, [], [], [], [0])
            probe.ensure_length(length)
            for name in ("m", "ell", "f", "n"):
                if name in overrides:
                    want = [int(x) for x in overrides[name]]
                    have = {"m": probe._m, "ell": probe._ell,
                            "f": probe._f, "n": probe._n}[name]
                    if want != have[: len(want)]:
                        raise ValueError(
                            f"paper_faithful override for {name!r} breaks the "
                            f"canonical minimal-choice constraint"
                        )
        ps = ParameterSystem(PAPER, [], [], [], [0])
        ps.ensure_length(length)
        return ps

    overrides = overrides or {}
    for name in ("m", "ell", "f", "n"):
        seq = overrides.get(name)
        if seq is not None and any(int(x) < 0 for x in seq):
            raise ValueError(f"override {name!r} contains a negative entry")
        if seq is not None and name != "n" and any(int(x) < 1 for x in seq):
            raise ValueError(f"override {name!r} must be strictly positive")
    if "m" in overrides:
        m = [int(x) for x in overrides["m"]]
        if any(m[i] >= m[i + 1] for i in range(len(m) - 1)):
            raise ValueError("override 'm' must be strictly increasing")
        if m and m[0] < 2:
            raise ValueError("m_1 must be at least 2")
    else:
        m = [i + 1 for i in range(1, length + 1)]
    length = max(length, len(m), len(overrides.get("n", [0])) - 1,
                 len(overrides.get("ell", [])), len(overrides.get("f", [])))
    while len(m) < length:
        m.append(m[-1] + 1)
    if "n" in overrides:
        n = [int(x) for x in overrides["n"]]
        if n[0] != 0:
            raise ValueError("n_0 must be 0")
    else:
        n = [0] + [(j + 1) // 2 for j in range(1, length + 1)]
    while len(n) < length + 1:
        n.append(n[-1] if len(n) > 1 else 1)
    ell = ([int(x) for x in overrides["ell"]] if "ell" in overrides
           else [minimal_pow2_exponent(x) for x in m])
    while len(ell) < length:
        ell.append(minimal_pow2_exponent(m[len(ell)]))
    if "f" in overrides:
        f = [int(x) for x in overrides["f"]]
    else:
        f = [1] + [compute_f(j, [0] + m, n) for j in range(2, length + 1)]
    while len(f) < length:
        f.append(compute_f(len(f) + 1, [0] + m, n))
    explicit = any(k in overrides for k in ("m", "ell", "f", "n"))
    return ParameterSystem(TOY, m, ell, f, n, extendable=not explicit)
