"""Membership, maximality, and admissibility for the Schreier families.

The family of index 0 consists of the empty set and all singletons.  The
family of index ``xi + 1`` consists of unions ``F_1 < ... < F_n`` of members
of the family of index ``xi`` with ``n <= min F_1``.  The families are
hereditary, spreading, and satisfy the convolution property; the property
suite exercises all three.
"""

from __future__ import annotations

from typing import Iterable, Sequence

from . import kernels

FinSet = tuple[int, ...]


def as_finset(elems: Iterable[int]) -> FinSet:
    """Validate and normalize a finite subset of the positive integers."""
    t = tuple(elems)
    if any(not isinstance(x, int) or x < 1 for x in t):
        raise ValueError(f"elements must be positive integers: {t}")
    if any(t[i] >= t[i + 1] for i in range(len(t) - 1)):
        raise ValueError(f"elements must be strictly increasing: {t}")
    return t


def _check_xi(xi: int) -> int:
    if not isinstance(xi, int) or xi < 0:
        raise ValueError(f"family index must be a nonnegative integer: {xi}")
    return xi


def is_member(fset: Iterable[int], xi: int) -> bool:
    """True iff the set belongs to the family of index ``xi``.

    Total: the empty set belongs to every family.
    """
    return kernels.member(as_finset(fset), _check_xi(xi))


def is_maximal(fset: Iterable[int], xi: int) -> bool:
    """True iff the set is a member and no extension by a larger element is.

    By the spreading property it suffices to probe the single extension
    ``max F + 1``: membership of ``F + {q}`` for ``q > max F`` does not
    depend on the value of ``q``.
    """
    t = as_finset(fset)
    if not t:
        raise ValueError("maximality undefined for empty set")
    xi = _check_xi(xi)
    if not kernels.member(t, xi):
        return False
    return not kernels.member(t + (t[-1] + 1,), xi)


def successive(sets: Sequence[FinSet]) -> bool:
    """True iff every set is nonempty and max of each precedes min of the next."""
    if any(len(s) == 0 for s in sets):
        return False
    return all(sets[i][-1] < sets[i + 1][0] for i in range(len(sets) - 1))


def is_admissible(sets: Sequence[Iterable[int]], xi: int) -> bool:
    """True iff the sets are nonempty, successive, and their minima form a
    member of the family of index ``xi``.  Empty families are rejected.
    """
    xi = _check_xi(xi)
    norm = [as_finset(s) for s in sets]
    if not norm:
        return False
    if not successive(norm):
        return False
    return kernels.member(tuple(s[0] for s in norm), xi)
