"""Pure-Python Schreier-family kernels.

These routines are the hot inner loops of the package: family membership,
maximal-prefix peeling, and enumeration of member subsets of a ground set.
A compiled twin (``normtree.kernels._fast``) implements the same interface;
``normtree.kernels`` picks whichever is importable.

Membership uses greedy left-to-right decomposition: a set belongs to the
family of index ``xi + 1`` iff peeling maximal prefixes that belong to the
family of index ``xi`` uses at most ``min F`` pieces.  Greedy peeling is
optimal because the families are hereditary and spreading; the test suite
checks the routine against a brute-force partition enumerator.
"""

from __future__ import annotations

IMPL = "pure"

_member_cache: dict[tuple[tuple[int, ...], int], bool] = {}
_prefix_cache: dict[tuple[tuple[int, ...], int], int] = {}


def clear_caches() -> None:
    _member_cache.clear()
    _prefix_cache.clear()


def member(elems: tuple[int, ...], xi: int) -> bool:
    """Is the strictly increasing tuple ``elems`` in the family of index ``xi``?

    Stabilization shortcut: a multi-element set containing 1 is in no
    family (the top split is limited to one piece, forcing a singleton),
    and a set with minimum at least 2 belongs to the family indexed by its
    size minus one (peel the minimum, recurse on the rest); membership is
    monotone in the index, so indices past ``len - 1`` are immediate.
    This also bounds the recursion depth by the set size.
    """
    if len(elems) <= 1:
        # the empty set and singletons belong to every family
        return True
    if xi == 0:
        return False
    if elems[0] == 1:
        return False
    if xi >= len(elems) - 1:
        return True
    key = (elems, xi)
    hit = _member_cache.get(key)
    if hit is not None:
        return hit
    budget = elems[0]
    pieces = 0
    pos = 0
    n = len(elems)
    ok = True
    while pos < n:
        pieces += 1
        if pieces > budget:
            ok = False
            break
        pos += max_prefix(elems[pos:], xi - 1)
    _member_cache[key] = ok
    return ok


def max_prefix(elems: tuple[int, ...], xi: int) -> int:
    """Length of the longest prefix of ``elems`` in the family of index ``xi``.

    Always at least 1 for nonempty input (singletons are members).
    """
    if not elems:
        return 0
    if xi == 0:
        return 1
    if elems[0] == 1:
        return 1
    if xi >= len(elems) - 1:
        return len(elems)
    key = (elems, xi)
    hit = _prefix_cache.get(key)
    if hit is not None:
        return hit
    budget = elems[0]
    pieces = 0
    pos = 0
    n = len(elems)
    while pos < n and pieces < budget:
        pieces += 1
        pos += max_prefix(elems[pos:], xi - 1)
    _prefix_cache[key] = pos
    return pos


def member_subsets(values: tuple[int, ...], xi: int) -> list[tuple[int, ...]]:
    """All nonempty subsets of ``values`` (strictly increasing) that belong
    to the family of index ``xi``, as tuples of indices into ``values``.

    Depth-first extension with hereditary pruning: every prefix of a member
    is a member, so a branch dies as soon as extension fails.
    """
    n = len(values)
    out: list[tuple[int, ...]] = []
    stack: list[tuple[tuple[int, ...], tuple[int, ...]]] = []
    for i in range(n):
        stack.append(((i,), (values[i],)))
    while stack:
        idxs, vals = stack.pop()
        out.append(idxs)
        for j in range(idxs[-1] + 1, n):
            cand = vals + (values[j],)
            if member(cand, xi):
                stack.append((idxs + (j,), cand))
    return out
