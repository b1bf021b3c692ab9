"""Norming trees: structure, validation, functionals, and decomposition.

A tree node carries (weight, index set, rational coefficient) and ordered
children.  Weight 0 marks terminal nodes, whose index sets are singletons;
a nonterminal node's index set is the disjoint successive union of its
children's.  Even-indexed weights cap the children coefficients in l2 and
require the children index sets to be admissible at the matching family
index; odd-indexed weights additionally require positive nonincreasing
coefficients and a registered dependent-extension witness.  The functional
of a tree assigns each terminal the product of the strict-ancestor
coefficients and its own, divided by the product of strict-ancestor
weights (for a bare terminal root the coefficient is squared).

The node records here use one (weight, iset, gamma) triple per node; the
tuple-of-entries encoding with a zero slot at every terminal position is
not prefix-closed as written, so the per-node record is the repair.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

from . import schreier
from .qmath import RadSum, sqrt_upper
from .vectors import SparseVector, SqrtVector

Path = tuple[int, ...]


@dataclass(frozen=True)
class NormingTree:
    weight: int
    iset: tuple[int, ...]
    gamma: Fraction
    children: tuple["NormingTree", ...] = ()

    def is_terminal(self) -> bool:
        return self.weight == 0

    def node(self, path: Path) -> "NormingTree":
        cur = self
        for i in path:
            cur = cur.children[i]
        return cur

    def paths(self, prefix: Path = ()) -> Iterator[tuple[Path, "NormingTree"]]:
        yield prefix, self
        for i, c in enumerate(self.children):
            yield from c.paths(prefix + (i,))

    def terminal_paths(self) -> list[Path]:
        return [p for p, n in self.paths() if n.is_terminal()]

    def height(self) -> int:
        if not self.children:
            return 1
        return 1 + max(c.height() for c in self.children)

    def support(self) -> tuple[int, ...]:
        return self.iset

    def to_json_dict(self) -> dict:
        return {
            "weight": str(self.weight),
            "iset": list(self.iset),
            "gamma": str(self.gamma),
            "children": [c.to_json_dict() for c in self.children],
        }

    @staticmethod
    def from_json_dict(d: dict) -> "NormingTree":
        return NormingTree(
            weight=int(d["weight"]),
            iset=tuple(int(x) for x in d["iset"]),
            gamma=Fraction(d["gamma"]),
            children=tuple(NormingTree.from_json_dict(c) for c in d["children"]),
        )

    def serialize(self) -> str:
        """Canonical byte-stable serialization (registry key material)."""
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))


def leaf(p: int, gamma) -> NormingTree:
    return NormingTree(0, (p,), Fraction(gamma))


def branch(weight: int, gamma, children: Sequence[NormingTree]) -> NormingTree:
    kids = tuple(children)
    iset = tuple(sorted(k for c in kids for k in c.iset))
    return NormingTree(weight, iset, Fraction(gamma), kids)


# -- validation -----------------------------------------------------------


@dataclass
class Finding:
    path: Path
    code: str
    message: str


@dataclass
class ValidationReport:
    ok: bool
    findings: list[Finding] = field(default_factory=list)

    def fail(self, path: Path, code: str, message: str) -> None:
        self.ok = False
        self.findings.append(Finding(path, code, message))


def validate(tree: NormingTree, p, registry, extra_witnesses: dict | None = None) -> ValidationReport:
    """Check every structural invariant; a passing tree belongs to the
    certified set the registry underwrites.

    Odd-weight nodes must have a dependent-extension witness registered
    (or supplied via ``extra_witnesses``); the witness's coding links and
    restriction alignment are re-checked here.  Extension trees are checked
    structurally at their own registration, not re-entered recursively.
    """
    report = ValidationReport(ok=True)
    _validate_node(tree, (), p, registry, extra_witnesses or {}, report)
    return report


def _validate_node(node: NormingTree, path: Path, p, registry, extra, report) -> None:
    try:
        schreier.as_finset(node.iset)
    except ValueError as e:
        report.fail(path, "iset", str(e))
        return
    if not node.iset:
        report.fail(path, "iset", "empty index set")
        return
    if abs(node.gamma) > 1:
        report.fail(path, "gamma", f"|gamma| = {abs(node.gamma)} > 1")
    terminal_marks = (node.weight == 0, not node.children, len(node.iset) == 1)
    if node.weight == 0 or not node.children:
        if not all(terminal_marks):
            report.fail(path, "terminal",
                        f"terminal markers disagree: weight={node.weight}, "
                        f"children={len(node.children)}, |iset|={len(node.iset)}")
            return
        return
    # nonterminal
    kid_sets = [c.iset for c in node.children]
    if not schreier.successive(kid_sets):
        report.fail(path, "children", "children index sets not successive")
    union = tuple(sorted(k for s in kid_sets for k in s))
    if union != node.iset:
        report.fail(path, "children", "children index sets do not union to the parent's")
    try:
        idx = p.index_of_weight(node.weight)
    except ValueError as e:
        report.fail(path, "weight", str(e))
        idx = None
    if idx is not None and idx < 2:
        # an index-1 weight carries no defining constraint and would break
        # the unit coefficient bound; it is rejected here
        report.fail(path, "weight", f"weight m_1 = {node.weight} is not permitted on nodes")
    if idx is not None and idx >= 2:
        gsq = sum((c.gamma * c.gamma for c in node.children), Fraction(0))
        if idx % 2 == 0:
            if not schreier.is_admissible(kid_sets, p.n(idx)):
                report.fail(path, "admissible",
                            f"children not admissible at family index n_{idx} = {p.n(idx)}")
            if gsq > 1:
                report.fail(path, "gamma_sq", f"children gamma squares sum to {gsq} > 1")
        else:
            gammas = [c.gamma for c in node.children]
            if any(g <= 0 for g in gammas):
                report.fail(path, "odd_gamma", "odd-weight children need positive gammas")
            if any(gammas[i] < gammas[i + 1] for i in range(len(gammas) - 1)):
                report.fail(path, "odd_gamma", "odd-weight children gammas must be nonincreasing")
            if gsq > 1:
                report.fail(path, "gamma_sq", f"children gamma squares sum to {gsq} > 1")
            j = (idx - 1) // 2
            key = witness_key(node.children, j)
            rec = extra.get(key)
            if rec is None and registry is not None:
                rec = registry.witness_get(key)
            if rec is None:
                report.fail(path, "witness", f"no dependent-extension witness for index {idx}")
            else:
                for fnd in check_witness(rec, node.children, j, p, registry):
                    report.fail(path, "witness", fnd)
    for i, c in enumerate(node.children):
        _validate_node(c, path + (i,), p, registry, extra, report)


@dataclass(frozen=True)
class DependentWitness:
    """Witness that a successive tree family extends to a coding-linked
    chain: ``k`` leading trees, a cut point ``L``, and the extension trees
    whose tails past ``L`` reproduce the family."""
    k: int
    L: int
    extension: tuple[NormingTree, ...]

    def to_json_dict(self) -> dict:
        return {"k": self.k, "L": self.L,
                "extension": [t.to_json_dict() for t in self.extension]}

    @staticmethod
    def from_json_dict(d: dict) -> "DependentWitness":
        return DependentWitness(int(d["k"]), int(d["L"]),
                                tuple(NormingTree.from_json_dict(t) for t in d["extension"]))


def witness_key(children: Sequence[NormingTree], j: int) -> str:
    inner = ",".join(c.serialize() for c in children)
    return f"j={j};[{inner}]"


def check_witness(rec: DependentWitness, children: Sequence[NormingTree], j: int,
                  p, registry) -> list[str]:
    """All the ways a dependent-extension witness can fail, as messages."""
    out: list[str] = []
    n = len(children)
    ext = rec.extension
    if len(ext) != rec.k + n:
        out.append(f"extension length {len(ext)} != k + n = {rec.k + n}")
        return out
    sets = [t.iset for t in ext]
    if not schreier.successive(sets):
        out.append("extension trees not successive")
    if not schreier.is_admissible(sets, p.n(2 * j + 1)):
        out.append(f"extension not admissible at family index n_{2*j+1} = {p.n(2*j+1)}")
    try:
        first_idx = p.index_of_weight(ext[0].weight)
        if first_idx % 2 != 0 or first_idx < 2 * j + 2:
            out.append(f"head weight index {first_idx} is not an even index >= {2*j+2}")
    except ValueError as e:
        out.append(f"head weight: {e}")
    if registry is not None:
        for i in range(1, len(ext)):
            want = registry.sigma_peek(ext[:i])
            if want is None:
                out.append(f"coding value for the first {i} extension trees is unregistered")
            elif want != ext[i].weight:
                out.append(f"coding link broken at position {i + 1}: "
                           f"expected weight {want}, found {ext[i].weight}")
    for i in range(n):
        tail = restrict(ext[rec.k + i], rec.L, None)
        if tail is None or tail != children[i]:
            out.append(f"extension tree {rec.k + i + 1} restricted past {rec.L} "
                       f"does not reproduce child {i + 1}")
    return out


# -- the functional and evaluation ----------------------------------------


def functional(tree: NormingTree) -> SparseVector:
    """Coefficient vector of the tree's functional."""
    acc: dict[int, Fraction] = {}

    def walk(node: NormingTree, anc_m: Fraction, anc_g: Fraction, is_root: bool) -> None:
        if node.is_terminal():
            lead = node.gamma if is_root else anc_g
            c = lead * node.gamma / anc_m
            if c:
                acc[node.iset[0]] = acc.get(node.iset[0], Fraction(0)) + c
            return
        for child in node.children:
            walk(child, anc_m * node.weight, anc_g * node.gamma, False)

    walk(tree, Fraction(1), Fraction(1), True)
    return SparseVector(acc)


def evaluate(tree: NormingTree, x: SparseVector | SqrtVector):
    """Exact value of the tree functional on ``x`` (Fraction for rational
    vectors, RadSum for square-root vectors)."""
    f = functional(tree)
    if isinstance(x, SparseVector):
        return f.dot(x)
    return x.eval_with(f)


def coefficient_l2_sq(tree: NormingTree) -> Fraction:
    """Exact squared l2 mass of the functional's coefficients; at most 1
    for every valid tree (per-node caps push through the recursion)."""
    return functional(tree).l2_sq()


# -- transformations -------------------------------------------------------


def restrict(tree: NormingTree, lo: int, hi: int | None) -> NormingTree | None:
    """Restriction to the integer interval [lo, hi]; None if it empties."""
    iset = tuple(k for k in tree.iset if lo <= k and (hi is None or k <= hi))
    if not iset:
        return None
    if tree.is_terminal():
        return tree
    kids = []
    for c in tree.children:
        rc = restrict(c, lo, hi)
        if rc is not None:
            kids.append(rc)
    return NormingTree(tree.weight, iset, tree.gamma, tuple(kids))


def negate(tree: NormingTree) -> NormingTree:
    return NormingTree(tree.weight, tree.iset, -tree.gamma, tree.children)


def with_root_gamma_factor(tree: NormingTree, factor: Fraction) -> NormingTree:
    """Scale the root coefficient; the functional scales by the same factor
    (for a bare terminal root the coefficient enters squared, so that case
    is refused)."""
    if tree.is_terminal():
        raise ValueError("scaling a bare terminal root rescales quadratically")
    return NormingTree(tree.weight, tree.iset, tree.gamma * Fraction(factor), tree.children)


def subtree(tree: NormingTree, path: Path) -> NormingTree:
    """Re-root at the node addressed by ``path``."""
    return tree.node(path)


@dataclass
class NodeQuantities:
    m_of: int
    n_of: int
    gamma_of: Fraction


def node_quantities(tree: NormingTree, path: Path, p) -> NodeQuantities:
    """Ancestor products: weight product, family-index sum, gamma product.

    At the root the weight product is 1, the index sum 0, and the gamma
    value is the root's own coefficient.
    """
    m_of, n_of, g_of = 1, 0, Fraction(1)
    cur = tree
    for i in path:
        m_of *= cur.weight
        n_of += p.n(p.index_of_weight(cur.weight))
        g_of *= cur.gamma
        cur = cur.children[i]
    if not path:
        g_of = tree.gamma
    return NodeQuantities(m_of=m_of, n_of=n_of, gamma_of=g_of)


# -- incomparable-family admissibility -------------------------------------


def incomparable_admissibility(tree: NormingTree, paths: Sequence[Path], p) -> tuple[int, bool]:
    """For pairwise incomparable nodes: the maximal ancestor index sum, and
    whether their index sets are admissible at that family index."""
    for a in paths:
        for b in paths:
            if a != b and a == b[: len(a)]:
                raise ValueError(f"paths {a} and {b} are comparable")
    quants = [node_quantities(tree, a, p) for a in paths]
    p_val = max((q.n_of for q in quants), default=0)
    sets = sorted((tree.node(a).iset for a in paths), key=lambda s: s[0])
    return p_val, schreier.is_admissible(sets, p_val)


# -- the decomposition procedure -------------------------------------------


@dataclass
class DecompositionTerm:
    path: Path
    klass: int  # 1, 2, or 3
    lam: Fraction
    part: SparseVector  # the renormalized functional piece


@dataclass
class Decomposition:
    j: int
    terms: list[DecompositionTerm]
    checks: dict[str, bool]
    p_admissibility: int

    def classes(self) -> tuple[list[Path], list[Path], list[Path]]:
        return ([t.path for t in self.terms if t.klass == 1],
                [t.path for t in self.terms if t.klass == 2],
                [t.path for t in self.terms if t.klass == 3])


def decompose(tree: NormingTree, j: int, p) -> Decomposition:
    """Cut every branch at the deepest node whose ancestor weight product
    stays below the square of the target weight with all ancestor weights
    below it; classify the cut points and rebuild the functional exactly.

    Requires the root weight below the target weight.  All four bound
    checks and the admissibility of the cut family are computed here and
    reported in ``checks``; callers assert them.
    """
    mj = p.m(j)
    if tree.weight >= mj:
        raise ValueError(f"root weight {tree.weight} is not below m_{j} = {mj}")
    chosen: list[tuple[Path, int]] = []

    def descend(node: NormingTree, path: Path, prod: int, anc_ok: bool) -> None:
        if node.is_terminal():
            chosen.append((path, 3))
            return
        child_prod = prod * node.weight
        child_ok = anc_ok and node.weight < mj
        if child_prod < mj * mj and child_ok:
            for i, c in enumerate(node.children):
                descend(c, path + (i,), child_prod, child_ok)
            return
        if node.weight < mj:
            for i in range(len(node.children)):
                chosen.append((path + (i,), 1))
        else:
            chosen.append((path, 2))

    descend(tree, (), 1, True)

    full = functional(tree)
    terms: list[DecompositionTerm] = []
    recon = SparseVector()
    for path, klass in chosen:
        node = tree.node(path)
        q = node_quantities(tree, path, p)
        gamma_of = q.gamma_of if path else Fraction(1)
        # the root case folds its own gamma into the piece, keeping the
        # product lam * part equal to the functional restricted to the node
        lo, hi = node.iset[0], node.iset[-1]
        piece_raw = SparseVector({k: v for k, v in full.coords.items() if lo <= k <= hi})
        if gamma_of == 0:
            lam, part = Fraction(0), SparseVector()
        else:
            lam = gamma_of / q.m_of
            part = piece_raw.scale(Fraction(1) / lam)
        recon = recon.add(part.scale(lam))
        terms.append(DecompositionTerm(path=path, klass=klass, lam=lam, part=part))

    l1 = [t for t in terms if t.klass == 1]
    l2 = [t for t in terms if t.klass == 2]
    l3 = [t for t in terms if t.klass == 3]
    checks: dict[str, bool] = {}
    checks["reconstruction_exact"] = recon == full
    sum1 = sum((t.lam * t.lam for t in l1), Fraction(0))
    checks["class1_l2_bound"] = sum1 <= Fraction(1, mj ** 4)
    total = sum((t.lam * t.lam for t in terms), Fraction(0))
    w = tree.weight
    checks["total_l2_bound"] = True if w == 0 else total <= Fraction(1, w * w)
    checks["class2_weights"] = all(tree.node(t.path).weight >= mj for t in l2)
    checks["class3_terminal"] = all(tree.node(t.path).is_terminal() for t in l3)
    try:
        p_val, adm = incomparable_admissibility(tree, [t.path for t in terms], p)
    except ValueError:
        p_val, adm = -1, False
    checks["family_admissible"] = adm
    checks["family_index_within_budget"] = p_val <= p.f(j)
    return Decomposition(j=j, terms=terms, checks=checks, p_admissibility=p_val)


# -- coefficient rationalization -------------------------------------------


def rationalize_coefficients(gammas: Sequence, tol: Fraction = Fraction(1, 10**9)) -> list[Fraction]:
    """Rational coefficients with squared sum at most one, each within the
    relative tolerance of the input scaled by the inverse root of its
    squared sum.  Rational inputs already satisfying the cap pass through
    unchanged; nonincreasing inputs stay nonincreasing (single divisor).
    """
    vals = [Fraction(g) if not isinstance(g, float) else Fraction(g).limit_denominator(10**15)
            for g in gammas]
    total = sum((v * v for v in vals), Fraction(0))
    if total == 0:
        return [Fraction(0) for _ in vals]
    if total <= 1:
        return vals
    d = sqrt_upper(total, tol)
    return [v / d for v in vals]
