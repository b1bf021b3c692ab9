"""Construction of dependent-chain witness bundles and the paired vectors
whose norms exhibit the conditional structure.

Pipeline: interleave smoothly normalized squared averages drawn from two
block sequences; combine selected averages into scaled vectors ``g`` with
norm certificates ``x*`` such that ``x*(g) = 1`` exactly (the vector is
divided by the certificate value, a single-radical exact scalar); link the
certificates through the coding registry so each prescribes the next
weight; and assemble the plain and alternating combinations weighted by a
squared average along the chain minima.

Desk-scale regimes cannot satisfy every growth hypothesis of the strict
regime.  Every relaxation actually used (epsilon defaults, average index
overrides, waived maximality, waived best-weight agreement) is recorded in
the bundle's ``concessions`` list, and the estimate validators downgrade
failures to INCONCLUSIVE when a recorded violation is implicated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

from . import averages, normengine, params as params_mod, schreier
from .qmath import RadSum, sqrt_float, sqrt_lower_common
from .registry import SigmaRegistry
from .trees import (DependentWitness, NormingTree, branch, evaluate, leaf,
                    validate, with_root_gamma_factor, witness_key)
from .vectors import IndexStream, SparseVector, SqrtVector


class ChainBuildError(RuntimeError):
    pass


class BestWeightViolation(ChainBuildError):
    """The unconstrained search normed the vector with a different weight
    than the chain prescribes (the small-parameter regime admits this; the
    strict regime's corollary rules it out)."""

    def __init__(self, step: int, expected_weight: int, certificate):
        self.step = step
        self.expected_weight = expected_weight
        self.certificate = certificate
        super().__init__(
            f"step {step}: best certificate has weight {certificate.tree.weight}, "
            f"chain prescribes {expected_weight}"
        )


@dataclass
class ChainConfig:
    j: int = 1
    length: int = 2
    first_even_index: int | None = None  # default: 2j + 2
    eps_y: Callable[[int], Fraction] | None = None  # default: 1/m_{2k}
    eps_g: Callable[[int], Fraction] | None = None  # default: 1/m_{2j_i}^2
    xi_y: int | None = None          # default: f_{2k} + 1
    xi_g: dict[int, int] | None = None  # per-step override of n_{2j_i}
    xi_chain: int | None = None      # override of n_{2j+1} for the chain weights
    enforce_best_weight: bool = True
    require_maximal: bool = True
    run_selection: bool = False
    y_count: int | None = None


@dataclass
class ChainStep:
    index: int
    side: str
    weight: int
    weight_index: int
    g: SqrtVector
    z: SqrtVector
    x_tree: NormingTree
    t: int
    y_indices: tuple[int, ...]


@dataclass
class WitnessBundle:
    j: int
    params_fingerprint: str
    ys: list[SqrtVector]
    y_sides: list[str]
    steps: list[ChainStep]
    plain: SqrtVector
    alternating: SqrtVector
    beta_sq: list[Fraction]  # squared weights along the chain minima
    lower_tree: NormingTree  # rationalized odd functional, in the certified set
    registry_hash: str
    concessions: list[str] = field(default_factory=list)

    @property
    def ts(self) -> list[int]:
        return [s.t for s in self.steps]

    @property
    def x_trees(self) -> list[NormingTree]:
        return [s.x_tree for s in self.steps]

    def odd_weight(self) -> int:
        return self.lower_tree.weight

    def to_json_dict(self) -> dict:
        return {
            "j": self.j,
            "params_fingerprint": self.params_fingerprint,
            "ys": [y.to_json_dict() for y in self.ys],
            "y_sides": self.y_sides,
            "steps": [{
                "index": s.index, "side": s.side, "weight": str(s.weight),
                "weight_index": s.weight_index,
                "g": s.g.to_json_dict(), "z": s.z.to_json_dict(),
                "x_tree": s.x_tree.to_json_dict(), "t": s.t,
                "y_indices": list(s.y_indices),
            } for s in self.steps],
            "plain": self.plain.to_json_dict(),
            "alternating": self.alternating.to_json_dict(),
            "beta_sq": [str(b) for b in self.beta_sq],
            "lower_tree": self.lower_tree.to_json_dict(),
            "registry_hash": self.registry_hash,
            "concessions": self.concessions,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json_dict(d: dict) -> "WitnessBundle":
        return WitnessBundle(
            j=d["j"],
            params_fingerprint=d["params_fingerprint"],
            ys=[SqrtVector.from_json_dict(y) for y in d["ys"]],
            y_sides=list(d["y_sides"]),
            steps=[ChainStep(
                index=s["index"], side=s["side"], weight=int(s["weight"]),
                weight_index=s["weight_index"],
                g=SqrtVector.from_json_dict(s["g"]),
                z=SqrtVector.from_json_dict(s["z"]),
                x_tree=NormingTree.from_json_dict(s["x_tree"]), t=s["t"],
                y_indices=tuple(s["y_indices"]),
            ) for s in d["steps"]],
            plain=SqrtVector.from_json_dict(d["plain"]),
            alternating=SqrtVector.from_json_dict(d["alternating"]),
            beta_sq=[Fraction(b) for b in d["beta_sq"]],
            lower_tree=NormingTree.from_json_dict(d["lower_tree"]),
            registry_hash=d["registry_hash"],
            concessions=list(d["concessions"]),
        )


# -- interleaved smooth averages -------------------------------------------


def build_ys(u_blocks: Sequence[SqrtVector], v_blocks: Sequence[SqrtVector],
             p, count: int, cfg: ChainConfig,
             norm_oracle=None) -> tuple[list[SqrtVector], list[str], list[str]]:
    """Alternating smoothly normalized squared averages: odd positions from
    the first sequence, even from the second; each is certificate-normalized
    so its certified norm is exactly one.  Returns (ys, sides, concessions).
    """
    if not u_blocks or not v_blocks:
        raise ValueError("both block sequences must be nonempty")
    oracle = norm_oracle or (lambda v: normengine.norm_lower(v, p))
    remaining = {"u": list(u_blocks), "v": list(v_blocks)}
    ys: list[SqrtVector] = []
    sides: list[str] = []
    concessions: list[str] = []
    frontier = 0
    for k in range(1, count + 1):
        side = "u" if k % 2 == 1 else "v"
        blocks = [b for b in remaining[side] if b.support()[0] > frontier]
        if not blocks:
            raise ChainBuildError(f"side {side!r} ran out of blocks at position {k}")
        eps = cfg.eps_y(k) if cfg.eps_y else Fraction(1, p.m(2 * k))
        xi = cfg.xi_y if cfg.xi_y is not None else p.f(2 * k) + 1
        if cfg.xi_y is not None and cfg.xi_y != p.f(2 * k) + 1:
            concessions.append(
                f"y[{k}]: average index {cfg.xi_y} overrides f_{2*k}+1 = {p.f(2*k)+1}")
        if cfg.eps_y:
            concessions.append(
                f"y[{k}]: epsilon {eps} overrides 1/m_{2*k} = {Fraction(1, p.m(2*k))}")
        res = averages.smooth_normalize_search(blocks, eps, 2 * k, oracle, p,
                                               xi_override=xi)
        if not res.succeeded:
            raise ChainBuildError(
                f"smoothing search failed for position {k}: "
                f"{len(res.rounds)} rounds, values "
                f"{[v if isinstance(v, Fraction) else repr(v) for r in res.rounds for v in r.values]}")
        y = res.normalized
        ys.append(y)
        sides.append(side)
        frontier = y.support()[-1]
        remaining[side] = [b for b in remaining[side] if b.support()[0] > frontier]
    return ys, sides, concessions


# -- subsequence selection ---------------------------------------------------


@dataclass
class SelectionReport:
    selected: list[int]
    failures: list[str]

    @property
    def nonempty(self) -> bool:
        return bool(self.selected)


def select_subsequence(ys: Sequence[SqrtVector], eps: Sequence[Fraction],
                       weight_indices: Sequence[int], p) -> SelectionReport:
    """Greedy selection enforcing both displayed growth conditions exactly:
    the squared-epsilon tails stay below every threshold, and the l1-mass
    prefix stays below the consecutive weight ratio.  All comparisons run
    on exact squares."""
    if not (len(ys) == len(eps) == len(weight_indices)):
        raise ValueError("ys, eps, and weight indices must align")
    selected: list[int] = []
    failures: list[str] = []
    l1_sq_prefix = Fraction(0)
    for i, y in enumerate(ys):
        cand = selected + [i]
        # the l1 prefix condition against the previous selected element
        if selected:
            prev = selected[-1]
            ratio = Fraction(p.m(weight_indices[i]), p.m(weight_indices[prev]))
            if not l1_sq_prefix < ratio * ratio:
                failures.append(
                    f"index {i}: l1 prefix mass {l1_sq_prefix} not below ratio^2 {ratio*ratio}")
                continue
        # epsilon tails within the tentative selection
        ok = True
        for pos, k in enumerate(cand):
            tail = sum((eps[t] ** 2 for t in cand[pos + 1:]), Fraction(0))
            if not tail < eps[k] ** 2:
                failures.append(
                    f"index {i}: epsilon tail {tail} not below {eps[k]**2} at {k}")
                ok = False
                break
        if not ok:
            continue
        selected.append(i)
        l1_sq_prefix += y.l1_sq()
    return SelectionReport(selected=selected, failures=failures)


# -- scaled averages with certificates ---------------------------------------


@dataclass
class GBuild:
    g: SqrtVector
    y_combined: SqrtVector
    cert_tree: NormingTree
    cert_value: RadSum
    bounds: normengine.NormBounds | None
    weights: SparseVector


def build_g(ys: Sequence[SqrtVector], target_index: int, p, cfg: ChainConfig,
            step: int, concessions: list[str]) -> GBuild:
    """Combine averages into the scaled vector for one chain step.

    The combination is a squared average with index ``n`` at the target
    weight; the certificate is the target-weight tree over the single
    largest coordinate (deterministic, single-radical value), and the
    output is the combination divided by the certificate value, making the
    certificate value exactly one on it.
    """
    xi = p.n(target_index)
    if cfg.xi_g and step in cfg.xi_g:
        xi = cfg.xi_g[step]
        if xi != p.n(target_index):
            concessions.append(
                f"g[{step}]: average index {xi} overrides n_{target_index} = {p.n(target_index)}")
    eps = cfg.eps_g(step) if cfg.eps_g else Fraction(1, p.m(target_index) ** 2)
    if cfg.eps_g:
        concessions.append(
            f"g[{step}]: epsilon {eps} overrides 1/m_{target_index}^2 = "
            f"{Fraction(1, p.m(target_index) ** 2)}")
    mins = [y.support()[0] for y in ys]
    if xi == 0:
        concessions.append(
            f"g[{step}]: degenerate index-0 average (single summand), outside the "
            "squared-average definition's domain")
        y_comb = ys[0]
        weights = SparseVector({mins[0]: Fraction(1)})
    else:
        avg = averages.block_squared_average(list(ys), eps, xi, IndexStream.explicit(mins))
        y_comb = avg.vector
        weights = avg.weights
    # target-weight certificate over the largest coordinate (leftmost tie)
    sq = y_comb.squares
    best_k = max(sq.coords, key=lambda k: (sq.coords[k], -k))
    m = p.m(target_index)
    tree = branch(m, Fraction(1), [leaf(best_k, Fraction(y_comb.sign(best_k)))])
    value = evaluate(tree, y_comb)
    value_rs = value if isinstance(value, RadSum) else RadSum.from_rational(value)
    if value_rs.sign() <= 0:
        raise ChainBuildError(f"step {step}: certificate value is not positive")
    g = y_comb.scale_rad(value_rs, invert=True)
    return GBuild(g=g, y_combined=y_comb, cert_tree=tree, cert_value=value_rs,
                  bounds=None, weights=weights)


# -- the chain ---------------------------------------------------------------


def build_chain(u_blocks: Sequence[SqrtVector], v_blocks: Sequence[SqrtVector],
                j: int, p, reg: SigmaRegistry, length: int,
                cfg: ChainConfig | None = None,
                exhaustive_cap: int = 24) -> WitnessBundle:
    """Execute the full dependent-chain construction.

    Alternates sides, certificate-normalizes each step, registers each
    prefix with the coding registry to obtain the next weight, checks the
    chain conditions, and assembles the plain/alternating pair plus the
    rationalized odd functional (registered with its extension witness).
    """
    cfg = cfg or ChainConfig(j=j, length=length)
    if length < 2:
        raise ValueError("chain length must be at least 2")
    concessions: list[str] = []
    n_odd = p.n(2 * j + 1)
    y_need = cfg.y_count if cfg.y_count is not None else max(4 * length, 8)
    ys, sides, ycons = build_ys(u_blocks, v_blocks, p, y_need, cfg)
    concessions.extend(ycons)
    if cfg.run_selection:
        eps_list = [cfg.eps_y(k + 1) if cfg.eps_y else Fraction(1, p.m(2 * (k + 1)))
                    for k in range(len(ys))]
        sel = select_subsequence(ys, eps_list, [2 * (k + 1) for k in range(len(ys))], p)
        keep = set(sel.selected)
        ys = [y for i, y in enumerate(ys) if i in keep]
        sides = [s for i, s in enumerate(sides) if i in keep]

    steps: list[ChainStep] = []
    frontier = 0
    target_index = cfg.first_even_index if cfg.first_even_index else 2 * j + 2
    if target_index <= 2 * j + 1 or target_index % 2:
        raise ValueError("first weight index must be even and beyond the odd base")
    used = 0
    for i in range(1, length + 1):
        side = "u" if i % 2 == 1 else "v"
        avail_idx = [t for t in range(used, len(ys))
                     if sides[t] == side and ys[t].support()[0] > frontier]
        if not avail_idx:
            raise ChainBuildError(f"step {i}: no remaining averages on side {side!r}")
        avail = [ys[t] for t in avail_idx]
        xi_step = p.n(target_index) if not (cfg.xi_g and i in cfg.xi_g) else cfg.xi_g[i]
        take = avail[0].support()[0] if xi_step >= 1 else 1
        if xi_step > 1:
            raise ChainBuildError(
                f"step {i}: averages of index {xi_step} over chain minima are beyond "
                "the representation cap; override the step index")
        if len(avail) < take:
            raise ChainBuildError(
                f"step {i}: needs {take} averages on side {side!r}, has {len(avail)}")
        built = build_g(avail[:take], target_index, p, cfg, i, concessions)
        g = built.g
        # the unconstrained best certificate, for the regime check
        if cfg.enforce_best_weight:
            best = normengine.norm_lower(g, p)
            if best.tree.weight != p.m(target_index):
                raise BestWeightViolation(i, p.m(target_index), best)
        else:
            concessions.append(
                f"step {i}: best-weight agreement not enforced (small-parameter regime)")
        x_tree = built.cert_tree
        z = g  # x*(g) = 1 exactly by the certificate normalization
        t_min = z.support()[0]
        steps.append(ChainStep(index=i, side=side, weight=p.m(target_index),
                               weight_index=target_index, g=g, z=z,
                               x_tree=x_tree, t=t_min,
                               y_indices=tuple(avail_idx[:take])))
        frontier = z.support()[-1]
        used = avail_idx[take - 1] + 1
        assigned = reg.assign(tuple(s.x_tree for s in steps))
        target_index = p.index_of_weight(assigned)

    # condition checks ------------------------------------------------------
    ts = [s.t for s in steps]
    if not schreier.is_admissible([s.z.support() for s in steps], n_odd):
        raise ChainBuildError("the scaled vectors are not admissible at the odd index")
    if not schreier.is_maximal(tuple(ts), n_odd):
        if cfg.require_maximal:
            raise ChainBuildError(
                f"chain minima {ts} are not maximally admissible at index {n_odd}")
        concessions.append(
            f"maximality of the chain minima at index {n_odd} waived (family {ts})")
    for s in steps:
        val = evaluate(s.x_tree, s.z)
        val_rs = val if isinstance(val, RadSum) else RadSum.from_rational(val)
        if not val_rs == RadSum.from_rational(Fraction(1)):
            raise ChainBuildError(f"step {s.index}: certificate value on z is {val}, not 1")
        lo, hi = s.g.range()
        if not (lo <= s.x_tree.iset[0] and s.x_tree.iset[-1] <= hi):
            raise ChainBuildError(f"step {s.index}: certificate range escapes the vector")

    # chain-minimum weights -------------------------------------------------
    xi_chain = cfg.xi_chain if cfg.xi_chain is not None else n_odd
    if xi_chain != n_odd:
        concessions.append(
            f"chain-minimum average index {xi_chain} overrides n_{2*j+1} = {n_odd}")
    beta_vec = averages.hierarchy_average(xi_chain, IndexStream.explicit(ts), 1)[0]
    if sorted(beta_vec.support()) != sorted(ts):
        raise ChainBuildError(
            f"the chain-minimum average consumes {beta_vec.support()}, not {ts}; "
            "the chain length must match the leading minimum")
    beta_sq = [beta_vec[t] for t in ts]
    plain: SqrtVector | None = None
    alt: SqrtVector | None = None
    for i, s in enumerate(steps):
        piece = s.z.scale_sqrt(beta_sq[i])
        piece_alt = s.z.scale_sqrt(beta_sq[i], negate=(i + 1) % 2 == 1)
        plain = piece if plain is None else plain.add_disjoint(piece)
        alt = piece_alt if alt is None else alt.add_disjoint(piece_alt)

    # the odd lower functional, rationalized into the certified set ---------
    gammas = sqrt_lower_common(beta_sq)
    if any(g <= 0 for g in gammas):
        raise ChainBuildError("rationalized chain coefficients must stay positive")
    if any(gammas[i] < gammas[i + 1] for i in range(len(gammas) - 1)):
        raise ChainBuildError("chain-minimum weights are not nonincreasing")
    scaled_children = [with_root_gamma_factor(s.x_tree, gm)
                       for s, gm in zip(steps, gammas)]
    wit = DependentWitness(k=0, L=1, extension=tuple(scaled_children))
    reg.witness_put(scaled_children, j, wit)
    lower_tree = branch(p.m(2 * j + 1), Fraction(1), scaled_children)
    rep = validate(lower_tree, p, reg)
    if not rep.ok:
        raise ChainBuildError(
            "the lower functional fails validation: "
            + "; ".join(f"{f.path}:{f.code}:{f.message}" for f in rep.findings))

    return WitnessBundle(
        j=j, params_fingerprint=p.fingerprint(), ys=ys, y_sides=sides,
        steps=steps, plain=plain, alternating=alt, beta_sq=beta_sq,
        lower_tree=lower_tree, registry_hash=reg.snapshot_hash(),
        concessions=concessions)


# -- the paired-vector report -----------------------------------------------


@dataclass
class PairReport:
    identity_value: Fraction
    identity_expected: Fraction
    identity_holds: bool
    rationalized_value: RadSum
    plain_norm_sq: Fraction | RadSum | None
    alternating_norm_sq: Fraction | RadSum | None
    separation_strict: bool | None
    ratio_target_sq: Fraction
    exhaustive: bool
    details: dict

    def to_json_dict(self) -> dict:
        return {
            "identity_value": str(self.identity_value),
            "identity_expected": str(self.identity_expected),
            "identity_holds": self.identity_holds,
            "rationalized_value_float": self.rationalized_value.to_float(),
            "plain_norm_sq": None if self.plain_norm_sq is None else repr(self.plain_norm_sq),
            "alternating_norm_sq": None if self.alternating_norm_sq is None
            else repr(self.alternating_norm_sq),
            "separation_strict": self.separation_strict,
            "ratio_target_sq": str(self.ratio_target_sq),
            "exhaustive": self.exhaustive,
            "details": self.details,
        }


def hi_pair(bundle: WitnessBundle, p, reg: SigmaRegistry,
            exhaustive_cap: int = 24) -> PairReport:
    """Evaluate the explicit lower functional on the plain vector (the
    exact algebraic identity: the value equals the sum of the squared
    chain weights divided by the odd weight), and bound the alternating
    vector by exhaustive enumeration when the support permits.

    The explicit functional's coefficients are the exact square roots of
    the chain weights; the registered, rationalized tree is also evaluated
    and reported.  The ratio against the strict-regime target is
    informational outside that regime.
    """
    m_odd = p.m(2 * bundle.j + 1)
    # exact identity with the explicit square-root coefficients: each step's
    # certificate evaluates to one on its scaled vector, so the value is the
    # sum of the squared chain weights over the odd weight
    total = RadSum()
    for b_sq, s in zip(bundle.beta_sq, bundle.steps):
        part = bundle.plain.restrict(s.z.support()[0], s.z.support()[-1])
        val = evaluate(s.x_tree, part)
        val = val if isinstance(val, RadSum) else RadSum.from_rational(val)
        total = total + RadSum.radical(1, b_sq) * val
    identity_value = (total / Fraction(m_odd)).as_rational()
    identity_expected = sum(bundle.beta_sq, Fraction(0)) / m_odd
    holds = identity_value == identity_expected == Fraction(1, m_odd) * sum(
        bundle.beta_sq, Fraction(0))
    rationalized = evaluate(bundle.lower_tree, bundle.plain)
    rationalized = (rationalized if isinstance(rationalized, RadSum)
                    else RadSum.from_rational(rationalized))

    plain_sq = alt_sq = None
    strict = None
    support = len(bundle.plain.support()) + len(bundle.alternating.support())
    exhaustive = len(bundle.plain.support()) <= exhaustive_cap
    if exhaustive:
        plain_sq = normengine.certified_closure_sq(bundle.plain, p, reg,
                                                   max_support=exhaustive_cap)
        alt_sq = normengine.certified_closure_sq(bundle.alternating, p, reg,
                                                 max_support=exhaustive_cap)
        diff = (RadSum.from_rational(plain_sq) if isinstance(plain_sq, Fraction)
                else plain_sq) - (RadSum.from_rational(alt_sq)
                                  if isinstance(alt_sq, Fraction) else alt_sq)
        strict = diff.sign() > 0
    target_sq = Fraction(517 * 517, m_odd ** 4)
    details = {
        "odd_weight": str(m_odd),
        "support_size": support,
        "concessions": bundle.concessions,
    }
    return PairReport(identity_value=identity_value,
                      identity_expected=identity_expected,
                      identity_holds=bool(holds),
                      rationalized_value=rationalized,
                      plain_norm_sq=plain_sq, alternating_norm_sq=alt_sq,
                      separation_strict=strict, ratio_target_sq=target_sq,
                      exhaustive=exhaustive, details=details)


def j_of(bundle: WitnessBundle) -> int:
    return bundle.j


# -- fixtures -----------------------------------------------------------------


def toy_chain_params(length: int = 24) -> params_mod.ParameterSystem:
    """Small-parameter system for chain fixtures: linear weights, the odd
    base index 3 at family index 1, no family constraint at indices 1-2,
    and index 1 at the chain weights."""
    n = [0, 0, 0] + [1] * (length - 2)
    return params_mod.generate(params_mod.TOY, length, {"n": n})


def unit_blocks(start: int, count: int) -> list[SqrtVector]:
    return [SqrtVector.from_rational(SparseVector.unit(k))
            for k in range(start, start + count)]


def fixture_chain(p=None, registry_path: str | None = None,
                  enforce_best_weight: bool = False,
                  require_maximal: bool | None = None
                  ) -> tuple[WitnessBundle, SigmaRegistry, params_mod.ParameterSystem]:
    """The frozen desk-scale chain: length two, minima (2, 4), alternating
    sides, six coordinates in total (exhaustive enumeration is cheap).

    The certificate-normalized construction cannot keep every growth
    hypothesis of the strict regime at this scale; the concessions list on
    the bundle records exactly which defaults were overridden.  Works for
    any parameter system; with strict-regime parameters the maximality of
    the chain minima is unattainable and is waived (recorded) by default.
    """
    p = p or toy_chain_params()
    toy = p.mode == params_mod.TOY
    if require_maximal is None:
        require_maximal = toy
    u = unit_blocks(2, 2)
    v = unit_blocks(4, 4)
    reg = SigmaRegistry(p, path=registry_path, base_index=4)
    cfg = ChainConfig(j=1, length=2, eps_y=lambda k: Fraction(1),
                      eps_g=lambda i: Fraction(1), xi_y=1, xi_g={1: 0, 2: 0},
                      xi_chain=1,
                      enforce_best_weight=enforce_best_weight,
                      require_maximal=require_maximal, y_count=2)
    bundle = build_chain(u, v, 1, p, reg, 2, cfg)
    return bundle, reg, p
