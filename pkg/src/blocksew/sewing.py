"""Contraction of multilinear blocks along a module pairing, in powers of q.

A block is a coefficient table on truncated graded slots; sewing contracts a
designated (module, dual-module) slot pair against the graded resolvent

    q^(offset) * sum_n q^n sum_a  e^(N_n log q) m(n,a) (x) dual m(n,a)

with N_n the nilpotent part of L_0 at weight n.  The engine also provides the
two-sided residue identity that justifies the contraction and a genus-zero
invariance check on the two-pointed sphere with arbitrary coordinate jets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .coords import family_jet, gamma_xi, u_apply
from .fock import FockModule, Vector, vacuum_module, vec_is_homogeneous, weight
from .linalg import QMat, QVec, as_q
from .series import (
    CoordJet,
    LaurentJet,
    TruncSeries,
    WindowError,
    diagonal_contract,
    jet_compose,
    reverse_jet,
)

Q = Fraction

INFINITY = "inf"


class TruncationShortfall(WindowError):
    def __init__(self, msg: str, required: int):
        super().__init__(msg)
        self.required = required


# ---------------------------------------------------------------------------
# resolvent


@dataclass
class Resolvent:
    """Basis/dual-basis pairs per weight with the nilpotent L_0 part and offset."""

    module: object
    n_max: int

    def dims(self) -> List[int]:
        return self.module.weight_dims(self.n_max)

    def pairing_delta_check(self) -> bool:
        # the stored pairs are coordinate bases, so the pairing test is that
        # each weight block is square and the nilpotent part fits it
        for n, d in enumerate(self.dims()):
            blk = self.module.nilpotent_block(n)
            if (blk.nrows, blk.ncols) != (d, d):
                return False
        return True

    def block_start(self, n: int) -> int:
        return sum(self.dims()[:n])

    def total_dim(self) -> int:
        return sum(self.dims())


def q_l0_resolvent(module, order: int, var: str = "q") -> TruncSeries:
    """The series q^L0 applied to the identity element of End(M), blockwise.

    Returns a matrix-valued series: the value at (n, l) is the global matrix
    whose weight-n block is N_n^l / l!, so that q d/dq of the output equals
    L_0 times the output, exactly.
    """
    res = Resolvent(module, order)
    dims = res.dims()
    total = res.total_dim()
    logbound = module.log_bound
    out = TruncSeries(
        (var,), {var: order}, offset={var: module.offset}, logmax={var: logbound}
    )
    for n in range(order + 1):
        if not dims[n]:
            continue
        start = res.block_start(n)
        nil = module.nilpotent_block(n)
        power = QMat.identity(dims[n])
        for l in range(0, logbound + 1):
            if power.is_zero():
                break
            glob = QMat(total, total)
            for i, row in power.rows.items():
                for j, v in row.items():
                    glob.set_(start + i, start + j, v * Q(1, math.factorial(l)))
            out._store((n,), (l,), glob)
            power = nil @ power
    return out


def l0_times(module, series: TruncSeries) -> TruncSeries:
    """Left action of L_0 = offset + weight + nilpotent part on a matrix-valued
    series whose value at q^n lives in the weight-n block."""
    res = Resolvent(module, series.trunc[0])
    total = res.total_dim()
    dims = res.dims()
    lam = module.offset
    out = TruncSeries(
        series.vars,
        {series.vars[0]: series.trunc[0]},
        offset={series.vars[0]: series.offset[0]},
        logmax={series.vars[0]: series.logmax[0]},
    )
    for (exps, logs), mat in series.terms.items():
        n = exps[0]
        start = res.block_start(n)
        nil = module.nilpotent_block(n)
        glob_nil = QMat(total, total)
        for i, row in nil.rows.items():
            for j, v in row.items():
                glob_nil.set_(start + i, start + j, v)
        out._store(exps, logs, mat.scale(lam + n) + glob_nil @ mat)
    return out


# ---------------------------------------------------------------------------
# blocks and sewing


class SewingBlock:
    """Multilinear functional as a sparse coefficient table on truncated slots.

    ``slot_dims[s]`` lists the weight-space dimensions of slot s up to its
    truncation; table keys are tuples of global graded indices, one per slot.
    """

    def __init__(
        self,
        slot_dims: Sequence[List[int]],
        table: Dict[Tuple[int, ...], Fraction],
        pair_slots: Optional[Tuple[int, int]] = None,
    ):
        self.slot_dims = [list(d) for d in slot_dims]
        self.arity = len(self.slot_dims)
        self.table = {tuple(k): as_q(v) for k, v in table.items() if as_q(v)}
        self.pair_slots = pair_slots

    def slot_trunc(self, s: int) -> int:
        return len(self.slot_dims[s]) - 1

    def slot_dim(self, s: int) -> int:
        return sum(self.slot_dims[s])

    @classmethod
    def pairing(cls, module, n_max: int) -> "SewingBlock":
        """Two-slot block pairing a module truncation with its graded dual."""
        dims = module.weight_dims(n_max)
        total = sum(dims)
        table = {(i, i): Q(1) for i in range(total)}
        return cls([dims, dims], table, pair_slots=(0, 1))

    def tensor(self, other: "SewingBlock") -> "SewingBlock":
        table: Dict[Tuple[int, ...], Fraction] = {}
        for k1, v1 in self.table.items():
            for k2, v2 in other.table.items():
                table[k1 + k2] = v1 * v2
        return SewingBlock(self.slot_dims + other.slot_dims, table, None)

    def weight_of_index(self, s: int, idx: int) -> int:
        acc = 0
        for n, d in enumerate(self.slot_dims[s]):
            if idx < acc + d:
                return n
            acc += d
        raise IndexError(idx)

    def evaluate(self, vectors: Sequence[QVec]) -> Fraction:
        if len(vectors) != self.arity:
            raise ValueError("one vector per slot")
        total = Q(0)
        for key, c in self.table.items():
            prod = c
            for s, idx in enumerate(key):
                x = vectors[s][idx]
                if not x:
                    prod = Q(0)
                    break
                prod *= x
            if prod:
                total += prod
        return total

    def contract_slot(self, s: int, mat: QMat) -> "SewingBlock":
        """Precompose slot s with a linear map: new[.., j, ..] = sum_i old[.., i, ..] mat[i, j]."""
        table: Dict[Tuple[int, ...], Fraction] = {}
        for key, c in self.table.items():
            row = mat.rows.get(key[s])
            if not row:
                continue
            for j, v in row.items():
                nk = key[:s] + (j,) + key[s + 1 :]
                w = table.get(nk, Q(0)) + c * v
                if w:
                    table[nk] = w
                else:
                    table.pop(nk, None)
        dims = [list(d) for d in self.slot_dims]
        return SewingBlock(dims, table, self.pair_slots)

    def reduce_retained(self, inputs: Dict[int, QVec]) -> Dict[Tuple[int, int], Fraction]:
        """Contract every non-pair slot with its input; keys become (i_M, i_dual)."""
        if self.pair_slots is None:
            raise ValueError("block has no designated sewing pair")
        pm, pd = self.pair_slots
        retained = [s for s in range(self.arity) if s not in (pm, pd)]
        missing = [s for s in retained if s not in inputs]
        if missing:
            raise ValueError(f"missing inputs for slots {missing}")
        out: Dict[Tuple[int, int], Fraction] = {}
        for key, c in self.table.items():
            prod = c
            for s in retained:
                x = inputs[s][key[s]]
                if not x:
                    prod = Q(0)
                    break
                prod *= x
            if prod:
                k2 = (key[pm], key[pd])
                w = out.get(k2, Q(0)) + prod
                if w:
                    out[k2] = w
                else:
                    out.pop(k2, None)
        return out


def sew(
    block: SewingBlock,
    inputs: Dict[int, QVec],
    module,
    order: int,
    normalized: bool = False,
    var: str = "q",
) -> TruncSeries:
    """Contract the sewing pair of a block against q^{L_0} (or q^{wtd L_0}).

    The standard variant carries the module offset and log-q terms from the
    nilpotent part of L_0; the normalized variant uses the integer grading
    and has neither.  Emitting order q^K requires the pair slots to cover
    weight K; a shortfall is an error carrying the minimal required weight.
    """
    if block.pair_slots is None:
        raise ValueError("block has no designated sewing pair")
    pm, pd = block.pair_slots
    cover = min(block.slot_trunc(pm), block.slot_trunc(pd))
    if cover < order:
        raise TruncationShortfall(
            f"emitting q^{order} needs pair-slot weight {order}, block covers {cover}",
            required=order,
        )
    dims = module.weight_dims(order)
    if dims != block.slot_dims[pm][: order + 1] or dims != block.slot_dims[pd][: order + 1]:
        raise ValueError("pair slots do not match the module's weight dimensions")
    red = block.reduce_retained(inputs)
    logbound = 0 if normalized else module.log_bound
    out = TruncSeries(
        (var,),
        {var: order},
        offset={} if normalized else {var: module.offset},
        logmax={var: logbound},
    )
    res = Resolvent(module, order)
    for n in range(order + 1):
        d = dims[n]
        if not d:
            continue
        start = res.block_start(n)
        nil = module.nilpotent_block(n)
        power = QMat.identity(d)
        for l in range(logbound + 1):
            if power.is_zero():
                break
            coeff = Q(0)
            inv = Q(1, math.factorial(l))
            for b in range(d):
                row = power.rows.get(b, {})
                for a, v in row.items():
                    x = red.get((start + b, start + a))
                    if x:
                        coeff += inv * v * x
            if coeff:
                out._store((n,), (l,), coeff)
            power = nil @ power
    return out


def sew_multi(
    block: SewingBlock,
    inputs: Dict[int, QVec],
    pairs: Sequence[Tuple[int, int, object]],
    orders: Sequence[int],
    var_names: Optional[Sequence[str]] = None,
) -> TruncSeries:
    """Iterated single-pair contraction along several pairs, one q per pair.

    ``pairs[j]`` is (module_slot, dual_slot, module); multilinearity makes the
    order of contraction irrelevant, and each pair gets an independent formal
    variable with its own offset and log bound.
    """
    m = len(pairs)
    names = list(var_names) if var_names else [f"q{j+1}" for j in range(m)]
    pair_slots = [s for (a, b, _) in pairs for s in (a, b)]
    retained = [s for s in range(block.arity) if s not in pair_slots]
    for s in retained:
        if s not in inputs:
            raise ValueError(f"missing input for slot {s}")
    modules = [p[2] for p in pairs]
    out = TruncSeries(
        tuple(names),
        {v: o for v, o in zip(names, orders)},
        offset={v: mod.offset for v, mod in zip(names, modules)},
        logmax={v: mod.log_bound for v, mod in zip(names, modules)},
    )
    starts = []
    nils = []
    for (pm, pd, mod), order in zip(pairs, orders):
        cover = min(block.slot_trunc(pm), block.slot_trunc(pd))
        if cover < order:
            raise TruncationShortfall(
                f"pair ({pm},{pd}) needs weight {order}, covers {cover}", required=order
            )
        res = Resolvent(mod, order)
        starts.append([res.block_start(n) for n in range(order + 1)])
        nils.append([mod.nilpotent_block(n) for n in range(order + 1)])

    def rec(j: int, exps: Tuple[int, ...], logs: Tuple[int, ...], partial: Dict[Tuple[int, ...], Fraction]):
        if j == m:
            total = Q(0)
            for key, c in partial.items():
                prod = c
                for s_pos, s in enumerate(retained):
                    x = inputs[s][key[s_pos]]
                    if not x:
                        prod = Q(0)
                        break
                    prod *= x
                total += prod
            if total:
                out._store(exps, logs, total)
            return
        pm, pd, mod = pairs[j]
        dims = mod.weight_dims(orders[j])
        # positions of pm, pd within the remaining key layout
        layout = [s for s in range(block.arity) if s in retained or s in pair_slots[2 * j :]]
        ipm, ipd = layout.index(pm), layout.index(pd)
        for n in range(orders[j] + 1):
            d = dims[n]
            if not d:
                continue
            start = starts[j][n]
            nil = nils[j][n]
            power = QMat.identity(d)
            for l in range(mod.log_bound + 1):
                if power.is_zero():
                    break
                inv = Q(1, math.factorial(l))
                reduced: Dict[Tuple[int, ...], Fraction] = {}
                for key, c in partial.items():
                    b_idx, a_idx = key[ipm], key[ipd]
                    wb, wa = b_idx - start, a_idx - start
                    if not (0 <= wb < d and 0 <= wa < d):
                        continue
                    v = power.get(wb, wa)
                    if not v:
                        continue
                    nk = tuple(x for t, x in enumerate(key) if t not in (ipm, ipd))
                    w = reduced.get(nk, Q(0)) + inv * v * c
                    if w:
                        reduced[nk] = w
                    else:
                        reduced.pop(nk, None)
                if reduced:
                    rec(
                        j + 1,
                        exps[:j] + (n,) + exps[j + 1 :],
                        logs[:j] + (l,) + logs[j + 1 :],
                        reduced,
                    )
                power = nil @ power

    rec(0, (0,) * m, (0,) * m, dict(block.table))
    return out


# ---------------------------------------------------------------------------
# two-sided residue identity


def residue_identity_check(
    u: Vector,
    f: TruncSeries,
    module: FockModule,
    order: int,
) -> Tuple[bool, int, TruncSeries]:
    """Both residue forms of the sewing contraction of Y(u) against f.

    Side one inserts the mode action on the module factor; side two inserts
    the inversion-twisted action on the dual factor.  Both reduce to the
    diagonal contraction of a bivariate matrix-valued series, and must agree
    to the requested q-order.  Returns (equal, order, the common series with
    the module's L_0 offset attached).
    """
    du = vec_is_homogeneous(u)
    if du is None:
        raise ValueError("u must be homogeneous")
    if len(f.vars) != 2 or any(f.offset) or any(f.logmax):
        raise ValueError("f must be a plain bivariate series")
    res = Resolvent(module, order)
    total = res.total_dim()
    basis = module.basis(order)

    d1 = TruncSeries(("xi", "pi"), {"xi": order, "pi": order})
    for k in range(du - 1 - order, du + order):
        shift = du - k - 1
        mat = module.vertex_matrix(u, k, order, order)
        groups: Dict[Tuple[int, int], QMat] = {}
        for i, row in mat.rows.items():
            wi = weight(basis[i])
            for j, v in row.items():
                wj = weight(basis[j])
                if wi != wj + shift:
                    continue
                g = groups.setdefault((wi, wj), QMat(total, total))
                g.add_(i, j, v)
        for (wi, wj), g in groups.items():
            d1._store((wi, wj), (0, 0), g)

    voa = vacuum_module()
    uprime = u_apply(gamma_xi(1, du + 2), voa, u)
    by_weight: Dict[int, Vector] = {}
    for mu, c in uprime.items():
        by_weight.setdefault(weight(mu), {})[mu] = c
    d2 = TruncSeries(("xi", "pi"), {"xi": order, "pi": order})
    for dprime, comp in by_weight.items():
        for k in range(dprime - 1 - order, dprime + order):
            shift = dprime - k - 1
            bmat = module.contragredient_matrix(comp, k, order, order)
            groups = {}
            for jrow, row in bmat.rows.items():
                w_target = weight(basis[jrow])
                for icol, v in row.items():
                    w_source = weight(basis[icol])
                    if w_target != w_source + shift:
                        continue
                    # element (1 x B) of the identity block: entry (icol, jrow)
                    g = groups.setdefault((w_source, w_target), QMat(total, total))
                    g.add_(icol, jrow, v)
            for (wsrc, wtgt), g in groups.items():
                d2._store((wsrc, wtgt), (0, 0), g)

    f2 = _reshape_bivariate(f, ("xi", "pi"), order)
    lhs = diagonal_contract(d1 * f2)
    rhs = diagonal_contract(d2 * f2)
    equal = lhs == rhs
    dressed = TruncSeries(
        ("q",),
        {"q": lhs.trunc[0]},
        offset={"q": module.offset},
        terms={k: v for k, v in lhs.terms.items()},
    )
    return equal, order, dressed


def _reshape_bivariate(f: TruncSeries, names: Tuple[str, str], order: int) -> TruncSeries:
    out = TruncSeries(names, {names[0]: order, names[1]: order})
    for (exps, logs), val in f.terms.items():
        if exps[0] <= order and exps[1] <= order:
            out._store(exps, logs, val)
    return out


# ---------------------------------------------------------------------------
# genus-zero invariance on the two-pointed sphere


@dataclass
class SpherePoint:
    """Marked point on the sphere with a coordinate jet.

    position is a rational number or INFINITY; the local coordinate is
    jet(z - position) at a finite point and jet(1/z) at infinity.  dual=True
    marks slots carrying the graded dual of the module.
    """

    position: Union[Fraction, str]
    jet: CoordJet
    module: FockModule
    dual: bool = False


def _binomial_jet(z0: Fraction, k: int, work: int, var: str) -> LaurentJet:
    """(z0 + t)^k as a t-series; exact for k >= 0, truncated window otherwise."""
    if z0 == 0:
        return LaurentJet.monomial(1, k, var)
    if k >= 0:
        coeffs = {j: as_q(math.comb(k, j)) * z0 ** (k - j) for j in range(k + 1)}
        return LaurentJet(coeffs, 0, None, var)
    coeffs = {}
    c = z0 ** k
    coeffs[0] = c
    for j in range(1, work + 1):
        c = c * Q(k - j + 1, j) / z0
        coeffs[j] = c
    return LaurentJet(coeffs, 0, work, var)


def expand_section_at_point(
    v: Vector, k: int, point: SpherePoint, work: int
) -> Dict[tuple, LaurentJet]:
    """Expansion of the global form v z^k dz in the point's local coordinate.

    Returns, per vacuum-module basis vector, the scalar Laurent coefficient
    series in the local variable of the point.
    """
    voa = vacuum_module()
    var = "s"
    dv = vec_is_homogeneous(v)
    if dv is None:
        raise ValueError("v must be homogeneous")
    if point.position == INFINITY:
        # t = 1/z: transition family is the inversion jet, and
        # z^k dz = -t^{-k-2} dt
        fam = CoordJet(
            [
                LaurentJet({m + 1: Q(-1) ** m}, 0, work, var)
                for m in range(1, dv + 2)
            ],
            exact=False,
        )
        base = u_apply(fam, voa, {mu: LaurentJet.const(c, var=var) for mu, c in v.items()})
        g = LaurentJet.monomial(-1, -k - 2, var)
        cur = {mu: jet * g for mu, jet in base.items()}
    else:
        z0 = as_q(point.position)
        g = _binomial_jet(z0, k, work, var)
        cur = {mu: g.scale(c) for mu, c in v.items()}

    rho = point.jet
    if not (rho.exact and rho.order == 1 and rho.coefficient(1) == 1):
        # transform the trivialization through s = rho(t)
        need = max(dv + 1, 2)
        fam = family_jet(rho, var=var, work_order=work, max_degree=need)
        moved = u_apply(fam, voa, cur)
        rho_lt = rho.to_laurent(var)
        if rho_lt.hi is None:
            rho_lt = rho_lt.truncated(work)
        dinv = rho_lt.derivative().inv()
        tinv = reverse_jet(rho, order=min(rho.order, work) if not rho.exact else work)
        cur = {mu: jet_compose(jet * dinv, tinv) for mu, jet in moved.items()}
    return cur


def genus0_invariance_check(
    block: SewingBlock,
    points: Sequence[SpherePoint],
    v: Vector,
    k: int,
    weight_cap: int,
) -> Tuple[bool, List]:
    """Invariance of a block under the residue action of v z^k dz.

    Sums, over slots, the block evaluated with the section acting on that
    slot, and reports whether everything vanishes on inputs up to the weight
    cap.  Slot truncations must absorb the largest weight raise of the
    action; otherwise a shortfall error names the needed truncation.
    """
    if len(points) != block.arity:
        raise ValueError("one marked point per slot")
    dv = vec_is_homogeneous(v)
    work = weight_cap + abs(k) + dv + 6
    acted_tables: List[SewingBlock] = []
    for s, pt in enumerate(points):
        n_slot = block.slot_trunc(s)
        coeffs = expand_section_at_point(v, k, pt, work)
        act = QMat(block.slot_dim(s), block.slot_dim(s))
        for mu_u, jet in coeffs.items():
            du = weight(mu_u)
            val = jet.valuation()
            if val is None:
                continue
            e_lo = val
            # checked keys have sources <= weight_cap; modes above act on nothing checked
            e_hi = du + weight_cap - 1
            if jet.hi is not None and jet.hi < e_hi:
                raise TruncationShortfall(
                    f"slot {s}: window [{jet.lo},{jet.hi}] below mode top {e_hi}",
                    required=e_hi,
                )
            raise_max = du - e_lo - 1
            if weight_cap + raise_max > n_slot:
                raise TruncationShortfall(
                    f"slot {s}: truncation {n_slot} cannot absorb weight raise {raise_max}",
                    required=weight_cap + raise_max,
                )
            for e in range(e_lo, e_hi + 1):
                c = jet.coeff(e)
                if not c:
                    continue
                if pt.dual:
                    mode = pt.module.contragredient_matrix({mu_u: Q(1)}, e, n_slot, n_slot)
                else:
                    mode = pt.module.vertex_matrix({mu_u: Q(1)}, e, n_slot, n_slot)
                act = act + mode.scale(c)
        acted_tables.append(block.contract_slot(s, act))

    failures = []
    keys = set()
    for t in acted_tables:
        keys.update(t.table)
    for key in sorted(keys):
        if any(
            block.weight_of_index(s, idx) > weight_cap for s, idx in enumerate(key)
        ):
            continue
        total = sum((t.table.get(key, Q(0)) for t in acted_tables), Q(0))
        if total:
            failures.append((key, total))
    return (not failures), failures
