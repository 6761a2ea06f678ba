"""The group of local coordinate changes and its action on graded modules.

A jet rho(z) = a_1 z + a_2 z^2 + ... with a_1 != 0 acts on a graded module
through

    rho'(0)^(weight) . exp(sum_{n>0} c_n L_n)

where the c_n are the unique coefficients writing rho as c_0 exp(sum c_n
z^{n+1} d/dz) z.  The triangular solve for the c_n, the operator itself, and
the transition jets between two coordinates all live here.  Everything is
generic over the coefficient ring: plain rationals for pointwise jets, or
LaurentJet coefficients when the jet varies over a base point (used by the
conjugation check below and by the genus-zero machinery).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from .fock import FockModule, Vector, vacuum_module, vec_is_homogeneous, vec_weight_max, weight
from .linalg import QMat, as_q
from .series import (
    CoordJet,
    LaurentJet,
    NotInvertible,
    WindowError,
    _is_ring_zero,
    compose_jets,
    reverse_jet,
    ring_one_like,
    ring_zero_like,
)

Q = Fraction


class InsufficientJetOrder(WindowError):
    pass


@dataclass
class ExpCoeffs:
    """Coefficients of rho = c_0 exp(sum_{n>0} c_n z^{n+1} d/dz) z."""

    c0: object
    cs: List  # cs[n-1] = c_n

    def c(self, n: int):
        if n == 0:
            return self.c0
        return self.cs[n - 1]


def _vf_apply(cs: Sequence, poly: List, cap: int) -> List:
    """Apply the derivation sum c_n z^{n+1} d/dz to a polynomial (degree-indexed)."""
    zero = ring_zero_like(poly[0]) if poly else Q(0)
    out = [zero] * (cap + 1)
    for m, pm in enumerate(poly):
        if _is_ring_zero(pm) or m == 0:
            continue
        for n, cn in enumerate(cs, start=1):
            if m + n > cap:
                break
            if not _is_ring_zero(cn):
                out[m + n] = out[m + n] + cn * (pm * m)
    return out


def exp_vf_on_z(cs: Sequence, cap: int, one=Q(1)):
    """exp(sum c_n z^{n+1} d/dz) z as a degree-indexed list up to degree cap."""
    zero = one * 0
    poly = [zero] * (cap + 1)
    if cap >= 1:
        poly[1] = one
    acc = list(poly)
    term = list(poly)
    k = 1
    while any(not _is_ring_zero(t) for t in term):
        term = [t * Q(1, k) for t in _vf_apply(cs, term, cap)]
        # term now holds D^k z / k!, ready for the next application
        for i, t in enumerate(term):
            if not _is_ring_zero(t):
                acc[i] = acc[i] + t
        k += 1
        if k > cap + 2:
            break
    return acc


def extract_c(rho: CoordJet) -> ExpCoeffs:
    """Triangular solve for the exponential coefficients of a coordinate jet.

    Degree by degree: the coefficient of z^{m+1} in exp(sum c_n z^{n+1} d/dz) z
    is c_m plus terms in c_1..c_{m-1}, so each step solves one linear equation
    in one unknown.  The result is re-expanded and checked against the input.
    """
    rho.check_invertible()
    K = rho.order
    one = ring_one_like(rho.a1)
    c0 = rho.a1
    # sigma = rho / c0, normalized jet
    sigma = [ring_zero_like(rho.a1), one]
    for k in range(2, K + 1):
        sigma.append(rho.coefficient(k) / c0)
    cs: List = []
    for m in range(1, K):
        expd = exp_vf_on_z(cs, m + 1, one=one)
        cm = sigma[m + 1] - expd[m + 1]
        cs.append(cm)
    # round-trip self-check
    expd = exp_vf_on_z(cs, K, one=one)
    for k in range(1, K + 1):
        if not _is_ring_zero(c0 * expd[k] - rho.coefficient(k)):
            raise ArithmeticError(f"triangular solve failed to reproduce coefficient {k}")
    return ExpCoeffs(c0=c0, cs=cs)


def c2_formula(rho: CoordJet):
    """Closed form (1/6) rho'''(0)/rho'(0) - (1/4) (rho''(0)/rho'(0))^2."""
    rho.check_invertible()
    if rho.order < 3 and not rho.exact:
        raise InsufficientJetOrder("c2 needs a jet of order >= 3")
    d1 = rho.coefficient(1)
    d2 = rho.coefficient(2) * 2
    d3 = rho.coefficient(3) * 6
    r2 = d2 / d1
    return (d3 / d1) * Q(1, 6) - (r2 * r2) * Q(1, 4)


def gamma_xi(xi, order: int) -> CoordJet:
    """Jet of 1/(xi+z) - 1/xi = sum_{n>=1} (-1)^n xi^{-n-1} z^n."""
    xi = as_q(xi)
    if not xi:
        raise NotInvertible("gamma is undefined at xi = 0")
    return CoordJet([Q(-1) ** n * xi ** (-n - 1) for n in range(1, order + 1)])


def varrho(eta: CoordJet, mu: CoordJet, order: Optional[int] = None) -> CoordJet:
    """Transition jet between two coordinates: compose(eta, reverse(mu))."""
    return compose_jets(eta, reverse_jet(mu, order=order))


# ---------------------------------------------------------------------------
# the operator on graded modules


def _required_order(n_weight: int) -> int:
    # c_n for n <= N needs jet coefficients a_1..a_{N+1}
    return n_weight + 1


def u_apply(rho: CoordJet, module: FockModule, vec, coeffs: Optional[ExpCoeffs] = None):
    """Apply rho'(0)^{weight} exp(sum c_n L_n) to an exact module vector.

    The exponential is a finite sum because positive Virasoro modes strictly
    lower the weight.  Works for ring-valued vectors as well (family jets).
    """
    if not vec:
        return {}
    wmax = vec_weight_max(vec)
    need = _required_order(wmax)
    if rho.order < need:
        if rho.exact:
            rho = rho.truncate(need)
        else:
            raise InsufficientJetOrder(
                f"jet order {rho.order} insufficient for weight {wmax} (need {need})"
            )
    ec = coeffs if coeffs is not None else extract_c(rho.truncate(need) if rho.order > need else rho)
    cs = ec.cs
    acc = dict(vec)
    term = dict(vec)
    k = 1
    while term:
        nxt: Dict = {}
        for n, cn in enumerate(cs, start=1):
            if _is_ring_zero(cn):
                continue
            part = module.apply_virasoro(n, term)
            for mu, c in part.items():
                w = nxt.get(mu)
                add = cn * c
                nxt[mu] = add if w is None else w + add
        nxt = {mu: c for mu, c in nxt.items() if not _is_ring_zero(c)}
        invk = Q(1, k)
        for mu, c in nxt.items():
            add = c * invk
            cur = acc.get(mu)
            acc[mu] = add if cur is None else cur + add
        term = {mu: c * invk for mu, c in nxt.items()}
        k += 1
    c0 = ec.c0
    out = {}
    for mu, c in acc.items():
        if _is_ring_zero(c):
            continue
        w = weight(mu)
        if isinstance(c0, Fraction):
            out[mu] = c0 ** w * c
        else:
            out[mu] = c0.pow(w) * c
    return out


def u_matrix(rho: CoordJet, module: FockModule, n_max: int) -> QMat:
    """Matrix of the coordinate-change operator on the weight truncation.

    Block lower-triangular in the weight filtration: the induced map on each
    graded quotient is the scalar rho'(0)^n.
    """
    need = _required_order(n_max)
    if rho.order < need and not rho.exact:
        raise InsufficientJetOrder(f"jet order {rho.order} insufficient for truncation {n_max}")
    rho_n = rho.truncate(need)
    ec = extract_c(rho_n)
    basis = module.basis(n_max)
    table = module._index_table(n_max)
    mat = QMat(len(basis), len(basis))
    for col, mu in enumerate(basis):
        img = u_apply(rho_n, module, {mu: Q(1)}, coeffs=ec)
        for tau, c in img.items():
            mat.add_(table[tau], col, c)
    return mat


def u_matrix_inverse(rho: CoordJet, module: FockModule, n_max: int) -> QMat:
    return u_matrix(reverse_jet(rho, order=_required_order(n_max)), module, n_max)


def u_matrix_dual(rho: CoordJet, module: FockModule, n_max: int) -> QMat:
    """Operator of rho on the graded dual, in the dual basis.

    The dual Virasoro modes are transposes with reflected index, so the
    exponential factor is the transpose of exp(sum c_n L_{-n}); weight-raising
    factors make its compression to the truncation exact.
    """
    need = _required_order(n_max)
    if rho.order < need and not rho.exact:
        raise InsufficientJetOrder(f"jet order {rho.order} insufficient for truncation {n_max}")
    ec = extract_c(rho.truncate(need))
    dim = module.dim(n_max)
    t = QMat(dim, dim)
    for n, cn in enumerate(ec.cs, start=1):
        if cn:
            t = t + module.virasoro_matrix(-n, n_max, n_max).scale(cn)
    exp = QMat.identity(dim)
    term = QMat.identity(dim)
    k = 1
    while not term.is_zero() and k <= n_max + 1:
        term = (t @ term).scale(Q(1, k))
        exp = exp + term
        k += 1
    return module.scalar_pow_weight(ec.c0, n_max) @ exp.transpose()


# ---------------------------------------------------------------------------
# change-of-variable conjugation check


def family_jet(alpha: CoordJet, var: str = "z", work_order: Optional[int] = None, max_degree: Optional[int] = None) -> CoordJet:
    """The jet x -> alpha(t+x) - alpha(t) with coefficients Laurent in t.

    Coefficient of x^m is sum_{j>=m} binom(j, m) a_j t^{j-m}; for a truncated
    alpha of order K that series is known to t-order K-m.
    """
    K = alpha.order
    deg_cap = max_degree if max_degree is not None else K
    coeffs: List[LaurentJet] = []
    for m in range(1, deg_cap + 1):
        data = {}
        for j in range(m, K + 1):
            a = alpha.coefficient(j)
            if a:
                data[j - m] = math.comb(j, m) * a
        hi = None if alpha.exact else K - m
        jet = LaurentJet(data, 0, hi, var)
        if work_order is not None:
            jet = jet.truncated(work_order)
        coeffs.append(jet)
    return CoordJet(coeffs, exact=False)


def huang_conjugation_check(
    alpha: CoordJet,
    v: Vector,
    w: Vector,
    module: FockModule,
    z_lo: int,
    z_hi: int,
) -> Tuple[bool, Dict]:
    """Check the change-of-variable rule for vertex operators on a z-window.

    Left side: conjugate Y(v, z) by the operator of alpha and apply to w.
    Right side: Y(U(alpha-family) v, alpha(z)) w, expanded with exact window
    tracking.  Returns (equal, report); the report lists any coefficient
    discrepancies as (partition, exponent, lhs, rhs).
    """
    voa = vacuum_module()
    dv = vec_is_homogeneous(v)
    if dv is None:
        raise ValueError("v must be homogeneous")
    ww = vec_weight_max(w)
    k_top = dv + ww - 1  # Y(u)_k w = 0 above this for wt(u) <= dv
    work = z_hi + max(0, k_top) + 4

    # -- left side
    need = _required_order(ww + dv + max(z_hi, 0) + 1)
    alpha_fwd = alpha.truncate(need) if alpha.exact else alpha
    if alpha_fwd.order < need:
        raise InsufficientJetOrder(f"alpha must be known to order {need}")
    alpha_inv = reverse_jet(alpha_fwd, order=need)
    w_in = u_apply(alpha_inv, module, w)
    lhs: Dict[tuple, Dict[int, Fraction]] = {}
    for e in range(z_lo, z_hi + 1):
        k = -e - 1
        vec = module.apply_vertex(v, k, w_in)
        vec = u_apply(alpha_fwd, module, vec)
        for mu, c in vec.items():
            lhs.setdefault(mu, {})[e] = c

    # -- right side
    fam = family_jet(alpha, var="z", work_order=work, max_degree=max(dv + 1, 2))
    gvec = u_apply(fam, voa, {mu: LaurentJet.const(c, var="z") for mu, c in v.items()})
    alpha_lt = alpha.to_laurent("z")
    if alpha_lt.hi is None:
        alpha_lt = alpha_lt.truncated(work)
    apows: Dict[int, LaurentJet] = {0: LaurentJet.const(1, var="z")}

    def apow(e: int) -> LaurentJet:
        if e not in apows:
            if e > 0:
                apows[e] = apow(e - 1) * alpha_lt
            else:
                apows[e] = apow(e + 1) * alpha_lt.inv()
        return apows[e]

    rhs: Dict[tuple, Dict[int, Fraction]] = {}
    for mu_u, g in gvec.items():
        if g.is_zero():
            continue
        du = weight(mu_u)
        for k in range(-z_hi - 1, du + ww):
            target = module.apply_vertex({mu_u: Q(1)}, k, w)
            if not target:
                continue
            s = g * apow(-k - 1)
            if s.hi is not None and s.hi < z_hi:
                raise WindowError(
                    f"window [{s.lo},{s.hi}] does not cover requested top {z_hi}; increase the jet order of alpha"
                )
            for e in range(max(z_lo, s.lo), z_hi + 1):
                c = s.coeff(e)
                if not c:
                    continue
                for tau, x in target.items():
                    slot = rhs.setdefault(tau, {})
                    slot[e] = slot.get(e, Q(0)) + c * x

    # -- compare
    report = []
    keys = set(lhs) | set(rhs)
    for tau in sorted(keys):
        for e in range(z_lo, z_hi + 1):
            a = lhs.get(tau, {}).get(e, Q(0))
            b = rhs.get(tau, {}).get(e, Q(0))
            if a != b:
                report.append((tau, e, a, b))
    return (not report), {"discrepancies": report, "window": (z_lo, z_hi)}
