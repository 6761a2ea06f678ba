"""Schwarzian calculus on jets and the projective term of the sewing equation.

The Schwarzian derivative S f = f'''/f' - (3/2)(f''/f')^2 vanishes exactly on
Mobius maps and measures deviation from a projective chart.  The projective
term assembles, from Schwarzian data at the sewing pair and the marked
points, the q-series multiplying a sewn block in its first-order equation:

    (c/12) * (A + B + sum_i C_i)

with A_n = sum_{m<=n-2} a_{m,n} s^(xi)_{n-m-2}, B_n the mirror image with the
indices of b swapped, and C_i the residue of S_eta * h_i.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .linalg import as_q
from .series import (
    CoordJet,
    LaurentJet,
    NotInvertible,
    OffsetError,
    SeriesError,
    TruncSeries,
    VariableMismatch,
    WindowError,
    jet_compose,
    reverse_jet,
)

Q = Fraction

JetLike = Union[CoordJet, LaurentJet]


def _as_laurent(f: JetLike, work: int) -> LaurentJet:
    lt = f.to_laurent() if isinstance(f, CoordJet) else f
    if lt.hi is None or lt.hi > work:
        lt = lt.truncated(work)
    return lt


def schwarzian_jet(f: JetLike, order: int) -> LaurentJet:
    """S f as a window-tracked Laurent series in the jet variable."""
    lt = _as_laurent(f, order + 3)
    d1 = lt.derivative()
    if d1.valuation() is None:
        raise NotInvertible("derivative vanishes on the window")
    d2 = d1.derivative()
    d3 = d2.derivative()
    r = d2 * d1.inv()
    s = d3 * d1.inv() - r * r * Q(3, 2)
    if s.hi is not None and s.hi > order:
        s = s.truncated(order)
    return s


def schwarzian(f: JetLike, order: int) -> TruncSeries:
    """Schwarzian derivative as a truncated series (see schwarzian_jet)."""
    return schwarzian_jet(f, order).to_trunc_series()


def schwarzian_at(f: CoordJet, p) -> Fraction:
    """Exact value of S f at a rational point; the jet must be polynomial."""
    if not f.exact:
        raise WindowError("pointwise Schwarzian needs an exact polynomial jet")
    p = as_q(p)

    def deriv_at(k: int) -> Fraction:
        tot = Q(0)
        for j in range(k, f.order + 1):
            a = f.coefficient(j)
            if a:
                fall = Q(1)
                for t in range(k):
                    fall *= j - t
                tot += a * fall * p ** (j - k)
        return tot

    d1, d2, d3 = deriv_at(1), deriv_at(2), deriv_at(3)
    if not d1:
        raise NotInvertible(f"derivative vanishes at {p}")
    return d3 / d1 - Q(3, 2) * (d2 / d1) ** 2


def transition_quadratic(g: JetLike, h: CoordJet, order: int) -> LaurentJet:
    """S_h g pulled back to the underlying variable: S(g o h^{-1})(h(z)) h'(z)^2.

    g and h are functions of a common variable; the result is the coefficient
    series of the quadratic differential S_h g dh^2 expressed in that variable.
    """
    hinv = reverse_jet(h, order=order + 4)
    glt = _as_laurent(g, order + 4)
    comp = jet_compose(glt, hinv)
    s = schwarzian_jet(comp, order + 2)
    pulled = jet_compose(s, h.truncate(min(h.order, order + 4)) if not h.exact else h)
    hp = _as_laurent(h, order + 3).derivative()
    out = pulled * hp * hp
    if out.hi is not None and out.hi > order:
        out = out.truncated(order)
    return out


def cocycle_check(eta: CoordJet, mu: CoordJet, f: CoordJet, order: int) -> bool:
    """Antisymmetry and the three-term cocycle for Schwarzian differentials.

    All三 jets are coordinates in one variable; both identities are checked
    after pulling every quadratic differential back to that variable.
    """
    t_eta_mu = transition_quadratic(eta, mu, order)
    t_mu_eta = transition_quadratic(mu, eta, order)
    if not _jets_equal(t_eta_mu, -t_mu_eta, order):
        return False
    t_f_mu = transition_quadratic(f, mu, order)
    t_eta_f = transition_quadratic(eta, f, order)
    total = t_f_mu + t_eta_f + t_mu_eta
    return _jets_equal(total, LaurentJet.zero(total.var), order)


def _jets_equal(a: LaurentJet, b: LaurentJet, order: int) -> bool:
    lo = min(a.lo, b.lo)
    for e in range(lo, order + 1):
        ca = a.coeffs.get(e, Q(0)) if (a.hi is None or e <= a.hi) else None
        cb = b.coeffs.get(e, Q(0)) if (b.hi is None or e <= b.hi) else None
        if ca is None or cb is None:
            raise WindowError(f"comparison window {order} not covered (exponent {e})")
        if ca != cb:
            return False
    return True


def vir_transition(jet: CoordJet, c, order: int) -> Tuple[TruncSeries, TruncSeries]:
    """Action of a transition jet on the conformal vector: scale and shift.

    Returns ((d eta/d mu)^2, (c/12) S jet) as series in the jet variable; the
    shift must agree with the operator of the jet applied to the conformal
    vector, which is checked independently in the test-suite through the
    module machinery.
    """
    c = as_q(c)
    lt = _as_laurent(jet, order + 3)
    d1 = lt.derivative()
    scale = (d1 * d1).truncated(order) if (d1.hi is None or d1.hi > order) else d1 * d1
    if scale.hi is not None and scale.hi > order:
        scale = scale.truncated(order)
    shift = schwarzian_jet(jet, order).scale(c / 12)
    return scale.to_trunc_series(), shift.to_trunc_series()


def mobius_from_quadratic(qcoeffs: Sequence, order: int) -> CoordJet:
    """Construct a jet whose Schwarzian is the given power series.

    Solves h'' + Q h / 2 = 0 twice, with (h(0), h'(0)) = (1, 0) and (0, 1),
    and returns h_2/h_1.  Useful as a generator of projective-chart test data.
    """
    qs = [as_q(x) for x in qcoeffs]

    def solve(h0, h1) -> List[Fraction]:
        h = [as_q(h0), as_q(h1)]
        for k in range(0, order):
            conv = sum((qs[j] * h[k - j] for j in range(min(k, len(qs) - 1) + 1) if j < len(qs)), Q(0))
            h.append(-conv / (2 * (k + 1) * (k + 2)))
        return h

    h1 = solve(1, 0)
    h2 = solve(0, 1)
    j1 = LaurentJet({e: v for e, v in enumerate(h1) if v}, 0, order + 1)
    j2 = LaurentJet({e: v for e, v in enumerate(h2) if v}, 0, order + 1)
    f = j2 * j1.inv()
    return f.truncated(order).to_coordjet(order)


# ---------------------------------------------------------------------------
# projective term


def _abs_coeff(s: TruncSeries, k: int) -> Fraction:
    """Coefficient of the absolute exponent k in a univariate log-free series."""
    if len(s.vars) != 1:
        raise VariableMismatch("Schwarzian data must be univariate")
    off = s.offset[0]
    rel = Q(k) - off
    if rel.denominator != 1:
        return Q(0)
    n = int(rel)
    if n < 0:
        return Q(0)
    if n > s.trunc[0]:
        raise WindowError(f"Schwarzian datum truncated below exponent {k}")
    v = s.terms.get(((n,), (0,)), Q(0))
    return v


def _pair_series(
    s_xi: TruncSeries,
    s_pi: TruncSeries,
    a: TruncSeries,
    b: TruncSeries,
    q_exp_index_a: int,
    q_exp_index_b: int,
    order: int,
) -> Dict[Tuple[int, ...], Fraction]:
    """A_n + B_n contributions of one sewing pair, keyed by exponent tuples of
    the spectator q-variables plus this pair's own q-power first."""
    out: Dict[Tuple[int, ...], Fraction] = {}

    def accum(series: TruncSeries, sdat: TruncSeries, m_index: int, q_index: int):
        for (exps, logs), val in series.terms.items():
            if any(logs):
                raise SeriesError("vector-field data cannot carry log terms")
            m = exps[m_index]
            n = exps[q_index]
            if n > order or n - m - 2 < 0:
                continue
            s_val = _abs_coeff(sdat, n - m - 2)
            if not s_val:
                continue
            rest = tuple(x for i, x in enumerate(exps) if i not in (m_index, q_index))
            key = (n,) + rest
            out[key] = out.get(key, Q(0)) + val * s_val

    accum(a, s_xi, 0, q_exp_index_a)
    accum(b, s_pi, 1, q_exp_index_b)
    return out


def projective_term(
    s_xi: TruncSeries,
    s_pi: TruncSeries,
    s_eta: Sequence[TruncSeries],
    a: TruncSeries,
    b: TruncSeries,
    h: Sequence[TruncSeries],
    c,
    order: int,
    out_var: str = "q",
) -> TruncSeries:
    """The q-series (c/12)(A + B + sum_i C_i) for a single sewing pair.

    ``a`` and ``b`` are bivariate in (xi, pi) with a + b = 1; each h_i is a
    series in (q, eta_i) whose eta-exponents may be negative through an
    integer offset.  Truncation shortfalls are errors, not silent zeros.
    """
    c = as_q(c)
    if len(a.vars) != 2 or len(b.vars) != 2:
        raise VariableMismatch("a and b must be bivariate in the sewing-pair variables")
    if len(s_eta) != len(h):
        raise ValueError("one h per marked-point Schwarzian datum")
    one = TruncSeries.constant(1, a.vars, {v: t for v, t in zip(a.vars, a.trunc)})
    if (a + b) != one:
        raise SeriesError("a + b must equal 1")
    if a.trunc[1] < order or b.trunc[0] < order:
        raise WindowError(f"pair data truncated below requested order {order}")
    if order >= 2:
        for sdat in (s_xi, s_pi):
            if sdat.offset[0] + sdat.trunc[0] < order - 2:
                raise WindowError("Schwarzian datum truncated below the requested order")

    total = TruncSeries((out_var,), {out_var: order})
    for (exps, logs), val in a.terms.items():
        if any(logs):
            raise SeriesError("a cannot carry log terms")
        m, n = exps
        if n > order or n - m - 2 < 0:
            continue
        sv = _abs_coeff(s_xi, n - m - 2)
        if sv:
            total._store((n,), (0,), val * sv)
    for (exps, logs), val in b.terms.items():
        if any(logs):
            raise SeriesError("b cannot carry log terms")
        n, m = exps
        if n > order or n - m - 2 < 0:
            continue
        sv = _abs_coeff(s_pi, n - m - 2)
        if sv:
            total._store((n,), (0,), val * sv)
    for sdat, hi in zip(s_eta, h):
        for key, val in _marked_point_residue(sdat, hi, order).items():
            total._store((key,), (0,), val)
    return total.scale(c / 12)


def _marked_point_residue(sdat: TruncSeries, h: TruncSeries, order: int) -> Dict[int, Fraction]:
    """Res_eta S_eta(eta) h(q, eta) d eta, coefficientwise in q."""
    if len(h.vars) != 2:
        raise VariableMismatch("h must be a series in (q, eta)")
    if h.trunc[0] < order:
        raise WindowError(f"h truncated below requested q-order {order}")
    out: Dict[int, Fraction] = {}
    q_off = h.offset[0]
    if q_off:
        raise OffsetError("h cannot carry a q-offset")
    for (exps, logs), val in h.terms.items():
        if any(logs):
            raise SeriesError("h cannot carry log terms")
        nq, ne = exps
        if nq > order:
            continue
        eta_abs = h.offset[1] + ne
        k = -eta_abs - 1  # pairs against the eta^k coefficient of the datum
        if k < 0 or k.denominator != 1:
            continue
        sv = _abs_coeff(sdat, int(k))
        if sv:
            out[nq] = out.get(nq, Q(0)) + val * sv
    return out


def projective_term_multi(
    pairs: Sequence[Tuple[TruncSeries, TruncSeries, TruncSeries, TruncSeries]],
    s_eta: Sequence[TruncSeries],
    h: Sequence[TruncSeries],
    c,
    k_index: int,
    order: int,
    q_vars: Optional[Sequence[str]] = None,
) -> TruncSeries:
    """Per-pair projective term for sewing along several pairs at once.

    ``pairs[j]`` is (S_xi_j, S_pi_j, a_j, b_j) where a_j, b_j are series in
    (xi_j, pi_j, q_1, .., q_M minus q_j); the lift condition is
    a_j + b_j = delta_{j,k}.  Result: a series in all q variables.
    """
    c = as_q(c)
    m_pairs = len(pairs)
    names = list(q_vars) if q_vars is not None else [f"q{j+1}" for j in range(m_pairs)]
    total = TruncSeries(tuple(names), {v: order for v in names})
    for j, (sx, sp, aj, bj) in enumerate(pairs):
        expect = Q(1) if j == k_index else Q(0)
        ref = TruncSeries.constant(expect, aj.vars, {v: t for v, t in zip(aj.vars, aj.trunc)})
        if (aj + bj) != ref:
            raise SeriesError(f"pair {j}: a_j + b_j must equal delta_(j,k)")
        contrib = _pair_series(sx, sp, aj, bj, q_exp_index_a=1, q_exp_index_b=0, order=order)
        for key, val in contrib.items():
            n_own, rest = key[0], key[1:]
            exps = list(rest[:j]) + [n_own] + list(rest[j:])
            if all(x <= order for x in exps):
                total._store(tuple(exps), (0,) * m_pairs, val)
    for sdat, hi in zip(s_eta, h):
        if len(hi.vars) != m_pairs + 1:
            raise VariableMismatch("marked-point h must be a series in (q_1..q_M, eta)")
        for (exps, logs), val in hi.terms.items():
            if any(logs):
                raise SeriesError("h cannot carry log terms")
            qexps, ne = exps[:-1], exps[-1]
            if any(x > order for x in qexps):
                continue
            eta_abs = hi.offset[-1] + ne
            kk = -eta_abs - 1
            if kk < 0 or kk.denominator != 1:
                continue
            sv = _abs_coeff(sdat, int(kk))
            if sv:
                total._store(tuple(qexps), (0,) * m_pairs, val * sv)
    return total.scale(c / 12)
