"""Formal solutions and convergence certificates for simple-pole systems.

Systems q_j d/dq_j psi = A^j psi + omega^j are solved coefficientwise: away
from resonances each step inverts (n - A_0); at a resonant n the step is a
singular linear solve whose remaining freedom must be supplied as seeds.  Log
terms are handled level by level from the highest log degree down, each level
being a log-free system with a modified inhomogeneity.  Several variables are
solved through the first variable's equation with the remaining ones treated
as outer expansion indices; the other equations are then checked on the
result.

Certificates replay the majorant argument in exact arithmetic: with the
max-row-sum norm (submultiplicative, which is all the argument uses),
constants alpha, B, beta, gamma and c are produced such that
||psi_n|| <= c gamma^n r_1^{-n} holds for every computed coefficient, giving
a certified radius r_0 < r_1/gamma.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from .linalg import QMat, QVec, as_q, solve
from .series import SeriesError, TruncSeries

Q = Fraction


class FuchsError(SeriesError):
    pass


class MissingSeed(FuchsError):
    def __init__(self, key, kernel_dim):
        super().__init__(f"resonant step {key} needs {kernel_dim} seed coefficient(s)")
        self.key = key
        self.kernel_dim = kernel_dim


class InconsistentResonance(FuchsError):
    def __init__(self, key):
        super().__init__(f"resonant step {key} has no solution")
        self.key = key


class BoundViolation(FuchsError):
    def __init__(self, n, lhs, rhs):
        super().__init__(f"coefficient bound fails at n={n}: {lhs} > {rhs}")
        self.index = n


@dataclass
class FuchsSystem:
    """Coefficient streams of q_j d/dq_j psi = A^j psi + omega^j.

    a[j][n_tuple] is the matrix coefficient of q^(n_tuple) in A^j, and
    likewise omega[j][n_tuple]; missing keys are zero.  tail[j] = (C, a) is an
    optional declared geometric bound ||A^j_n||, ||omega^j_n|| <= C a^|n| for
    indices beyond the truncation.
    """

    dim: int
    variables: Tuple[str, ...]
    trunc: Tuple[int, ...]
    a: List[Dict[Tuple[int, ...], QMat]]
    omega: List[Dict[Tuple[int, ...], QVec]]
    tail: List[Optional[Tuple[Fraction, Fraction]]] = field(default_factory=list)

    def __post_init__(self):
        m = len(self.variables)
        if len(self.a) != m or len(self.omega) != m:
            raise FuchsError("one coefficient stream per variable")
        if not self.tail:
            self.tail = [None] * m
        for stream in self.a:
            for mat in stream.values():
                if (mat.nrows, mat.ncols) != (self.dim, self.dim):
                    raise FuchsError("matrix coefficient shape mismatch")
        for stream in self.omega:
            for vec in stream.values():
                if vec.n != self.dim:
                    raise FuchsError("vector coefficient shape mismatch")

    @classmethod
    def single(
        cls,
        a_coeffs: Sequence[QMat],
        omega_coeffs: Sequence[QVec],
        dim: Optional[int] = None,
        var: str = "q",
        tail: Optional[Tuple[Fraction, Fraction]] = None,
    ) -> "FuchsSystem":
        n = dim if dim is not None else (a_coeffs[0].nrows if a_coeffs else omega_coeffs[0].n)
        a = {(k,): m for k, m in enumerate(a_coeffs) if not m.is_zero()}
        w = {(k,): v for k, v in enumerate(omega_coeffs) if not v.is_zero()}
        t = max(len(a_coeffs), len(omega_coeffs)) - 1
        return cls(n, (var,), (max(t, 0),), [a], [w], [tail])

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    def a0(self, j: int = 0) -> QMat:
        zero_key = (0,) * self.n_vars
        return self.a[j].get(zero_key, QMat(self.dim, self.dim))

    def a_series(self, j: int, order: int, logmax: int = 0) -> TruncSeries:
        out = TruncSeries(
            self.variables,
            {v: order for v in self.variables},
            logmax={v: logmax for v in self.variables},
        )
        for key, mat in self.a[j].items():
            if all(k <= order for k in key):
                out._store(tuple(key), (0,) * self.n_vars, mat)
        return out

    def omega_series(self, j: int, order: int, logmax: int = 0) -> TruncSeries:
        out = TruncSeries(
            self.variables,
            {v: order for v in self.variables},
            logmax={v: logmax for v in self.variables},
        )
        for key, vec in self.omega[j].items():
            if all(k <= order for k in key):
                out._store(tuple(key), (0,) * self.n_vars, vec)
        return out


@dataclass
class ResonanceData:
    """Natural indices where the leading step is singular, with kernel sizes."""

    resonant: Dict[int, int]

    def is_resonant(self, n: int) -> bool:
        return n in self.resonant


def resonances(sys: FuchsSystem, order: int) -> ResonanceData:
    a0 = sys.a0()
    out: Dict[int, int] = {}
    for n in range(order + 1):
        mat = QMat.identity(sys.dim).scale(n) - a0
        sol = solve(mat, QVec(sys.dim))
        kdim = len(sol[1]) if sol else 0
        if kdim:
            out[n] = kdim
    return ResonanceData(out)


def solve_formal(
    sys: FuchsSystem,
    seeds: Optional[Dict] = None,
    order: int = 10,
    log_bound: int = 0,
) -> TruncSeries:
    """The unique formal solution consistent with the given seeds.

    Seeds are keyed by (exponent tuple, log tuple) -- or (n, l) for a single
    variable -- and hold coefficients for the kernel basis of the singular
    step, in the deterministic order produced by the linear solver.  Only the
    first variable's equation drives the recursion; for several variables the
    remaining equations should be checked with :func:`residual`.
    """
    seeds = _normalize_seeds(seeds or {}, sys.n_vars)
    m = sys.n_vars
    a0 = sys.a0()
    for j, (t, tail) in enumerate(zip(sys.trunc, sys.tail)):
        # streams without a declared tail are complete polynomials; with one,
        # coefficients beyond the truncation exist but are unknown
        if order > t and tail is not None and tail[0]:
            raise FuchsError(f"order {order} exceeds the declared truncation {t} of variable {j}")
    out = TruncSeries(
        sys.variables,
        {v: order for v in sys.variables},
        logmax={v: log_bound for v in sys.variables},
    )
    psi: Dict[Tuple[Tuple[int, ...], Tuple[int, ...]], QVec] = {}

    outer_indices = _outer_range(m - 1, order)
    zero_key = (0,) * m

    def step_rhs(j: int, exps: Tuple[int, ...], logs: Tuple[int, ...]) -> QVec:
        rhs = QVec(sys.dim)
        if logs == (0,) * m:
            w = sys.omega[j].get(exps)
            if w is not None:
                rhs = rhs + w
        for key, mat in sys.a[j].items():
            if key == zero_key:
                continue
            prev = tuple(e - k for e, k in zip(exps, key))
            if any(p < 0 for p in prev):
                continue
            pv = psi.get((prev, logs))
            if pv is not None:
                rhs = rhs + mat.apply(pv)
        if logs[j] + 1 <= log_bound:
            higher = psi.get((exps, logs[:j] + (logs[j] + 1,) + logs[j + 1 :]))
            if higher is not None:
                rhs = rhs - higher.scale(logs[j] + 1)
        return rhs

    a0s = [sys.a[j].get(zero_key, QMat(sys.dim, sys.dim)) for j in range(m)]
    for logsum in range(m * log_bound, -1, -1):
        for logs in (l for l in _outer_range(m, log_bound) if sum(l) == logsum):
            for mouter in outer_indices:
                for n1 in range(order + 1):
                    exps = (n1,) + mouter
                    # use the first variable whose leading step is regular;
                    # cross-equation consistency is checked a posteriori
                    chosen = None
                    for j in range(m):
                        step = QMat.identity(sys.dim).scale(exps[j]) - a0s[j]
                        sol = solve(step, step_rhs(j, exps, logs))
                        if sol is not None and not sol[1]:
                            chosen = sol
                            break
                        if j == 0:
                            first = sol
                    if chosen is None:
                        if first is None:
                            raise InconsistentResonance((exps, logs))
                        part, kernel = first
                        key = (exps, logs)
                        if key not in seeds:
                            raise MissingSeed(key, len(kernel))
                        coeffs = seeds[key]
                        if len(coeffs) != len(kernel):
                            raise MissingSeed(key, len(kernel))
                        for cf, basis_vec in zip(coeffs, kernel):
                            part = part + basis_vec.scale(as_q(cf))
                    else:
                        part = chosen[0]
                    if not part.is_zero():
                        psi[(exps, logs)] = part
                        out._store(exps, logs, part)
    return out


def _outer_range(k: int, order: int) -> List[Tuple[int, ...]]:
    if k == 0:
        return [()]
    out = []

    def rec(i, acc):
        if i == k:
            out.append(tuple(acc))
            return
        for n in range(order + 1):
            rec(i + 1, acc + [n])

    rec(0, [])
    out.sort(key=lambda t: (sum(t), t))
    return out


def _normalize_seeds(seeds: Dict, n_vars: int) -> Dict:
    out = {}
    for key, val in seeds.items():
        if n_vars == 1 and len(key) == 2 and all(isinstance(x, int) for x in key):
            out[((key[0],), (key[1],))] = list(val)
        else:
            exps, logs = key
            out[(tuple(exps), tuple(logs))] = list(val)
    return out


def residual(sys: FuchsSystem, psi: TruncSeries, j: int = 0) -> TruncSeries:
    """q_j d psi - (A^j psi + omega^j), truncated to psi's order."""
    var = sys.variables[j]
    order = psi.trunc[psi.var_index(var)]
    logmax = max(psi.logmax)
    a = sys.a_series(j, order, logmax)
    w = sys.omega_series(j, order, logmax)
    return psi.qdq(var) - (a * psi + w)


def ode_residual(omega: TruncSeries, psi: TruncSeries, var: str = "q") -> TruncSeries:
    """q d psi - Omega psi for a supplied matrix-valued coefficient series.

    A zero residual certifies that a sewn series satisfies the given
    first-order system to the available order.
    """
    return psi.qdq(var) - omega * psi


# ---------------------------------------------------------------------------
# certificates


@dataclass
class Certificate:
    """Exact constants realizing ||psi_n|| <= c gamma^n r1^{-n}.

    All fields are rationals; norms is the list of checked coefficient norms,
    so the inequality is re-checkable from the stored record alone.
    """

    r1: Fraction
    alpha: Fraction
    cap_b: Fraction
    beta: Fraction
    gamma: Fraction
    c: Fraction
    r0: Fraction
    n_checked: int
    adjustments: int
    norms: List[Fraction]

    def recheck(self) -> bool:
        return all(
            self.r1 ** n * nn <= self.c * self.gamma ** n for n, nn in enumerate(self.norms)
        )

    def to_dict(self) -> Dict[str, object]:
        from .linalg import format_rational as fr

        return {
            "r1": fr(self.r1),
            "alpha": fr(self.alpha),
            "B": fr(self.cap_b),
            "beta": fr(self.beta),
            "gamma": fr(self.gamma),
            "c": fr(self.c),
            "r0": fr(self.r0),
            "n_checked": self.n_checked,
            "adjustments": self.adjustments,
            "norms": [fr(x) for x in self.norms],
        }


def _coeff_norms(psi: TruncSeries) -> List[Fraction]:
    if len(psi.vars) != 1:
        raise FuchsError("certificates are single-variable")
    if any(psi.logmax):
        raise FuchsError("certificates require a log-free solution")
    order = psi.trunc[0]
    out = []
    for n in range(order + 1):
        v = psi.terms.get(((n,), (0,)), None)
        if v is None:
            out.append(Q(0))
        elif isinstance(v, QVec):
            out.append(v.norm_inf())
        else:
            out.append(abs(v))
    return out


def majorant_alpha(sys: FuchsSystem, r1: Fraction) -> Fraction:
    """Coefficient majorant sum ||A_n|| r1^n (+ geometric tail), and omega's.

    Dominates the sup of ||A|| over the closed r1-disc, which is what every
    downstream inequality needs.
    """
    r1 = as_q(r1)
    tail = sys.tail[0]
    total_a = sum((m.norm_rowsum() * r1 ** k[0] for k, m in sys.a[0].items()), Q(0))
    total_w = sum((v.norm_inf() * r1 ** k[0] for k, v in sys.omega[0].items()), Q(0))
    if tail is not None:
        cc, aa = as_q(tail[0]), as_q(tail[1])
        if cc:
            if aa * r1 >= 1:
                raise FuchsError("r1 must be strictly inside the declared tail radius")
            t = sys.trunc[0]
            geom = cc * (aa * r1) ** (t + 1) / (1 - aa * r1)
            total_a += geom
            total_w += geom
    return max(total_a, total_w)


def certify(sys: FuchsSystem, psi: TruncSeries, r1) -> Certificate:
    """Majorant certificate for a computed formal solution.

    Replays the inductive bound of the convergence proof in exact arithmetic:
    alpha bounds the coefficient streams on the r1-disc, beta bounds the
    resolvent steps beyond B = ||A_0||, gamma = max(1, alpha beta) (raised
    above 1 when degenerate, where the induction cannot close), and c is
    found by finitely many adjustments.  Every computed coefficient is then
    checked against c gamma^n r1^{-n}; a violation reports its index and
    signals an inconsistent input solution.
    """
    if sys.n_vars != 1:
        raise FuchsError("certificates are single-variable")
    r1 = as_q(r1)
    if r1 <= 0:
        raise FuchsError("r1 must be positive")
    norms = _coeff_norms(psi)
    alpha = majorant_alpha(sys, r1)
    cap_b = sys.a0().norm_rowsum()
    n_min = int(cap_b) + 1  # smallest integer > B
    beta = Q(n_min, 1) / (n_min - cap_b) if cap_b else Q(1)
    gamma = max(Q(1), alpha * beta)
    if gamma <= 1:
        gamma = Q(2)  # the inductive step needs gamma > 1 to absorb the unit term
    n0 = max(n_min, 2)
    c = Q(1)
    adjustments = 0
    closure = 1 / (gamma ** n0 - 1)
    if closure > c:
        c = closure
        adjustments += 1
    for n in range(0, min(n0, len(norms) - 1) + 1):
        base = r1 ** n * norms[n] / gamma ** n
        if base > c:
            c = base
            adjustments += 1
    for n, nn in enumerate(norms):
        lhs = r1 ** n * nn
        rhs = c * gamma ** n
        if lhs > rhs:
            raise BoundViolation(n, lhs, rhs)
    r0 = r1 / (2 * gamma)
    return Certificate(
        r1=r1,
        alpha=alpha,
        cap_b=cap_b,
        beta=beta,
        gamma=gamma,
        c=c,
        r0=r0,
        n_checked=len(norms) - 1,
        adjustments=adjustments,
        norms=norms,
    )
