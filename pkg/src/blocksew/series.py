"""Exact truncated formal series.

Three series-like objects cover everything downstream:

* LaurentJet   -- one variable, exponent window [lo, hi], exact rational
                  coefficients.  hi=None means the series is known exactly at
                  every order (a Laurent polynomial).  Coefficients below lo
                  are structurally zero; coefficients above hi are unknown.
                  Every operation computes the exact window of the result, so
                  an emitted coefficient is always correct, never an estimate.

* CoordJet     -- a jet a_1 z + a_2 z^2 + ... of an invertible local
                  coordinate change (a_1 != 0).  Coefficients may live in any
                  commutative ring with the usual operators; in practice that
                  is Fraction, or LaurentJet when the jet varies over a base
                  point.

* TruncSeries  -- several variables, truncation order per variable, one
                  rational exponent offset per variable (the monomials are
                  q^(offset+n)), and a bounded log degree per variable.

The zero series has an empty coefficient map in all three.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .linalg import QMat, QVec, as_q

Q = Fraction


class SeriesError(Exception):
    pass


class VariableMismatch(SeriesError):
    pass


class OffsetError(SeriesError):
    pass


class LogOverflow(SeriesError):
    pass


class WindowError(SeriesError):
    pass


class NotInvertible(SeriesError):
    pass


def _min_hi(a: Optional[int], b: Optional[int]) -> Optional[int]:
    if a is None:
        return b
    if b is None:
        return a
    return min(a, b)


def _is_ring_zero(x) -> bool:
    if isinstance(x, LaurentJet):
        return x.is_zero()
    if isinstance(x, (QVec, QMat)):
        return x.is_zero()
    return not x


def ring_one_like(x):
    if isinstance(x, LaurentJet):
        return LaurentJet.const(Q(1), var=x.var)
    return Q(1)


def ring_zero_like(x):
    if isinstance(x, LaurentJet):
        return LaurentJet.zero(var=x.var)
    return Q(0)


# ---------------------------------------------------------------------------
# LaurentJet


class LaurentJet:
    """Univariate Laurent series with an explicit exactness window."""

    __slots__ = ("var", "coeffs", "lo", "hi")

    def __init__(self, coeffs: Dict[int, Fraction], lo: int, hi: Optional[int], var: str = "z"):
        if hi is not None and hi < lo:
            raise WindowError(f"empty window [{lo}, {hi}]")
        self.var = var
        self.lo = lo
        self.hi = hi
        clean: Dict[int, Fraction] = {}
        for e, v in coeffs.items():
            if e < lo or (hi is not None and e > hi):
                raise WindowError(f"exponent {e} outside window [{lo}, {hi}]")
            if not _is_ring_zero(v):
                clean[e] = v if not isinstance(v, (int, str)) else as_q(v)
        self.coeffs = clean

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, var: str = "z") -> "LaurentJet":
        return cls({}, 0, None, var)

    @classmethod
    def const(cls, c, var: str = "z") -> "LaurentJet":
        return cls({0: as_q(c)} if as_q(c) else {}, 0, None, var)

    @classmethod
    def monomial(cls, c, e: int, var: str = "z") -> "LaurentJet":
        return cls({e: as_q(c)} if as_q(c) else {}, min(e, 0), None, var)

    @classmethod
    def from_coeffs(cls, pairs, lo: int, hi: Optional[int], var: str = "z") -> "LaurentJet":
        return cls(dict(pairs), lo, hi, var)

    # -- basic access ------------------------------------------------------

    def coeff(self, e: int):
        """Exact coefficient of z^e; raises if e is beyond the known window."""
        if self.hi is not None and e > self.hi:
            raise WindowError(f"coefficient of {self.var}^{e} not covered by window [{self.lo}, {self.hi}]")
        return self.coeffs.get(e, Q(0))

    def known(self, e: int) -> bool:
        return self.hi is None or e <= self.hi

    def valuation(self) -> Optional[int]:
        """Smallest exponent with a nonzero coefficient, None for (window-)zero."""
        return min(self.coeffs) if self.coeffs else None

    def is_zero(self) -> bool:
        return not self.coeffs

    def truncated(self, hi: int) -> "LaurentJet":
        new_hi = hi if self.hi is None else min(hi, self.hi)
        return LaurentJet({e: v for e, v in self.coeffs.items() if e <= new_hi}, self.lo, new_hi, self.var)

    # -- arithmetic --------------------------------------------------------

    def _check_var(self, other: "LaurentJet") -> None:
        if self.var != other.var:
            raise VariableMismatch(f"{self.var} vs {other.var}")

    def __add__(self, other):
        if not isinstance(other, LaurentJet):
            other = LaurentJet.const(other, var=self.var)
        self._check_var(other)
        lo = min(self.lo, other.lo)
        hi = _min_hi(self.hi, other.hi)
        out: Dict[int, Fraction] = {}
        for src in (self.coeffs, other.coeffs):
            for e, v in src.items():
                if hi is not None and e > hi:
                    continue
                out[e] = out.get(e, Q(0)) + v
        return LaurentJet(out, lo, hi, self.var)

    __radd__ = __add__

    def __neg__(self):
        return LaurentJet({e: -v for e, v in self.coeffs.items()}, self.lo, self.hi, self.var)

    def __sub__(self, other):
        if not isinstance(other, LaurentJet):
            other = LaurentJet.const(other, var=self.var)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c) -> "LaurentJet":
        c = as_q(c)
        return LaurentJet({e: c * v for e, v in self.coeffs.items()} if c else {}, self.lo, self.hi, self.var)

    def __mul__(self, other):
        if not isinstance(other, LaurentJet):
            return self.scale(other)
        self._check_var(other)
        lo = self.lo + other.lo
        if self.is_zero() or other.is_zero():
            # window of the product still matters for downstream exactness
            hi = _min_hi(
                None if self.hi is None else self.hi + other.lo,
                None if other.hi is None else other.hi + self.lo,
            )
            return LaurentJet({}, lo, hi, self.var)
        hi = _min_hi(
            None if self.hi is None else self.hi + other.lo,
            None if other.hi is None else other.hi + self.lo,
        )
        out: Dict[int, Fraction] = {}
        for e1, v1 in self.coeffs.items():
            for e2, v2 in other.coeffs.items():
                e = e1 + e2
                if hi is not None and e > hi:
                    continue
                out[e] = out.get(e, Q(0)) + v1 * v2
        return LaurentJet(out, lo, hi, self.var)

    __rmul__ = __mul__

    def shift(self, k: int) -> "LaurentJet":
        return LaurentJet(
            {e + k: v for e, v in self.coeffs.items()},
            self.lo + k,
            None if self.hi is None else self.hi + k,
            self.var,
        )

    def inv(self, rel_order: Optional[int] = None) -> "LaurentJet":
        """Multiplicative inverse.

        A series known on [lo, hi] with valuation v has hi - v known terms past
        the leading one; the inverse inherits that relative precision.  For an
        exact input (hi=None) pass rel_order explicitly.
        """
        v = self.valuation()
        if v is None:
            raise NotInvertible("inverse of (window-)zero series")
        if self.hi is None:
            if rel_order is None:
                raise WindowError("inverse of an exact series needs an explicit rel_order")
            rel = rel_order
        else:
            rel = self.hi - v
            if rel_order is not None:
                rel = min(rel, rel_order)
        lead = self.coeffs[v]
        # u = self / (lead * z^v) = 1 + t, invert 1 + t by recursion
        u = [Q(0)] * (rel + 1)
        for e, c in self.coeffs.items():
            if e - v <= rel:
                u[e - v] = c / lead
        inv = [Q(0)] * (rel + 1)
        inv[0] = Q(1)
        for n in range(1, rel + 1):
            inv[n] = -sum(u[k] * inv[n - k] for k in range(1, n + 1))
        coeffs = {-v + n: c / lead for n, c in enumerate(inv) if c}
        return LaurentJet(coeffs, -v, -v + rel, self.var)

    def __truediv__(self, other):
        if not isinstance(other, LaurentJet):
            return self.scale(1 / as_q(other))
        return self * _safe_inv(other)

    def __rtruediv__(self, other):
        return LaurentJet.const(other, var=self.var) / self

    def pow(self, k: int) -> "LaurentJet":
        if k == 0:
            return LaurentJet.const(1, var=self.var)
        base = self if k > 0 else self.inv()
        out = base
        for _ in range(abs(k) - 1):
            out = out * base
        return out

    __pow__ = pow

    def derivative(self) -> "LaurentJet":
        return LaurentJet(
            {e - 1: e * v for e, v in self.coeffs.items() if e},
            self.lo - 1,
            None if self.hi is None else self.hi - 1,
            self.var,
        )

    # -- conversion --------------------------------------------------------

    def to_coordjet(self, order: Optional[int] = None) -> "CoordJet":
        v = self.valuation()
        if v is not None and v < 1:
            raise NotInvertible("constant or principal part present; not a coordinate jet")
        exact = self.hi is None
        if order is None:
            if exact:
                order = max(self.coeffs, default=1)
            else:
                order = self.hi
        if not exact and order > self.hi:
            raise WindowError("requested jet order beyond known window")
        return CoordJet([self.coeffs.get(k, Q(0)) for k in range(1, order + 1)], exact=exact)

    def to_trunc_series(self, var: Optional[str] = None) -> "TruncSeries":
        if self.hi is None:
            hi = max(self.coeffs, default=0)
        else:
            hi = self.hi
        lo = min(self.valuation() if self.coeffs else 0, 0)
        name = var or self.var
        return TruncSeries(
            (name,),
            trunc={name: hi - lo},
            offset={name: Q(lo)},
            terms={((e - lo,), (0,)): v for e, v in self.coeffs.items()},
        )

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction)):
            other = LaurentJet.const(other, var=self.var)
        if not isinstance(other, LaurentJet):
            return NotImplemented
        return self.var == other.var and self.coeffs == other.coeffs

    def __hash__(self):
        return hash((self.var, tuple(sorted(self.coeffs.items()))))

    def __repr__(self):
        terms = " + ".join(f"({v})*{self.var}^{e}" for e, v in sorted(self.coeffs.items())) or "0"
        hi = "inf" if self.hi is None else self.hi
        return f"<{terms} ; window [{self.lo},{hi}]>"


def agree_on_common_window(a: LaurentJet, b: LaurentJet) -> bool:
    hi = _min_hi(a.hi, b.hi)
    lo = min(a.lo, b.lo)
    if hi is None:
        hi = max(list(a.coeffs) + list(b.coeffs) + [lo])
    return all(a.coeffs.get(e, Q(0)) == b.coeffs.get(e, Q(0)) for e in range(lo, hi + 1))


# ---------------------------------------------------------------------------
# CoordJet


class CoordJet:
    """Jet of an invertible coordinate change rho(z) = a_1 z + a_2 z^2 + ...

    ``order`` is the highest known degree; with exact=True all higher
    coefficients are exactly zero (the jet is a polynomial).
    """

    __slots__ = ("coeffs", "exact")

    def __init__(self, coeffs: Sequence, exact: bool = False):
        self.coeffs = [c if isinstance(c, LaurentJet) else as_q(c) for c in coeffs]
        if not self.coeffs:
            raise NotInvertible("empty jet")
        self.exact = exact

    @property
    def order(self) -> int:
        return len(self.coeffs)

    @property
    def a1(self):
        return self.coeffs[0]

    def check_invertible(self) -> None:
        if _is_ring_zero(self.a1):
            raise NotInvertible("linear coefficient a_1 vanishes")

    @classmethod
    def identity(cls, order: int = 1) -> "CoordJet":
        return cls([Q(1)] + [Q(0)] * (order - 1), exact=True)

    @classmethod
    def from_poly(cls, coeffs: Sequence) -> "CoordJet":
        return cls(coeffs, exact=True)

    def coefficient(self, k: int):
        """Coefficient of z^k, k >= 1."""
        if k < 1:
            raise IndexError(k)
        if k > self.order:
            if self.exact:
                return Q(0)
            raise WindowError(f"coefficient {k} beyond jet order {self.order}")
        return self.coeffs[k - 1]

    def truncate(self, order: int) -> "CoordJet":
        if order <= self.order:
            return CoordJet(self.coeffs[:order], exact=False)
        if self.exact:
            pad = [ring_zero_like(self.coeffs[0])] * (order - self.order)
            return CoordJet(self.coeffs + pad, exact=True)
        raise WindowError(f"jet only known to order {self.order}")

    def derivative_at0(self, n: int):
        """n-th derivative at 0, i.e. n! * a_n."""
        import math

        return self.coefficient(n) * math.factorial(n)

    def to_laurent(self, var: str = "z") -> LaurentJet:
        coeffs = {k + 1: c for k, c in enumerate(self.coeffs) if not _is_ring_zero(c)}
        return LaurentJet(coeffs, 1, None if self.exact else self.order, var)

    def scale(self, c) -> "CoordJet":
        c = as_q(c)
        return CoordJet([c * a for a in self.coeffs], exact=self.exact)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CoordJet):
            return NotImplemented
        n = max(self.order, other.order)
        try:
            return all(self.coefficient(k) == other.coefficient(k) for k in range(1, n + 1))
        except WindowError:
            return self.coeffs == other.coeffs and self.exact == other.exact

    def __hash__(self):
        return hash(tuple(self.coeffs))

    def __repr__(self):
        body = " + ".join(f"({c})*z^{k+1}" for k, c in enumerate(self.coeffs) if not _is_ring_zero(c)) or "0"
        return f"CoordJet<{body}{' exact' if self.exact else ''}>"


def compose_jets(f: CoordJet, g: CoordJet) -> CoordJet:
    """Group law of coordinate changes: (f o g)(z) = f(g(z)).

    The result is exact only when both inputs are; otherwise its order is the
    minimum of the two orders, which is the full set of exactly determined
    coefficients.
    """
    g.check_invertible()
    if f.exact and g.exact:
        order = None
    else:
        order = min(f.order if not f.exact else 10**9, g.order if not g.exact else 10**9)
    degree_cap = order if order is not None else (f.order * g.order)
    zero = ring_zero_like(f.coeffs[0])
    # poly[k] = coefficient of z^k in the running power g(z)^j
    out = [zero] * (degree_cap + 1)
    gpow = [zero] * (degree_cap + 1)
    if degree_cap >= 0:
        gpow[0] = ring_one_like(f.coeffs[0])
    for j in range(1, f.order + 1):
        gpow = _poly_mul(gpow, _jet_poly(g, degree_cap), degree_cap)
        aj = f.coeffs[j - 1]
        if not _is_ring_zero(aj):
            for k in range(degree_cap + 1):
                if not _is_ring_zero(gpow[k]):
                    out[k] = out[k] + aj * gpow[k]
    coeffs = out[1 : degree_cap + 1]
    return CoordJet(coeffs, exact=order is None)


def _jet_poly(g: CoordJet, cap: int) -> List:
    zero = ring_zero_like(g.coeffs[0])
    poly = [zero] * (cap + 1)
    for k, c in enumerate(g.coeffs):
        if k + 1 <= cap:
            poly[k + 1] = c
    return poly


def _poly_mul(p: List, q: List, cap: int) -> List:
    out = [ring_zero_like(p[0]) if p else Q(0) for _ in range(cap + 1)]
    for i, a in enumerate(p):
        if _is_ring_zero(a):
            continue
        for j, b in enumerate(q):
            if i + j > cap:
                break
            if not _is_ring_zero(b):
                out[i + j] = out[i + j] + a * b
    return out


def reverse_jet(rho: CoordJet, order: Optional[int] = None) -> CoordJet:
    """Compositional inverse jet: compose(rho, reverse(rho)) = identity up to order."""
    rho.check_invertible()
    if order is None:
        order = rho.order
    if not rho.exact and order > rho.order:
        raise WindowError("cannot invert beyond the known jet order")
    one = ring_one_like(rho.a1)
    inv_a1 = one / rho.a1
    b = [inv_a1]
    for n in range(2, order + 1):
        # [z^n] rho(B(z)) = 0 determines b_n linearly; the a_1*b_n term is isolated.
        partial = CoordJet(b + [ring_zero_like(rho.a1)], exact=False)
        comp = compose_jets(rho.truncate(max(rho.order, n) if rho.exact else rho.order), partial)
        excess = comp.coefficient(n)
        b.append(-excess * inv_a1 if not _is_ring_zero(excess) else ring_zero_like(rho.a1))
    return CoordJet(b, exact=False)


DEFAULT_EXACT_PRECISION = 24


def jet_compose(outer: LaurentJet, inner: CoordJet, inv_order: Optional[int] = None) -> LaurentJet:
    """Substitution outer(inner(z)) for a Laurent window and a coordinate jet.

    Negative powers of the inner jet are expanded through its inverse
    a_1^{-1} z^{-1} (1 + ...)^{-1}.  The result window is computed so that all
    emitted coefficients are exact; ``inv_order`` sets the working precision
    when both inputs are exact polynomials (whose quotient is not).
    """
    inner.check_invertible()
    var = outer.var
    lt = inner.to_laurent(var)
    acc: Optional[LaurentJet] = None
    pows: Dict[int, LaurentJet] = {}
    inv_cache: Optional[LaurentJet] = None

    def ipow(e: int) -> LaurentJet:
        nonlocal inv_cache
        if e not in pows:
            if e == 0:
                pows[0] = LaurentJet.const(1, var=var)
            elif e > 0:
                pows[e] = ipow(e - 1) * lt
            else:
                if inv_cache is None:
                    inv_cache = _safe_inv(lt, inv_order)
                pows[e] = ipow(e + 1) * inv_cache
        return pows[e]

    for e in sorted(outer.coeffs):
        term = ipow(e).scale(outer.coeffs[e])
        acc = term if acc is None else acc + term
    if acc is None:
        acc = LaurentJet.zero(var)
    # unknown outer coefficients above outer.hi pollute exponents > outer.hi
    if outer.hi is not None and (acc.hi is None or acc.hi > outer.hi):
        acc = acc.truncated(outer.hi)
    return acc


def _safe_inv(lt: LaurentJet, rel_order: Optional[int] = None) -> LaurentJet:
    if lt.hi is None:
        deg = max(lt.coeffs)
        return lt.inv(rel_order=rel_order if rel_order is not None else max(deg * 4, DEFAULT_EXACT_PRECISION))
    return lt.inv(rel_order=rel_order)


def residue(f: LaurentJet):
    """Coefficient of z^{-1}; structurally zero when the window sits above -1."""
    if f.lo > -1:
        return Q(0)
    return f.coeff(-1)


# ---------------------------------------------------------------------------
# TruncSeries


Value = Union[Fraction, QVec, QMat]


def _vadd(x: Value, y: Value) -> Value:
    return x + y


def _vneg(x: Value) -> Value:
    return -x


def _vscale(c: Fraction, x: Value) -> Value:
    if isinstance(x, Fraction):
        return c * x
    return x.scale(c)


def _vmul(x: Value, y: Value) -> Value:
    if isinstance(x, Fraction):
        return y * x if isinstance(y, Fraction) else _vscale(x, y)
    if isinstance(y, Fraction):
        return _vscale(y, x)
    if isinstance(x, QMat) and isinstance(y, QMat):
        return x @ y
    if isinstance(x, QMat) and isinstance(y, QVec):
        return x.apply(y)
    raise TypeError(f"cannot multiply series values {type(x)} * {type(y)}")


class TruncSeries:
    """Truncated formal series in several variables with offsets and log terms.

    A stored key ((n_1..n_k), (l_1..l_k)) with value c represents the monomial
    c * prod_j q_j^(offset_j + n_j) (log q_j)^(l_j), with 0 <= n_j <= trunc_j
    and 0 <= l_j <= logmax_j.
    """

    __slots__ = ("vars", "trunc", "offset", "logmax", "terms")

    def __init__(
        self,
        vars: Sequence[str],
        trunc: Dict[str, int],
        offset: Optional[Dict[str, Fraction]] = None,
        logmax: Optional[Dict[str, int]] = None,
        terms: Optional[Dict[Tuple[Tuple[int, ...], Tuple[int, ...]], Value]] = None,
    ):
        self.vars: Tuple[str, ...] = tuple(vars)
        if len(set(self.vars)) != len(self.vars):
            raise VariableMismatch(f"repeated variable in {self.vars}")
        self.trunc: Tuple[int, ...] = tuple(int(trunc[v]) for v in self.vars)
        off = offset or {}
        self.offset: Tuple[Fraction, ...] = tuple(as_q(off.get(v, 0)) for v in self.vars)
        lm = logmax or {}
        self.logmax: Tuple[int, ...] = tuple(int(lm.get(v, 0)) for v in self.vars)
        self.terms: Dict[Tuple[Tuple[int, ...], Tuple[int, ...]], Value] = {}
        if terms:
            for (exps, logs), val in terms.items():
                self._store(tuple(exps), tuple(logs), val)

    def _store(self, exps: Tuple[int, ...], logs: Tuple[int, ...], val: Value) -> None:
        if len(exps) != len(self.vars) or len(logs) != len(self.vars):
            raise VariableMismatch("key arity does not match variables")
        for n, t in zip(exps, self.trunc):
            if not 0 <= n <= t:
                raise WindowError(f"exponent {exps} outside truncation {self.trunc}")
        for l, m in zip(logs, self.logmax):
            if not 0 <= l <= m:
                raise LogOverflow(f"log degree {logs} beyond declared bound {self.logmax}")
        if isinstance(val, (int, str)):
            val = as_q(val)
        if not _is_ring_zero(val):
            key = (exps, logs)
            if key in self.terms:
                cur = _vadd(self.terms[key], val)
                if _is_ring_zero(cur):
                    del self.terms[key]
                else:
                    self.terms[key] = cur
            else:
                self.terms[key] = val

    # -- constructors ------------------------------------------------------

    @classmethod
    def zeros(cls, vars: Sequence[str], trunc: Dict[str, int], **kw) -> "TruncSeries":
        return cls(vars, trunc, **kw)

    @classmethod
    def constant(cls, c, vars: Sequence[str], trunc: Dict[str, int], **kw) -> "TruncSeries":
        s = cls(vars, trunc, **kw)
        k = len(s.vars)
        s._store((0,) * k, (0,) * k, c)
        return s

    @classmethod
    def monomial(cls, c, vars: Sequence[str], trunc: Dict[str, int], exps: Optional[Dict[str, int]] = None, logs: Optional[Dict[str, int]] = None, **kw) -> "TruncSeries":
        s = cls(vars, trunc, **kw)
        e = tuple(int((exps or {}).get(v, 0)) for v in s.vars)
        l = tuple(int((logs or {}).get(v, 0)) for v in s.vars)
        s._store(e, l, c)
        return s

    # -- access ------------------------------------------------------------

    def coefficient(self, exps: Dict[str, int], logs: Optional[Dict[str, int]] = None) -> Value:
        e = tuple(int(exps.get(v, 0)) for v in self.vars)
        l = tuple(int((logs or {}).get(v, 0)) for v in self.vars)
        for n, t in zip(e, self.trunc):
            if n > t:
                raise WindowError(f"coefficient {exps} beyond truncation")
        return self.terms.get((e, l), Q(0))

    def is_zero(self) -> bool:
        return not self.terms

    def var_index(self, var: str) -> int:
        try:
            return self.vars.index(var)
        except ValueError:
            raise VariableMismatch(f"no variable {var} in {self.vars}") from None

    # -- arithmetic --------------------------------------------------------

    def _aligned(self, other: "TruncSeries") -> Tuple["TruncSeries", "TruncSeries"]:
        """Renormalize two series to a common offset per variable.

        Offsets differing by a non-integer in any shared variable are an
        error: such series live in different sectors.
        """
        if self.vars != other.vars:
            raise VariableMismatch(f"{self.vars} vs {other.vars}")
        if self.offset == other.offset:
            return self, other
        shifts_a: List[int] = []
        shifts_b: List[int] = []
        new_off: List[Fraction] = []
        for oa, ob in zip(self.offset, other.offset):
            d = oa - ob
            if d.denominator != 1:
                raise OffsetError(f"offsets {oa} and {ob} differ by a non-integer")
            base = min(oa, ob)
            new_off.append(base)
            shifts_a.append(int(oa - base))
            shifts_b.append(int(ob - base))
        def rebase(s: "TruncSeries", shifts: List[int]) -> "TruncSeries":
            # exact absolute window top per var: offset_j + trunc_j
            new_trunc = {}
            for v, oa, ta, ob, tb, base in zip(
                self.vars, self.offset, self.trunc, other.offset, other.trunc, new_off
            ):
                top = min(oa + ta, ob + tb) - base
                if top < 0:
                    raise WindowError("no common exact window after offset renormalization")
                new_trunc[v] = int(top)
            out = TruncSeries(
                s.vars,
                new_trunc,
                offset={v: o for v, o in zip(s.vars, new_off)},
                logmax={v: m for v, m in zip(s.vars, s.logmax)},
            )
            for (exps, logs), val in s.terms.items():
                e = tuple(n + sh for n, sh in zip(exps, shifts))
                if all(x <= t for x, t in zip(e, out.trunc)):
                    out._store(e, logs, val)
            return out
        return rebase(self, shifts_a), rebase(other, shifts_b)

    def __add__(self, other: "TruncSeries") -> "TruncSeries":
        a, b = self._aligned(other)
        out = TruncSeries(
            a.vars,
            {v: min(ta, tb) for v, ta, tb in zip(a.vars, a.trunc, b.trunc)},
            offset={v: o for v, o in zip(a.vars, a.offset)},
            logmax={v: max(la, lb) for v, la, lb in zip(a.vars, a.logmax, b.logmax)},
        )
        for src in (a, b):
            for (exps, logs), val in src.terms.items():
                if all(n <= t for n, t in zip(exps, out.trunc)):
                    out._store(exps, logs, val)
        return out

    def __neg__(self) -> "TruncSeries":
        out = TruncSeries(
            self.vars,
            {v: t for v, t in zip(self.vars, self.trunc)},
            offset={v: o for v, o in zip(self.vars, self.offset)},
            logmax={v: m for v, m in zip(self.vars, self.logmax)},
        )
        for key, val in self.terms.items():
            out.terms[key] = _vneg(val)
        return out

    def __sub__(self, other: "TruncSeries") -> "TruncSeries":
        return self + (-other)

    def scale(self, c) -> "TruncSeries":
        c = as_q(c)
        out = TruncSeries(
            self.vars,
            {v: t for v, t in zip(self.vars, self.trunc)},
            offset={v: o for v, o in zip(self.vars, self.offset)},
            logmax={v: m for v, m in zip(self.vars, self.logmax)},
        )
        if c:
            for key, val in self.terms.items():
                out.terms[key] = _vscale(c, val)
        return out

    def __mul__(self, other: "TruncSeries") -> "TruncSeries":
        if not isinstance(other, TruncSeries):
            return self.scale(other)
        if self.vars != other.vars:
            raise VariableMismatch(f"{self.vars} vs {other.vars}")
        out = TruncSeries(
            self.vars,
            {v: min(ta, tb) for v, ta, tb in zip(self.vars, self.trunc, other.trunc)},
            offset={v: oa + ob for v, oa, ob in zip(self.vars, self.offset, other.offset)},
            logmax={v: max(la, lb) for v, la, lb in zip(self.vars, self.logmax, other.logmax)},
        )
        for (e1, l1), v1 in self.terms.items():
            for (e2, l2), v2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                if any(n > t for n, t in zip(e, out.trunc)):
                    continue
                l = tuple(a + b for a, b in zip(l1, l2))
                for lv, lm in zip(l, out.logmax):
                    if lv > lm:
                        raise LogOverflow(
                            f"product log degree {l} exceeds declared bound {out.logmax}"
                        )
                out._store(e, l, _vmul(v1, v2))
        return out

    __rmul__ = scale

    def qdq(self, var: str) -> "TruncSeries":
        """Logarithmic derivative q d/dq in the given variable (offset-aware)."""
        j = self.var_index(var)
        out = TruncSeries(
            self.vars,
            {v: t for v, t in zip(self.vars, self.trunc)},
            offset={v: o for v, o in zip(self.vars, self.offset)},
            logmax={v: m for v, m in zip(self.vars, self.logmax)},
        )
        lam = self.offset[j]
        for (exps, logs), val in self.terms.items():
            power = lam + exps[j]
            if power:
                out._store(exps, logs, _vscale(power, val))
            if logs[j]:
                lowered = logs[:j] + (logs[j] - 1,) + logs[j + 1 :]
                out._store(exps, lowered, _vscale(Q(logs[j]), val))
        return out

    def map_values(self, fn) -> "TruncSeries":
        out = TruncSeries(
            self.vars,
            {v: t for v, t in zip(self.vars, self.trunc)},
            offset={v: o for v, o in zip(self.vars, self.offset)},
            logmax={v: m for v, m in zip(self.vars, self.logmax)},
        )
        for key, val in self.terms.items():
            out._store(key[0], key[1], fn(val))
        return out

    def normalized(self) -> "TruncSeries":
        """Fold integer offsets into exponents when all exponents remain >= 0."""
        shifts = []
        new_off = []
        for o in self.offset:
            if o.denominator == 1 and o >= 0:
                shifts.append(int(o))
                new_off.append(Q(0))
            else:
                shifts.append(0)
                new_off.append(o)
        out = TruncSeries(
            self.vars,
            {v: t + s for v, t, s in zip(self.vars, self.trunc, shifts)},
            offset={v: o for v, o in zip(self.vars, new_off)},
            logmax={v: m for v, m in zip(self.vars, self.logmax)},
        )
        for (exps, logs), val in self.terms.items():
            out._store(tuple(n + s for n, s in zip(exps, shifts)), logs, val)
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, TruncSeries):
            return NotImplemented
        a = self.normalized()
        b = other.normalized()
        return a.vars == b.vars and a.offset == b.offset and a.terms == b.terms

    def __hash__(self):
        n = self.normalized()
        return hash((n.vars, n.offset, tuple(sorted(n.terms))))

    def __repr__(self):
        def mono(exps, logs):
            parts = []
            for v, o, n, l in zip(self.vars, self.offset, exps, logs):
                p = o + n
                if p:
                    parts.append(f"{v}^{p}")
                if l:
                    parts.append(f"log({v})^{l}")
            return "*".join(parts) or "1"

        body = " + ".join(
            f"({val})*{mono(e, l)}" for (e, l), val in sorted(self.terms.items())
        ) or "0"
        return f"TruncSeries<{body}>"


def mul(a: TruncSeries, b: TruncSeries) -> TruncSeries:
    return a * b


def diagonal_contract(d: TruncSeries, out_var: str = "q") -> TruncSeries:
    """Diagonal of a bivariate series: sum_n D_{n,n} q^n.

    Equals Res_{xi=0} D(xi, q/xi) dxi/xi and Res_{pi=0} D(q/pi, pi) dpi/pi.
    Requires a plain bivariate series: no offsets, no log terms.
    """
    if len(d.vars) != 2:
        raise VariableMismatch("diagonal contraction needs a bivariate series")
    if any(d.offset) or any(d.logmax):
        raise OffsetError("diagonal contraction requires zero offsets and no log terms")
    t = min(d.trunc)
    out = TruncSeries((out_var,), {out_var: t})
    for (exps, _logs), val in d.terms.items():
        if exps[0] == exps[1] and exps[0] <= t:
            out._store((exps[0],), (0,), val)
    return out
