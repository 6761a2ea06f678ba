"""Rank-one free boson: Fock modules over a momentum, mode operators, Virasoro.

The vacuum module (momentum 0) is the vertex algebra we compute in; Fock
modules of rational momentum lambda are its irreducible modules.  Basis
vectors are partitions mu = (mu_1 >= ... >= mu_k > 0), standing for
a_{-mu_1} ... a_{-mu_k} |lambda>, ordered graded-lexicographically so matrix
layouts are deterministic.

Mode actions are computed exactly on vectors (no truncation of
intermediates); matrices between weight truncations are snapshots of the
exact action and record their weight shift, so operator identities hold as
exact matrix identities whenever the target truncation covers the shift.

Conventions: [a_m, a_n] = m delta_{m+n,0}, a_0 = lambda, normal ordering puts
creation modes left.  Virasoro operators come from the quadratic Sugawara
expression; the central charge is 1.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

from .linalg import QMat, QVec, as_q

Q = Fraction

Partition = Tuple[int, ...]
Vector = Dict[Partition, Fraction]

MAX_VERTEX_WEIGHT = 4


class UnsupportedVertexWeight(ValueError):
    pass


@lru_cache(maxsize=None)
def partitions_of(n: int) -> Tuple[Partition, ...]:
    """All partitions of n as descending tuples, sorted in tuple order."""
    if n < 0:
        return ()
    if n == 0:
        return ((),)
    out: List[Partition] = []

    def build(rest: int, maxpart: int, acc: Tuple[int, ...]):
        if rest == 0:
            out.append(acc)
            return
        for p in range(min(rest, maxpart), 0, -1):
            build(rest - p, p, acc + (p,))

    build(n, n, ())
    return tuple(sorted(out))


def partition_count(n: int) -> int:
    return len(partitions_of(n))


def weight(mu: Partition) -> int:
    return sum(mu)


def vec_add(a: Vector, b: Vector) -> Vector:
    out = dict(a)
    for k, v in b.items():
        w = out.get(k, Q(0)) + v
        if w:
            out[k] = w
        else:
            out.pop(k, None)
    return out


def vec_scale(c: Fraction, a: Vector) -> Vector:
    c = as_q(c)
    return {k: c * v for k, v in a.items()} if c else {}


def vec_weight_max(a: Vector) -> int:
    return max((weight(mu) for mu in a), default=0)


def vec_is_homogeneous(a: Vector) -> Optional[int]:
    ws = {weight(mu) for mu in a}
    if len(ws) > 1:
        return None
    return ws.pop() if ws else 0


VACUUM: Vector = {(): Q(1)}
BOSON: Vector = {(1,): Q(1)}
CONFORMAL: Vector = {(1, 1): Q(1, 2)}


class FockModule:
    """Fock module of the rank-one Heisenberg algebra with momentum lambda.

    The integer grading operator has eigenvalue |mu| on a partition vector;
    the Virasoro zero mode adds the constant lambda^2/2.
    """

    def __init__(self, momentum=0):
        self.momentum = as_q(momentum)
        self.l0_offset = self.momentum * self.momentum / 2
        self._matrix_cache: Dict[tuple, QMat] = {}

    # -- basis bookkeeping ---------------------------------------------------

    @staticmethod
    def basis(n_max: int) -> List[Partition]:
        out: List[Partition] = []
        for n in range(n_max + 1):
            out.extend(partitions_of(n))
        return out

    @staticmethod
    def dim(n_max: int) -> int:
        return sum(partition_count(n) for n in range(n_max + 1))

    @staticmethod
    @lru_cache(maxsize=None)
    def _index_table(n_max: int) -> Dict[Partition, int]:
        return {mu: i for i, mu in enumerate(FockModule.basis(n_max))}

    @classmethod
    def index_of(cls, mu: Partition, n_max: int) -> int:
        return cls._index_table(n_max)[mu]

    def to_qvec(self, vec: Vector, n_max: int) -> QVec:
        table = self._index_table(n_max)
        data = {}
        for mu, c in vec.items():
            if weight(mu) <= n_max:
                data[table[mu]] = c
        return QVec(self.dim(n_max), data)

    def from_qvec(self, qv: QVec, n_max: int) -> Vector:
        basis = self.basis(n_max)
        return {basis[i]: v for i, v in qv.data.items()}

    # -- exact mode actions ----------------------------------------------------

    def apply_heisenberg(self, k: int, vec: Vector) -> Vector:
        out: Vector = {}
        for mu, c in vec.items():
            if k == 0:
                if self.momentum:
                    _acc(out, mu, c * self.momentum)
            elif k < 0:
                _acc(out, tuple(sorted(mu + (-k,), reverse=True)), c)
            else:
                mult = mu.count(k)
                if mult:
                    nu = list(mu)
                    nu.remove(k)
                    _acc(out, tuple(nu), c * k * mult)
        return out

    def _apply_normal_pair(self, j: int, k: int, vec: Vector) -> Vector:
        # :a_j a_k: with j <= k means the annihilation-most factor acts first
        return self.apply_heisenberg(j, self.apply_heisenberg(k, vec))

    def apply_virasoro(self, n: int, vec: Vector) -> Vector:
        """Sugawara L_n = (1/2) sum_j :a_j a_{n-j}: applied exactly."""
        if not vec:
            return {}
        wmax = vec_weight_max(vec)
        out: Vector = {}
        for j in range(n - wmax, n // 2 + 1):
            k = n - j
            if k > wmax and k > 0 and j >= 0:
                continue  # pure annihilation beyond support
            half = Q(1, 2) if j == k else Q(1)
            term = self._apply_normal_pair(j, k, vec)
            for mu, c in term.items():
                _acc(out, mu, half * c)
        return out

    def apply_vertex(self, v: Vector, m: int, vec: Vector) -> Vector:
        """Mode of the vertex operator attached to a vacuum-module vector v.

        Uses the free-field formula: for v = a_{-n_1}...a_{-n_k}|0>, the field
        is the normally ordered product of the derivative currents
        d^{n_i - 1} a(z) / (n_i - 1)!.
        """
        d = vec_is_homogeneous(v)
        if d is None:
            out: Vector = {}
            for mu, c in v.items():
                for nu, w in self.apply_vertex({mu: c}, m, vec).items():
                    _acc(out, nu, w)
            return out
        if d > MAX_VERTEX_WEIGHT:
            raise UnsupportedVertexWeight(f"vertex modes supported up to weight {MAX_VERTEX_WEIGHT}, got {d}")
        out = {}
        for nu_parts, cv in v.items():
            for mu, cw in vec.items():
                img = self._vertex_monomial(nu_parts, m, mu)
                for tau, x in img.items():
                    _acc(out, tau, cv * cw * x)
        return out

    def _vertex_monomial(self, parts: Partition, m: int, mu: Partition) -> Vector:
        if not parts:
            return {mu: Q(1)} if m == -1 else {}
        k = len(parts)
        target = m + 1 - sum(parts)
        wmax = weight(mu)
        out: Vector = {}
        # j-tuples with sum = target; annihilation entries capped by the
        # weight they can still remove, creation entries bounded by the sum
        lo = target - (k - 1) * wmax

        def rec(i: int, remaining: int, coeff: Fraction, js: List[int]):
            if i == k - 1:
                j = remaining
                if j > wmax:
                    return
                c = _current_coeff(parts[i], j)
                if c:
                    _emit(js + [j], coeff * c)
                return
            for j in range(lo, wmax + 1):
                rest = remaining - j
                if rest > (k - 1 - i) * wmax:
                    continue  # later entries cannot reach the sum
                c = _current_coeff(parts[i], j)
                if c:
                    rec(i + 1, rest, coeff * c, js + [j])

        def _emit(js: List[int], coeff: Fraction):
            # normal order: annihilation (j >= 0, with a_0 -> momentum) first
            vec1: Vector = {mu: coeff}
            for j in sorted(js, reverse=True):
                vec1 = self.apply_heisenberg(j, vec1)
                if not vec1:
                    return
            for tau, x in vec1.items():
                _acc(out, tau, x)

        rec(0, target, Q(1), [])
        return out

    # -- matrices ----------------------------------------------------------

    def heisenberg_matrix(self, k: int, src_n: int, tgt_n: Optional[int] = None) -> QMat:
        if tgt_n is None:
            tgt_n = src_n + max(0, -k)
        key = ("a", k, src_n, tgt_n)
        if key not in self._matrix_cache:
            self._matrix_cache[key] = self._snapshot(lambda vec: self.apply_heisenberg(k, vec), src_n, tgt_n)
        return self._matrix_cache[key]

    def virasoro_matrix(self, n: int, src_n: int, tgt_n: Optional[int] = None) -> QMat:
        if tgt_n is None:
            tgt_n = src_n + max(0, -n)
        key = ("L", n, src_n, tgt_n)
        if key not in self._matrix_cache:
            self._matrix_cache[key] = self._snapshot(lambda vec: self.apply_virasoro(n, vec), src_n, tgt_n)
        return self._matrix_cache[key]

    def vertex_matrix(self, v: Vector, m: int, src_n: int, tgt_n: Optional[int] = None) -> QMat:
        d = vec_is_homogeneous(v)
        if d is None:
            raise ValueError("vertex modes need a homogeneous vector")
        if tgt_n is None:
            tgt_n = src_n + max(0, d - m - 1)
        key = ("Y", _vec_key(v), m, src_n, tgt_n)
        if key not in self._matrix_cache:
            self._matrix_cache[key] = self._snapshot(lambda vec: self.apply_vertex(v, m, vec), src_n, tgt_n)
        return self._matrix_cache[key]

    def contragredient_matrix(self, v: Vector, m: int, src_n: int, tgt_n: Optional[int] = None) -> QMat:
        """Mode of v on the graded dual, in the dual basis.

        Defined by pairing against the module action twisted by the inversion
        operator e^{zL_1} (-z^{-2})^{L_0}, expanded symbolically; for the
        conformal vector this gives the transpose rule L_n -> L_{-n}^T.
        """
        d = vec_is_homogeneous(v)
        if d is None:
            raise ValueError("contragredient modes need a homogeneous vector")
        shift = d - m - 1
        if tgt_n is None:
            tgt_n = src_n + max(0, shift)
        key = ("Yd", _vec_key(v), m, src_n, tgt_n)
        if key in self._matrix_cache:
            return self._matrix_cache[key]
        voa = vacuum_module()
        total = QMat(self.dim(tgt_n), self.dim(src_n))
        u = dict(v)
        for j in range(0, d + 1):
            kk = 2 * d - j - m - 2
            if u:
                # Y_M(u)_kk : M^{<=tgt} -> M^{<=src}; its transpose acts on duals
                a = self.vertex_matrix(u, kk, tgt_n, src_n)
                coeff = Q((-1) ** d, math.factorial(j))
                total = total + a.transpose().scale(coeff)
            u = voa.apply_virasoro(1, u)
        self._matrix_cache[key] = total
        return total

    def _snapshot(self, action, src_n: int, tgt_n: int) -> QMat:
        cols = self.basis(src_n)
        table = self._index_table(tgt_n)
        mat = QMat(self.dim(tgt_n), self.dim(src_n))
        for cidx, mu in enumerate(cols):
            img = action({mu: Q(1)})
            for tau, c in img.items():
                if weight(tau) <= tgt_n:
                    mat.add_(table[tau], cidx, c)
        return mat

    # -- gradings ------------------------------------------------------------

    def weight_diag(self, n_max: int, with_offset: bool = False) -> QMat:
        """Diagonal of the integer grading (or of L_0 when with_offset)."""
        basis = self.basis(n_max)
        off = self.l0_offset if with_offset else Q(0)
        return QMat(
            len(basis), len(basis), {i: {i: Q(weight(mu)) + off} for i, mu in enumerate(basis) if Q(weight(mu)) + off}
        )

    def scalar_pow_weight(self, c, n_max: int) -> QMat:
        """Diagonal matrix c^(integer weight) on the truncation."""
        c = as_q(c)
        basis = self.basis(n_max)
        return QMat(len(basis), len(basis), {i: {i: c ** weight(mu)} for i, mu in enumerate(basis)})

    # -- sewing interface ----------------------------------------------------

    def weight_dims(self, n_max: int) -> List[int]:
        return [partition_count(n) for n in range(n_max + 1)]

    def nilpotent_block(self, n: int) -> QMat:
        return QMat(partition_count(n), partition_count(n))

    @property
    def offset(self) -> Fraction:
        return self.l0_offset

    @property
    def log_bound(self) -> int:
        return 0


def _acc(out: Vector, mu: Partition, c: Fraction) -> None:
    w = out.get(mu, Q(0)) + c
    if w:
        out[mu] = w
    else:
        out.pop(mu, None)


def _vec_key(v: Vector):
    return tuple(sorted(v.items()))


@lru_cache(maxsize=None)
def _current_coeff(n: int, j: int) -> Fraction:
    """Mode coefficient binom(-j-1, n-1) of a_j in the current d^{n-1}a/(n-1)!."""
    r = n - 1
    num = 1
    for t in range(r):
        num *= (-j - 1 - t)
    return Q(num, math.factorial(r))


_VACUUM_MODULE: Optional[FockModule] = None


def vacuum_module() -> FockModule:
    global _VACUUM_MODULE
    if _VACUUM_MODULE is None:
        _VACUUM_MODULE = FockModule(0)
    return _VACUUM_MODULE


class NilpotentToyModule:
    """Hand-declared graded module with a nilpotent part of L_0.

    This is declared data to exercise log-q paths, not a vertex-algebra
    construction: per weight a dimension and a nilpotent matrix, plus a
    rational offset between L_0 and the integer grading.
    """

    def __init__(self, dims: List[int], nilpotents: List[QMat], offset=0):
        if len(dims) != len(nilpotents):
            raise ValueError("dims and nilpotents must align")
        for d, m in zip(dims, nilpotents):
            if (m.nrows, m.ncols) != (d, d):
                raise ValueError("nilpotent block shape mismatch")
        self.dims = list(dims)
        self.nilpotents = list(nilpotents)
        self.offset = as_q(offset)

    def weight_dims(self, n_max: int) -> List[int]:
        if n_max >= len(self.dims):
            return self.dims + [0] * (n_max + 1 - len(self.dims))
        return self.dims[: n_max + 1]

    def nilpotent_block(self, n: int) -> QMat:
        if n < len(self.nilpotents):
            return self.nilpotents[n]
        return QMat(0, 0)

    @property
    def log_bound(self) -> int:
        bound = 0
        for m in self.nilpotents:
            k, power = 0, m
            while not power.is_zero():
                k += 1
                power = power @ m
                if k > m.nrows:
                    raise ValueError("declared nilpotent part is not nilpotent")
            bound = max(bound, k)
        return bound
