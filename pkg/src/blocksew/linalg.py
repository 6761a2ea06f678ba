"""Sparse linear algebra over exact rationals.

Everything in this package that looks like a matrix is a QMat: a sparse
row-dict matrix with Fraction entries.  Solving and kernels go through a
deterministic fraction-free-ish Gauss elimination with a fixed pivot order,
so repeated runs produce identical output.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Tuple

Q = Fraction


def as_q(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return parse_rational(x)
    raise TypeError(f"cannot coerce {x!r} to a rational")


def parse_rational(s: str) -> Fraction:
    """Parse a decimal-free rational string like '3/4' or '-2'."""
    t = s.strip()
    body = t[1:] if t[:1] in "+-" else t
    if not body or not all(part.isdigit() for part in body.split("/", 1)) or body.count("/") > 1:
        raise ValueError(f"not a rational string: {s!r}")
    return Fraction(t)


def format_rational(x: Fraction) -> str:
    return str(Fraction(x))


class QVec:
    """Sparse rational vector of fixed dimension."""

    __slots__ = ("n", "data")

    def __init__(self, n: int, data: Optional[Dict[int, Fraction]] = None):
        self.n = n
        self.data: Dict[int, Fraction] = {}
        if data:
            for i, v in data.items():
                v = as_q(v)
                if v:
                    if not 0 <= i < n:
                        raise IndexError(f"index {i} out of range for dim {n}")
                    self.data[i] = v

    @classmethod
    def from_list(cls, values) -> "QVec":
        return cls(len(values), {i: as_q(v) for i, v in enumerate(values)})

    def to_list(self) -> List[Fraction]:
        return [self.data.get(i, Q(0)) for i in range(self.n)]

    def __getitem__(self, i: int) -> Fraction:
        return self.data.get(i, Q(0))

    def __add__(self, other: "QVec") -> "QVec":
        if self.n != other.n:
            raise ValueError("dimension mismatch")
        out = dict(self.data)
        for i, v in other.data.items():
            w = out.get(i, Q(0)) + v
            if w:
                out[i] = w
            else:
                out.pop(i, None)
        return QVec(self.n, out)

    def __sub__(self, other: "QVec") -> "QVec":
        return self + (-other)

    def __neg__(self) -> "QVec":
        return QVec(self.n, {i: -v for i, v in self.data.items()})

    def scale(self, c) -> "QVec":
        c = as_q(c)
        if not c:
            return QVec(self.n)
        return QVec(self.n, {i: c * v for i, v in self.data.items()})

    __rmul__ = scale
    __mul__ = scale

    def dot(self, other: "QVec") -> Fraction:
        if self.n != other.n:
            raise ValueError("dimension mismatch")
        small, big = (self.data, other.data) if len(self.data) <= len(other.data) else (other.data, self.data)
        return sum((v * big[i] for i, v in small.items() if i in big), Q(0))

    def norm_inf(self) -> Fraction:
        return max((abs(v) for v in self.data.values()), default=Q(0))

    def is_zero(self) -> bool:
        return not self.data

    def __eq__(self, other) -> bool:
        return isinstance(other, QVec) and self.n == other.n and self.data == other.data

    def __hash__(self):
        return hash((self.n, tuple(sorted(self.data.items()))))

    def __repr__(self):
        return f"QVec({self.n}, {{{', '.join(f'{i}: {v}' for i, v in sorted(self.data.items()))}}})"


class QMat:
    """Sparse rational matrix, rows as dicts."""

    __slots__ = ("nrows", "ncols", "rows")

    def __init__(self, nrows: int, ncols: int, rows: Optional[Dict[int, Dict[int, Fraction]]] = None):
        self.nrows = nrows
        self.ncols = ncols
        self.rows: Dict[int, Dict[int, Fraction]] = {}
        if rows:
            for i, r in rows.items():
                clean = {j: as_q(v) for j, v in r.items() if v}
                if clean:
                    self.rows[i] = clean

    @classmethod
    def identity(cls, n: int) -> "QMat":
        return cls(n, n, {i: {i: Q(1)} for i in range(n)})

    @classmethod
    def zero(cls, nrows: int, ncols: int) -> "QMat":
        return cls(nrows, ncols)

    @classmethod
    def from_rows(cls, rows: Iterable[Iterable]) -> "QMat":
        rows = [list(r) for r in rows]
        ncols = len(rows[0]) if rows else 0
        return cls(len(rows), ncols, {i: {j: as_q(v) for j, v in enumerate(r) if as_q(v)} for i, r in enumerate(rows)})

    def to_rows(self) -> List[List[Fraction]]:
        return [[self.get(i, j) for j in range(self.ncols)] for i in range(self.nrows)]

    def get(self, i: int, j: int) -> Fraction:
        return self.rows.get(i, {}).get(j, Q(0))

    def set_(self, i: int, j: int, v) -> None:
        v = as_q(v)
        if not 0 <= i < self.nrows or not 0 <= j < self.ncols:
            raise IndexError((i, j))
        row = self.rows.setdefault(i, {})
        if v:
            row[j] = v
        else:
            row.pop(j, None)
            if not row:
                self.rows.pop(i, None)

    def add_(self, i: int, j: int, v) -> None:
        self.set_(i, j, self.get(i, j) + as_q(v))

    def __add__(self, other: "QMat") -> "QMat":
        if (self.nrows, self.ncols) != (other.nrows, other.ncols):
            raise ValueError("shape mismatch")
        out = QMat(self.nrows, self.ncols, {i: dict(r) for i, r in self.rows.items()})
        for i, r in other.rows.items():
            for j, v in r.items():
                out.add_(i, j, v)
        return out

    def __sub__(self, other: "QMat") -> "QMat":
        return self + other.scale(-1)

    def __neg__(self) -> "QMat":
        return self.scale(-1)

    def scale(self, c) -> "QMat":
        c = as_q(c)
        if not c:
            return QMat(self.nrows, self.ncols)
        return QMat(self.nrows, self.ncols, {i: {j: c * v for j, v in r.items()} for i, r in self.rows.items()})

    __rmul__ = scale

    def __matmul__(self, other: "QMat") -> "QMat":
        if self.ncols != other.nrows:
            raise ValueError(f"shape mismatch {self.nrows}x{self.ncols} @ {other.nrows}x{other.ncols}")
        out: Dict[int, Dict[int, Fraction]] = {}
        for i, r in self.rows.items():
            acc: Dict[int, Fraction] = {}
            for k, a in r.items():
                brow = other.rows.get(k)
                if not brow:
                    continue
                for j, b in brow.items():
                    acc[j] = acc.get(j, Q(0)) + a * b
            acc = {j: v for j, v in acc.items() if v}
            if acc:
                out[i] = acc
        return QMat(self.nrows, other.ncols, out)

    def apply(self, vec: QVec) -> QVec:
        if vec.n != self.ncols:
            raise ValueError("dimension mismatch")
        out: Dict[int, Fraction] = {}
        for i, r in self.rows.items():
            s = sum((a * vec.data[j] for j, a in r.items() if j in vec.data), Q(0))
            if s:
                out[i] = s
        return QVec(self.nrows, out)

    def transpose(self) -> "QMat":
        out: Dict[int, Dict[int, Fraction]] = {}
        for i, r in self.rows.items():
            for j, v in r.items():
                out.setdefault(j, {})[i] = v
        return QMat(self.ncols, self.nrows, out)

    def trace(self) -> Fraction:
        return sum((self.get(i, i) for i in range(min(self.nrows, self.ncols))), Q(0))

    def is_zero(self) -> bool:
        return not self.rows

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, QMat)
            and (self.nrows, self.ncols) == (other.nrows, other.ncols)
            and self.rows == other.rows
        )

    def __hash__(self):
        return hash((self.nrows, self.ncols, tuple(sorted((i, tuple(sorted(r.items()))) for i, r in self.rows.items()))))

    def norm_rowsum(self) -> Fraction:
        """Max absolute row sum; submultiplicative operator norm for inf-norm vectors."""
        return max((sum(abs(v) for v in r.values()) for r in self.rows.values()), default=Q(0))

    def submatrix(self, row_range: Tuple[int, int], col_range: Tuple[int, int]) -> "QMat":
        r0, r1 = row_range
        c0, c1 = col_range
        out: Dict[int, Dict[int, Fraction]] = {}
        for i, r in self.rows.items():
            if not r0 <= i < r1:
                continue
            sub = {j - c0: v for j, v in r.items() if c0 <= j < c1}
            if sub:
                out[i - r0] = sub
        return QMat(r1 - r0, c1 - c0, out)

    def __repr__(self):
        return f"QMat({self.nrows}x{self.ncols}, nnz={sum(len(r) for r in self.rows.values())})"


def rref(mat: QMat) -> Tuple[QMat, List[int]]:
    """Reduced row echelon form with leftmost-pivot order. Returns (R, pivot columns)."""
    rows = [dict(mat.rows.get(i, {})) for i in range(mat.nrows)]
    pivots: List[int] = []
    rank = 0
    for col in range(mat.ncols):
        sel = None
        for i in range(rank, mat.nrows):
            if rows[i].get(col):
                sel = i
                break
        if sel is None:
            continue
        rows[rank], rows[sel] = rows[sel], rows[rank]
        inv = 1 / rows[rank][col]
        rows[rank] = {j: inv * v for j, v in rows[rank].items()}
        for i in range(mat.nrows):
            if i == rank:
                continue
            c = rows[i].get(col)
            if not c:
                continue
            newrow = dict(rows[i])
            for j, v in rows[rank].items():
                w = newrow.get(j, Q(0)) - c * v
                if w:
                    newrow[j] = w
                else:
                    newrow.pop(j, None)
            rows[i] = newrow
        pivots.append(col)
        rank += 1
        if rank == mat.nrows:
            break
    return QMat(mat.nrows, mat.ncols, {i: r for i, r in enumerate(rows) if r}), pivots


def solve(mat: QMat, rhs: QVec) -> Optional[Tuple[QVec, List[QVec]]]:
    """Solve mat @ x = rhs exactly.

    Returns (particular, kernel_basis) with the particular solution supported
    on pivot columns only (minimal support in the fixed pivot order), or None
    if inconsistent.  The kernel basis is deterministic: one vector per free
    column, entry 1 there.
    """
    aug = QMat(mat.nrows, mat.ncols + 1, {i: dict(r) for i, r in mat.rows.items()})
    for i, v in rhs.data.items():
        aug.set_(i, mat.ncols, v)
    red, pivots = rref(aug)
    if mat.ncols in pivots:
        return None
    part = QVec(mat.ncols)
    for k, col in enumerate(pivots):
        val = red.get(k, mat.ncols)
        if val:
            part.data[col] = val
    pivset = set(pivots)
    kernel: List[QVec] = []
    for free in range(mat.ncols):
        if free in pivset:
            continue
        vec = QVec(mat.ncols, {free: Q(1)})
        for k, col in enumerate(pivots):
            c = red.get(k, free)
            if c:
                vec.data[col] = -c
        kernel.append(vec)
    return part, kernel


def kernel_basis(mat: QMat) -> List[QVec]:
    sol = solve(mat, QVec(mat.nrows))
    assert sol is not None
    return sol[1]


def is_singular(mat: QMat) -> bool:
    if mat.nrows != mat.ncols:
        raise ValueError("square matrices only")
    _, pivots = rref(mat)
    return len(pivots) < mat.ncols
