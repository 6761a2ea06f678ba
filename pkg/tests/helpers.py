"""Shared oracles and generators for the test-suite.

Oracles here are deliberately independent of the package internals: the
partition counter uses the pentagonal-number recurrence, series products are
checked against a direct double loop, and compositional inverses against the
Lagrange inversion formula.
"""

from fractions import Fraction
from functools import lru_cache
import random

Q = Fraction


@lru_cache(maxsize=None)
def euler_partition_count(n: int) -> int:
    """p(n) by the pentagonal number recurrence."""
    if n < 0:
        return 0
    if n == 0:
        return 1
    total = 0
    k = 1
    while True:
        g1 = k * (3 * k - 1) // 2
        g2 = k * (3 * k + 1) // 2
        if g1 > n and g2 > n:
            break
        sign = -1 if k % 2 == 0 else 1
        if g1 <= n:
            total += sign * euler_partition_count(n - g1)
        if g2 <= n:
            total += sign * euler_partition_count(n - g2)
        k += 1
    return total


def convolve(a, b, order):
    """Direct convolution oracle for univariate coefficient lists."""
    out = [Q(0)] * (order + 1)
    for i, x in enumerate(a[: order + 1]):
        for j, y in enumerate(b[: order + 1]):
            if i + j <= order:
                out[i + j] += x * y
    return out


def lagrange_inverse(a, order):
    """Coefficients of the compositional inverse via Lagrange inversion.

    a[k] is the coefficient of z^(k+1) of the input; requires a[0] != 0.
    b_n = (1/n) [w^(n-1)] (w / rho(w))^n.
    """
    out = []
    for n in range(1, order + 1):
        # (w / rho(w))^n = (a0 + a1 w + ...)^{-n} with a_k := a[k]
        # compute (sum a_k w^k)^{-1} to order n-1, then its n-th power
        inv = [Q(0)] * n
        inv[0] = 1 / Q(a[0])
        for m in range(1, n):
            inv[m] = -inv[0] * sum(Q(a[k]) * inv[m - k] for k in range(1, min(m, len(a) - 1) + 1))
        power = [Q(1)] + [Q(0)] * (n - 1)
        for _ in range(n):
            power = convolve(power, inv, n - 1)
        out.append(power[n - 1] / n)
    return out


def random_jet_coeffs(rnd: random.Random, order: int, lead_range=(1, 5)):
    lead = Q(rnd.randint(*lead_range))
    if rnd.random() < 0.5:
        lead = -lead
    return [lead] + [Q(rnd.randint(-4, 4), rnd.randint(1, 3)) for _ in range(order - 1)]


def random_rational(rnd: random.Random, num=6, den=4) -> Fraction:
    return Q(rnd.randint(-num, num), rnd.randint(1, den))
