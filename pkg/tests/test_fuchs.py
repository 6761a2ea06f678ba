import math
import random
from fractions import Fraction

import pytest

from blocksew.fuchs import (
    BoundViolation,
    FuchsError,
    FuchsSystem,
    InconsistentResonance,
    MissingSeed,
    certify,
    majorant_alpha,
    ode_residual,
    resonances,
    residual,
    solve_formal,
)
from blocksew.linalg import QMat, QVec
from blocksew.series import TruncSeries
from helpers import random_rational

Q = Fraction
SEED = 9090


def scalar_system(a_list, w_list, tail=None):
    return FuchsSystem.single(
        [QMat.from_rows([[x]]) for x in a_list],
        [QVec.from_list([x]) for x in w_list],
        tail=tail,
    )


class TestSolveFormal:
    def test_pure_inhomogeneity(self):
        sys_ = scalar_system([0], [0, 1])
        psi = solve_formal(sys_, {(0, 0): [0]}, order=5)
        assert psi == TruncSeries(("q",), {"q": 5}, terms={((1,), (0,)): QVec.from_list([1])})
        assert residual(sys_, psi).is_zero()

    def test_resonant_monomial(self):
        sys_ = scalar_system([2], [0])
        assert resonances(sys_, 6).resonant == {2: 1}
        psi = solve_formal(sys_, {(2, 0): [1]}, order=6)
        assert psi == TruncSeries(("q",), {"q": 6}, terms={((2,), (0,)): QVec.from_list([1])})
        assert residual(sys_, psi).is_zero()

    def test_nilpotent_log_case(self):
        sys_ = FuchsSystem.single([QMat.from_rows([[0, 1], [0, 0]])], [QVec(2)])
        psi = solve_formal(sys_, {(0, 1): [1], (0, 0): [1]}, order=4, log_bound=1)
        want = TruncSeries(
            ("q",),
            {"q": 4},
            logmax={"q": 1},
            terms={
                ((0,), (0,)): QVec.from_list([1, 1]),
                ((0,), (1,)): QVec.from_list([1, 0]),
            },
        )
        assert psi == want
        assert residual(sys_, psi).is_zero()

    def test_exponential(self):
        sys_ = scalar_system([0, 1], [0])
        psi = solve_formal(sys_, {(0, 0): [1]}, order=25)
        for n in range(26):
            assert psi.coefficient({"q": n})[0] == Q(1, math.factorial(n))
        assert residual(sys_, psi).is_zero()

    def test_missing_seed(self):
        sys_ = scalar_system([0], [0])
        with pytest.raises(MissingSeed) as e:
            solve_formal(sys_, {}, order=2)
        assert e.value.kernel_dim == 1

    def test_inconsistent_resonance_reports_index(self):
        sys_ = FuchsSystem.single(
            [QMat.from_rows([[0, 1], [0, 0]])], [QVec.from_list([0, 1])]
        )
        with pytest.raises(InconsistentResonance) as e:
            solve_formal(sys_, {(0, 0): [0]}, order=2)
        assert e.value.key == ((0,), (0,))

    def test_nonresonant_solution_unique_and_deterministic(self):
        rnd = random.Random(SEED)
        a0 = QMat.from_rows([[Q(1, 2), Q(1, 3)], [0, Q(7, 2)]])  # no natural eigenvalues
        a1 = QMat.from_rows([[random_rational(rnd) for _ in range(2)] for _ in range(2)])
        w0 = QVec.from_list([1, 2])
        sys_ = FuchsSystem.single([a0, a1], [w0])
        assert resonances(sys_, 10).resonant == {}
        p1 = solve_formal(sys_, {}, order=8)
        p2 = solve_formal(sys_, {}, order=8)
        assert p1 == p2
        assert residual(sys_, p1).is_zero()

    def test_multi_variable_exponential(self):
        sys_ = FuchsSystem(
            1,
            ("q1", "q2"),
            (1, 1),
            [{(1, 0): QMat.from_rows([[1]])}, {(0, 1): QMat.from_rows([[2]])}],
            [{}, {}],
        )
        psi = solve_formal(sys_, {((0, 0), (0, 0)): [1]}, order=5)
        for i in range(6):
            for j in range(6):
                got = psi.coefficient({"q1": i, "q2": j})
                want = Q(2 ** j, math.factorial(i) * math.factorial(j))
                assert (got[0] if got else Q(0)) == want
        assert residual(sys_, psi, 0).is_zero()
        assert residual(sys_, psi, 1).is_zero()

    def test_tail_forbids_extrapolation(self):
        sys_ = scalar_system([0, 1], [0], tail=(Q(1), Q(2)))
        with pytest.raises(FuchsError):
            solve_formal(sys_, {(0, 0): [1]}, order=5)


class TestNormChoice:
    def test_submultiplicative_on_random_matrices(self):
        rnd = random.Random(SEED + 1)
        for _ in range(25):
            m = QMat.from_rows([[random_rational(rnd) for _ in range(3)] for _ in range(3)])
            n = QMat.from_rows([[random_rational(rnd) for _ in range(3)] for _ in range(3)])
            v = QVec.from_list([random_rational(rnd) for _ in range(3)])
            assert (m @ n).norm_rowsum() <= m.norm_rowsum() * n.norm_rowsum()
            assert m.apply(v).norm_inf() <= m.norm_rowsum() * v.norm_inf()


class TestCertify:
    def test_exponential_bound_to_thirty(self):
        sys_ = scalar_system([0, 1], [0])
        psi = solve_formal(sys_, {(0, 0): [1]}, order=30)
        cert = certify(sys_, psi, Q(1, 2))
        assert cert.n_checked == 30
        assert cert.recheck()
        for n in range(31):
            assert Q(1, math.factorial(n)) <= cert.c * cert.gamma ** n * cert.r1 ** (-n)
        assert cert.r0 < cert.r1 / cert.gamma

    def test_constant_solution(self):
        sys_ = scalar_system([0], [0])
        psi = solve_formal(sys_, {(0, 0): [Q(3, 7)]}, order=10)
        cert = certify(sys_, psi, Q(1, 2))
        assert cert.recheck()
        assert cert.alpha == 0

    def test_corrupted_coefficient_rejected_with_index(self):
        sys_ = scalar_system([0, 1], [0])
        psi = solve_formal(sys_, {(0, 0): [1]}, order=30)
        bad = TruncSeries(("q",), {"q": 30}, terms=dict(psi.terms))
        bad._store((17,), (0,), QVec.from_list([Q(10) ** 15]))
        with pytest.raises(BoundViolation) as e:
            certify(sys_, bad, Q(1, 2))
        assert e.value.index == 17

    def test_geometric_pattern_with_tail(self):
        # coefficient norms exactly alpha0 * s^{-n}: the adjustment loop for c
        # terminates within ceil(B) + 1 raises past the closure step
        s = Q(2)
        alpha0 = Q(1, 3)
        a0 = QMat.from_rows([[Q(5, 2), 0], [0, Q(1, 2)]])
        coeffs = [a0]
        for n in range(1, 7):
            coeffs.append(QMat.from_rows([[alpha0 / s ** n, 0], [0, alpha0 / s ** n]]))
        sys_ = FuchsSystem.single(coeffs, [QVec.from_list([1, 1])], tail=(alpha0, 1 / s))
        psi = solve_formal(sys_, {}, order=6)
        assert residual(sys_, psi).is_zero()
        r1 = Q(1, 4)  # strictly inside the tail radius s
        cert = certify(sys_, psi, r1)
        assert cert.recheck()
        assert cert.adjustments <= int(cert.cap_b) + 2
        assert cert.cap_b == Q(5, 2)

    def test_alpha_dominates_disc_values(self):
        # for any |q| <= r1 the truncated sum of ||A_n|| q^n stays below alpha
        rnd = random.Random(SEED + 2)
        coeffs = [
            QMat.from_rows([[random_rational(rnd) for _ in range(2)] for _ in range(2)])
            for _ in range(5)
        ]
        sys_ = FuchsSystem.single(coeffs, [QVec(2)])
        r1 = Q(1, 3)
        alpha = majorant_alpha(sys_, r1)
        for q in (r1, -r1, Q(1, 4), Q(-1, 5), Q(0)):
            total = QMat(2, 2)
            for n, m in enumerate(coeffs):
                total = total + m.scale(q ** n)
            assert total.norm_rowsum() <= alpha

    def test_r1_outside_tail_radius_rejected(self):
        sys_ = scalar_system([0, 1], [0], tail=(Q(1), Q(4)))
        psi = solve_formal(scalar_system([0, 1], [0]), {(0, 0): [1]}, order=5)
        with pytest.raises(FuchsError):
            certify(sys_, psi, Q(1, 2))


class TestOdeResidual:
    def test_grading_diagonal_annihilates_character(self):
        # components psi_n = p(n) q^n, Omega = diag(n): q d/dq picks out n q^n
        from blocksew.fock import partition_count

        order = 8
        dim = order + 1
        psi = TruncSeries(("q",), {"q": order})
        for n in range(order + 1):
            psi._store((n,), (0,), QVec(dim, {n: Q(partition_count(n))}))
        omega = TruncSeries(("q",), {"q": order})
        omega._store((0,), (0,), QMat(dim, dim, {n: {n: Q(n)} for n in range(1, dim)}))
        assert ode_residual(omega, psi).is_zero()

    def test_constant_solution_zero_omega(self):
        psi = TruncSeries(("q",), {"q": 6}, terms={((0,), (0,)): QVec.from_list([3, -2])})
        omega = TruncSeries(("q",), {"q": 6})
        assert ode_residual(omega, psi).is_zero()

    def test_two_by_two_system_built_from_generator(self):
        # assemble Omega and psi from one generator: psi = (e^q, q e^q),
        # q psi' = Omega psi with Omega = [[q, 0], [q, 1]]
        order = 8
        psi = TruncSeries(("q",), {"q": order})
        for n in range(order + 1):
            first = Q(1, math.factorial(n))
            second = Q(1, math.factorial(n - 1)) if n >= 1 else Q(0)
            psi._store((n,), (0,), QVec.from_list([first, second]))
        omega = TruncSeries(("q",), {"q": order})
        omega._store((1,), (0,), QMat.from_rows([[1, 0], [0, 1]]))
        omega._store((0,), (0,), QMat.from_rows([[0, 0], [0, 1]]))
        assert ode_residual(omega, psi).is_zero()

    def test_nonzero_residual_reported(self):
        psi = TruncSeries(("q",), {"q": 4}, terms={((1,), (0,)): QVec.from_list([1])})
        omega = TruncSeries(("q",), {"q": 4})
        res = ode_residual(omega, psi)
        assert not res.is_zero()
        assert res.coefficient({"q": 1}) == QVec.from_list([1])
