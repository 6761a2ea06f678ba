import random
from fractions import Fraction

import pytest

from blocksew.coords import u_matrix_dual, u_matrix_inverse
from blocksew.fock import (
    BOSON,
    CONFORMAL,
    VACUUM,
    FockModule,
    NilpotentToyModule,
    vacuum_module,
)
from blocksew.linalg import QMat, QVec
from blocksew.series import CoordJet, TruncSeries, reverse_jet
from blocksew.sewing import (
    INFINITY,
    Resolvent,
    SewingBlock,
    SpherePoint,
    TruncationShortfall,
    genus0_invariance_check,
    l0_times,
    q_l0_resolvent,
    residue_identity_check,
    sew,
    sew_multi,
)
from helpers import euler_partition_count, random_rational

Q = Fraction
SEED = 777


def toy_module(offset=Q(2, 5)):
    return NilpotentToyModule([2], [QMat.from_rows([[0, 1], [0, 0]])], offset=offset)


class TestResolvent:
    def test_semisimple_is_projector_series(self):
        m = vacuum_module()
        r = q_l0_resolvent(m, 4)
        assert r.offset == (Q(0),) and r.logmax == (0,)
        res = Resolvent(m, 4)
        for n in range(5):
            mat = r.coefficient({"q": n})
            start = res.block_start(n)
            d = res.dims()[n]
            expect = QMat(res.total_dim(), res.total_dim())
            for i in range(d):
                expect.set_(start + i, start + i, 1)
            assert mat == expect

    def test_q_derivative_is_l0_action(self):
        for module in (vacuum_module(), FockModule(Q(1, 3)), toy_module()):
            r = q_l0_resolvent(module, 4)
            assert r.qdq("q") == l0_times(module, r)

    def test_toy_log_expansion_matches_hand_computation(self):
        toy = toy_module()
        r = q_l0_resolvent(toy, 2)
        ident = QMat.identity(2)
        nil = QMat.from_rows([[0, 1], [0, 0]])
        assert r.coefficient({"q": 0}, {"q": 0}) == ident
        assert r.coefficient({"q": 0}, {"q": 1}) == nil

    def test_pairing_delta(self):
        assert Resolvent(vacuum_module(), 5).pairing_delta_check()
        assert Resolvent(toy_module(), 3).pairing_delta_check()


class TestSew:
    def test_vacuum_character_is_partition_series(self):
        m = vacuum_module()
        block = SewingBlock.pairing(m, 10)
        s = sew(block, {}, m, 10, normalized=True)
        for n in range(11):
            assert s.coefficient({"q": n}) == euler_partition_count(n)

    def test_momentum_module_shifts_by_offset(self):
        lam = Q(1, 3)
        f = FockModule(lam)
        block = SewingBlock.pairing(f, 6)
        s = sew(block, {}, f, 6)
        assert s.offset == (lam * lam / 2,)
        norm = sew(block, {}, f, 6, normalized=True)
        assert [s.coefficient({"q": n}) for n in range(7)] == [
            norm.coefficient({"q": n}) for n in range(7)
        ]

    def test_order_zero_is_top_projection(self):
        m = vacuum_module()
        block = SewingBlock.pairing(m, 5)
        s = sew(block, {}, m, 0, normalized=True)
        assert s.coefficient({"q": 0}) == 1

    def test_linearity_in_block_and_inputs(self):
        m = vacuum_module()
        rnd = random.Random(SEED)
        dims = m.weight_dims(3)
        total = sum(dims)
        # 3-slot block: one retained slot plus the sewing pair
        def rand_block():
            table = {}
            for _ in range(12):
                table[(rnd.randrange(total), rnd.randrange(total), rnd.randrange(total))] = random_rational(rnd)
            return SewingBlock([dims, dims, dims], table, pair_slots=(1, 2))

        b1, b2 = rand_block(), rand_block()
        merged = SewingBlock(
            [dims, dims, dims],
            {k: b1.table.get(k, Q(0)) + b2.table.get(k, Q(0)) for k in set(b1.table) | set(b2.table)},
            pair_slots=(1, 2),
        )
        w = QVec(total, {rnd.randrange(total): random_rational(rnd) for _ in range(4)})
        s1 = sew(b1, {0: w}, m, 3)
        s2 = sew(b2, {0: w}, m, 3)
        s12 = sew(merged, {0: w}, m, 3)
        assert s12 == s1 + s2
        w2 = QVec(total, {rnd.randrange(total): random_rational(rnd) for _ in range(4)})
        sw = sew(b1, {0: w + w2}, m, 3)
        assert sw == s1 + sew(b1, {0: w2}, m, 3)

    def test_semisimple_coefficient_is_blockwise_pairing(self):
        m = vacuum_module()
        block = SewingBlock.pairing(m, 4)
        s = sew(block, {}, m, 4, normalized=True)
        res = Resolvent(m, 4)
        for n in range(5):
            start = res.block_start(n)
            d = res.dims()[n]
            want = sum((block.table.get((start + a, start + a), Q(0)) for a in range(d)), Q(0))
            assert s.coefficient({"q": n}) == want

    def test_truncation_shortfall_reports_requirement(self):
        m = vacuum_module()
        block = SewingBlock.pairing(m, 3)
        with pytest.raises(TruncationShortfall) as e:
            sew(block, {}, m, 7)
        assert e.value.required == 7

    def test_toy_module_log_terms(self):
        toy = toy_module()
        block = SewingBlock.pairing(toy, 2)
        s = sew(block, {}, toy, 1)
        assert s.offset == (Q(2, 5),)
        assert s.coefficient({"q": 0}, {"q": 0}) == 2  # trace of the identity block
        assert s.coefficient({"q": 0}, {"q": 1}) == 0  # the nilpotent is traceless
        # an off-diagonal functional sees the log slot
        table = {(0, 1): Q(1)}
        block2 = SewingBlock([toy.weight_dims(1), toy.weight_dims(1)], table, pair_slots=(0, 1))
        s2 = sew(block2, {}, toy, 1)
        assert s2.coefficient({"q": 0}, {"q": 1}) == 1

    def test_normalized_vs_standard_differ_by_offset_only_when_semisimple(self):
        lam = Q(2, 7)
        f = FockModule(lam)
        block = SewingBlock.pairing(f, 5)
        std = sew(block, {}, f, 5)
        norm = sew(block, {}, f, 5, normalized=True)
        shifted = TruncSeries(
            ("q",), {"q": 5}, offset={"q": lam * lam / 2}, terms=dict(norm.terms)
        )
        assert std == shifted


class TestSewMulti:
    def test_tensor_of_pairings_gives_product_characters(self):
        m = vacuum_module()
        f = FockModule(Q(1, 2))
        b1 = SewingBlock.pairing(m, 5)
        b2 = SewingBlock.pairing(f, 5)
        both = b1.tensor(b2)
        out = sew_multi(both, {}, [(0, 1, m), (2, 3, f)], [5, 5])
        assert out.offset == (Q(0), Q(1, 8))
        for n1 in range(6):
            for n2 in range(6):
                want = Q(euler_partition_count(n1) * euler_partition_count(n2))
                assert out.coefficient({"q1": n1, "q2": n2}) == want

    def test_multi_matches_iterated_single_on_pairing(self):
        m = vacuum_module()
        block = SewingBlock.pairing(m, 4)
        single = sew(block, {}, m, 4, normalized=False)
        multi = sew_multi(block, {}, [(0, 1, m)], [4], var_names=["q"])
        assert single == multi


class TestResidueIdentity:
    def test_vacuum_trivial(self):
        m = vacuum_module()
        f = TruncSeries.constant(1, ("x", "y"), {"x": 5, "y": 5})
        ok, order, _ = residue_identity_check(VACUUM, f, m, 5)
        assert ok and order == 5

    def test_conformal_with_unit_f_gives_l0_resolvent(self):
        m = vacuum_module()
        f = TruncSeries.constant(1, ("x", "y"), {"x": 6, "y": 6})
        ok, _o, series = residue_identity_check(CONFORMAL, f, m, 5)
        assert ok
        assert series == q_l0_resolvent(m, 5).qdq("q")

    def test_momentum_module_offset_carried(self):
        f = FockModule(Q(1, 2))
        fser = TruncSeries.constant(1, ("x", "y"), {"x": 4, "y": 4})
        ok, _o, series = residue_identity_check(CONFORMAL, fser, f, 4)
        assert ok
        assert series.offset == (Q(1, 8),)

    def test_boson_with_monomials(self):
        m = vacuum_module()
        fxp = TruncSeries.monomial(1, ("x", "y"), {"x": 6, "y": 6}, {"x": 1, "y": 1})
        ok, _, _ = residue_identity_check(BOSON, fxp, m, 6)
        assert ok

    def test_weight_three_spanning_bidegree_two(self):
        m = vacuum_module()
        for u in ({(3,): Q(1)}, {(2, 1): Q(1)}, {(1, 1, 1): Q(1)}):
            for a in (0, 2):
                for b in (1, 2):
                    f = TruncSeries.monomial(1, ("x", "y"), {"x": 4, "y": 4}, {"x": a, "y": b})
                    ok, _, _ = residue_identity_check(u, f, m, 4)
                    assert ok, (u, a, b)


class TestGenus0Invariance:
    def setup_method(self):
        self.m = vacuum_module()
        self.n = 11
        self.block = SewingBlock.pairing(self.m, self.n)
        self.points = [
            SpherePoint(Q(0), CoordJet.identity(), self.m, dual=False),
            SpherePoint(INFINITY, CoordJet.identity(), self.m, dual=True),
        ]

    def test_conformal_vector_reduces_to_transpose_rule(self):
        for k in range(-2, 3):
            ok, fails = genus0_invariance_check(self.block, self.points, CONFORMAL, k, 5)
            assert ok, (k, fails[:2])

    def test_vacuum_constant_residues(self):
        for k in (-1, 0, 1):
            ok, fails = genus0_invariance_check(self.block, self.points, VACUUM, k, 5)
            assert ok, (k, fails[:2])

    def test_boson_weight_six(self):
        for k in range(-2, 3):
            ok, fails = genus0_invariance_check(self.block, self.points, BOSON, k, 6)
            assert ok, (k, fails[:2])

    def test_broken_block_detected(self):
        bad = SewingBlock(
            [list(d) for d in self.block.slot_dims],
            dict(self.block.table),
            self.block.pair_slots,
        )
        bad.table[(0, 1)] = Q(1)
        ok, fails = genus0_invariance_check(bad, self.points, BOSON, 1, 3)
        assert not ok and fails

    def test_twisted_coordinates(self):
        r1 = CoordJet.from_poly([1, 1])
        r2 = CoordJet.from_poly([2, 0, 1])
        u1 = u_matrix_inverse(r1, self.m, self.n)
        u2 = u_matrix_dual(reverse_jet(r2.truncate(self.n + 1), self.n + 1), self.m, self.n)
        tblock = self.block.contract_slot(0, u1).contract_slot(1, u2)
        tpoints = [
            SpherePoint(Q(0), r1, self.m, dual=False),
            SpherePoint(INFINITY, r2, self.m, dual=True),
        ]
        for v in (BOSON, CONFORMAL):
            for k in (-1, 0, 1):
                ok, fails = genus0_invariance_check(tblock, tpoints, v, k, 3)
                assert ok, (v, k, fails[:2])

    def test_slot_truncation_shortfall(self):
        small = SewingBlock.pairing(self.m, 3)
        with pytest.raises(TruncationShortfall):
            genus0_invariance_check(small, self.points, CONFORMAL, -2, 3)
