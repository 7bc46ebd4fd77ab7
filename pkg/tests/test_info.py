"""Tests for information measures, refined information, and decompositions."""

import math

import numpy as np
import pytest

from mahgenta.core import InteractionCollection, ProbTensor, Shape, VarSubset
from mahgenta.errors import DomainError
from mahgenta.info import (
    Chain,
    DecompositionReport,
    DecompositionStep,
    ProjectionCache,
    canonical_ri,
    decompose_chain,
    entropy,
    greedy_chain,
    information_lattice,
    j_value,
    kl_divergence,
    mmi,
    random_maximal_chain,
    refined_information,
)
from mahgenta.loglinear import ipf_project

from conftest import fork_distribution, random_distribution

LN2 = math.log(2.0)


class TestEntropy:
    def test_point_mass(self):
        p = ProbTensor(VarSubset.of(1), np.array([1.0, 0.0]))
        assert entropy(p) == 0.0

    def test_xor_joint_two_bits(self, xor_dist):
        assert entropy(xor_dist, unit="bits") == pytest.approx(2.0, abs=1e-12)

    def test_direct_formula(self):
        p = ProbTensor(VarSubset.of(1), np.array([0.5, 0.25, 0.125, 0.125]))
        assert entropy(p, unit="bits") == pytest.approx(1.75, abs=1e-12)

    def test_monotone_under_refinement(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            p = random_distribution(rng, (3, 2, 4))
            small = entropy(p, VarSubset.of(2))
            big = entropy(p, VarSubset.of(1, 2))
            assert small <= big + 1e-12

    def test_unknown_unit(self):
        p = ProbTensor(VarSubset.of(1), np.array([0.5, 0.5]))
        with pytest.raises(DomainError):
            entropy(p, unit="hartleys")


class TestKL:
    def test_identity_is_zero(self):
        rng = np.random.default_rng(1)
        p = random_distribution(rng, (2, 3))
        assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-14)

    def test_correlated_pair_vs_uniform(self, correlated_pair):
        u = ProbTensor.uniform(VarSubset.of(1, 2), Shape((2, 2)))
        # 2 bits of uniform code length minus 1 bit of entropy
        assert kl_divergence(correlated_pair, u) == pytest.approx(LN2, abs=1e-12)

    def test_support_violation_reports_cell(self):
        u = ProbTensor.uniform(VarSubset.of(1, 2), Shape((2, 2)))
        point = ProbTensor(VarSubset.of(1, 2), np.array([[1.0, 0.0], [0.0, 0.0]]))
        with pytest.raises(DomainError, match=r"\(0, 1\)|\(1, 0\)|\(0, 0\)|\(1, 1\)"):
            kl_divergence(u, point)

    def test_nonnegative(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            p = random_distribution(rng, (3, 3))
            q = random_distribution(rng, (3, 3))
            assert kl_divergence(p, q) >= 0.0


class TestMmiAndJ:
    def test_xor_triple(self, xor_dist):
        full = VarSubset.of(1, 2, 3)
        assert mmi(xor_dist, full) == pytest.approx(-1.0, abs=1e-10)
        assert j_value(xor_dist, full) == pytest.approx(1.0, abs=1e-10)

    def test_xor_singleton_j_is_zero(self, xor_dist):
        assert j_value(xor_dist, VarSubset.of(1)) == pytest.approx(0.0, abs=1e-12)

    def test_independent_pair_zero(self):
        p = ProbTensor(VarSubset.of(1, 2), np.outer([0.3, 0.7], [0.6, 0.4]))
        assert mmi(p, VarSubset.of(1, 2)) == pytest.approx(0.0, abs=1e-12)

    def test_correlated_pair_one_bit(self, correlated_pair):
        s = VarSubset.of(1, 2)
        assert mmi(correlated_pair, s) == pytest.approx(1.0, abs=1e-12)
        assert j_value(correlated_pair, s) == pytest.approx(1.0, abs=1e-12)

    def test_empty_subset_rejected(self, xor_dist):
        with pytest.raises(DomainError):
            mmi(xor_dist, VarSubset.empty())

    def test_j_empty_is_zero(self, xor_dist):
        assert j_value(xor_dist, VarSubset.empty()) == 0.0

    def test_j_mmi_sign_identity(self):
        rng = np.random.default_rng(3)
        for _ in range(15):
            p = random_distribution(rng, (2, 3, 2))
            for s in (VarSubset.of(1, 2), VarSubset.of(2, 3), VarSubset.of(1, 2, 3)):
                lhs = j_value(p, s, unit="nats")
                rhs = (-1.0) ** len(s) * mmi(p, s, unit="nats")
                assert lhs == pytest.approx(rhs, abs=1e-10)

    def test_pairwise_mmi_nonnegative(self):
        rng = np.random.default_rng(4)
        for _ in range(15):
            p = random_distribution(rng, (3, 2, 3))
            for s in (VarSubset.of(1, 2), VarSubset.of(1, 3), VarSubset.of(2, 3)):
                assert mmi(p, s) >= -1e-12


class TestInformationLattice:
    def test_xor_full_lattice(self, xor_dist):
        lattice = information_lattice(xor_dist, unit="bits")
        order = [(), (1,), (2,), (3,), (1, 2), (1, 3), (2, 3), (1, 2, 3)]
        H = [lattice["H"][VarSubset(m)] for m in order]
        np.testing.assert_allclose(H, [0, 1, 1, 1, 2, 2, 2, 2], atol=1e-12)
        I = [lattice["I"][VarSubset(m)] for m in order]
        np.testing.assert_allclose(I, [0, 1, 1, 1, 0, 0, 0, -1], atol=1e-12)
        J = [lattice["J"][VarSubset(m)] for m in order]
        np.testing.assert_allclose(J, [0, 0, 0, 0, 0, 0, 0, 1], atol=1e-12)


class TestRefinedInformation:
    def test_zero_when_already_in_family(self):
        # independent product: adding the pair gains nothing
        p = ProbTensor(VarSubset.of(1, 2), np.outer([0.3, 0.7], [0.6, 0.4]))
        coll = InteractionCollection.of((1,), (2,))
        ri = refined_information(p, coll, VarSubset.of(1, 2))
        assert abs(ri) < 1e-9

    def test_equals_mutual_information_for_pairs(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            p = random_distribution(rng, (3, 4))
            coll = InteractionCollection.of((1,), (2,))
            ri = refined_information(p, coll, VarSubset.of(1, 2))
            mi = mmi(p, VarSubset.of(1, 2), unit="nats")
            assert ri == pytest.approx(mi, abs=1e-7)

    def test_xor_all_mass_on_triple(self, xor_dist):
        coll = InteractionCollection.up_to_order(3, 2)
        ri = refined_information(xor_dist, coll, VarSubset.of(1, 2, 3))
        assert ri == pytest.approx(LN2, abs=1e-8)
        # independent oracle: the pairwise projection is uniform per IPF
        proj = ipf_project(xor_dist, coll, tol=1e-10)
        np.testing.assert_allclose(proj.values, 0.125, atol=1e-9)

    def test_member_rejected(self, xor_dist):
        coll = InteractionCollection.of((1,))
        with pytest.raises(DomainError):
            refined_information(xor_dist, coll, VarSubset.of(1))

    def test_non_hierarchical_rejected(self, xor_dist):
        coll = InteractionCollection.of((1, 2))
        with pytest.raises(DomainError):
            refined_information(xor_dist, coll, VarSubset.of(1, 3))
        with pytest.raises(DomainError):
            # adjoining a triple without its pairs breaks the property
            refined_information(
                xor_dist, InteractionCollection.of((1,), (2,), (3,)), VarSubset.of(1, 2, 3)
            )


class TestCanonicalRI:
    def test_marginal_mode_is_mutual_information(self):
        rng = np.random.default_rng(6)
        p = random_distribution(rng, (2, 3, 2))
        s = VarSubset.of(1, 3)
        ri = canonical_ri(p, s, mode="marginal")
        mi = mmi(p, s, unit="nats")
        assert ri == pytest.approx(mi, abs=1e-7)

    def test_conditional_zero_on_fork(self):
        p = fork_distribution()
        s = VarSubset.of(2, 3)
        cond = canonical_ri(p, s, mode="conditional")
        marg = canonical_ri(p, s, mode="marginal")
        assert abs(cond) < 1e-8
        assert marg > 1e-3

    def test_uniform_is_zero_everywhere(self):
        u = ProbTensor.uniform(VarSubset.of(1, 2, 3), Shape((2, 2, 2)))
        for mode in ("marginal", "conditional"):
            assert abs(canonical_ri(u, VarSubset.of(1, 2), mode=mode)) < 1e-9

    def test_small_subset_rejected(self, xor_dist):
        with pytest.raises(DomainError):
            canonical_ri(xor_dist, VarSubset.of(1), mode="marginal")


class TestChain:
    def test_from_added_and_predicates(self):
        order = [VarSubset.of(1), VarSubset.of(2), VarSubset.of(1, 2)]
        chain = Chain.from_added(order)
        assert chain.is_complete(2)
        assert chain.is_maximally_refined()
        assert chain.added_subsets == tuple(order)

    def test_non_hierarchical_rejected(self):
        with pytest.raises(DomainError):
            Chain.from_added([VarSubset.of(1, 2)])

    def test_not_increasing_rejected(self):
        c = InteractionCollection.of((1,))
        with pytest.raises(DomainError):
            Chain((c, c))

    def test_random_maximal_chain_is_complete(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            chain = random_maximal_chain(3, rng)
            assert chain.is_complete(3)
            assert chain.is_maximally_refined()


class TestDecomposeChain:
    def test_two_variable_closed_forms(self):
        rng = np.random.default_rng(8)
        p = random_distribution(rng, (3, 2))
        chain = Chain.from_added([VarSubset.of(1), VarSubset.of(2), VarSubset.of(1, 2)])
        report = decompose_chain(p, chain)
        u1 = ProbTensor.uniform(VarSubset.of(1), Shape((3, 2)))
        u2 = ProbTensor.uniform(VarSubset.of(2), Shape((3, 2)))
        from mahgenta.core import marginalize

        expected = [
            kl_divergence(marginalize(p, VarSubset.of(1)), u1),
            kl_divergence(marginalize(p, VarSubset.of(2)), u2),
            mmi(p, VarSubset.of(1, 2), unit="nats"),
        ]
        got = [s.nats for s in report.steps]
        np.testing.assert_allclose(got, expected, atol=1e-7)
        assert report.total_kl == pytest.approx(sum(expected), abs=1e-7)

    def test_uniform_all_steps_zero(self):
        u = ProbTensor.uniform(VarSubset.of(1, 2), Shape((2, 2)))
        chain = Chain.from_added([VarSubset.of(1), VarSubset.of(2), VarSubset.of(1, 2)])
        report = decompose_chain(u, chain)
        assert all(abs(s.nats) < 1e-10 for s in report.steps)
        assert report.total_kl == pytest.approx(0.0, abs=1e-12)

    def test_xor_mass_on_triple_for_any_chain(self, xor_dist):
        rng = np.random.default_rng(9)
        chain = random_maximal_chain(3, rng)
        report = decompose_chain(xor_dist, chain)
        for step in report.steps:
            expected = LN2 if step.subset == VarSubset.of(1, 2, 3) else 0.0
            assert step.nats == pytest.approx(expected, abs=1e-8)
        assert report.total_kl == pytest.approx(LN2, abs=1e-12)

    def test_incomplete_chain_rejected(self, xor_dist):
        chain = Chain.from_added([VarSubset.of(1)])
        with pytest.raises(DomainError):
            decompose_chain(xor_dist, chain)

    def test_report_rejects_bad_sums(self):
        step = DecompositionStep(VarSubset.of(1), InteractionCollection(), 0.5)
        with pytest.raises(DomainError):
            DecompositionReport(steps=(step,), total_kl=1.0)
        with pytest.raises(DomainError):
            DecompositionReport(
                steps=(DecompositionStep(VarSubset.of(1), InteractionCollection(), -1e-6),),
                total_kl=-1e-6,
            )

    def test_json_report_shape(self, xor_dist):
        chain = Chain.from_added(
            [VarSubset.of(1), VarSubset.of(2), VarSubset.of(3),
             VarSubset.of(1, 2), VarSubset.of(1, 3), VarSubset.of(2, 3),
             VarSubset.of(1, 2, 3)]
        )
        payload = decompose_chain(xor_dist, chain).to_json_dict()
        assert payload["format_version"] == 1
        assert len(payload["steps"]) == 7
        assert payload["steps"][-1]["cumulative_fraction"] == pytest.approx(1.0, abs=1e-9)
        assert {"subset", "nats", "bits", "cumulative_fraction"} <= set(payload["steps"][0])


class TestGreedyChain:
    def test_greedy_on_xor_puts_triple_anywhere_valid(self, xor_dist):
        chain = greedy_chain(xor_dist)
        assert chain.is_complete(3)
        report = decompose_chain(xor_dist, chain)
        triple_step = [s for s in report.steps if s.subset == VarSubset.of(1, 2, 3)]
        assert triple_step[0].nats == pytest.approx(LN2, abs=1e-8)


class TestProjectionCacheReuse:
    def test_cache_shares_projections_across_chains(self):
        rng = np.random.default_rng(10)
        p = random_distribution(rng, (2, 2, 2))
        cache = ProjectionCache(p)
        c1 = random_maximal_chain(3, rng)
        c2 = random_maximal_chain(3, rng)
        r1 = decompose_chain(p, c1, cache=cache)
        r2 = decompose_chain(p, c2, cache=cache)
        assert sum(s.nats for s in r1.steps) == pytest.approx(
            sum(s.nats for s in r2.steps), abs=1e-8
        )
