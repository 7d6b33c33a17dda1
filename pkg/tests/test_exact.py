import math

import numpy as np
import pytest
from scipy.linalg import expm

from asepmix.chains import (ExclusionSpace, ModelParams, Permutation,
                            ShuffleSpace, project, unheight, vee, wedge)
from asepmix import exact, spectral


PARAMS = ModelParams(0.75)


def asep_gen(n, k, p=0.75):
    return exact.build_generator(ExclusionSpace(n, k), ModelParams(p))


class TestBuildGenerator:
    def test_two_state_matrix(self):
        gen = asep_gen(2, 1)
        assert np.allclose(gen.rates.toarray(), [[-0.75, 0.75], [0.25, -0.25]])

    def test_rows_sum_to_zero(self):
        for gen in (asep_gen(6, 3), exact.build_generator(ShuffleSpace(4), PARAMS)):
            assert np.abs(np.asarray(gen.rates.sum(axis=1))).max() < 1e-14
            off = gen.rates.toarray() - np.diag(gen.rates.diagonal())
            assert off.min() >= 0.0

    def test_stationarity(self):
        for n in range(2, 9):
            for k in (1, n // 2, n - 1):
                if not 1 <= k <= n - 1:
                    continue
                gen = asep_gen(n, k)
                pi = gen.stationary()
                assert np.abs(pi.probs @ gen.rates.toarray()).max() < 1e-12

    def test_shuffle_three_cards_structure(self):
        # hand enumeration: each permutation has two adjacent pairs; an
        # inverted pair leaves at rate p, a sorted one at rate q
        gen = exact.build_generator(ShuffleSpace(3), PARAMS)
        q = gen.rates.toarray()
        space = ShuffleSpace(3)
        assert space.size == 6
        for i, sigma in enumerate(space.states()):
            row = q[i].copy()
            row[i] = 0.0
            assert (row > 0).sum() == 2
            im = list(sigma.images)
            for edge in (0, 1):
                expected = PARAMS.p if im[edge] > im[edge + 1] else PARAMS.q
                im[edge], im[edge + 1] = im[edge + 1], im[edge]
                j = space.index(Permutation(tuple(im)))
                im[edge], im[edge + 1] = im[edge + 1], im[edge]
                assert q[i, j] == pytest.approx(expected)
            adj_inv = sum(1 for e in (0, 1) if im[e] > im[e + 1])
            assert row.sum() == pytest.approx(
                PARAMS.p * adj_inv + PARAMS.q * (2 - adj_inv))

    def test_irreducible_below_one(self):
        from scipy.sparse.csgraph import connected_components
        gen = asep_gen(6, 2)
        ncomp, _ = connected_components(gen.rates != 0, directed=True,
                                        connection="strong")
        assert ncomp == 1


class TestDistributionAt:
    def test_time_zero_point_mass(self):
        gen = asep_gen(5, 2)
        d = exact.distribution_at(gen, 3, 0.0)
        assert d.probs[3] == 1.0

    def test_two_state_closed_form(self):
        gen = asep_gen(2, 1)
        top = gen.space.index(unheight(wedge(2, 1)))
        d = exact.distribution_at(gen, top, 1.0)
        assert d.probs[top] == pytest.approx(0.25 + 0.75 * math.exp(-1), abs=1e-10)

    def test_converges_to_stationary(self):
        for n, k in ((4, 2), (6, 3)):
            gen = asep_gen(n, k)
            pi = gen.stationary()
            gap = spectral.gap_formula(n, PARAMS)
            d = exact.distribution_at(gen, 0, 40.0 / gap)
            assert exact.tv(d, pi) < 1e-8

    def test_uniformization_vs_expm(self, rng):
        for _ in range(5):
            p = float(rng.uniform(0.55, 0.95))
            gen = asep_gen(5, 2, p)
            t = float(rng.uniform(0.1, 4.0))
            m1 = exact.transition_matrix(gen, t)
            m2 = expm(gen.rates.toarray() * t)
            assert np.abs(m1 - m2).max() < 1e-9

    def test_absorbing_chain(self):
        gen = asep_gen(4, 2, p=1.0)
        bottom = gen.space.index(unheight(vee(4, 2)))
        d = exact.distribution_at(gen, bottom, 5.0)
        assert d.probs[bottom] == pytest.approx(1.0)


class TestTv:
    def test_zero_and_one(self):
        assert exact.tv([0.5, 0.5], [0.5, 0.5]) == 0.0
        assert exact.tv([1.0, 0.0], [0.0, 1.0]) == 1.0

    def test_explicit(self):
        assert exact.tv([0.75, 0.25], [0.25, 0.75]) == pytest.approx(0.5)

    def test_mismatch(self):
        with pytest.raises(ValueError):
            exact.tv([1.0], [0.5, 0.5])


class TestWorstDistance:
    def test_two_state_closed_form(self):
        gen = asep_gen(2, 1)
        pi = gen.stationary()
        top = gen.space.index(unheight(wedge(2, 1)))
        for t in (0.3, 1.0, 2.5):
            wd = exact.worst_distance(gen, pi, t)
            assert wd.d == pytest.approx(0.75 * math.exp(-t), abs=1e-10)
            assert wd.argmax == top

    def test_sandwich(self):
        for n, k in ((4, 2), (5, 2)):
            gen = asep_gen(n, k)
            pi = gen.stationary()
            for t in (0.0, 0.5, 2.0, 6.0):
                wd = exact.worst_distance(gen, pi, t, pairwise=True)
                assert wd.d <= wd.dbar + 1e-12
                assert wd.dbar <= 2 * wd.d + 1e-9

    def test_pairwise_below_contraction_bound(self):
        for n in (4, 5, 6):
            k = n // 2
            gen = asep_gen(n, k)
            pi = gen.stationary()
            for t in (0.0, 1.0, 3.0, 8.0):
                wd = exact.worst_distance(gen, pi, t, pairwise=True)
                assert wd.dbar <= spectral.contraction_bound(t, n, k, PARAMS) + 1e-9

    def test_nonincreasing_on_grid(self):
        gen = asep_gen(6, 2)
        pi = gen.stationary()
        ts = np.linspace(0.0, 12.0, 25)
        ds = [exact.worst_distance(gen, pi, t).d for t in ts]
        assert all(b <= a + 1e-10 for a, b in zip(ds, ds[1:]))


class TestMixingTime:
    def test_two_state_log_three(self):
        gen = asep_gen(2, 1)
        pi = gen.stationary()
        assert exact.mixing_time(gen, pi, 0.25) == pytest.approx(math.log(3), abs=1e-6)

    def test_trivial_at_large_eps(self):
        gen = asep_gen(4, 2)
        pi = gen.stationary()
        d0 = exact.worst_distance(gen, pi, 0.0).d
        assert exact.mixing_time(gen, pi, min(0.999, d0 + 1e-3)) == 0.0

    def test_trend_toward_cutoff_constant(self):
        vals = []
        for n in (4, 6, 8):
            gen = asep_gen(n, n // 2)
            pi = gen.stationary()
            vals.append(exact.mixing_time(gen, pi, 0.25) / (n / 0.5))
        assert vals[0] < vals[1] < vals[2] < 2.0


class TestExactGap:
    def test_two_state(self):
        gen = asep_gen(2, 1)
        assert exact.exact_gap(gen) == pytest.approx(1.0, abs=1e-12)

    def test_matches_formula_asep(self):
        for n in range(2, 9):
            for k in range(1, n):
                for p in (0.6, 0.75, 0.9):
                    gen = asep_gen(n, k, p)
                    assert abs(exact.exact_gap(gen)
                               - spectral.gap_formula(n, ModelParams(p))) < 1e-9

    def test_matches_formula_shuffle(self):
        for n in range(2, 6):
            for p in (0.6, 0.75, 0.9):
                gen = exact.build_generator(ShuffleSpace(n), ModelParams(p))
                assert abs(exact.exact_gap(gen)
                           - spectral.gap_formula(n, ModelParams(p))) < 1e-9

    def test_totally_asymmetric_decay_rate(self):
        for n, k in ((4, 2), (6, 3), (7, 2)):
            gen = asep_gen(n, k, p=1.0)
            assert exact.exact_gap(gen) == pytest.approx(1.0)


class TestAsymptoticRate:
    def test_log_slope_matches_gap(self):
        for n, k in ((5, 2), (6, 3)):
            gen = asep_gen(n, k)
            pi = gen.stationary()
            gap = exact.exact_gap(gen, pi)
            t1, t2 = 20.0 / gap, 40.0 / gap
            d1, d2 = exact.spectral_tv_curve(gen, pi, [t1, t2])
            slope = (math.log(d2) - math.log(d1)) / (t2 - t1)
            assert abs(-slope - gap) / gap < 0.01

    def test_spectral_curve_matches_uniformization(self):
        gen = asep_gen(6, 3)
        pi = gen.stationary()
        for t in (0.5, 2.0, 8.0):
            du = exact.worst_distance(gen, pi, t).d
            ds = float(exact.spectral_tv_curve(gen, pi, [t])[0])
            assert du == pytest.approx(ds, abs=1e-9)


class TestProjectionConsistency:
    def test_pushforward_of_transient_law(self):
        for n in (3, 4, 5):
            sspace = ShuffleSpace(n)
            sgen = exact.build_generator(sspace, PARAMS)
            xi = Permutation.reversal(n)
            for k in range(1, n):
                aspace = ExclusionSpace(n, k)
                agen = exact.build_generator(aspace, PARAMS)
                mapping = np.array([aspace.index(unheight(project(s, k)))
                                    for s in sspace.states()])
                for t in (0.4, 1.3):
                    pushed = exact.distribution_at(sgen, sspace.index(xi), t) \
                        .pushforward(mapping, aspace)
                    direct = exact.distribution_at(
                        agen, aspace.index(unheight(project(xi, k))), t)
                    assert exact.tv(pushed, direct) < 1e-9


class TestFrontierTail:
    def test_bound_plugin_value(self):
        # odds 3, gap 5: 3**(-2) * 6 / (3-1)**2 = 1/6
        assert exact.frontier_tail_bound(5, PARAMS) == pytest.approx(1.0 / 6.0)

    def test_gap_cannot_exceed_sites(self):
        for n, k in ((5, 2), (8, 4)):
            exact_tail, _ = exact.stationary_frontier_tail(n, k, PARAMS, n + 1)
            assert exact_tail == 0.0

    def test_exact_below_bound(self):
        for m in range(1, 10):
            exact_tail, bound = exact.stationary_frontier_tail(8, 4, PARAMS, m)
            assert exact_tail <= bound + 1e-12

    def test_monotone_in_gap(self):
        tails = [exact.stationary_frontier_tail(8, 4, PARAMS, m)[0]
                 for m in range(0, 9)]
        assert all(b <= a + 1e-15 for a, b in zip(tails, tails[1:]))
