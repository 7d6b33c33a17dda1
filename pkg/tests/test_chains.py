import itertools
import math
from collections import deque

import numpy as np
import pytest

from asepmix.chains import (ExclusionSpace, HeightFunction, ModelParams,
                            ParticleConfig, Permutation, ShuffleSpace, area,
                            corner_moves, equilibrium_asep, equilibrium_shuffle,
                            flip, frontier, height, in_frontier_window,
                            inversions, leq, leq_perm, project, reconstruct,
                            unheight, vee, wedge)
from asepmix.errors import CapExceeded
from conftest import random_config, random_height


class TestTypes:
    def test_permutation_validation(self):
        with pytest.raises(ValueError):
            Permutation((1, 1, 3))
        assert Permutation.identity(4).images == (1, 2, 3, 4)
        assert Permutation.reversal(4).images == (4, 3, 2, 1)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ParticleConfig((1, 1))  # no empty site
        with pytest.raises(ValueError):
            ParticleConfig((0, 2))
        assert ParticleConfig.from_string("0101").k == 2

    def test_height_validation(self):
        with pytest.raises(ValueError):
            HeightFunction((1, 0))
        with pytest.raises(ValueError):
            HeightFunction((0, 2))
        h = HeightFunction((0, 1, 0, -1))
        assert (h.n, h.k) == (3, 1)

    def test_params(self):
        params = ModelParams(0.75)
        assert params.q == 0.25 and params.odds == 3.0
        assert abs(params.gap_limit - (math.sqrt(0.75) - math.sqrt(0.25)) ** 2) < 1e-15
        assert ModelParams(1.0).odds == math.inf
        with pytest.raises(ValueError):
            ModelParams(0.5)


class TestInversions:
    def test_identity(self):
        for n in (2, 3, 5, 7):
            assert inversions(Permutation.identity(n)) == 0

    def test_reversal_n4(self):
        # every one of the C(4,2) pairs is out of order
        assert inversions(Permutation.reversal(4)) == 6

    def test_explicit(self):
        assert inversions(Permutation((2, 3, 1))) == 2

    def test_bfs_distance_oracle(self):
        # graph distance from identity under adjacent swaps, n <= 5
        for n in (3, 4, 5):
            start = tuple(range(1, n + 1))
            dist = {start: 0}
            queue = deque([start])
            while queue:
                cur = queue.popleft()
                for i in range(n - 1):
                    nxt = list(cur)
                    nxt[i], nxt[i + 1] = nxt[i + 1], nxt[i]
                    nxt = tuple(nxt)
                    if nxt not in dist:
                        dist[nxt] = dist[cur] + 1
                        queue.append(nxt)
            for im, d in dist.items():
                assert inversions(Permutation(im)) == d


class TestArea:
    def test_packed_right_zero(self):
        for n, k in ((4, 2), (7, 3), (9, 8)):
            assert area(unheight(vee(n, k))) == 0

    def test_packed_left_closed_form(self):
        for n, k in ((4, 2), (7, 3), (9, 8)):
            cfg = unheight(wedge(n, k))
            direct = sum((n - i) * b for i, b in
                         zip(range(1, n + 1), cfg.occupied)) - k * (k - 1) // 2
            assert area(cfg) == direct == k * (n - k)

    def test_explicit(self):
        assert area(ParticleConfig((1, 0, 1, 0))) == 3


class TestEquilibria:
    def test_two_state_shuffle(self):
        pi = equilibrium_shuffle(2, ModelParams(0.75))
        space = ShuffleSpace(2)
        assert pi.probs[space.index(Permutation.identity(2))] == pytest.approx(0.75)
        assert pi.probs[space.index(Permutation.reversal(2))] == pytest.approx(0.25)

    def test_totally_asymmetric_point_masses(self):
        p1 = ModelParams(1.0)
        pi = equilibrium_shuffle(4, p1)
        assert pi.probs[ShuffleSpace(4).index(Permutation.identity(4))] == 1.0
        pia = equilibrium_asep(5, 2, p1)
        assert pia.probs[ExclusionSpace(5, 2).index(unheight(vee(5, 2)))] == 1.0

    def test_weight_ratios(self):
        params = ModelParams(0.75)
        pi = equilibrium_shuffle(3, params)
        space = ShuffleSpace(3)
        ratio = pi.probs[space.index(Permutation.reversal(3))] / \
            pi.probs[space.index(Permutation.identity(3))]
        assert ratio == pytest.approx(3.0 ** -3, rel=1e-12)
        pia = equilibrium_asep(4, 2, params)
        aspace = ExclusionSpace(4, 2)
        ratio = pia.probs[aspace.index(unheight(wedge(4, 2)))] / \
            pia.probs[aspace.index(unheight(vee(4, 2)))]
        assert ratio == pytest.approx(3.0 ** -4, rel=1e-12)

    def test_two_site_asep(self):
        pi = equilibrium_asep(2, 1, ModelParams(0.75))
        space = ExclusionSpace(2, 1)
        assert pi.probs[space.index(ParticleConfig((0, 1)))] == pytest.approx(0.75)
        assert pi.probs[space.index(ParticleConfig((1, 0)))] == pytest.approx(0.25)

    def test_detailed_balance(self):
        for n, k, p in ((4, 2, 0.6), (5, 2, 0.75), (6, 3, 0.9)):
            params = ModelParams(p)
            space = ExclusionSpace(n, k)
            pi = equilibrium_asep(n, k, params)
            for i, cfg in enumerate(space.states()):
                h = height(cfg)
                for x, newv, rate in corner_moves(h, params):
                    j = space.index(unheight(flip(h, x)))
                    back = params.q if rate == params.p else params.p
                    assert pi.probs[i] * rate == pytest.approx(
                        pi.probs[j] * back, rel=1e-12)

    def test_image_measure(self):
        for n in (3, 4, 5, 6):
            params = ModelParams(0.75)
            pis = equilibrium_shuffle(n, params)
            sspace = ShuffleSpace(n)
            for k in range(1, n):
                aspace = ExclusionSpace(n, k)
                mapping = np.array([aspace.index(unheight(project(s, k)))
                                    for s in sspace.states()])
                pushed = pis.pushforward(mapping, aspace)
                assert pushed.tv(equilibrium_asep(n, k, params)) < 1e-12

    def test_particle_hole_symmetry(self):
        for n, k, p in ((5, 2, 0.75), (6, 2, 0.6), (7, 3, 0.9)):
            params = ModelParams(p)
            pi_k = equilibrium_asep(n, k, params)
            pi_c = equilibrium_asep(n, n - k, params)
            space_k = ExclusionSpace(n, k)
            space_c = ExclusionSpace(n, n - k)
            for prob, cfg in zip(pi_k.probs, space_k.states()):
                mirrored = ParticleConfig(tuple(1 - b for b in cfg.occupied[::-1]))
                assert abs(prob - pi_c.probs[space_c.index(mirrored)]) < 1e-14

    def test_caps(self):
        with pytest.raises(CapExceeded):
            equilibrium_shuffle(8, ModelParams(0.75))
        with pytest.raises(CapExceeded):
            ExclusionSpace(40, 20)
        ShuffleSpace(8, force=True)


class TestHeightConversions:
    def test_explicit(self):
        h = height(ParticleConfig((1, 0, 1, 0)))
        assert h.values == (0, 1, 0, 1, 0)
        assert height(unheight(wedge(4, 2))).values == (0, 1, 2, 1, 0)

    def test_roundtrip(self, rng):
        for _ in range(1000):
            n = int(rng.integers(2, 16))
            k = int(rng.integers(1, n))
            cfg = random_config(rng, n, k)
            assert unheight(height(cfg)) == cfg

    def test_unheight_rejects_bad_values(self):
        with pytest.raises(ValueError):
            HeightFunction((0, 1, 3))


class TestProjection:
    def test_identity_projects_to_bottom(self):
        for n in (3, 5, 6):
            for k in range(1, n):
                assert project(Permutation.identity(n), k) == vee(n, k)

    def test_reversal_projects_to_top(self):
        for n in (3, 5, 6):
            for k in range(1, n):
                assert project(Permutation.reversal(n), k) == wedge(n, k)

    def test_k_range(self):
        with pytest.raises(ValueError):
            project(Permutation.identity(4), 4)

    def test_reconstruct_roundtrip(self, rng):
        for _ in range(1000):
            n = int(rng.integers(2, 8))
            sigma = Permutation(tuple(int(v) for v in rng.permutation(n) + 1))
            heights = [project(sigma, k) for k in range(1, n)]
            assert reconstruct(heights) == sigma

    def test_reconstruct_extremes(self):
        n = 5
        assert reconstruct([vee(n, k) for k in range(1, n)]) == Permutation.identity(n)
        assert reconstruct([wedge(n, k) for k in range(1, n)]) == Permutation.reversal(n)

    def test_reconstruct_rejects_corrupted(self, rng):
        n = 6
        sigma = Permutation(tuple(int(v) for v in rng.permutation(n) + 1))
        heights = [project(sigma, k) for k in range(1, n)]
        other = Permutation(tuple(int(v) for v in rng.permutation(n) + 1))
        heights[2] = project(other, 3)
        if other != sigma:
            with pytest.raises(ValueError):
                reconstruct(heights)

    def test_permutation_order_extremes(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 7))
            sigma = Permutation(tuple(int(v) for v in rng.permutation(n) + 1))
            assert leq_perm(Permutation.identity(n), sigma)
            assert leq_perm(sigma, Permutation.reversal(n))


class TestOrder:
    def test_extremes(self):
        for n, k in ((4, 2), (7, 3)):
            assert leq(vee(n, k), wedge(n, k))
            assert leq(vee(n, k), vee(n, k))

    def test_everything_between_extremes(self, rng):
        for _ in range(200):
            n = int(rng.integers(2, 20))
            k = int(rng.integers(1, n))
            h = random_height(rng, n, k)
            assert leq(vee(n, k), h) and leq(h, wedge(n, k))

    def test_explicit(self):
        assert leq(HeightFunction((0, 1, 0, 1, 0)), HeightFunction((0, 1, 2, 1, 0)))

    def test_mismatch_rejected(self):
        with pytest.raises(ValueError):
            leq(vee(4, 2), vee(4, 3))


class TestFrontier:
    def test_extreme_states(self):
        assert frontier(vee(4, 2)) == (2, 2)
        assert frontier(wedge(4, 2)) == (0, 4)

    def test_bottom_is_always_in_window(self):
        for n, k in ((4, 2), (10, 3), (12, 11)):
            assert in_frontier_window(vee(n, k), 0.0)

    def test_matches_particle_positions(self, rng):
        for _ in range(300):
            n = int(rng.integers(2, 20))
            k = int(rng.integers(1, n))
            cfg = random_config(rng, n, k)
            ell, r = frontier(height(cfg))
            leftmost = min(i for i, b in enumerate(cfg.occupied, start=1) if b)
            rightmost = max(i for i, b in enumerate(cfg.occupied, start=1) if not b)
            assert ell == leftmost - 1
            assert r == rightmost

    def test_ordering_around_equilibrium_site(self, rng):
        for _ in range(200):
            n = int(rng.integers(2, 20))
            k = int(rng.integers(1, n))
            ell, r = frontier(random_height(rng, n, k))
            assert ell <= n - k <= r


class TestSpaces:
    def test_rank_unrank_exclusion(self, rng):
        space = ExclusionSpace(9, 4)
        for rank in rng.integers(0, space.size, size=50):
            assert space.index(space.state(int(rank))) == rank
        seen = {space.index(ParticleConfig(tuple(int(i in c) for i in range(9))))
                for c in itertools.combinations(range(9), 4)}
        assert seen == set(range(space.size))

    def test_rank_unrank_shuffle(self, rng):
        space = ShuffleSpace(5)
        for rank in rng.integers(0, space.size, size=50):
            assert space.index(space.state(int(rank))) == rank
