import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from bmokit.core import bmo_norm
from bmokit.maps import (
    PointMap,
    compose,
    condition_i_fit,
    condition_ii_check,
    default_field_family,
    gotoh_iii_to_i,
    gotoh_roundtrip,
    implication_check,
    level_set_pairs,
    operator_norm_estimate,
    pair_densities,
    pair_family,
    preimage,
    prop_i_iii_pipeline,
    prop_ii_iii_pipeline,
    two_set_density,
)
from bmokit.space import grid_1d, grid_2d, tree_graph

masks10 = st.lists(st.booleans(), min_size=10, max_size=10).map(np.array)


class TestPointMap:
    def test_validation(self, grid8):
        with pytest.raises(ValueError):
            PointMap(grid8, np.arange(7))
        with pytest.raises(ValueError):
            PointMap(grid8, np.full(8, 8))
        with pytest.raises(ValueError):
            PointMap(grid8, np.zeros(8))  # floats are not point ids

    def test_isometry_flags(self):
        for sp in (grid_1d(8), grid_2d(4), grid_2d(3, metric="chebyshev")):
            assert PointMap.reflection(sp).is_measure_preserving_isometry
            assert PointMap.identity(sp).is_measure_preserving_isometry
            assert not PointMap.constant(sp, 0).is_measure_preserving_isometry
        assert not PointMap.reflection(grid_1d(8, exponent=1.0)).is_measure_preserving_isometry
        assert PointMap.identity(grid_1d(3)).null_preimages


class TestPreimageCompose:
    def test_examples(self, grid8):
        E = np.arange(8) < 3
        assert np.array_equal(preimage(PointMap.identity(grid8), E), E)
        assert preimage(PointMap.constant(grid8, 1), E).all()
        assert not preimage(PointMap.constant(grid8, 5), E).any()
        assert preimage(PointMap.reflection(grid8), np.ones(8, bool)).all()

    @given(a=masks10, b=masks10, img=st.lists(st.integers(0, 9), min_size=10, max_size=10))
    def test_set_algebra(self, a, b, img):
        F = PointMap(grid_1d(10), np.array(img))
        assert np.array_equal(preimage(F, ~a), ~preimage(F, a))
        assert np.array_equal(preimage(F, a | b), preimage(F, a) | preimage(F, b))
        assert np.array_equal(compose(a.astype(float), F), preimage(F, a).astype(float))

    @given(f=st.lists(st.floats(-3, 3), min_size=10, max_size=10), a=st.floats(-2, 2),
           c=st.floats(-2, 2), img=st.lists(st.integers(0, 9), min_size=10, max_size=10))
    def test_linear_unital(self, f, a, c, img):
        F = PointMap(grid_1d(10), np.array(img))
        f = np.array(f)
        assert np.allclose(compose(a * f + c, F), a * compose(f, F) + c)

    def test_constant_map_gives_constant_field(self, grid8):
        g = compose(np.arange(8.0), PointMap.constant(grid8, 3))
        assert (g == 3).all() and bmo_norm(grid8, g)[0] == 0


class TestTwoSetDensity:
    def test_examples(self, grid8):
        E1 = np.arange(8) < 4
        assert two_set_density(grid8, E1, ~E1) == 0.5
        assert two_set_density(grid8, np.zeros(8, bool), E1) == 0.0
        assert two_set_density(grid8, np.ones(8, bool), np.ones(8, bool)) == 1.0

    @given(a=masks10, b=masks10)
    def test_vectorized_matches_oracle(self, a, b):
        sp = tree_graph(10, seed=4)
        want = oracles.density(sp, [a, b], oracles.radius_grid(sp))
        assert pair_densities(sp, a[None], b[None])[0] == pytest.approx(want, abs=1e-15)
        assert two_set_density(sp, a, b) == pytest.approx(want, abs=1e-15)

    def test_isometry_invariance(self):
        sp = grid_2d(4)
        F = PointMap.reflection(sp)
        E1s, E2s, _ = pair_family(sp, 60, seed=3)
        assert np.allclose(pair_densities(sp, E1s, E2s),
                           pair_densities(sp, E1s[:, F.image], E2s[:, F.image]), rtol=0, atol=1e-15)


class TestPairFamily:
    def test_seeded_and_headed_by_full_pair(self, grid8):
        a = pair_family(grid8, 20, seed=5)
        b = pair_family(grid8, 20, seed=5)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
        assert a[0][0].all() and a[1][0].all()
        assert set(a[2]) == {"full", "random", "balls", "distance", "halves"}

    def test_prefix_stable(self, grid8):
        short, long = pair_family(grid8, 10, seed=1), pair_family(grid8, 30, seed=1)
        assert np.array_equal(short[0], long[0][:11])

    def test_exhaustive(self):
        sp = grid_1d(4)
        E1s, E2s, _ = pair_family(sp, exhaustive=True)
        assert len(E1s) == 256
        with pytest.raises(ValueError):
            pair_family(grid_1d(13), exhaustive=True)

    def test_level_sets(self):
        f = np.array([0.0, 1.0, 1.0, 2.0])
        E1, E2, gaps = level_set_pairs(f)
        assert len(gaps) == 6 and (gaps >= 0).all()


class TestConditionI:
    @pytest.mark.parametrize("make", [PointMap.identity, PointMap.reflection])
    def test_isometries(self, make):
        for sp in (grid_1d(8), grid_2d(4)):
            K, alpha, rep = condition_i_fit(sp, make(sp), trials=200)
            assert (K, alpha) == (1.0, 1.0)

    def test_exhaustive_reflection(self):
        sp = grid_1d(6)
        pairs = pair_family(sp, exhaustive=True)
        K, alpha, _ = condition_i_fit(sp, PointMap.reflection(sp), pairs)
        assert (K, alpha) == (1.0, 1.0)

    def test_K_at_least_one(self):
        sp = tree_graph(12, seed=0)
        rng = np.random.default_rng(0)
        F = PointMap(sp, rng.integers(0, 12, size=12))
        K, alpha, rep = condition_i_fit(sp, F, trials=100)
        assert K >= 1 and 0 < alpha <= 1
        assert (rep.K_grid >= 1).all()


class TestConditionII:
    def test_identity_passes(self, grid8):
        assert condition_ii_check(grid8, PointMap.identity(grid8), 0.2, 0.2).status == "pass"

    def test_gamma_range(self, grid8):
        with pytest.raises(ValueError):
            condition_ii_check(grid8, PointMap.identity(grid8), 0.3, 0.1)

    def test_reports_stromberg_cap(self, grid8):
        v = condition_ii_check(grid8, PointMap.reflection(grid8), 0.1, 0.1)
        assert v.detail["stromberg_gamma_cap"] == pytest.approx(1 / (4 * grid8.c_D**3))

    def test_folding_map_fails(self):
        # folding the line onto its left half doubles preimage shares
        sp = grid_1d(8)
        F = PointMap(sp, np.array([0, 1, 2, 3, 3, 2, 1, 0]))
        v = condition_ii_check(sp, F, 0.2, 0.5, trials=200)
        assert v.status == "fail" and "witness" in v.detail

    @pytest.mark.parametrize("seed", range(3))
    def test_implication_random_maps(self, seed):
        sp = grid_1d(10)
        F = PointMap(sp, np.random.default_rng(seed).integers(0, 10, size=10))
        out = implication_check(sp, F, trials=200, seed=seed)
        assert out["counterexamples"] == []


class TestOperatorNorm:
    def test_identity_exact(self, grid8):
        assert operator_norm_estimate(grid8, PointMap.identity(grid8))[0] == 1.0

    def test_reflection(self):
        sp = grid_2d(4)
        assert operator_norm_estimate(sp, PointMap.reflection(sp))[0] == pytest.approx(1.0, abs=1e-12)

    def test_constant(self, grid8):
        norm, _ = operator_norm_estimate(grid8, PointMap.constant(grid8, 2))
        assert norm == 0.0

    def test_empty_family(self, grid8):
        with pytest.raises(ValueError):
            operator_norm_estimate(grid8, PointMap.identity(grid8), [np.ones(8)])

    def test_family_contents(self, grid8n):
        fam = default_field_family(grid8n, seed=0, count=2)
        assert len(fam) == 6
        assert all(f.shape == (8,) for f in fam)


class TestRoundTrip:
    def test_identity_partition(self, grid8n):
        E1 = np.arange(8) < 4
        out = gotoh_iii_to_i(grid8n, PointMap.identity(grid8n), E1, ~E1)
        assert out["preimage_density"] == out["input_density"] == 0.5
        assert out["holds"]

    def test_zero_density_sentinel(self, grid8n):
        out = gotoh_iii_to_i(grid8n, PointMap.identity(grid8n), np.zeros(8, bool), np.ones(8, bool))
        assert out["skipped"] and out["holds"]

    @pytest.mark.parametrize("make", [PointMap.identity, PointMap.reflection])
    def test_all_instances_hold(self, make):
        sp = grid_2d(4, normalize=True)
        assert gotoh_roundtrip(sp, make(sp), trials=30)["all_hold"]

    def test_random_map(self):
        sp = grid_1d(10, normalize=True)
        F = PointMap(sp, np.random.default_rng(1).integers(0, 10, size=10))
        assert gotoh_roundtrip(sp, F, trials=30)["all_hold"]


class TestPipelines:
    @pytest.mark.parametrize("make", [PointMap.identity, PointMap.reflection])
    def test_i_iii_isometries(self, grid8, make):
        v = prop_i_iii_pipeline(grid8, make(grid8))
        assert v.status == "pass" and v.detail["K"] == 1.0 and v.detail["alpha"] == 1.0

    def test_i_iii_constant(self, grid8):
        v = prop_i_iii_pipeline(grid8, PointMap.constant(grid8, 0))
        assert v.status == "pass"
        assert all(r["ratio"] == 0 for r in v.detail["fields"])

    def test_i_iii_random_map(self):
        sp = tree_graph(10, seed=6)
        F = PointMap(sp, np.random.default_rng(2).integers(0, 10, size=10))
        assert prop_i_iii_pipeline(sp, F, trials=100).status == "pass"

    @pytest.mark.parametrize("make", [PointMap.identity, PointMap.reflection])
    def test_ii_iii_isometries(self, grid8, make):
        v = prop_ii_iii_pipeline(grid8, make(grid8), gamma=1e-3, lam=1e-3)
        assert v.status == "pass"
        assert all(r["condition_ii"] for r in v.detail["fields"])
        # fields are normalized to unit norm before composing
        assert all(r["norm_of_composition"] <= r["bound"] for r in v.detail["fields"])
