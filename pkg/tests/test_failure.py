"""Failure model: probability derivation, the exact failure-count
distribution, its brute-force oracle, and SLO-driven spare sizing."""

import json
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lumionsim.errors import DomainError
from lumionsim.failure import (
    DpMatrix,
    Granularity,
    SloPolicy,
    SrgSpec,
    brute_force_z,
    build_dp,
    derive_p_fail,
    load_population,
    min_spares,
    sample_probabilities,
    z_of_k,
)

probabilities = st.lists(
    st.floats(min_value=0.0, max_value=1.0, allow_nan=False), min_size=0, max_size=12
)


class TestDeriveProbability:
    def test_never_faulty(self):
        assert derive_p_fail(0.0, 100.0) == 0.0

    def test_always_faulty(self):
        assert derive_p_fail(100.0, 0.0) == 1.0

    def test_ratio(self):
        assert derive_p_fail(2.0, 198.0) == pytest.approx(0.01, abs=1e-15)

    def test_zero_total_duration(self):
        with pytest.raises(DomainError):
            derive_p_fail(0.0, 0.0)

    def test_negative_duration(self):
        with pytest.raises(DomainError):
            derive_p_fail(-1.0, 5.0)


class TestBuildDp:
    def test_empty_population(self):
        dp = build_dp([])
        assert dp.n == 0
        assert dp.rows.tolist() == [[1.0]]

    def test_fair_coins(self):
        dp = build_dp([0.5, 0.5])
        assert dp.rows[2].tolist() == [0.25, 0.5, 0.25]

    def test_three_group_corners(self):
        # brute force: product over all 2^3 failure subsets
        dp = build_dp([0.1, 0.2, 0.3])
        assert dp.rows[3][0] == pytest.approx(0.504, abs=1e-15)
        assert dp.rows[3][3] == pytest.approx(0.006, abs=1e-15)

    def test_rejects_bad_probability(self):
        with pytest.raises(DomainError):
            build_dp([0.5, 1.2])
        with pytest.raises(DomainError):
            build_dp([-0.1])

    @given(probabilities)
    @settings(max_examples=60, deadline=None)
    def test_rows_are_distributions(self, p):
        dp = build_dp(p)
        rows = dp.rows
        for i in range(dp.n + 1):
            assert abs(rows[i, : i + 1].sum() - 1.0) <= 1e-9
            assert np.all(rows[i] >= 0.0) and np.all(rows[i] <= 1.0)
            assert np.all(rows[i, i + 1 :] == 0.0)

    @given(probabilities, st.randoms(use_true_random=False))
    @settings(max_examples=40, deadline=None)
    def test_final_row_permutation_invariant(self, p, rng):
        shuffled = list(p)
        rng.shuffle(shuffled)
        a = build_dp(p).rows[len(p)]
        b = build_dp(shuffled).rows[len(p)]
        assert np.max(np.abs(a - b)) <= 1e-12 if len(p) else True


class TestZOfK:
    def test_single_group(self):
        assert z_of_k(build_dp([0.3]), 1) == pytest.approx(0.3, abs=1e-15)

    def test_two_coins(self):
        assert z_of_k(build_dp([0.5, 0.5]), 1) == pytest.approx(0.75, abs=1e-15)

    def test_three_tenths(self):
        # 3 * 0.01 * 0.9 + 0.001
        assert z_of_k(build_dp([0.1] * 3), 2) == pytest.approx(0.028, abs=1e-15)

    def test_boundaries(self):
        dp = build_dp([0.2, 0.4, 0.9])
        assert z_of_k(dp, 0) == 1.0
        assert z_of_k(dp, dp.n + 1) == 0.0

    def test_out_of_range(self):
        dp = build_dp([0.2])
        with pytest.raises(DomainError):
            z_of_k(dp, -1)
        with pytest.raises(DomainError):
            z_of_k(dp, dp.n + 2)

    @given(probabilities)
    @settings(max_examples=60, deadline=None)
    def test_non_increasing_in_k(self, p):
        dp = build_dp(p)
        values = [z_of_k(dp, k) for k in range(dp.n + 2)]
        assert values[0] == 1.0
        for a, b in zip(values, values[1:]):
            assert a >= b

    @given(probabilities, st.integers(min_value=0, max_value=13))
    @settings(max_examples=80, deadline=None)
    def test_agrees_with_brute_force(self, p, k):
        k = min(k, len(p) + 1)
        dp = build_dp(p)
        assert abs(z_of_k(dp, k) - brute_force_z(p, k)) <= 1e-12


class TestBruteForce:
    def test_two_coins_both(self):
        assert brute_force_z([0.5, 0.5], 2) == pytest.approx(0.25, abs=1e-15)

    def test_complement_of_none(self):
        # 1 - 0.9 * 0.8 * 0.7
        assert brute_force_z([0.1, 0.2, 0.3], 1) == pytest.approx(0.496, abs=1e-15)

    def test_all_zero(self):
        assert brute_force_z([0.0] * 5, 1) == 0.0

    def test_scale_guard(self):
        with pytest.raises(DomainError):
            brute_force_z([0.1] * 21, 1)


class TestMinSpares:
    def test_zero_probabilities(self):
        assert min_spares([0.0] * 64, SloPolicy(95.0)) == 1

    def test_uniform_tpu_population(self):
        # binomial tail oracle: smallest K with sf(K-1; 64, 0.01) <= 0.05 is 3
        assert min_spares([0.01] * 64, SloPolicy(95.0)) == 3

    def test_uniform_server_population(self):
        # sf(K-1; 16, 0.05) <= 0.05 first at K = 3; at p=0.02 two suffice
        assert min_spares([0.05] * 16, SloPolicy(95.0)) == 3
        assert min_spares([0.02] * 16, SloPolicy(95.0)) == 2

    def test_matches_binomial_tail_oracle(self):
        binom = pytest.importorskip("scipy.stats").binom
        for n, p in ((64, 0.001), (64, 0.01), (64, 0.05), (16, 0.02), (16, 0.05)):
            expected = next(
                (k for k in range(1, n + 1) if binom.sf(k - 1, n, p) <= 0.05), n + 1
            )
            assert min_spares([p] * n, SloPolicy(95.0)) == expected

    def test_unsatisfiable_returns_n_plus_one(self):
        assert min_spares([1.0] * 3, SloPolicy(95.0)) == 4

    def test_monotone_in_slo(self):
        rng = random.Random(4)
        for _ in range(10):
            p = [rng.uniform(0.0, 0.2) for _ in range(rng.randint(1, 30))]
            assert min_spares(p, SloPolicy(99.0)) >= min_spares(p, SloPolicy(95.0))

    def test_exact_tie_counts_as_satisfied(self):
        # z(1) for one group equals p; budget 1 - 0.95 = 0.05 exactly
        assert min_spares([0.05], SloPolicy(95.0)) == 1


class TestTypes:
    def test_srg_spec_validation(self):
        with pytest.raises(DomainError):
            SrgSpec("a", Granularity.TPU, 1.5)

    def test_srg_from_durations(self):
        spec = SrgSpec.from_durations("a", Granularity.SERVER, 2.0, 198.0)
        assert spec.p_fail == pytest.approx(0.01, abs=1e-15)

    def test_slo_validation(self):
        with pytest.raises(DomainError):
            SloPolicy(0.0)
        with pytest.raises(DomainError):
            SloPolicy(101.0)
        assert SloPolicy(95.0).tail_budget == pytest.approx(0.05)

    def test_dp_matrix_must_be_square(self):
        with pytest.raises(DomainError):
            DpMatrix(np.zeros((2, 3)))

    def test_sample_probabilities_range(self):
        rng = random.Random(0)
        vals = sample_probabilities(100, (0.2, 0.4), rng)
        assert all(0.2 <= v <= 0.4 for v in vals)
        with pytest.raises(DomainError):
            sample_probabilities(5, (0.5, 0.2), rng)


class TestPopulationJson:
    def test_direct_and_derived_records(self, tmp_path):
        doc = [
            {"id": "tpu-0", "granularity": "TPU", "p_fail": 0.02},
            {"id": "srv-0", "granularity": "server", "t_repair_h": 2, "t_active_h": 198},
        ]
        path = tmp_path / "pop.json"
        path.write_text(json.dumps(doc))
        pop = load_population(path)
        assert [s.p_fail for s in pop] == [0.02, pytest.approx(0.01)]
        assert pop[0].granularity is Granularity.TPU
        assert pop[1].granularity is Granularity.SERVER

    def test_bad_granularity(self):
        with pytest.raises(DomainError):
            load_population([{"id": "x", "granularity": "rack", "p_fail": 0.1}])

    def test_missing_fields(self):
        with pytest.raises(DomainError):
            load_population([{"id": "x", "granularity": "tpu"}])
