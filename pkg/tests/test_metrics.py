import itertools

import numpy as np
import pytest

from glianet.metrics import ConstantInputError, average_ranks, compute_report, plcc, srcc

from oracles import plcc_ref, ranks_ref, srcc_d2, srcc_ref


class TestPlcc:
    def test_positive_affine_is_one(self):
        x = [1.0, 4.0, 2.0, 9.0]
        y = [2 * v + 1 for v in x]
        assert plcc(x, y) == pytest.approx(1.0, abs=1e-12)

    def test_negation_is_minus_one(self):
        x = [1.0, 4.0, 2.0, 9.0]
        assert plcc(x, [-v for v in x]) == pytest.approx(-1.0, abs=1e-12)

    def test_matches_high_precision_oracle(self, rng):
        for _ in range(50):
            x = rng.standard_normal(20)
            y = rng.standard_normal(20)
            assert abs(plcc(x, y) - plcc_ref(x, y)) < 1e-10

    def test_affine_invariance(self, rng):
        x = rng.standard_normal(15)
        y = rng.standard_normal(15)
        assert plcc(3.0 * x + 7.0, y) == pytest.approx(plcc(x, y), abs=1e-12)
        assert plcc(x, 0.2 * y - 4.0) == pytest.approx(plcc(x, y), abs=1e-12)

    def test_symmetry(self, rng):
        x = rng.standard_normal(15)
        y = rng.standard_normal(15)
        assert plcc(x, y) == pytest.approx(plcc(y, x), abs=1e-12)

    def test_constant_input_raises(self):
        with pytest.raises(ConstantInputError):
            plcc([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_bad_lengths(self):
        with pytest.raises(ValueError):
            plcc([1.0, 2.0], [1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            plcc([1.0], [2.0])


class TestRanks:
    def test_no_ties(self):
        assert np.array_equal(average_ranks([30.0, 10.0, 20.0]), [3.0, 1.0, 2.0])

    def test_tie_averaging(self):
        assert np.array_equal(average_ranks([1.0, 1.0, 2.0]), [1.5, 1.5, 3.0])

    def test_matches_counting_oracle(self, rng):
        for _ in range(30):
            x = rng.integers(0, 5, size=12).astype(float)  # forced ties
            assert np.allclose(average_ranks(x), ranks_ref(x), atol=0)

    def test_tie_groups_equal_mean_over_orderings(self):
        # assigning the tied block every possible distinct-rank order and
        # averaging must reproduce the average rank
        x = [1.0, 1.0, 1.0, 2.0]
        order_sum = np.zeros(4)
        count = 0
        for perm in itertools.permutations([1.0, 2.0, 3.0]):
            order_sum += np.array(list(perm) + [4.0])
            count += 1
        assert np.allclose(average_ranks(x), order_sum / count, atol=0)


class TestSrcc:
    def test_monotone_map_is_one(self):
        assert srcc([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0, abs=1e-12)

    def test_permutation_example(self):
        assert srcc([1, 2, 3], [3, 1, 2]) == pytest.approx(-0.5, abs=1e-12)
        assert srcc_d2([1, 2, 3], [3, 1, 2]) == pytest.approx(-0.5, abs=1e-12)

    def test_matches_high_precision_oracle(self, rng):
        for _ in range(100):
            x = rng.standard_normal(20)
            y = rng.standard_normal(20)
            assert abs(srcc(x, y) - srcc_ref(x, y)) < 1e-10

    def test_matches_oracle_with_ties(self, rng):
        for _ in range(100):
            x = rng.integers(0, 4, size=10).astype(float)
            y = rng.integers(0, 4, size=10).astype(float)
            if len(set(x)) < 2 or len(set(y)) < 2:
                continue
            assert abs(srcc(x, y) - srcc_ref(x, y)) < 1e-10

    def test_d2_formula_exact_without_ties(self, rng):
        for n in range(3, 7):
            for _ in range(20):
                x = list(rng.permutation(n).astype(float))
                y = list(rng.permutation(n).astype(float))
                assert srcc(x, y) == pytest.approx(srcc_d2(x, y), abs=1e-12)

    def test_monotone_transform_invariance(self, rng):
        x = rng.standard_normal(25)
        y = rng.standard_normal(25)
        base = srcc(x, y)
        assert srcc(np.exp(x), y) == pytest.approx(base, abs=1e-12)
        assert srcc(x, y**3) == pytest.approx(base, abs=1e-12)
        assert srcc(5.0 * x + 2.0, y) == pytest.approx(base, abs=1e-12)

    def test_symmetry(self, rng):
        x = rng.standard_normal(25)
        y = rng.standard_normal(25)
        assert srcc(x, y) == pytest.approx(srcc(y, x), abs=1e-12)

    def test_all_equal_raises(self):
        with pytest.raises(ConstantInputError):
            srcc([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])


class TestReport:
    def test_fields(self, rng):
        x = rng.standard_normal(30)
        y = x + 0.1 * rng.standard_normal(30)
        rep = compute_report(x, y)
        assert rep.n == 30
        assert -1.0 <= rep.srcc <= 1.0
        assert -1.0 <= rep.plcc <= 1.0
        assert rep.srcc == srcc(x, y)
        assert rep.plcc == plcc(x, y)
