import numpy as np
import numpy.testing as npt
import pytest

from logad.assembly import SplitSpec, assemble, split, split_sizes
from logad.autoencoder import FeatureSequence
from logad.numerics import make_rng


def feat(values, label):
    return FeatureSequence(np.asarray(values, dtype=np.float64), label)


class TestAssemble:
    def test_exact_duplicates_collapse(self):
        pos = [feat([1.5, 2.0, 3.0], 1), feat([1.5, 2.0, 3.0], 1)]
        indices, labels = assemble(pos, [], vocab_size=5, rng=make_rng(0), noise_variance=0.0)
        assert indices.shape == (1, 3)
        assert labels.tolist() == [1]

    def test_same_vector_different_labels_both_survive(self):
        pos = [feat([1.0, 1.0, 1.0], 1)]
        neg = [feat([1.0, 1.0, 1.0], 0)]
        indices, labels = assemble(pos, neg, vocab_size=5, rng=make_rng(0), noise_variance=0.0)
        assert indices.shape == (2, 3)
        assert sorted(labels.tolist()) == [0, 1]

    def test_first_occurrence_kept(self):
        pos = [feat([2.2, 0.0], 1), feat([3.3, 1.0], 1), feat([2.2, 0.0], 1)]
        indices, labels = assemble(pos, [], vocab_size=9, rng=make_rng(0), noise_variance=0.0)
        npt.assert_array_equal(indices, [[2, 0], [3, 1]])

    def test_zero_noise_is_round_and_clamp_only(self):
        pos = [feat([0.4, 1.5, 2.49], 1)]
        neg = [feat([-0.8, 7.3, 11.2], 0)]
        indices, _ = assemble(pos, neg, vocab_size=8, rng=make_rng(1), noise_variance=0.0)
        npt.assert_array_equal(indices, [[0, 2, 2], [0, 7, 8]])

    def test_rounding_is_half_away_from_zero(self):
        pos = [feat([0.5, 1.5, 2.5], 1)]
        indices, _ = assemble(pos, [], vocab_size=9, rng=make_rng(0), noise_variance=0.0)
        npt.assert_array_equal(indices, [[1, 2, 3]])

    def test_noise_perturbs_but_stays_in_range(self):
        rng = make_rng(3)
        pos = [feat(rng.uniform(0, 20, size=10), 1) for _ in range(50)]
        indices, _ = assemble(pos, [], vocab_size=20, rng=make_rng(4), noise_variance=0.1)
        assert np.all((indices >= 0) & (indices <= 20))

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            assemble([feat([1.0, 2.0], 1)], [feat([1.0, 2.0, 3.0], 0)],
                     vocab_size=5, rng=make_rng(0))

    def test_deterministic(self):
        rng = make_rng(5)
        pos = [feat(rng.uniform(0, 9, size=6), 1) for _ in range(20)]
        neg = [feat(rng.uniform(0, 9, size=6), 0) for _ in range(10)]
        a = assemble(pos, neg, vocab_size=9, rng=make_rng(7))
        b = assemble(pos, neg, vocab_size=9, rng=make_rng(7))
        npt.assert_array_equal(a[0], b[0])
        npt.assert_array_equal(a[1], b[1])

    def test_size_bounded_by_inputs(self):
        rng = make_rng(6)
        pos = [feat(rng.uniform(0, 9, size=4), 1) for _ in range(30)]
        indices, _ = assemble(pos, [], vocab_size=9, rng=make_rng(0))
        assert indices.shape[0] <= 30


class TestSplitSizes:
    # train / validation / test triples reported for the four corpora
    @pytest.mark.parametrize(
        "n,test_frac,train_frac,expected",
        [
            (4_747_962, 0.95, 0.05, (11_869, 225_529, 4_510_564)),
            (49_565, 0.95, 0.85, (2_106, 372, 47_087)),
            (155_508, 0.95, 0.85, (6_608, 1_167, 147_733)),
            (6_248_239, 0.95, 0.05, (15_620, 296_791, 5_935_828)),
        ],
        ids=["bgl", "imdb", "openstack", "thunderbird"],
    )
    def test_reference_corpus_counts_within_one(self, n, test_frac, train_frac, expected):
        got = split_sizes(n, SplitSpec(test_frac, train_frac))
        for g, e in zip(got, expected):
            assert abs(g - e) <= 1, f"{got} vs {expected}"
        assert sum(got) == n

    def test_sizes_always_partition(self):
        rng = make_rng(0)
        spec = SplitSpec()
        for _ in range(200):
            n = int(rng.integers(20, 10**7))
            assert sum(split_sizes(n, spec)) == n

    def test_bad_fractions_rejected(self):
        with pytest.raises(ValueError):
            split_sizes(100, SplitSpec(test_fraction=1.0))
        with pytest.raises(ValueError):
            split_sizes(100, SplitSpec(train_fraction=0.0))


class TestSplit:
    def _data(self, n, length=4, seed=0):
        rng = make_rng(seed)
        return rng.integers(0, 9, size=(n, length)), rng.integers(0, 2, size=n)

    def test_parts_partition_input(self):
        indices, labels = self._data(200)
        parts = split(indices, labels, SplitSpec(0.5, 0.5), make_rng(1))
        rows = np.concatenate([p[0] for p in parts])
        labs = np.concatenate([p[1] for p in parts])
        key = lambda arr: sorted(map(tuple, arr))
        assert key(np.column_stack([rows, labs])) == key(np.column_stack([indices, labels]))

    def test_sizes_match_split_sizes(self):
        indices, labels = self._data(1000)
        spec = SplitSpec(0.9, 0.3)
        (tr, _), (va, _), (te, _) = split(indices, labels, spec, make_rng(2))
        assert (tr.shape[0], va.shape[0], te.shape[0]) == split_sizes(1000, spec)

    def test_too_small_rejected(self):
        indices, labels = self._data(10)
        with pytest.raises(ValueError):
            split(indices, labels, SplitSpec(), make_rng(0))

    def test_empty_partition_rejected(self):
        indices, labels = self._data(30)
        # 0.95 of 30 leaves one example for train+validation together
        with pytest.raises(ValueError):
            split(indices, labels, SplitSpec(0.95, 0.05), make_rng(0))

    def test_deterministic(self):
        indices, labels = self._data(100, seed=5)
        a = split(indices, labels, SplitSpec(0.6, 0.5), make_rng(9))
        b = split(indices, labels, SplitSpec(0.6, 0.5), make_rng(9))
        for (ia, la), (ib, lb) in zip(a, b):
            npt.assert_array_equal(ia, ib)
            npt.assert_array_equal(la, lb)
