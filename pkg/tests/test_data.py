import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fapl.data import (
    UNLABELED,
    Dataset,
    SynthConfig,
    generate_synthetic,
    generate_unlabeled,
    load_csv,
    make_batches,
    reduce_labeled,
    save_csv,
    split_per_class,
)
from fapl.errors import ConfigError, InputError, ParseError


class TestGenerateSynthetic:
    def test_counts(self):
        ds = generate_synthetic(SynthConfig(K=5, per_class=30, seed=7))
        assert len(ds) == 150
        assert ds.class_counts().tolist() == [30] * 5
        assert ds.labeled_mask.all()

    def test_deterministic(self):
        cfg = SynthConfig(K=5, per_class=30, seed=7)
        assert generate_synthetic(cfg) == generate_synthetic(cfg)
        a, b = generate_synthetic(cfg), generate_synthetic(cfg)
        assert a.features.tobytes() == b.features.tobytes()

    def test_zero_std_collapses_to_means(self):
        ds = generate_synthetic(SynthConfig(K=3, per_class=4, within_std=0.0, seed=1))
        for k in range(3):
            f = ds.features[ds.labels == k]
            assert np.all(f == f[0])
        assert not np.allclose(ds.features[0], ds.features[-1])

    @pytest.mark.parametrize("kw", [{"K": 1}, {"mean_spread": 0.0}, {"mean_spread": -1.0}, {"per_class": 0}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            generate_synthetic(SynthConfig(**kw))


def test_split_per_class(toy_ds):
    head, tail = split_per_class(toy_ds, 10)
    assert head.class_counts().tolist() == [10] * 5
    assert tail.class_counts().tolist() == [20] * 5
    assert np.array_equal(head.features[:10], toy_ds.features[:10])


class TestGenerateUnlabeled:
    def test_empty_request(self, toy_ds):
        assert len(generate_unlabeled(toy_ds, 0, 1.0, 0.1, seed=0)) == 0

    def test_degenerate_interpolation_copies_samples(self, toy_ds):
        u = generate_unlabeled(toy_ds, 200, mix_strength=0.0, noise_std=0.0, seed=3)
        for x, k in zip(u.features, u.provenance):
            src = toy_ds.features[toy_ds.labels == k]
            assert np.any(np.all(src == x, axis=1))

    def test_large_count_range(self, toy_ds):
        u = generate_unlabeled(toy_ds, 12000, 1.0, 0.3, seed=5)
        assert len(u) == 12000
        assert np.all(u.labels == UNLABELED)
        assert u.provenance.min() >= 0 and u.provenance.max() < toy_ds.K

    def test_deterministic(self, toy_ds):
        assert generate_unlabeled(toy_ds, 50, 0.7, 0.2, seed=9) == generate_unlabeled(toy_ds, 50, 0.7, 0.2, seed=9)

    def test_empty_dataset_rejected(self):
        with pytest.raises(InputError):
            generate_unlabeled(Dataset.empty(3, 2), 5)

    def test_convex_combination_of_same_class_pair(self):
        ds = generate_synthetic(SynthConfig(K=3, d_in=3, per_class=6, seed=2))
        u = generate_unlabeled(ds, 40, mix_strength=1.0, noise_std=0.0, seed=4)
        for x, k in zip(u.features, u.provenance):
            src = ds.features[ds.labels == k]
            found = False
            for a in src:
                for b in src:
                    d = a - b
                    dd = d @ d
                    if dd == 0:
                        found |= np.allclose(x, a, atol=1e-12)
                        continue
                    t = (x - b) @ d / dd  # x = t a + (1 - t) b
                    if -1e-9 <= t <= 1 + 1e-9 and np.allclose(t * a + (1 - t) * b, x, atol=1e-10):
                        found = True
            assert found


class TestReduceLabeled:
    def _ds(self, counts):
        labels = np.concatenate([np.full(c, k) for k, c in enumerate(counts)])
        return Dataset(np.arange(labels.size, dtype=float)[:, None], labels, len(counts))

    def test_small_class_kept_whole(self):
        assert reduce_labeled(self._ds([6, 10]), "half").class_counts().tolist() == [6, 5]

    def test_threshold_is_eight(self):
        assert reduce_labeled(self._ds([7, 8, 9]), "third").class_counts().tolist() == [7, 3, 3]
        assert reduce_labeled(self._ds([7, 8, 9]), "half").class_counts().tolist() == [7, 4, 5]

    def test_first_in_stored_order(self):
        out = reduce_labeled(self._ds([10]), "half")
        assert out.features[:, 0].tolist() == [0, 1, 2, 3, 4]

    def test_full_is_identity(self, toy_ds):
        assert reduce_labeled(toy_ds, "full") == toy_ds

    def test_unknown_fraction(self, toy_ds):
        with pytest.raises(ConfigError):
            reduce_labeled(toy_ds, "quarter")

    @given(st.lists(st.integers(1, 40), min_size=1, max_size=8), st.sampled_from(["full", "half", "third"]))
    def test_never_removes_class_or_grows(self, counts, fraction):
        before = np.array(counts)
        after = reduce_labeled(self._ds(counts), fraction).class_counts()
        assert np.all(after >= 1)
        assert np.all(after <= before)
        if fraction != "full":
            expected = [c if c < 8 else math.ceil(c * {"half": 0.5, "third": 1 / 3}[fraction] - 1e-9) for c in counts]
            assert after.tolist() == expected


class TestCSV:
    def test_round_trip(self, tmp_path, toy_ds):
        u = generate_unlabeled(toy_ds, 20, 1.0, 0.3, seed=1)
        both = toy_ds.concat(u)
        save_csv(both, tmp_path / "d.csv")
        assert load_csv(tmp_path / "d.csv") == both

    def test_header_and_tokens(self, tmp_path):
        ds = Dataset(np.array([[0.1, 2.0], [3.0, -4.5]]), [1, UNLABELED], 3, [-1, 2])
        save_csv(ds, tmp_path / "d.csv")
        lines = (tmp_path / "d.csv").read_text().splitlines()
        assert lines == ["d_in=2,K=3", "0.1,2.0,2", "3.0,-4.5,U,3"]

    def test_wrong_arity_names_line(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("d_in=2,K=3\n0.0,1.0,1\n0.5,2\n")
        with pytest.raises(ParseError, match="line 3") as exc:
            load_csv(p)
        assert exc.value.line == 3

    @pytest.mark.parametrize("row", ["1.0,2.0,X", "1.0,2.0,4", "1.0,nan,1", "a,2.0,1", "1.0,2.0,U,0"])
    def test_bad_rows(self, tmp_path, row):
        p = tmp_path / "bad.csv"
        p.write_text(f"d_in=2,K=3\n{row}\n")
        with pytest.raises(ParseError, match="line 2"):
            load_csv(p)

    def test_empty_with_header(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("d_in=4,K=2\n")
        ds = load_csv(p)
        assert len(ds) == 0 and ds.d_in == 4 and ds.K == 2

    @settings(max_examples=30)
    @given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=3, max_size=3))
    def test_full_precision(self, tmp_path_factory, vals):
        p = tmp_path_factory.mktemp("csv") / "v.csv"
        ds = Dataset(np.array([vals]), [0], 2)
        save_csv(ds, p)
        assert load_csv(p).features.tobytes() == ds.features.tobytes()


class TestBatches:
    def test_sizes(self):
        assert [b.size for b in make_batches(10, 3, seed=0, epoch=0)] == [3, 3, 3, 1]

    def test_deterministic(self):
        a = make_batches(50, 7, seed=4, epoch=2)
        b = make_batches(50, 7, seed=4, epoch=2)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))
        c = make_batches(50, 7, seed=4, epoch=3)
        assert not all(np.array_equal(x, y) for x, y in zip(a, c))

    def test_single_batch(self):
        (only,) = make_batches(5, 8, seed=1, epoch=0)
        assert sorted(only.tolist()) == [0, 1, 2, 3, 4]

    def test_invalid(self):
        with pytest.raises(ConfigError):
            make_batches(5, 0, seed=0, epoch=0)

    @given(st.integers(0, 200), st.integers(1, 50), st.integers(0, 2**31), st.integers(0, 100))
    def test_multiset_preserved(self, n, m, seed, epoch):
        idx = np.arange(n) * 3 + 1
        batches = make_batches(idx, m, seed, epoch)
        flat = np.concatenate(batches) if batches else np.array([], dtype=int)
        assert sorted(flat.tolist()) == idx.tolist()
        assert all(b.size == m for b in batches[:-1])
