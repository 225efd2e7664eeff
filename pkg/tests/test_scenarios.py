import numpy as np
import pytest

from cltta import netcore as nc
from cltta.scenarios import (IDENTITY, KINDS, Corruption, Dataset, corrupt, default_suite, load_dataset,
                             make_source, make_stream, save_dataset, shuffled_suite)


class TestSource:
    def test_shapes(self):
        train, test = make_source(n_classes=4, dim=6, n_per_class=10, seed=0)
        assert train.features.shape == (40, 6)
        assert sorted(set(test.labels)) == [0, 1, 2, 3]

    def test_deterministic(self):
        a, _ = make_source(seed=3)
        b, _ = make_source(seed=3)
        assert np.array_equal(a.features, b.features)

    def test_splits_differ(self):
        train, test = make_source(seed=3)
        assert not np.array_equal(train.features, test.features)

    def test_dataset_validates_labels(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((2, 3)), np.array([0, 5]), 3)


class TestCorruption:
    def test_identity(self, source):
        _, _, test = source
        assert np.array_equal(corrupt(test, IDENTITY, 0).features, test.features)

    def test_parse_roundtrip(self):
        for c in default_suite():
            assert Corruption.parse(c.name) == c

    @pytest.mark.parametrize("bad", [("blur", 3), ("gauss_noise", 0), ("gauss_noise", 6), ("none", 2)])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            Corruption(*bad)

    @pytest.mark.parametrize("kind", KINDS)
    def test_deterministic(self, kind, source):
        _, _, test = source
        c = Corruption(kind, 4)
        assert np.array_equal(corrupt(test, c, 9).features, corrupt(test, c, 9).features)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_noise_monotone_in_severity(self, source, seed):
        res, _, test = source
        accs = [nc.accuracy(res.model, corrupt(test, Corruption("gauss_noise", s), seed).features, test.labels)
                for s in range(1, 6)]
        assert all(a >= b - 0.01 for a, b in zip(accs, accs[1:]))
        assert accs[-1] < accs[0]

    @pytest.mark.parametrize("kind", KINDS)
    def test_severity_five_hurts(self, kind, source):
        res, _, test = source
        clean = res.test_accuracy
        hit = nc.accuracy(res.model, corrupt(test, Corruption(kind, 5), 0).features, test.labels)
        assert clean - hit >= 0.05


class TestSuites:
    def test_default_suite(self):
        suite = default_suite()
        assert len(suite) == 10
        assert [c.severity for c in suite] == [3] * 5 + [5] * 5

    def test_shuffles_distinct(self):
        orders = {tuple(c.name for c in shuffled_suite(s)) for s in range(5)}
        assert len(orders) == 5
        assert all(sorted(o) == sorted(c.name for c in default_suite()) for o in orders)

    def test_stream_independent_of_position(self, source):
        _, _, test = source
        c = Corruption("mean_shift", 3)
        a = make_stream(test, c, 4, 16, 2)
        b = make_stream(test, c, 4, 16, 2)
        assert np.array_equal(a.features, b.features) and len(a) == 64

    def test_stream_longer_than_test(self):
        _, test = make_source(n_classes=2, dim=3, n_per_class=5, seed=0)
        assert len(make_stream(test, Corruption("gauss_noise", 1), 3, 8, 0)) == 24


class TestDatasetFile:
    def test_roundtrip(self, tmp_path):
        _, test = make_source(n_classes=3, dim=4, n_per_class=7, seed=1)
        d = corrupt(test, Corruption("rotation_mix", 5), 1)
        save_dataset(tmp_path / "d.txt", d)
        back = load_dataset(tmp_path / "d.txt")
        assert np.array_equal(back.features, d.features)
        assert np.array_equal(back.labels, d.labels)
        assert back.n_classes == 3

    def test_truncated_rejected(self, tmp_path):
        _, test = make_source(n_classes=3, dim=4, n_per_class=2, seed=1)
        save_dataset(tmp_path / "d.txt", test)
        lines = (tmp_path / "d.txt").read_text().splitlines()
        (tmp_path / "d.txt").write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(ValueError):
            load_dataset(tmp_path / "d.txt")
