import gzip
import struct

import numpy as np
import pytest

from dscca.cca.linear import fit_linear_cca
from dscca.data import (
    ViewPairDataset,
    join_halves,
    load_views,
    make_splits,
    read_binary_view,
    read_csv_view,
    read_idx_images,
    split_halves,
    synth_correlated,
    write_binary_view,
    write_csv_view,
)
from dscca.data.formats import read_view
from dscca.utils.exception_handler import DataFormatError, ShapeError


class TestSynthetic:
    def test_perfect_correlation(self):
        data = synth_correlated(500, 1, (2, 2), [1.0], seed=0)
        model = fit_linear_cca(data.view1, data.view2, 1e-10, 1e-10, 1)
        assert model.correlations[0] == pytest.approx(1.0, abs=1e-6)

    def test_recovers_targets(self):
        data = synth_correlated(20000, 2, (4, 3), [0.9, 0.5], seed=1)
        model = fit_linear_cca(data.view1, data.view2, 1e-6, 1e-6, 2)
        np.testing.assert_allclose(model.correlations, [0.9, 0.5], atol=0.03)
        assert data.dims == (4, 3)
        assert data.ground_truth_correlations.tolist() == [0.9, 0.5]

    def test_tanh_mix_is_bounded_and_deterministic(self):
        a = synth_correlated(200, 2, (3, 3), [0.9, 0.8], nonlinearity="tanh_mix", seed=4)
        b = synth_correlated(200, 2, (3, 3), [0.9, 0.8], nonlinearity="tanh_mix", seed=4)
        np.testing.assert_array_equal(a.view1, b.view1)
        assert np.all(np.linalg.norm(a.view1, axis=0) <= np.sqrt(3) + 1e-12)

    def test_tanh_mix_hides_the_signal_from_linear_cca(self):
        targets = [0.9, 0.9, 0.9, 0.9]
        data = synth_correlated(8000, 4, (8, 8), targets, nonlinearity="tanh_mix", seed=3)
        model = fit_linear_cca(data.view1, data.view2, 1e-6, 1e-6, 4)
        assert model.correlations.sum() < 0.5 * sum(targets)
        assert data.ground_truth_correlations.tolist() == targets

    def test_seed_changes_samples(self):
        a = synth_correlated(50, 1, (2, 2), [0.5], seed=0)
        b = synth_correlated(50, 1, (2, 2), [0.5], seed=1)
        assert not np.array_equal(a.view1, b.view1)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(latent_dim=2, target_correlations=[0.9]),
            dict(latent_dim=1, target_correlations=[0.0]),
            dict(latent_dim=1, target_correlations=[1.2]),
            dict(latent_dim=2, target_correlations=[0.5, 0.9]),
            dict(latent_dim=3, target_correlations=[0.9, 0.8, 0.7]),
            dict(latent_dim=1, target_correlations=[0.5], n_samples=1),
            dict(latent_dim=1, target_correlations=[0.5], nonlinearity="cubic"),
        ],
    )
    def test_invalid_arguments(self, kwargs):
        args = dict(n_samples=100, dims=(2, 2))
        args.update(kwargs)
        with pytest.raises(ValueError):
            synth_correlated(**args)


class TestHalves:
    def test_split_two_by_four(self):
        image = np.arange(8, dtype=float)[:, None]
        data = split_halves(image, 2, 4)
        assert data.view1[:, 0].tolist() == [0.0, 1.0, 4.0, 5.0]
        assert data.view2[:, 0].tolist() == [2.0, 3.0, 6.0, 7.0]
        np.testing.assert_array_equal(join_halves(data, 2, 4), image)

    def test_join_restores_many_images(self, rng):
        images = rng.uniform(size=(28 * 28, 5))
        np.testing.assert_array_equal(join_halves(split_halves(images, 28, 28), 28, 28), images)

    def test_errors(self, rng):
        with pytest.raises(ShapeError):
            split_halves(rng.uniform(size=(6, 2)), 2, 3)
        with pytest.raises(ShapeError):
            split_halves(rng.uniform(size=(7, 2)), 2, 4)


class TestViewFiles:
    def test_csv_and_binary_agree(self, rng, tmp_path):
        X = rng.standard_normal((3, 7))
        write_csv_view(tmp_path / "x.csv", X)
        write_binary_view(tmp_path / "x.bin", X)
        np.testing.assert_array_equal(read_csv_view(tmp_path / "x.csv"), X)
        np.testing.assert_array_equal(read_binary_view(tmp_path / "x.bin"), X)

    def test_csv_reports_the_bad_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("2\n1.0,abc\n3.0,4.0\n")
        with pytest.raises(DataFormatError) as info:
            read_csv_view(path)
        assert info.value.line == 2

    def test_csv_reports_wrong_width(self, tmp_path):
        path = tmp_path / "wide.csv"
        path.write_text("2\n1.0,2.0\n3.0,4.0,5.0\n")
        with pytest.raises(DataFormatError) as info:
            read_csv_view(path)
        assert info.value.line == 3

    @pytest.mark.parametrize("header", ["x\n", "0\n", "1,2\n", ""])
    def test_csv_bad_header(self, header, tmp_path):
        path = tmp_path / "header.csv"
        path.write_text(header + "1.0\n")
        with pytest.raises(DataFormatError) as info:
            read_csv_view(path)
        assert info.value.line == 1

    def test_binary_bad_magic(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOTAVIEW" + bytes(16))
        with pytest.raises(DataFormatError) as info:
            read_binary_view(path)
        assert info.value.offset == 0

    def test_binary_truncated_payload(self, rng, tmp_path):
        path = write_binary_view(tmp_path / "x.bin", rng.standard_normal((2, 3)))
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(DataFormatError, match="payload"):
            read_binary_view(path)

    def test_missing_file_is_a_format_error(self, tmp_path):
        with pytest.raises(DataFormatError):
            read_view(tmp_path / "absent.csv", "csv")
        with pytest.raises(ValueError):
            read_view(tmp_path / "absent.csv", "parquet")

    def test_load_views(self, rng, tmp_path):
        X1, X2 = rng.standard_normal((3, 6)), rng.standard_normal((2, 6))
        write_csv_view(tmp_path / "a.csv", X1)
        write_csv_view(tmp_path / "b.csv", X2)
        data = load_views(tmp_path / "a.csv", tmp_path / "b.csv")
        assert data.name == "a"
        assert data.dims == (3, 2)
        np.testing.assert_array_equal(data.view2, X2)

        write_csv_view(tmp_path / "c.csv", X2[:, :5])
        with pytest.raises(DataFormatError):
            load_views(tmp_path / "a.csv", tmp_path / "c.csv")


class TestIdx:
    @staticmethod
    def idx_bytes(images):
        count, height, width = images.shape
        return struct.pack(">IIII", 0x00000803, count, height, width) + images.astype(np.uint8).tobytes()

    def test_reads_plain_and_gzipped(self, rng, tmp_path):
        images = rng.integers(0, 256, size=(3, 2, 4))
        raw = self.idx_bytes(images)
        (tmp_path / "images.idx").write_bytes(raw)
        with gzip.open(tmp_path / "images.idx.gz", "wb") as f:
            f.write(raw)
        expected = images.reshape(3, 8).T / 255.0
        np.testing.assert_allclose(read_idx_images(tmp_path / "images.idx"), expected)
        np.testing.assert_allclose(read_idx_images(tmp_path / "images.idx.gz"), expected)
        assert read_idx_images(tmp_path / "images.idx", max_samples=2).shape == (8, 2)

    def test_errors(self, rng, tmp_path):
        raw = self.idx_bytes(rng.integers(0, 256, size=(2, 2, 2)))
        (tmp_path / "magic.idx").write_bytes(b"\x00\x00\x08\x01" + raw[4:])
        (tmp_path / "short.idx").write_bytes(raw[:-1])
        with pytest.raises(DataFormatError, match="magic"):
            read_idx_images(tmp_path / "magic.idx")
        with pytest.raises(DataFormatError, match="pixel"):
            read_idx_images(tmp_path / "short.idx")


class TestDataset:
    def test_splits_are_disjoint_and_deterministic(self, rng):
        data = ViewPairDataset(rng.standard_normal((2, 100)), rng.standard_normal((3, 100)))
        split = make_splits(data, [0.6, 0.2, 0.2], seed=3)
        sizes = {name: indices.size for name, indices in split.split.items()}
        assert sizes == {"train": 60, "val": 20, "test": 20}
        union = np.concatenate(list(split.split.values()))
        assert np.unique(union).size == 100
        again = make_splits(data, [0.6, 0.2, 0.2], seed=3)
        np.testing.assert_array_equal(again.split["val"], split.split["val"])
        np.testing.assert_array_equal(split.views("val")[1], data.view2[:, split.split["val"]])

    def test_absolute_counts(self, rng):
        data = ViewPairDataset(rng.standard_normal((2, 50)), rng.standard_normal((2, 50)))
        split = make_splits(data, [30, 0, 10])
        assert split.split["train"].size == 30
        assert not split.has_split("val")
        assert split.subset("test").n_samples == 10

    def test_oversized_splits(self, rng):
        data = ViewPairDataset(rng.standard_normal((2, 50)), rng.standard_normal((2, 50)))
        with pytest.raises(ShapeError):
            make_splits(data, [40, 10, 10])
        with pytest.raises(ShapeError):
            make_splits(data, [0.7, 0.2, 0.2])
        with pytest.raises(ValueError):
            make_splits(data, [0.5, 0.5])

    def test_construction_errors(self, rng):
        with pytest.raises(ShapeError):
            ViewPairDataset(rng.standard_normal((2, 5)), rng.standard_normal((2, 6)))
        with pytest.raises(ShapeError):
            ViewPairDataset(rng.standard_normal((2, 5)), rng.standard_normal((2, 5)), split={"train": [0, 5]})
        with pytest.raises(ShapeError):
            ViewPairDataset(
                rng.standard_normal((2, 5)), rng.standard_normal((2, 5)), split={"train": [0, 1], "test": [1, 2]}
            )
        with pytest.raises(ShapeError):
            ViewPairDataset(rng.standard_normal((2, 5)), rng.standard_normal((2, 5))).subset("val")

    def test_split_argument_is_left_untouched(self, rng):
        split = {"train": [0, 1], "test": [2]}
        data = ViewPairDataset(rng.standard_normal((2, 3)), rng.standard_normal((2, 3)), split=split)
        assert split == {"train": [0, 1], "test": [2]}
        assert data.split is not split
        assert data.split["train"].dtype == np.int64
