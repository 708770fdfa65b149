import struct

import numpy as np
import pytest

from logitnoise.data import (
    IDX_IMAGES_MAGIC,
    IDX_LABELS_MAGIC,
    IdxFormatError,
    NoiseSpec,
    NoisyDataset,
    circles,
    cyclic_mapping,
    export_csv,
    gaussian_blobs,
    inject_noise,
    load_mnist_idx,
    mnist_asymmetric_mapping,
    split_dataset,
    two_moons,
)


class TestTwoMoons:
    def test_four_points_no_noise_sit_on_circles(self):
        ds = two_moons(4, noise_std=0.0, seed=0)
        # two points per moon at parameter t in {0, pi}
        want = np.array([[1.0, 0.0], [-1.0, np.sin(np.pi)], [0.0, 0.5], [2.0, 0.5]])
        np.testing.assert_allclose(ds.inputs, want, atol=1e-15)
        np.testing.assert_array_equal(ds.clean_labels, [0, 0, 1, 1])
        np.testing.assert_array_equal(ds.noisy_labels, ds.clean_labels)
        assert not ds.corrupted.any()
        assert ds.num_classes == 2

    def test_odd_n_gives_extra_point_to_class_zero(self):
        ds = two_moons(7, seed=0)
        assert (ds.clean_labels == 0).sum() == 4
        assert (ds.clean_labels == 1).sum() == 3

    def test_points_lie_on_unit_circles_without_noise(self):
        ds = two_moons(40, noise_std=0.0, seed=1)
        m0 = ds.inputs[ds.clean_labels == 0]
        m1 = ds.inputs[ds.clean_labels == 1]
        np.testing.assert_allclose(np.linalg.norm(m0, axis=1), 1.0, rtol=1e-12)
        np.testing.assert_allclose(np.linalg.norm(m1 - [1.0, 0.5], axis=1), 1.0, rtol=1e-12)
        assert np.all(m0[:, 1] > -1e-12)  # upper arc
        assert np.all(m1[:, 1] < 0.5 + 1e-12)  # lower arc

    def test_noise_is_seeded(self):
        a = two_moons(50, noise_std=0.2, seed=3)
        b = two_moons(50, noise_std=0.2, seed=3)
        c = two_moons(50, noise_std=0.2, seed=4)
        np.testing.assert_array_equal(a.inputs, b.inputs)
        assert np.any(a.inputs != c.inputs)


class TestCircles:
    def test_radii_and_classes(self):
        ds = circles(60, radius_ratio=0.4, noise_std=0.0, seed=0)
        outer = ds.inputs[ds.clean_labels == 0]
        inner = ds.inputs[ds.clean_labels == 1]
        np.testing.assert_allclose(np.linalg.norm(outer, axis=1), 1.0, rtol=1e-12)
        np.testing.assert_allclose(np.linalg.norm(inner, axis=1), 0.4, rtol=1e-12)

    def test_angles_exclude_endpoint(self):
        ds = circles(8, noise_std=0.0, seed=0)
        outer = ds.inputs[ds.clean_labels == 0]
        # 4 points at angles 0, pi/2, pi, 3pi/2 - no duplicate at 2*pi
        np.testing.assert_allclose(outer[0], [1.0, 0.0], atol=1e-15)
        assert np.linalg.norm(outer[-1] - outer[0]) > 0.1

    def test_ratio_validation(self):
        with pytest.raises(ValueError):
            circles(10, radius_ratio=1.5)


class TestGaussianBlobs:
    def test_centers_on_circle_and_balanced(self):
        k, n = 5, 500
        ds = gaussian_blobs(n, k, cluster_std=1e-9, radius=7.0, seed=0)
        assert ds.num_classes == k
        counts = np.bincount(ds.clean_labels, minlength=k)
        assert counts.max() - counts.min() <= 1
        for c in range(k):
            pts = ds.inputs[ds.clean_labels == c]
            center = pts.mean(axis=0)
            assert np.linalg.norm(center) == pytest.approx(7.0, rel=1e-6)
            assert np.linalg.norm(pts - center, axis=1).max() < 1e-6

    def test_distinct_centers(self):
        ds = gaussian_blobs(260, 26, cluster_std=1e-9, radius=10.0, seed=0)
        centers = np.stack([ds.inputs[ds.clean_labels == c].mean(axis=0) for c in range(26)])
        d2 = np.linalg.norm(centers[:, None] - centers[None, :], axis=-1)
        np.fill_diagonal(d2, np.inf)
        assert d2.min() > 1.0


def write_idx(tmp_path, images, labels, images_magic=IDX_IMAGES_MAGIC, labels_magic=IDX_LABELS_MAGIC,
              truncate_images=0, label_count=None):
    n, rows, cols = images.shape
    img_path = tmp_path / "images-idx3-ubyte"
    lab_path = tmp_path / "labels-idx1-ubyte"
    payload = struct.pack(">IIII", images_magic, n, rows, cols) + images.astype(np.uint8).tobytes()
    if truncate_images:
        payload = payload[:-truncate_images]
    img_path.write_bytes(payload)
    m = len(labels) if label_count is None else label_count
    lab_path.write_bytes(struct.pack(">II", labels_magic, m) + labels.astype(np.uint8).tobytes()[:m])
    return img_path, lab_path


class TestIdxLoader:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        images = rng.integers(0, 256, size=(5, 3, 2), dtype=np.uint8)
        labels = np.array([0, 1, 2, 9, 4], dtype=np.uint8)
        img, lab = write_idx(tmp_path, images, labels)
        ds = load_mnist_idx(img, lab)
        assert ds.inputs.shape == (5, 6)
        np.testing.assert_allclose(ds.inputs, images.reshape(5, 6) / 255.0, rtol=1e-15)
        np.testing.assert_array_equal(ds.clean_labels, labels)
        assert ds.num_classes == 10

    def test_max_n_truncates(self, tmp_path):
        images = np.zeros((4, 2, 2), dtype=np.uint8)
        labels = np.arange(4, dtype=np.uint8)
        img, lab = write_idx(tmp_path, images, labels)
        ds = load_mnist_idx(img, lab, max_n=2)
        assert ds.n == 2
        np.testing.assert_array_equal(ds.clean_labels, [0, 1])

    def test_bad_image_magic_names_offset(self, tmp_path):
        images = np.zeros((2, 2, 2), dtype=np.uint8)
        labels = np.zeros(2, dtype=np.uint8)
        img, lab = write_idx(tmp_path, images, labels, images_magic=0xDEADBEEF)
        with pytest.raises(IdxFormatError, match="byte offset 0"):
            load_mnist_idx(img, lab)

    def test_bad_label_magic(self, tmp_path):
        images = np.zeros((2, 2, 2), dtype=np.uint8)
        labels = np.zeros(2, dtype=np.uint8)
        img, lab = write_idx(tmp_path, images, labels, labels_magic=IDX_IMAGES_MAGIC)
        with pytest.raises(IdxFormatError, match="magic"):
            load_mnist_idx(img, lab)

    def test_truncated_images_name_offset(self, tmp_path):
        images = np.zeros((3, 2, 2), dtype=np.uint8)
        labels = np.zeros(3, dtype=np.uint8)
        img, lab = write_idx(tmp_path, images, labels, truncate_images=5)
        with pytest.raises(IdxFormatError, match="byte offset"):
            load_mnist_idx(img, lab)

    def test_count_mismatch(self, tmp_path):
        images = np.zeros((3, 2, 2), dtype=np.uint8)
        labels = np.zeros(2, dtype=np.uint8)
        img, lab = write_idx(tmp_path, images, labels)
        with pytest.raises(IdxFormatError, match="labels for"):
            load_mnist_idx(img, lab)

    def test_header_shorter_than_four_bytes(self, tmp_path):
        img = tmp_path / "img"
        img.write_bytes(b"\x00\x00")
        lab = tmp_path / "lab"
        lab.write_bytes(b"")
        with pytest.raises(IdxFormatError):
            load_mnist_idx(img, lab)


class TestNoise:
    def test_symmetric_effective_rate(self):
        ds = gaussian_blobs(40000, 4, cluster_std=1.0, radius=5.0, seed=0)
        noisy = inject_noise(ds, NoiseSpec("symmetric", rate=0.4, seed=0))
        flips = np.mean(noisy.noisy_labels != noisy.clean_labels)
        assert flips == pytest.approx(0.4 * 3 / 4, abs=0.01)
        np.testing.assert_array_equal(noisy.corrupted, noisy.noisy_labels != noisy.clean_labels)

    def test_symmetric_exclude_own_class_hits_exact_rate(self):
        ds = gaussian_blobs(40000, 4, cluster_std=1.0, radius=5.0, seed=0)
        noisy = inject_noise(ds, NoiseSpec("symmetric", rate=0.3, seed=0, exclude_own_class=True))
        flips = np.mean(noisy.noisy_labels != noisy.clean_labels)
        assert flips == pytest.approx(0.3, abs=0.01)

    def test_asymmetric_moves_only_mapped_classes(self):
        ds = gaussian_blobs(20000, 10, cluster_std=1.0, radius=5.0, seed=1)
        spec = NoiseSpec("asymmetric", rate=0.5, mapping=mnist_asymmetric_mapping(), seed=2)
        noisy = inject_noise(ds, spec)
        mapping = mnist_asymmetric_mapping()
        for src in range(10):
            got = noisy.noisy_labels[ds.clean_labels == src]
            if src in mapping:
                vals = set(np.unique(got))
                assert vals <= {src, mapping[src]}
                frac = np.mean(got == mapping[src])
                assert frac == pytest.approx(0.5, abs=0.03)
            else:
                assert np.all(got == src)

    def test_cyclic_mapping(self):
        assert cyclic_mapping(3) == {0: 1, 1: 2, 2: 0}

    def test_none_kind_is_identity(self):
        ds = two_moons(20, seed=0)
        noisy = inject_noise(ds, NoiseSpec("none", seed=5))
        np.testing.assert_array_equal(noisy.noisy_labels, ds.clean_labels)
        assert not noisy.corrupted.any()

    def test_reinjection_replaces_previous_noise(self):
        ds = two_moons(200, seed=0)
        first = inject_noise(ds, NoiseSpec("symmetric", rate=0.9, seed=1))
        second = inject_noise(first, NoiseSpec("none"))
        np.testing.assert_array_equal(second.noisy_labels, ds.clean_labels)
        assert not second.corrupted.any()

    def test_seeded_determinism(self):
        ds = two_moons(500, seed=0)
        a = inject_noise(ds, NoiseSpec("symmetric", rate=0.3, seed=9))
        b = inject_noise(ds, NoiseSpec("symmetric", rate=0.3, seed=9))
        np.testing.assert_array_equal(a.noisy_labels, b.noisy_labels)

    def test_validation(self):
        with pytest.raises(ValueError):
            NoiseSpec("symmetric", rate=1.5)
        with pytest.raises(ValueError):
            NoiseSpec("asymmetric", rate=0.3)
        with pytest.raises(ValueError):
            NoiseSpec("banana")
        ds = two_moons(10)
        with pytest.raises(ValueError):
            inject_noise(ds, NoiseSpec("asymmetric", rate=0.1, mapping={5: 1}))


class TestSplit:
    def test_sizes_and_disjoint_union(self):
        ds = two_moons(103, seed=0)
        train, val = split_dataset(ds, 0.1, seed=7)
        assert val.n == 11  # ceil(0.1 * 103)
        assert train.n == 92
        joined = np.concatenate([train.inputs, val.inputs])
        assert np.unique(joined, axis=0).shape[0] == 103

    def test_determinism_and_seed_sensitivity(self):
        ds = two_moons(50, seed=0)
        t1, v1 = split_dataset(ds, 0.2, seed=3)
        t2, v2 = split_dataset(ds, 0.2, seed=3)
        np.testing.assert_array_equal(v1.inputs, v2.inputs)
        _, v3 = split_dataset(ds, 0.2, seed=4)
        assert v1.inputs.shape == v3.inputs.shape
        assert np.any(v1.inputs != v3.inputs)

    def test_fraction_validation(self):
        ds = two_moons(10)
        with pytest.raises(ValueError):
            split_dataset(ds, 0.0, seed=0)
        with pytest.raises(ValueError):
            split_dataset(ds, 1.0, seed=0)


class TestNoisyDataset:
    def test_flag_consistency_enforced(self):
        with pytest.raises(ValueError):
            NoisyDataset(
                inputs=np.zeros((2, 2)),
                clean_labels=np.array([0, 1]),
                noisy_labels=np.array([0, 0]),
                corrupted=np.array([False, False]),  # inconsistent with labels
                num_classes=2,
            )

    def test_take_subsets_all_fields(self):
        ds = two_moons(10, seed=0)
        sub = ds.take(np.array([0, 3, 4]))
        assert sub.n == 3
        np.testing.assert_array_equal(sub.inputs, ds.inputs[[0, 3, 4]])
        np.testing.assert_array_equal(sub.clean_labels, ds.clean_labels[[0, 3, 4]])

    def test_arrays_read_only(self):
        ds = two_moons(10, seed=0)
        with pytest.raises(ValueError):
            ds.inputs[0, 0] = 99.0


class TestExportCsv:
    def test_header_content_and_round_trip(self, tmp_path):
        ds = inject_noise(two_moons(8, noise_std=0.1, seed=0), NoiseSpec("symmetric", rate=0.5, seed=1))
        path = tmp_path / "data.csv"
        export_csv(ds, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "index,x0,x1,clean_label,noisy_label,corrupted"
        assert len(lines) == 9
        row = lines[1].split(",")
        assert int(row[0]) == 0
        assert float(row[1]) == ds.inputs[0, 0]  # repr round-trips exactly
        assert int(row[4]) in (0, 1)

    def test_byte_determinism(self, tmp_path):
        ds = two_moons(20, noise_std=0.3, seed=2)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        export_csv(ds, p1)
        export_csv(ds, p2)
        assert p1.read_bytes() == p2.read_bytes()
