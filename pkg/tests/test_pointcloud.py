import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from puzzlecloud.errors import (
    ConfigError,
    DatasetError,
    DegenerateCloudError,
    DegenerateMeshError,
    DimensionError,
    EmptyCloudError,
    LabelError,
    LabelLeakageError,
    ParseError,
)
from puzzlecloud.pointcloud import (
    PALETTE,
    Dataset,
    Mesh,
    PointCloud,
    jitter,
    normalize_unit_sphere,
    random_rotate_y,
    read_off,
    read_ply_colors,
    read_ply_points,
    rotate_y,
    sample_faces,
    sample_mesh_surface,
    scale_unit_cube,
    write_off,
    write_ply,
    write_ply_colored,
)

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


def random_cloud(seed, k=30):
    rng = np.random.default_rng(seed)
    return PointCloud(rng.normal(size=(k, 3)) * rng.uniform(0.1, 5), 2, rng.integers(0, 4, k), "c")


class TestContainers:
    def test_validation(self):
        with pytest.raises(DimensionError):
            PointCloud(np.zeros((4, 2)))
        with pytest.raises(EmptyCloudError):
            PointCloud(np.zeros((0, 3)))
        with pytest.raises(LabelError):
            PointCloud(np.zeros((4, 3)), part_labels=[0, 1])

    def test_unlabeled_hides_labels(self):
        u = random_cloud(0).strip_labels()
        with pytest.raises(LabelLeakageError):
            u.class_label
        with pytest.raises(LabelLeakageError):
            u.part_labels
        assert not hasattr(u, "__dict__")

    def test_dataset_checks(self):
        with pytest.raises(DatasetError):
            Dataset([PointCloud(np.zeros((2, 3)), 3)], ["a", "b"])
        with pytest.raises(DatasetError):
            Dataset([PointCloud(np.zeros((2, 3)), 0, [0, 5])], ["a"], num_parts=3)

    def test_mesh_index_range(self):
        with pytest.raises(DimensionError):
            Mesh(np.zeros((3, 3)), [[0, 1, 3]])


TRI = Mesh(np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]), [[0, 1, 2]])


class TestSampling:
    def test_single_triangle_barycentric(self):
        _, _, bary = sample_faces(TRI, 2000, np.random.default_rng(0))
        assert np.all(bary >= 0)
        np.testing.assert_allclose(bary.sum(axis=1), 1.0, atol=1e-12)

    def test_area_ratio(self):
        # faces of area 4.5 and 0.5: the larger should get 90% of samples
        verts = np.array([[0, 0, 0], [3, 0, 0], [0, 3, 0], [10, 0, 0], [11, 0, 0], [10, 1, 0]], dtype=float)
        mesh = Mesh(verts, [[0, 1, 2], [3, 4, 5]])
        np.testing.assert_allclose(mesh.face_areas(), [4.5, 0.5])
        _, face_idx, _ = sample_faces(mesh, 10000, np.random.default_rng(1))
        assert abs(np.mean(face_idx == 0) - 0.9) <= 0.03

    def test_default_k(self):
        assert sample_mesh_surface(TRI, rng=np.random.default_rng(0)).k == 2048

    def test_degenerate(self):
        flat = Mesh(np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0]]), [[0, 1, 2]])
        with pytest.raises(DegenerateMeshError):
            sample_mesh_surface(flat, 10, np.random.default_rng(0))
        assert flat.degenerate_faces().tolist() == [True]

    def test_reproducible(self):
        a = sample_mesh_surface(TRI, 64, np.random.default_rng(5))
        b = sample_mesh_surface(TRI, 64, np.random.default_rng(5))
        assert np.array_equal(a.points, b.points)

    def test_face_labels_propagate(self):
        mesh = Mesh(TRI.vertices, TRI.faces, [7])
        c = sample_mesh_surface(mesh, 10, np.random.default_rng(0))
        assert c.part_labels.tolist() == [7] * 10


class TestNormalize:
    def test_hand_example(self):
        out = normalize_unit_sphere(PointCloud([[0.0, 0, 0], [2, 0, 0]]))
        np.testing.assert_allclose(out.points, [[-1, 0, 0], [1, 0, 0]], atol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_max_norm_and_idempotent(self, seed):
        c = random_cloud(seed)
        once = normalize_unit_sphere(c)
        assert abs(np.linalg.norm(once.points, axis=1).max() - 1.0) < 1e-12
        np.testing.assert_allclose(normalize_unit_sphere(once).points, once.points, atol=1e-12)
        assert once.class_label == c.class_label and np.array_equal(once.part_labels, c.part_labels)

    def test_degenerate(self):
        with pytest.raises(DegenerateCloudError):
            normalize_unit_sphere(PointCloud(np.ones((4, 3))))


class TestUnitCube:
    def test_hand_example(self):
        out = scale_unit_cube(PointCloud([[0.0, 0, 0], [2, 2, 2]]))
        np.testing.assert_array_equal(out.points, [[0, 0, 0], [1, 1, 1]])

    def test_aspect_preserved(self):
        out = scale_unit_cube(PointCloud([[1.0, 1, 1], [5, 2, 3]]))
        np.testing.assert_allclose(out.points, [[0, 0, 0], [1, 0.25, 0.5]])

    def test_idempotent(self):
        pts = np.array([[0.0, 0.2, 0.3], [1.0, 0.0, 0.1], [0.4, 0.9, 0.0]])
        assert np.array_equal(scale_unit_cube(PointCloud(pts)).points, pts)

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, (12, 3), elements=finite))
    def test_postcondition(self, pts):
        extent = (pts.max(axis=0) - pts.min(axis=0)).max()
        if extent == 0:
            with pytest.raises(DegenerateCloudError):
                scale_unit_cube(PointCloud(pts))
            return
        out = scale_unit_cube(PointCloud(pts)).points
        assert out.min() >= 0.0 and out.max() <= 1.0
        assert np.all(out.min(axis=0) == 0.0)
        axis = int(np.argmax(pts.max(axis=0) - pts.min(axis=0)))
        assert out[:, axis].max() == 1.0


class TestAugment:
    def test_sigma_zero(self):
        c = random_cloud(1)
        assert np.array_equal(jitter(c, 0.0, 0.05, np.random.default_rng(0)).points, c.points)

    def test_std(self):
        c = PointCloud(np.zeros((1_000_000 // 3 + 1, 3)))
        out = jitter(c, 0.01, 0.05, np.random.default_rng(0)).points
        assert abs(out.std() - 0.01) <= 0.0005

    def test_clip(self):
        c = random_cloud(2, 5000)
        out = jitter(c, 0.5, 0.05, np.random.default_rng(0))
        assert np.abs(out.points - c.points).max() <= 0.05 + 1e-12
        assert out.k == c.k and np.array_equal(out.part_labels, c.part_labels)

    def test_bad_args(self):
        with pytest.raises(ConfigError):
            jitter(random_cloud(0), -1.0)

    def test_rotation_examples(self):
        c = PointCloud([[1.0, 0, 0]])
        np.testing.assert_array_equal(rotate_y(c, 0.0).points, c.points)
        np.testing.assert_allclose(rotate_y(c, np.pi / 2).points, [[0, 0, -1]], atol=1e-12)

    def test_rotation_convention(self):
        p = np.array([[0.3, -0.7, 1.9]])
        t = 0.81
        x, y, z = p[0]
        expected = [x * np.cos(t) + z * np.sin(t), y, -x * np.sin(t) + z * np.cos(t)]
        np.testing.assert_allclose(rotate_y(PointCloud(p), t).points[0], expected, atol=1e-14)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_rotation_isometry(self, seed):
        c = random_cloud(seed)
        out = random_rotate_y(c, np.random.default_rng(seed))
        np.testing.assert_allclose(np.linalg.norm(out.points, axis=1), np.linalg.norm(c.points, axis=1), atol=1e-12)
        np.testing.assert_array_equal(out.points[:, 1], c.points[:, 1])


class TestOff:
    def test_minimal(self, tmp_path):
        p = tmp_path / "t.off"
        p.write_text("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n")
        m = read_off(p)
        assert m.vertices.shape == (3, 3) and m.faces.shape == (1, 3)

    def test_quad_fan(self, tmp_path):
        p = tmp_path / "q.off"
        p.write_text("OFF\n# comment\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n")
        m = read_off(p)
        assert m.faces.tolist() == [[0, 1, 2], [0, 2, 3]]
        assert m.face_areas().sum() == pytest.approx(1.0)

    def test_roundtrip(self, tmp_path):
        m = Mesh(np.random.default_rng(0).random((4, 3)), [[0, 1, 2], [1, 2, 3]])
        write_off(tmp_path / "m.off", m)
        back = read_off(tmp_path / "m.off")
        assert np.array_equal(back.vertices, m.vertices) and np.array_equal(back.faces, m.faces)

    @pytest.mark.parametrize("text,line", [
        ("OFX\n3 1 0\n", 1),
        ("OFF\n3 1 0\n0 0 0\n1 0 0\n", 5),
        ("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 9\n", 6),
        ("OFF\nthree 1 0\n0 0 0\n", 2),
        ("OFF\n3 1 0\n0 0 zz\n", 3),
    ])
    def test_malformed(self, tmp_path, text, line):
        p = tmp_path / "bad.off"
        p.write_text(text)
        with pytest.raises(ParseError) as info:
            read_off(p)
        assert info.value.line == line


class TestPly:
    def test_roundtrip_exact(self, tmp_path):
        c = random_cloud(3)
        write_ply(tmp_path / "c.ply", c)
        back = read_ply_points(tmp_path / "c.ply")
        assert np.array_equal(back.points, c.points)
        assert np.array_equal(back.part_labels, c.part_labels)

    def test_nine_digit_mode(self, tmp_path):
        c = random_cloud(4)
        write_ply(tmp_path / "c.ply", c, digits=9)
        back = read_ply_points(tmp_path / "c.ply")
        np.testing.assert_allclose(back.points, c.points, rtol=1e-8)

    def test_colored(self, tmp_path):
        c = random_cloud(5, 40)
        ids = np.arange(40) % 27
        write_ply_colored(tmp_path / "v.ply", c, ids)
        np.testing.assert_array_equal(read_ply_colors(tmp_path / "v.ply"), PALETTE[ids])
        assert read_ply_points(tmp_path / "v.ply").part_labels.tolist() == ids.tolist()

    def test_palette(self):
        assert PALETTE.shape == (27, 3)
        assert len({tuple(c) for c in PALETTE}) == 27

    def test_truncated(self, tmp_path):
        c = random_cloud(6, 5)
        write_ply(tmp_path / "c.ply", c)
        lines = (tmp_path / "c.ply").read_text().splitlines()
        (tmp_path / "t.ply").write_text("\n".join(lines[:-2]) + "\n")
        with pytest.raises(ParseError) as info:
            read_ply_points(tmp_path / "t.ply")
        assert info.value.line == len(lines) - 1

    def test_binary_rejected(self, tmp_path):
        p = tmp_path / "b.ply"
        p.write_text("ply\nformat binary_little_endian 1.0\nelement vertex 1\nproperty float x\nend_header\n")
        with pytest.raises(ParseError):
            read_ply_points(p)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "x.ply"
        p.write_text("plx\n")
        with pytest.raises(ParseError):
            read_ply_points(p)
