import numpy as np
import pytest

from puzzlecloud.errors import ConfigError, DimensionError
from puzzlecloud.model import EncoderConfig, PuzzleNet, predict_labels
from puzzlecloud.numerics import gradient_check
from puzzlecloud.training import joint_loss

SMALL = dict(per_point_mlp_widths=[8, 8, 16], head_widths_classification=[8], head_widths_per_point=[8, 8])


def generic_point(model, seed=0):
    """Give every bias a small random value.

    Zero-initialised biases put pre-activations of all-zero rows exactly on the
    ReLU kink, where finite differences are meaningless.
    """
    rng = np.random.default_rng(seed)
    for p in model.params:
        if p.name.endswith("bias"):
            p.tensor.data = rng.uniform(-0.1, 0.1, p.data.shape)
    return model


def small_model(task="classification", seed=0, with_puzzle=True, **kw):
    cfg = EncoderConfig(num_classes=3, num_parts=4 if task == "segmentation" else None, num_voxels=8,
                        task=task, dropout_rate=0.0, **{**SMALL, **kw})
    return PuzzleNet(cfg, seed=seed, with_puzzle=with_puzzle)


class TestShapes:
    def test_classification(self):
        m = small_model()
        x = np.random.default_rng(0).normal(size=(2, 10, 3))
        local, glob = m.encode(x)
        assert local.shape == (2, 10, 8) and glob.shape == (2, 16)
        assert m.main_forward(x).shape == (2, 3)
        assert m.puzzle_forward(x).shape == (2, 10, 8)

    def test_segmentation(self):
        m = small_model("segmentation")
        x = np.random.default_rng(0).normal(size=(2, 10, 3))
        assert m.main_forward(x).shape == (2, 10, 4)
        assert m.puzzle_forward(x).shape == (2, 10, 8)

    def test_default_widths(self):
        cfg = EncoderConfig()
        assert cfg.per_point_mlp_widths == [64, 64, 64, 128, 1024]
        assert cfg.head_widths_classification == [512, 256]
        assert cfg.head_widths_per_point == [512, 256, 128]
        assert cfg.dropout_rate == 0.3

    def test_bad_configs(self):
        with pytest.raises(ConfigError):
            EncoderConfig(dropout_rate=1.0)
        with pytest.raises(ConfigError):
            EncoderConfig(task="segmentation", num_parts=None)
        with pytest.raises(ConfigError):
            EncoderConfig(use_tnet=True)
        with pytest.raises(ConfigError):
            EncoderConfig(task="detection")

    def test_no_puzzle_head(self):
        m = small_model(with_puzzle=False)
        assert not m.params.group("puzzle_head")
        with pytest.raises(ConfigError):
            m.puzzle_forward(np.zeros((1, 4, 3)))


class TestInitialisation:
    def test_seeded(self):
        a, b = small_model(seed=3), small_model(seed=3)
        for p in a.params:
            assert np.array_equal(p.data, b.params[p.name].data)

    def test_encoder_independent_of_puzzle_head(self):
        a, b = small_model(with_puzzle=True), small_model(with_puzzle=False)
        for p in b.params:
            assert np.array_equal(p.data, a.params[p.name].data)

    def test_he_uniform_bounds(self):
        m = PuzzleNet(EncoderConfig(), seed=0)
        w = m.params["encoder.mlp4.weight"].data
        bound = np.sqrt(6.0 / 128)
        assert np.abs(w).max() <= bound
        assert np.abs(w).max() > 0.95 * bound
        assert np.all(m.params["encoder.mlp4.bias"].data == 0.0)


class TestPermutation:
    @pytest.mark.parametrize("task", ["classification", "segmentation"])
    def test_invariance_and_equivariance(self, task):
        m = small_model(task)
        rng = np.random.default_rng(1)
        for _ in range(10):
            x = rng.normal(size=(2, 12, 3))
            perm = rng.permutation(12)
            local, glob = m.encode(x)
            local_p, glob_p = m.encode(x[:, perm])
            assert np.array_equal(glob.data, glob_p.data)
            assert np.array_equal(local.data[:, perm], local_p.data)
            out, out_p = m.puzzle_forward(x), m.puzzle_forward(x[:, perm])
            assert np.array_equal(out.data[:, perm], out_p.data)


class TestGroups:
    @pytest.mark.parametrize("task", ["classification", "segmentation"])
    def test_disjoint_gradients(self, task):
        m = small_model(task)
        rng = np.random.default_rng(2)
        x = rng.normal(size=(2, 6, 3))
        main_t = rng.integers(0, 3, 2) if task == "classification" else rng.integers(0, 4, (2, 6))
        # main loss only: puzzle head untouched
        m.params.zero_grad()
        total, _, _ = joint_loss(m.main_forward(x), main_t, None, None, 0.0)
        total.backward()
        assert all(p.grad is None for p in m.params.group("puzzle_head"))
        assert all(p.grad is not None for p in m.params.group("main_head"))
        # puzzle loss only: main head untouched
        m.params.zero_grad()
        from puzzlecloud.training import _cross_entropy

        _cross_entropy(m.puzzle_forward(x), rng.integers(0, 8, (2, 6))).backward()
        assert all(p.grad is None for p in m.params.group("main_head"))
        assert all(p.grad is not None for p in m.params.group("puzzle_head"))
        assert any(p.grad is not None and np.any(p.grad) for p in m.params.group("feature"))

    def test_segmentation_shared_layer_is_feature(self):
        m = small_model("segmentation")
        assert m.params["shared_head.fc0.weight"].group == "feature"


class TestGradients:
    @pytest.mark.parametrize("task", ["classification", "segmentation"])
    def test_full_model(self, task):
        m = generic_point(small_model(task))
        rng = np.random.default_rng(4)
        x = rng.normal(size=(2, 8, 3))
        main_t = rng.integers(0, 3, 2) if task == "classification" else rng.integers(0, 4, (2, 8))
        puz_t = rng.integers(0, 8, (2, 8))

        def f():
            return joint_loss(m.main_forward(x), main_t, m.puzzle_forward(x), puz_t, 0.6)[0]

        assert gradient_check(f, [p.tensor for p in m.params], max_per_param=10) < 1e-3

    def test_batch_norm_variant(self):
        m = generic_point(small_model(batch_norm=True))
        rng = np.random.default_rng(5)
        x = rng.normal(size=(2, 8, 3))
        y = rng.integers(0, 3, 2)
        assert "encoder.mlp0.bn_scale" in [p.name for p in m.params]
        f = lambda: joint_loss(m.main_forward(x, training=False), y, None, None, 0.0)[0]  # noqa: E731
        assert gradient_check(f, [p.tensor for p in m.params.group("feature")], max_per_param=5) < 1e-3


class TestState:
    def test_roundtrip(self):
        a, b = small_model(seed=1), small_model(seed=2)
        b.load_state_dict(a.state_dict())
        x = np.random.default_rng(0).normal(size=(1, 5, 3))
        assert np.array_equal(a.main_forward(x).data, b.main_forward(x).data)

    def test_shape_mismatch(self):
        a = small_model()
        state = a.state_dict()
        state["params"]["cls.out.bias"] = np.zeros(7)
        with pytest.raises(DimensionError):
            small_model().load_state_dict(state)


def test_predict_labels_tie():
    assert predict_labels(np.array([[1.0, 3.0, 3.0], [2.0, 2.0, 2.0]])).tolist() == [1, 0]
