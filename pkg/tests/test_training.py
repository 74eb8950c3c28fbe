import math

import numpy as np
import pytest

from puzzlecloud.datagen import generate_dataset
from puzzlecloud.errors import ConfigError, LabelError
from puzzlecloud.model import EncoderConfig, PuzzleNet
from puzzlecloud.numerics import Tensor
from puzzlecloud.training import (
    CyclingStream,
    EpochStats,
    TrainConfig,
    Trainer,
    evaluate,
    evaluate_puzzle,
    joint_loss,
    lr_at_epoch,
)

TINY = dict(per_point_mlp_widths=[16, 16, 32], head_widths_classification=[16], head_widths_per_point=[16, 16],
            dropout_rate=0.3)


@pytest.fixture(scope="module")
def data():
    return generate_dataset(3, 4, 64, "clean", seed=0)


@pytest.fixture(scope="module")
def seg_data():
    return generate_dataset(2, 3, 64, "scan_bg", seed=1)


def make_trainer(ds, alpha=0.6, seed=0, with_puzzle=True, task="classification", epochs=2, l=2, **kw):
    cfg = EncoderConfig(num_classes=len(ds.class_names), num_voxels=l ** 3, task=task,
                        num_parts=ds.num_parts if task == "segmentation" else None, **TINY)
    model = PuzzleNet(cfg, seed=seed, with_puzzle=with_puzzle)
    tcfg = TrainConfig(alpha=alpha, puzzle_l=l, batch_size=5, epochs=epochs, seed=seed, task=task, **kw)
    optimizer = "adam_seg" if task == "segmentation" else "adam"
    if tcfg.optimizer != optimizer and "optimizer" not in kw:
        tcfg = TrainConfig(**{**tcfg.to_dict(), "optimizer": optimizer})
    puzzle = [s.strip_labels() for s in ds.samples] if with_puzzle else None
    return Trainer(model, tcfg, ds, puzzle)


def ce(logits, target):
    z = np.asarray(logits, dtype=float)
    return float(np.log(np.exp(z - z.max()).sum()) + z.max() - z[target])


class TestSchedule:
    def test_adam_classification(self):
        cfg = TrainConfig()
        assert [lr_at_epoch(cfg, e) for e in (0, 20, 40)] == [0.001, 0.00025, 0.0000625]
        assert lr_at_epoch(cfg, 19) == 0.001

    def test_other_recipes(self):
        assert lr_at_epoch(TrainConfig(optimizer="sgd"), 20) == 0.005
        assert lr_at_epoch(TrainConfig(optimizer="adam_seg"), 45) == 0.00025

    def test_non_increasing(self):
        for name in ("adam", "sgd", "adam_seg"):
            cfg = TrainConfig(optimizer=name)
            lrs = [lr_at_epoch(cfg, e) for e in range(200)]
            assert all(a >= b for a, b in zip(lrs, lrs[1:]))

    def test_bad_config(self):
        with pytest.raises(ConfigError):
            TrainConfig(alpha=-0.1)
        with pytest.raises(ConfigError):
            TrainConfig(batch_size=0)
        with pytest.raises(ConfigError):
            TrainConfig(optimizer="rmsprop")
        with pytest.raises(ConfigError):
            lr_at_epoch(TrainConfig(), -1)


class TestJointLoss:
    def test_alpha_arithmetic(self):
        # logits chosen so L_m and L_p have closed forms: ln 2 for two equal logits
        main = Tensor([[0.0, 0.0]])
        puz = Tensor([[[0.0, 0.0], [0.0, 0.0]]])
        total, lm, lp = joint_loss(main, [0], puz, [[1, 0]], 0.6)
        assert float(lm.data) == pytest.approx(math.log(2))
        assert float(lp.data) == pytest.approx(math.log(2))
        assert float(total.data) == float(lm.data) + 0.6 * float(lp.data)

    def test_total_from_parts(self):
        rng = np.random.default_rng(0)
        main = rng.normal(size=(3, 4))
        puz = rng.normal(size=(3, 5, 8))
        mt, pt = rng.integers(0, 4, 3), rng.integers(0, 8, (3, 5))
        total, lm, lp = joint_loss(Tensor(main), mt, Tensor(puz), pt, 0.6)
        exp_m = np.mean([ce(main[i], mt[i]) for i in range(3)])
        exp_p = np.mean([ce(puz[b, k], pt[b, k]) for b in range(3) for k in range(5)])
        assert float(lm.data) == pytest.approx(exp_m, rel=1e-12)
        assert float(lp.data) == pytest.approx(exp_p, rel=1e-12)
        assert float(total.data) == pytest.approx(exp_m + 0.6 * exp_p, rel=1e-12)

    def test_alpha_one_identical(self):
        logits = np.random.default_rng(1).normal(size=(2, 3, 4))
        t = np.array([[0, 1, 2], [3, 0, 1]])
        total, lm, _ = joint_loss(Tensor(logits), t, Tensor(logits), t, 1.0)
        assert float(total.data) == pytest.approx(2 * float(lm.data), rel=1e-15)

    def test_alpha_zero_no_puzzle_gradient(self):
        main = Tensor(np.zeros((1, 2)), requires_grad=True)
        puz = Tensor(np.ones((1, 3, 4)), requires_grad=True)
        total, lm, lp = joint_loss(main, [1], puz, [[0, 1, 2]], 0.0)
        assert total is lm and lp is not None
        total.backward()
        assert puz.grad is None and main.grad is not None

    def test_label_range(self):
        with pytest.raises(LabelError):
            joint_loss(Tensor([[0.0, 0.0]]), [5], None, None, 0.0)

    def test_alpha_needs_puzzle(self):
        with pytest.raises(ConfigError):
            joint_loss(Tensor([[0.0, 0.0]]), [0], None, None, 0.5)


class TestCycling:
    def test_cycles_through_everything(self):
        s = CyclingStream(list("abcd"), np.random.default_rng(0))
        first = s.take(4)
        assert sorted(first) == list("abcd")
        assert sorted(s.take(4)) == list("abcd")

    def test_empty(self):
        with pytest.raises(ConfigError):
            CyclingStream([], np.random.default_rng(0))


class TestTrainer:
    def test_deterministic(self, data):
        runs = []
        for _ in range(2):
            t = make_trainer(data, epochs=2)
            hist = t.fit()
            runs.append((hist, {p.name: p.data.copy() for p in t.model.params}))
        assert [h.csv_row() for h in runs[0][0]] == [h.csv_row() for h in runs[1][0]]
        for name, v in runs[0][1].items():
            assert np.array_equal(v, runs[1][1][name])

    def test_stats(self, data):
        t = make_trainer(data)
        s = t.train_epoch()
        assert s.epoch == 0 and s.lr == 0.001
        for v in (s.main_loss, s.puzzle_loss, s.total_loss):
            assert np.isfinite(v) and v >= 0
        assert 0.0 <= s.main_metric <= 1.0 and 0.0 <= s.puzzle_accuracy <= 1.0
        assert len(s.csv_row()) == len(EpochStats.CSV_COLUMNS)

    def test_batches_per_epoch(self, data, monkeypatch):
        t = make_trainer(data)
        sizes = []
        original = t.train_step
        monkeypatch.setattr(t, "train_step", lambda batch, lr: sizes.append(len(batch)) or original(batch, lr))
        t.train_epoch()
        # 12 samples in batches of 5: last partial batch kept
        assert sizes == [5, 5, 2]

    def test_alpha_zero_twin_run(self, data):
        a = make_trainer(data, alpha=0.0, with_puzzle=True)
        b = make_trainer(data, alpha=0.0, with_puzzle=False)
        puzzle_before = {p.name: p.data.copy() for p in a.model.params.group("puzzle_head")}
        ha, hb = a.fit(3), b.fit(3)
        for p in b.model.params:
            assert np.array_equal(p.data, a.model.params[p.name].data), p.name
        for name, v in puzzle_before.items():
            assert np.array_equal(a.model.params[name].data, v)
        for x, y in zip(ha, hb):
            assert x.total_loss == x.main_loss == y.main_loss
            assert np.isfinite(x.puzzle_loss) and math.isnan(y.puzzle_loss)

    def test_alpha_needs_stream(self, data):
        with pytest.raises(ConfigError):
            make_trainer(data, alpha=0.6, with_puzzle=False)

    def test_task_mismatch(self, data):
        model = PuzzleNet(EncoderConfig(num_classes=3, num_voxels=8, **TINY))
        with pytest.raises(ConfigError):
            Trainer(model, TrainConfig(task="segmentation", puzzle_l=2), data, None)

    def test_segmentation_epoch(self, seg_data):
        t = make_trainer(seg_data, task="segmentation", epochs=1)
        s = t.train_epoch()
        assert 0.0 <= s.main_metric <= 1.0
        assert s.lr == 0.001
        report = evaluate(t.model, seg_data, "segmentation")
        assert set(report) >= {"instance_miou", "class_average_miou", "category_miou", "overall_accuracy",
                               "average_part_accuracy", "per_part_accuracy"}

    def test_rng_state_resume(self, data):
        a = make_trainer(data)
        a.train_epoch()
        state = a.rng_state()
        params = {p.name: p.data.copy() for p in a.model.params}
        opt = a.optimizer.to_dict()
        next_a = a.train_epoch()

        b = make_trainer(data)
        b.model.load_state_dict({"params": params})
        from puzzlecloud.numerics import OptimizerState

        b.optimizer = OptimizerState.from_dict(opt, b.model.params)
        b.set_rng_state(state)
        b.epoch = 1
        assert b.train_epoch().csv_row() == next_a.csv_row()


class TestEvaluate:
    def test_deterministic(self, data):
        t = make_trainer(data)
        assert evaluate(t.model, data) == evaluate(t.model, data)

    def test_missing_labels(self, data):
        t = make_trainer(data)
        unlabeled = data.subset([s.strip_labels() for s in data.samples])
        with pytest.raises(Exception):
            evaluate(t.model, unlabeled)

    def test_overfit_classification(self):
        ds = generate_dataset(4, 2, 64, "clean", seed=0)
        cfg = EncoderConfig(num_classes=4, num_voxels=27, **{**TINY, "dropout_rate": 0.0})
        model = PuzzleNet(cfg, seed=0)
        # one full batch per epoch; the step schedule is stretched past the horizon
        tcfg = TrainConfig(alpha=0.6, puzzle_l=3, batch_size=8, epochs=200, decay_every=200, seed=0,
                           augment_jitter=False, augment_rotate=False)
        Trainer(model, tcfg, ds, [s.strip_labels() for s in ds.samples]).fit()
        assert evaluate(model, ds)["accuracy"] == 1.0

    def test_puzzle_chance_untrained(self, data):
        t = make_trainer(data, l=3)
        acc = evaluate_puzzle(t.model, data.samples * 4, 3, seed=0)
        assert abs(acc - 1 / 27) < 0.05
