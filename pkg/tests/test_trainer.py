import math

import numpy as np
import pytest

from chronoscope.encoders import EncoderSpec, VideoModel, read_checkpoint
from chronoscope.synthvid import CLASS_NAMES, generate_dataset
from chronoscope.tasks import TaskInstance, build_template_instances
from chronoscope.tensor import Tensor
from chronoscope.trainer import (
    DEFAULT_LR,
    HIER_LR,
    DivergenceError,
    MetricsError,
    MetricsRecord,
    TrainConfig,
    append_records,
    clip_grad_norm,
    evaluate,
    global_norm,
    read_records,
    sgd_step,
    train_loop,
)
import chronoscope.trainer.loop as loop_mod


def named(**arrays):
    out = {}
    for k, a in arrays.items():
        t = Tensor(np.array(a, dtype=np.float64), requires_grad=True)
        out[k] = t
    return out


# ---------------------------------------------------------------- sgd


def test_sgd_plain_gradient_descent():
    p = named(w=[1.0, -2.0, 3.0])
    g = {"w": np.array([0.5, 0.5, -1.0])}
    sgd_step(p, g, {}, lr=0.1, momentum=0.0, weight_decay=0.0)
    np.testing.assert_allclose(p["w"].data, [0.95, -2.05, 3.1], atol=1e-15)


def test_sgd_zero_grad_fixed_point():
    p = named(w=[1.0, -2.0])
    state = {}
    for step in range(5):
        sgd_step(p, {"w": np.zeros(2)}, state, lr=0.1, momentum=0.9, weight_decay=0.0, step=step)
    np.testing.assert_array_equal(p["w"].data, [1.0, -2.0])
    sgd_step(p, {}, state, lr=0.1, momentum=0.9, weight_decay=0.0)
    np.testing.assert_array_equal(p["w"].data, [1.0, -2.0])


def test_sgd_quadratic_bowl_recurrence():
    # f(w) = w^2 / 2, so the gradient is w itself
    lr, mu = 0.1, 0.9
    p = named(w=[1.0])
    state = {}
    w, v = 1.0, 0.0
    for step in range(50):
        sgd_step(p, {"w": p["w"].data.copy()}, state, lr=lr, momentum=mu, weight_decay=0.0, step=step)
        v = mu * v + w
        w = w - lr * v
        assert abs(p["w"].data[0] - w) < 1e-12


def test_sgd_weight_decay_shrinks_magnitudes():
    rng = np.random.default_rng(0)
    p = named(a=rng.standard_normal(20), b=rng.standard_normal((3, 4)))
    state = {}
    prev = {k: np.abs(t.data).copy() for k, t in p.items()}
    for step in range(30):
        sgd_step(p, {}, state, lr=0.1, momentum=0.9, weight_decay=5e-4, step=step)
        for k, t in p.items():
            assert np.all(np.abs(t.data) < prev[k])
            prev[k] = np.abs(t.data).copy()


def test_sgd_nan_gradient_names_layer_and_step():
    p = named(**{"tad.step3.conv.weight": [1.0, 2.0]})
    with pytest.raises(DivergenceError, match=r"tad\.step3\.conv\.weight.*step 17"):
        sgd_step(p, {"tad.step3.conv.weight": np.array([np.nan, 0.0])}, {}, lr=0.1, step=17)


def test_clip_grad_norm():
    grads = {"a": np.array([3.0, 0.0]), "b": np.array([4.0]), "c": None}
    assert global_norm(grads) == 5.0
    assert clip_grad_norm(grads, 2.5) == 5.0
    assert global_norm(grads) == pytest.approx(2.5)
    assert clip_grad_norm(grads, None) == pytest.approx(2.5)


# ---------------------------------------------------------------- config


def test_train_config_defaults_and_validation():
    cfg = TrainConfig()
    assert (cfg.momentum, cfg.weight_decay, cfg.batch_size) == (0.9, 5e-4, 8)
    assert cfg.resolved_lr("hierarchical") == HIER_LR == 1e-4
    assert cfg.resolved_lr("time_aligned") == cfg.resolved_lr("sequential") == DEFAULT_LR == 1e-3
    assert TrainConfig(lr=0.05).resolved_lr("hierarchical") == 0.05
    assert cfg.resolved_clip("sequential") == 5.0
    assert cfg.resolved_clip("time_aligned") is None
    assert TrainConfig(clip_norm=-1.0).resolved_clip("sequential") is None
    for bad in (dict(lr=0.0), dict(momentum=1.0), dict(weight_decay=-1.0), dict(batch_size=0),
                dict(epochs=-1), dict(eval_every=0)):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


# ---------------------------------------------------------------- evaluate


class LookupModel:
    """Stub classifier: logits are read off the first pixel of each clip."""

    def __init__(self, fn):
        self.fn = fn

    def __call__(self, x, mode="eval", dropout_seed=0):
        return Tensor(np.stack([self.fn(v) for v in x.data]))


def binary_instances(n=10):
    out = []
    for i in range(n):
        t = i % 2
        out.append(TaskInstance(tuple(range(4)), np.full((4, 1, 2, 2), float(t), np.float32), t, i))
    return out


def test_evaluate_perfect_predictor():
    model = LookupModel(lambda v: np.array([1.0 - v[0, 0, 0, 0], v[0, 0, 0, 0]]))
    rec = evaluate(model, binary_instances())
    assert rec.accuracy == rec.prec1 == rec.prec5 == 1.0
    assert rec.per_class == {"backward": 1.0, "forward": 1.0}


def test_evaluate_constant_predictor():
    rec = evaluate(LookupModel(lambda v: np.array([0.0, 1.0])), binary_instances())
    assert rec.accuracy == 0.5
    assert rec.loss == pytest.approx(math.log(1 + math.e) - 0.5)


def test_evaluate_empty():
    with pytest.raises(ValueError):
        evaluate(LookupModel(lambda v: v), [])


def test_per_class_weighted_average():
    base = generate_dataset("template", 40, 0, "test")
    inst = build_template_instances(base, 0, "test")[:37]  # uneven class counts
    rng = np.random.default_rng(0)
    model = LookupModel(lambda v: rng.standard_normal(8))
    rec = evaluate(model, inst, task="template", class_names=CLASS_NAMES)
    counts = {CLASS_NAMES[c]: sum(i.class_id == c for i in inst) for c in range(8)}
    weighted = sum(rec.per_class[k] * counts[k] for k in rec.per_class) / len(inst)
    assert abs(weighted - rec.accuracy) < 1e-12
    assert rec.prec1 <= rec.prec5


def test_evaluate_is_pure():
    spec = EncoderSpec.from_name("tad", T=4, K=2, base_channels=(2, 3, 3))
    model = VideoModel(spec, seed=0)
    rng = np.random.default_rng(1)
    for p in model.batchnorm_layers().values():
        p.running_mean = rng.standard_normal(p.scale.shape[0])
        p.running_var = rng.uniform(0.5, 2.0, p.scale.shape[0])
    before = {k: v.copy() for k, v in model.state_dict().items()}
    inst = [TaskInstance(tuple(range(4)), rng.uniform(size=(4, 1, 16, 16)).astype(np.float32), i % 2)
            for i in range(6)]
    evaluate(model, inst)
    after = model.state_dict()
    assert before.keys() == after.keys()
    for k in before:
        np.testing.assert_array_equal(before[k], after[k])


# ---------------------------------------------------------------- records


def test_metrics_record_validation_and_json():
    with pytest.raises(ValueError):
        MetricsRecord("arrow", "test", 0, 0.1, 1.2, 1.0, 1.0)
    with pytest.raises(ValueError):
        MetricsRecord("arrow", "test", 0, 0.1, 0.5, 0.6, 0.5)
    rec = MetricsRecord("arrow", "test", 3, float("nan"), 0.5, 0.5, 1.0, {"forward": 0.5}, wall_seconds=1.5)
    line = rec.to_json()
    assert '"loss": null' in line and '"wall_seconds": null' in line
    assert '"wall_seconds": 1.5' in rec.to_json(timing=True)
    back = MetricsRecord.from_json(line)
    assert math.isnan(back.loss) and back.per_class == {"forward": 0.5}


def test_read_records_reports_line(tmp_path):
    path = tmp_path / "m.jsonl"
    rec = MetricsRecord("arrow", "test", 0, 0.7, 0.5, 0.5, 1.0)
    append_records(path, [rec, rec])
    with open(path, "a") as f:
        f.write("{not json\n")
    with pytest.raises(MetricsError, match=r"m\.jsonl:3"):
        read_records(path)


# ---------------------------------------------------------------- train loop


def tiny_setup(encoder="tad", n_train=4, n_test=4, **spec_kw):
    kw = dict(T=4, base_channels=(2, 3, 3), hier_channels=(2, 2, 2), K=2, hidden=4, dropout=0.1)
    kw.update(spec_kw)
    model = VideoModel(EncoderSpec.from_name(encoder, **kw), seed=0)
    train = generate_dataset("asym", n_train, 0)
    test = generate_dataset("asym", n_test, 1000, "test")
    return model, train, test


def test_zero_epochs_only_initial_evaluation(tmp_path):
    model, train, test = tiny_setup()
    before = {k: v.copy() for k, v in model.state_dict().items()}
    cfg = TrainConfig(epochs=0, n_frames=4)
    res = train_loop(cfg, train, test, model, metrics_path=tmp_path / "m.jsonl", checkpoint_path=tmp_path / "c")
    assert [r.epoch for r in res.records] == [0]
    assert len((tmp_path / "m.jsonl").read_text().splitlines()) == 1
    for k, v in model.state_dict().items():
        np.testing.assert_array_equal(v, before[k])
    assert read_checkpoint(tmp_path / "c")[1].keys() == before.keys()


def test_eval_schedule_and_losses():
    model, train, test = tiny_setup()
    res = train_loop(TrainConfig(epochs=5, eval_every=2, n_frames=4, batch_size=3), train, test, model)
    assert [r.epoch for r in res.records] == [0, 2, 4, 5]
    assert len(res.epoch_losses) == 5
    # 4 clips -> 8 arrow instances -> 3 batches of at most 3 per epoch
    assert res.steps == 15
    assert all(r.n == 8 and r.chance == 0.5 and r.encoder == "tad" for r in res.records)


@pytest.mark.parametrize("encoder", ["tad", "lstm"])
def test_training_is_deterministic(tmp_path, encoder):
    outs = []
    for run in range(2):
        model, train, test = tiny_setup(encoder)
        d = tmp_path / f"{encoder}{run}"
        d.mkdir()
        train_loop(TrainConfig(epochs=2, n_frames=4, seed=5), train, test, model,
                   metrics_path=d / "m.jsonl", checkpoint_path=d / "c.vtck", config_hash="ab" * 32)
        outs.append(((d / "m.jsonl").read_bytes(), (d / "c.vtck").read_bytes()))
    assert outs[0] == outs[1]
    assert read_checkpoint(tmp_path / f"{encoder}0" / "c.vtck")[0] == bytes.fromhex("ab" * 32)


def test_training_reduces_loss():
    model, train, test = tiny_setup(n_train=4)
    res = train_loop(TrainConfig(epochs=15, lr=0.01, n_frames=4, batch_size=4), train, None, model)
    assert res.records == []
    assert res.epoch_losses[-1] < res.epoch_losses[0]


def test_divergence_keeps_last_good_checkpoint(tmp_path, monkeypatch):
    model, train, test = tiny_setup()
    real = loop_mod.softmax_cross_entropy
    calls = {"n": 0}

    def flaky(logits, targets):
        calls["n"] += 1
        out = real(logits, targets)
        if calls["n"] == 5:  # first step of epoch 3 (two steps per epoch)
            out.data = np.array(np.nan)
        return out

    monkeypatch.setattr(loop_mod, "softmax_cross_entropy", flaky)
    snapshots = []
    cfg = TrainConfig(epochs=5, n_frames=4, batch_size=4)
    with pytest.raises(DivergenceError, match="epoch 3, step 4"):
        train_loop(cfg, train, test, model, checkpoint_path=tmp_path / "c.vtck",
                   on_record=lambda r: snapshots.append({k: v.copy() for k, v in model.state_dict().items()}))
    _, state = read_checkpoint(tmp_path / "c.vtck")
    # the checkpoint and the restored model are the state after epoch 2
    last = snapshots[-1]
    for k, v in state.items():
        np.testing.assert_array_equal(v, last[k].astype(np.float32).astype(np.float64))
        np.testing.assert_array_equal(model.state_dict()[k], last[k])
