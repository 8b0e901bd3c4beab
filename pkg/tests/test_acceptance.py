"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

The training checks run at desk scale on one core. Runs stop as soon as the
target is met and report the epoch that reached it.
"""
import time

import numpy as np
import pytest

from chronoscope import cli
from chronoscope.encoders import EncoderSpec, VideoModel, count_params, param_breakdown, tad_step_count
from chronoscope.synthvid import (
    CLASS_NAMES,
    REVERSE_PAIRS,
    Dataset,
    gen_asym_clip,
    gen_sym_clip,
    gen_template_clip,
    generate_dataset,
    reverse_clip,
)
from chronoscope.tasks import (
    FutureTaskConfig,
    build_future_dataset,
    build_future_instances,
    build_template_instances,
    eval_future_selection,
    frame_similarity_baseline,
    random_scorer,
    reverse_pair_accuracy,
    sample_frames,
)
from chronoscope.trainer import TrainConfig, predict_logits, train_loop
from chronoscope.verify import TOLERANCE

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

FIVE_MIN = 300.0
ENCODERS = ("rnn", "lstm", "hier", "tad", "mean")


class Reached(Exception):
    """Raised from a training hook once the criterion is met."""


def run_until(cfg, train, test, model, done, *, future_cfg=None):
    """Train until ``done(record)`` holds at an evaluation. Returns (records, hit, seconds)."""
    records = []

    def hook(rec):
        records.append(rec)
        if done(rec):
            raise Reached

    t0 = time.perf_counter()
    try:
        train_loop(cfg, train, test, model, future_cfg=future_cfg, on_record=hook)
        hit = None
    except Reached:
        hit = records[-1]
    return records, hit, time.perf_counter() - t0


# ---------------------------------------------------------------- 1


def test_criterion_01_gradient_soundness(criterion, capsys):
    t0 = time.perf_counter()
    code = cli.main(["gradcheck"])
    elapsed = time.perf_counter() - t0
    rows = [line.split() for line in capsys.readouterr().out.splitlines() if line.endswith(("ok", "FAIL"))]
    worst = max(float(r[1]) for r in rows)
    ok = code == 0 and worst < TOLERANCE and elapsed < 120.0
    criterion(1, "gradient soundness", ok,
              f"{len(rows)} checks, worst rel err {worst:.2e} < {TOLERANCE:g}, {elapsed:.1f}s < 120s")


# ---------------------------------------------------------------- 2


def test_criterion_02_temporal_causality(criterion):
    T, violations, checked = 8, [], 0
    for seed in range(20):
        model = VideoModel(EncoderSpec.from_name("tad", T=T), seed=seed)
        rng = np.random.default_rng(seed)
        clip = rng.uniform(0.0, 1.0, (2, T, 1, 16, 16))
        for mode in ("eval", "train"):
            base = [h.data.copy() for h in model.tad_states(clip, mode=mode, dropout_seed=seed)]
            for s in range(T):
                pert = clip.copy()
                pert[:, s] = rng.uniform(0.0, 1.0, pert[:, s].shape)
                states = [h.data for h in model.tad_states(pert, mode=mode, dropout_seed=seed)]
                for t in range(s):
                    checked += 1
                    if not np.array_equal(states[t], base[t]):
                        violations.append((seed, mode, s, t))
                if np.array_equal(states[s], base[s]):
                    violations.append((seed, mode, s, "h_s unchanged"))
    criterion(2, "temporal causality", not violations,
              f"20 seeds, T={T}, {checked} past states bitwise equal, violations {violations[:3]}")


# ---------------------------------------------------------------- 3


def test_criterion_03_encoding_arity(criterion):
    seen = {}
    for K, T in ((12, 16), (4, 4), (1, 2)):
        model = VideoModel(EncoderSpec.from_name("tad", K=K, T=T), seed=0)
        x = np.random.default_rng(K + T).uniform(0.0, 1.0, (2, T, 1, 16, 16))
        enc = model.encode(x)
        seen[(K, T)] = (enc.shape[1], len(model.tad_states(x)))
    ok = all(maps == K * T and steps == T for (K, T), (maps, steps) in seen.items())
    criterion(3, "encoding arity K*T", ok, " ".join(f"K={k},T={t}:{m}maps" for (k, t), (m, _) in seen.items()))


# ---------------------------------------------------------------- 4


def test_criterion_04_parameter_sharing(criterion):
    Ts = range(1, 33)
    seq = {name: {count_params(EncoderSpec.from_name(name, T=T)) for T in Ts} for name in ("rnn", "lstm")}
    tad = [count_params(EncoderSpec.from_name("tad", T=T)) for T in Ts]
    closed_ok = True
    for T in Ts:
        spec = EncoderSpec.from_name("tad", T=T)
        F, K = spec.feature_dim, spec.K
        # step t sees F + (t-1)K channels: batch-norm scale and shift, then a 3x3 conv to K maps
        closed = sum(K * 9 * (F + (t - 1) * K) + K + 2 * (F + (t - 1) * K) for t in range(1, T + 1))
        closed_ok &= param_breakdown(spec)["encoder"] == closed == sum(tad_step_count(spec, t) for t in range(1, T + 1))
    closed_ok &= count_params(EncoderSpec.from_name("tad", T=5)) == VideoModel(EncoderSpec.from_name("tad", T=5)).num_params()
    increasing = all(b > a for a, b in zip(tad, tad[1:]))
    ok = all(len(v) == 1 for v in seq.values()) and closed_ok and increasing
    criterion(4, "parameter sharing", ok,
              f"rnn {seq['rnn']} lstm {seq['lstm']} constant for T=1..32; tad {tad[0]}..{tad[-1]} "
              f"strictly increasing, closed form exact={closed_ok}")


# ---------------------------------------------------------------- 5


def test_criterion_05_arrow_learnability(criterion):
    train = generate_dataset("asym", 1000, 0)
    test = generate_dataset("asym", 1000, 1_000_000, "test")
    cfg = TrainConfig(epochs=30, eval_every=1, task="arrow")
    model = VideoModel(EncoderSpec.from_name("tad"), seed=0)
    _, hit, secs = run_until(cfg, train, test, model, lambda r: r.accuracy >= 0.90)
    asym_ok = hit is not None and secs < FIVE_MIN
    parts = [f"asym tad {hit.accuracy:.3f} at epoch {hit.epoch} ({secs:.0f}s)" if hit else
             f"asym tad never reached 0.90 ({secs:.0f}s)"]

    sym_train = generate_dataset("sym", 1000, 0)
    sym_test = generate_dataset("sym", 1000, 1_000_000, "test")
    sym_ok = True
    for name in ENCODERS:
        model = VideoModel(EncoderSpec.from_name(name), seed=0)
        t0 = time.perf_counter()
        res = train_loop(TrainConfig(epochs=2, task="arrow"), sym_train, sym_test, model)
        secs = time.perf_counter() - t0
        accs = [r.accuracy for r in res.records]
        sym_ok &= all(abs(a - 0.5) <= 0.07 for a in accs) and secs < FIVE_MIN
        parts.append(f"sym {name} {accs[-1]:.3f} ({secs:.0f}s)")
    criterion(5, "arrow-of-time learnability", asym_ok and sym_ok, "; ".join(parts))


# ---------------------------------------------------------------- 6


def test_criterion_06_future_selection(criterion):
    fcfg = FutureTaskConfig()
    chance = fcfg.chance
    base = generate_dataset("asym", 2000, 0)
    many = [i for rep in range(5) for i in build_future_dataset(base, fcfg, "test", seed=rep)]
    rand = eval_future_selection(random_scorer(0), many)
    rand_ok = len(many) == 10_000 and abs(rand - chance) <= 0.02

    train = generate_dataset("asym", 500, 0)
    test = generate_dataset("asym", 500, 1_000_000, "test")
    model = VideoModel(EncoderSpec.from_name("tad", T=fcfg.n_context + 1), seed=0)
    cfg = TrainConfig(epochs=30, eval_every=1, task="future")
    _, hit, secs = run_until(cfg, train, test, model, lambda r: r.accuracy >= chance + 0.20, future_cfg=fcfg)
    test_instances = build_future_dataset(test, fcfg, "test", 0)
    baseline = frame_similarity_baseline(test_instances, model)
    trained = f"tad {hit.accuracy:.3f} at epoch {hit.epoch} ({secs:.0f}s)" if hit else "tad never reached chance+0.20"
    criterion(6, "future-frame selection", rand_ok and hit is not None,
              f"random {rand:.4f} vs 1/C={chance:.2f} over {len(many)}; {trained}; "
              f"frame-similarity baseline {baseline:.3f}")


# ---------------------------------------------------------------- 7


def _same_seed_pairs(seeds):
    clips = []
    for seed in seeds:
        for a, b in REVERSE_PAIRS:
            clips += [gen_template_clip(seed, a), gen_template_clip(seed, b)]
    return Dataset(clips, list(CLASS_NAMES), "test")


def _independent_pair_clips(n, start):
    classes = [c for pair in REVERSE_PAIRS for c in pair]
    return Dataset([gen_template_clip(start + i, classes[i % len(classes)]) for i in range(n)],
                   list(CLASS_NAMES), "test")


def test_criterion_07_template_causality(criterion):
    train = generate_dataset("template", 800, 0)
    test = generate_dataset("template", 800, 1_000_000, "test")

    # the frame-mean ablation, trained so its logits are not trivially uniform
    mean = VideoModel(EncoderSpec.from_name("mean", T=4, num_classes=8), seed=0)
    train_loop(TrainConfig(epochs=3, task="template"), train, None, mean)
    pairs = build_template_instances(_same_seed_pairs(range(20)), 0, "test")
    logits = predict_logits(mean, pairs)
    exact = all(np.array_equal(logits[i], logits[i + 1]) for i in range(0, len(pairs), 2))
    indep = build_template_instances(_independent_pair_clips(2000, 2_000_000), 0, "test")
    rpa, n = reverse_pair_accuracy(predict_logits(mean, indep), [i.target for i in indep])
    ablation_ok = exact and n == 2000 and rpa <= 0.55

    tad = VideoModel(EncoderSpec.from_name("tad", T=4, num_classes=8), seed=0)
    cfg = TrainConfig(epochs=30, eval_every=1, task="template")
    records, hit, secs = run_until(cfg, train, test, tad, lambda r: r.accuracy >= 0.90)
    ordered = all(r.accuracy <= r.prec5 for r in records)
    reached = f"tad prec@1 {hit.accuracy:.3f} at epoch {hit.epoch} ({secs:.0f}s)" if hit else "tad never reached 0.90"
    criterion(7, "template causality", ablation_ok and hit is not None and ordered,
              f"mean ablation: pair logits equal={exact}, reverse-pair acc {rpa:.3f} over {n}; "
              f"{reached}; prec@1<=prec@5 in all {len(records)} records={ordered}")


# ---------------------------------------------------------------- 8


def test_criterion_08_protocol_fidelity(criterion):
    rng = np.random.default_rng(0)
    fcfg = FutureTaskConfig()
    clips = {T: gen_asym_clip(T, T_raw=T) for T in range(21, 121)}
    bad_future, n_future = 0, 0
    while n_future < 100_000:
        T = int(rng.integers(21, 121))
        horizon = int(np.floor(0.8 * T))
        last = int(rng.integers(fcfg.n_context - 1, horizon))
        (inst,) = build_future_instances(clips[T], fcfg, last / clips[T].fps, "test", int(rng.integers(2 ** 32)))
        cands = np.array(inst.candidates)
        distractors = np.delete(cands, inst.target)
        bad_future += int(cands[inst.target] != T - 1 or np.any(distractors >= horizon)
                          or np.any(distractors < 0) or len(set(cands)) != fcfg.C)
        n_future += 1

    bad_sample = 0
    for s in range(10_000):
        T = int(rng.integers(16, 200))
        idx = sample_frames(T, 16, "multinomial", seed=s)
        bad_sample += int(len(idx) != 16 or np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= T)

    bad_inv = 0
    for s in range(1000):
        clip = (gen_asym_clip, gen_sym_clip, lambda k: gen_template_clip(k, k % 8))[s % 3](s)
        bad_inv += int(reverse_clip(reverse_clip(clip)) != clip)

    ok = bad_future == bad_sample == bad_inv == 0
    criterion(8, "protocol fidelity", ok,
              f"{n_future} future instances ({bad_future} bad), 10000 multinomial draws ({bad_sample} bad), "
              f"1000 involutions ({bad_inv} bad)")


# ---------------------------------------------------------------- 9

CONFIGS = {
    "arrow": "task = arrow\nencoder = tad\nn_train = 16\nn_test = 8\ntest_seed_start = 500\nepochs = 2\n",
    "future": "task = future\nencoder = lstm\nn_train = 8\nn_test = 5\ntest_seed_start = 500\nepochs = 2\n",
    "template": "task = template\nencoder = hier\nn_train = 16\nn_test = 8\ntest_seed_start = 500\nepochs = 2\n",
}


def test_criterion_09_determinism(criterion, tmp_path, monkeypatch):
    monkeypatch.setenv("CHRONOSCOPE_THREADS", "1")
    same = {}
    for task, text in CONFIGS.items():
        cfgp = tmp_path / f"{task}.cfg"
        cfgp.write_text(text)
        blobs = []
        for rep in ("a", "b"):
            out = tmp_path / task / rep
            codes = cli.main(["gen", "--config", str(cfgp), "--out", str(out)]), \
                cli.main(["train", "--config", str(cfgp), "--out", str(out)])
            assert codes == (0, 0)
            blobs.append(tuple((out / f).read_bytes() for f in ("metrics.jsonl", "checkpoint.vtck")))
        same[task] = blobs[0] == blobs[1] and len(blobs[0][0]) > 0
    criterion(9, "determinism", all(same.values()),
              " ".join(f"{t}:{'identical' if s else 'DIFFERENT'}" for t, s in same.items()))


# ---------------------------------------------------------------- 10

OVERFIT_LR = {"rnn": 1e-3, "lstm": 1e-2, "hier": 3e-3, "tad": 1e-3, "mean": 1e-2}


def _overfit_set(name):
    if name == "mean":
        # order-blind, so it gets four template clips of classes without a reverse partner
        clips = [gen_template_clip(s, c) for s, c in zip(range(4), (2, 7, 0, 3))]
        return Dataset(clips, list(CLASS_NAMES)), "template", EncoderSpec.from_name(name, T=4, num_classes=8)
    return generate_dataset("asym", 4, 0), "arrow", EncoderSpec.from_name(name)


def test_criterion_10_overfit(criterion):
    results = {}
    for name in ENCODERS:
        data, task, spec = _overfit_set(name)
        model = VideoModel(spec, seed=0)
        losses = []

        def hook(epoch, loss):
            losses.append(loss)
            if loss < 0.05:
                raise Reached

        try:
            train_loop(TrainConfig(epochs=200, lr=OVERFIT_LR[name], task=task), data, None, model, on_epoch=hook)
        except Reached:
            pass
        results[name] = (len(losses), losses[-1])
    ok = all(loss < 0.05 for _, loss in results.values())
    criterion(10, "overfit sanity", ok,
              " ".join(f"{n}:{loss:.4f}@{e}" for n, (e, loss) in results.items()))
