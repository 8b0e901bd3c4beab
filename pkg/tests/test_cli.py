import csv
import json

import numpy as np
import pytest

from chronoscope import cli
from chronoscope.encoders import read_checkpoint
from chronoscope.synthvid import read_dataset
from chronoscope.tensor import LOCAL_DERIVATIVES, PRIMITIVES
from chronoscope.trainer import MetricsRecord

SMALL = """# tiny arrow run
task = arrow
encoder = tad
n_train = 6
n_test = 4
test_seed_start = 500
n_frames = 4
K = 2
epochs = 3
eval_every = 2
batch_size = 4
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL)
    return str(path)


def run(*argv):
    return cli.main([str(a) for a in argv])


# ---------------------------------------------------------------- config


def test_parse_config_and_hash():
    cfg = cli.parse_config(SMALL)
    assert (cfg.n_train, cfg.K, cfg.encoder) == (6, 2, "tad")
    assert cfg.hash == cli.parse_config(SMALL + "\n# trailing comment\n").hash
    assert cfg.hash != cfg.with_overrides(seed=1).hash
    assert cfg.canonical().splitlines() == sorted(cfg.canonical().splitlines())
    assert cfg.with_overrides(seed=None, encoder=None) == cfg


@pytest.mark.parametrize("text, where", [
    ("task = arrow\nbogus = 1\n", ":2: unknown key"),
    ("epochs = many\n", ":1: bad value"),
    ("just words\n", ":1: expected key=value"),
])
def test_parse_config_errors(text, where):
    with pytest.raises(ValueError, match=where):
        cli.parse_config(text, "x.cfg")


def test_config_validation():
    with pytest.raises(ValueError, match="overlap"):
        cli.ExperimentConfig(n_train=100, n_test=100, train_seed_start=0, test_seed_start=50)
    with pytest.raises(ValueError):
        cli.ExperimentConfig(encoder="gru")
    with pytest.raises(ValueError):
        cli.ExperimentConfig(kind="noise")
    assert cli.ExperimentConfig(task="template").data_kind == "template"
    assert cli.ExperimentConfig().encoder_spec().T == 16
    assert cli.ExperimentConfig(task="future").encoder_spec().T == 17


# ---------------------------------------------------------------- gen


def test_gen_roundtrip_and_determinism(tmp_path, config):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("gen", "--config", config, "--out", a) == 0
    assert run("gen", "--config", config, "--out", b) == 0
    for name in ("train.vtds", "test.vtds", "config.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    train, test = read_dataset(a / "train.vtds"), read_dataset(a / "test.vtds")
    assert (len(train), len(test)) == (6, 4)
    assert train.seeds().isdisjoint(test.seeds())
    cfg = cli.parse_config(SMALL)
    assert (a / "config.txt").read_text().splitlines()[0] == f"# sha256 {cfg.hash}"


def test_gen_parallel_matches_serial(tmp_path, config, monkeypatch):
    assert run("gen", "--config", config, "--out", tmp_path / "serial") == 0
    monkeypatch.setenv("CHRONOSCOPE_THREADS", "2")
    assert run("gen", "--config", config, "--out", tmp_path / "par") == 0
    for name in ("train.vtds", "test.vtds"):
        assert (tmp_path / "serial" / name).read_bytes() == (tmp_path / "par" / name).read_bytes()


def test_gen_rejects_overlapping_seeds(tmp_path, capsys):
    cfgp = tmp_path / "bad.cfg"
    cfgp.write_text("n_train = 10\nn_test = 10\ntest_seed_start = 5\n")
    assert run("gen", "--config", cfgp, "--out", tmp_path / "out") == 1
    assert "overlap" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


# ---------------------------------------------------------------- train / eval


def test_train_missing_dataset(tmp_path, config, capsys):
    assert run("train", "--config", config, "--out", tmp_path / "empty") == 2
    err = capsys.readouterr().err
    assert str(tmp_path / "empty" / "train.vtds") in err


def test_train_metrics_checkpoint_and_rerun(tmp_path, config):
    out = tmp_path / "run"
    assert run("gen", "--config", config, "--out", out) == 0
    assert run("train", "--config", config, "--out", out) == 0
    lines = (out / "metrics.jsonl").read_text().splitlines()
    # evaluations at epochs 0, 2 and the final epoch 3
    assert [json.loads(line)["epoch"] for line in lines] == [0, 2, 3]
    cfg = cli.parse_config(SMALL)
    recs = [MetricsRecord.from_json(line) for line in lines]
    assert all(r.config_hash == cfg.hash and r.wall_seconds is None for r in recs)
    digest, _ = read_checkpoint(out / "checkpoint.vtck")
    assert digest.hex() == cfg.hash
    first = (out / "metrics.jsonl").read_bytes(), (out / "checkpoint.vtck").read_bytes()
    assert run("train", "--config", config, "--out", out) == 0
    assert ((out / "metrics.jsonl").read_bytes(), (out / "checkpoint.vtck").read_bytes()) == first

    assert run("eval", "--config", config, "--out", out) == 0
    ev = MetricsRecord.from_json((out / "eval.jsonl").read_text().splitlines()[0])
    assert ev.accuracy == recs[-1].accuracy
    # a different config cannot evaluate this checkpoint
    assert run("eval", "--config", config, "--out", out, "--seed", 9) == 1


def test_train_timing_flag(tmp_path, config):
    out = tmp_path / "run"
    run("gen", "--config", config, "--out", out)
    assert run("train", "--config", config, "--out", out, "--timing") == 0
    rec = MetricsRecord.from_json((out / "metrics.jsonl").read_text().splitlines()[-1])
    assert rec.wall_seconds is not None and rec.wall_seconds >= 0


def test_train_future_writes_baseline(tmp_path):
    cfgp = tmp_path / "f.cfg"
    cfgp.write_text("task = future\nencoder = mean\nn_train = 4\nn_test = 5\ntest_seed_start = 100\nepochs = 1\n")
    out = tmp_path / "run"
    assert run("gen", "--config", cfgp, "--out", out) == 0
    assert run("train", "--config", cfgp, "--out", out) == 0
    base = MetricsRecord.from_json((out / "baseline.jsonl").read_text())
    assert base.encoder == "frame_similarity" and base.n == 5 and base.chance == 0.2
    assert len((out / "metrics.jsonl").read_text().splitlines()) == 2


# ---------------------------------------------------------------- gradcheck


def test_gradcheck_passes_and_lists_every_primitive(capsys):
    assert run("gradcheck") == 0
    out = capsys.readouterr().out
    listed = {line.split()[0] for line in out.splitlines() if line.strip() and not line[0].isdigit()}
    assert set(PRIMITIVES) <= listed
    assert {f"encoder:{f}" for f in ("rnn", "lstm", "hier", "tad", "mean")} <= listed


def test_gradcheck_catches_corrupted_relu(monkeypatch, capsys):
    good = LOCAL_DERIVATIVES["relu"]
    monkeypatch.setitem(LOCAL_DERIVATIVES, "relu", lambda x, y: 0.5 * good(x, y))
    assert run("gradcheck") == 1
    out = capsys.readouterr().out
    assert any(line.startswith("relu") and line.endswith("FAIL") for line in out.splitlines())


# ---------------------------------------------------------------- report


def test_report_table_and_chance_row(tmp_path, config, capsys):
    out = tmp_path / "run"
    run("gen", "--config", config, "--out", out)
    run("train", "--config", config, "--out", out)
    capsys.readouterr()
    assert run("report", out / "metrics.jsonl", "--out", tmp_path / "rep") == 0
    table = capsys.readouterr().out.splitlines()
    assert len(table) == 3  # header, one encoder row, chance row
    assert table[1].split()[:2] == ["arrow", "tad"]
    assert table[2].split() == ["arrow", "chance", "50.0"]
    assert (tmp_path / "rep" / "report.txt").read_text().splitlines() == table


def test_report_embeddings(tmp_path, config):
    out = tmp_path / "run"
    run("gen", "--config", config, "--out", out)
    run("train", "--config", config, "--out", out)
    assert run("report", out / "metrics.jsonl", "--embeddings", out) == 0
    with open(out / "embeddings.csv") as f:
        rows = list(csv.reader(f))
    cfg = cli.parse_config(SMALL)
    model = cli.load_model(cfg, out)
    head_in = model.fc.weight.shape[0]
    assert rows[0][:2] == ["instance", "label"] and len(rows[0]) == 2 + head_in
    assert len(rows) - 1 == 2 * cfg.n_test  # arrow: forward and backward per test clip
    assert all(len(r) == 2 + head_in for r in rows[1:])
    assert np.isfinite(np.array(rows[1][2:], dtype=float)).all()


def test_report_malformed_line(tmp_path, capsys):
    path = tmp_path / "m.jsonl"
    good = MetricsRecord("arrow", "test", 0, 0.7, 0.5, 0.5, 1.0, chance=0.5).to_json()
    path.write_text(good + "\n" + '{"task": "arrow"\n')
    assert run("report", path) == 1
    assert f"{path}:2" in capsys.readouterr().err


def test_report_refuses_mixed_datasets(tmp_path, capsys):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    a.write_text(MetricsRecord("arrow", "test", 1, 0.7, 0.5, 0.5, 1.0, encoder="tad", dataset_hash="aa").to_json())
    b.write_text(MetricsRecord("arrow", "test", 1, 0.7, 0.5, 0.5, 1.0, encoder="rnn", dataset_hash="bb").to_json())
    assert run("report", a, b) == 1
    assert "different datasets" in capsys.readouterr().err


def test_report_missing_file(tmp_path):
    assert run("report", tmp_path / "nope.jsonl") == 2
