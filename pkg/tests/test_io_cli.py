import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tulik import FormatError, Kernel, ModelParams, TimeGrid, Trajectory
from tulik import io
from tulik.cli import main
from tulik.inference import TrainConfig
from tulik.predict import predict_interval_time_only, step_probabilities

from conftest import random_batch, random_params


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(0, 9), st.integers(1, 4))
def test_dataset_round_trip(tmp_path_factory, seed, M, V):
    rng = np.random.default_rng(seed)
    g = TimeGrid(float(rng.uniform(0.05, 1)), int(rng.integers(1, 9)), int(rng.integers(1, 4)))
    Y = random_batch(rng, g, V, M, rate=0.5)
    truth = random_params(rng, g, V) if seed % 2 else None
    path = tmp_path_factory.mktemp("ds") / "d.tulk"
    io.write_dataset(path, io.Dataset(g, Y, truth, {"note": "x"}))
    back = io.read_dataset(path)
    assert back.grid == g and back.Y.shape == (M, g.L, V)
    assert np.array_equal(back.Y, Y)
    assert back.meta == {"note": "x"}
    if truth is None:
        assert back.truth is None
    else:
        assert np.array_equal(back.truth.mu, truth.mu)
        assert np.array_equal(back.truth.kernel.values, truth.kernel.values)


def test_dataset_rejects_corruption(tmp_path):
    g = TimeGrid(0.5, 4, 2)
    p = tmp_path / "d.tulk"
    io.write_dataset(p, io.Dataset(g, np.zeros((3, g.L, 2), dtype=np.uint8)))
    raw = p.read_bytes()
    (tmp_path / "short").write_bytes(raw[:-1])
    (tmp_path / "magic").write_bytes(b"XULK1" + raw[5:])
    for name in ("short", "magic"):
        with pytest.raises(FormatError):
            io.read_dataset(tmp_path / name)
    # two events in one interval of a network trajectory
    bad = np.zeros((1, g.L, 2), dtype=np.uint8)
    bad[0, 1] = 1
    io.write_dataset(tmp_path / "two", io.Dataset(g, bad))
    with pytest.raises(FormatError):
        io.read_dataset(tmp_path / "two")


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 3), st.booleans())
def test_params_round_trip_bit_exact(tmp_path_factory, seed, V, stationary):
    rng = np.random.default_rng(seed)
    g = TimeGrid(float(rng.uniform(0.01, 2)), int(rng.integers(1, 8)), int(rng.integers(1, 4)))
    p = random_params(rng, g, V, time_invariant=stationary)
    vals = p.kernel.values.copy()
    vals.flat[0] = 1e-300
    p = p.replace(kernel=Kernel(g, vals, stationary))
    path = tmp_path_factory.mktemp("p") / "p.txt"
    io.write_params(path, p)
    q = io.read_params(path)
    assert q.grid == p.grid and q.kernel.time_invariant == stationary
    assert np.array_equal(q.mu, p.mu)
    assert np.array_equal(q.kernel.values, p.kernel.values)


def test_params_file_declares_ordering(tmp_path):
    g = TimeGrid(0.5, 3, 2)
    vals = np.zeros((g.L, 2))
    vals[g.row(1), 1] = 0.25        # K_{1,3}
    io.write_params(tmp_path / "p", ModelParams([0.2], Kernel(g, vals)))
    text = (tmp_path / "p").read_text()
    assert "# kernel rows: i l u' u value" in text
    assert "1 2 0 0 0.25" in text.splitlines()
    (tmp_path / "q").write_text(text.replace("1 2 0 0 0.25\n", ""))
    with pytest.raises(FormatError, match="missing"):
        io.read_params(tmp_path / "q")
    (tmp_path / "r").write_text(text.replace("1 2 0 0 0.25", "9 2 0 0 0.25"))
    with pytest.raises(FormatError):
        io.read_params(tmp_path / "r")


def test_config_round_trip_and_errors(tmp_path):
    c = TrainConfig(method="gd", lr_schedule=((50, 0.2), (150, 0.1)), max_epochs=150,
                    svd_threshold=0.8, time_invariant=True, intensity_floor=0.03)
    io.write_config(tmp_path / "c", c)
    assert io.read_config(tmp_path / "c") == c
    assert io.parse_config("") == TrainConfig()
    assert io.parse_config("max_epochs = 5  # short\nlr_schedule=5:0.1").max_epochs == 5
    for text in ("foo=1", "max_epochs", "max_epochs=abc", "time_invariant=maybe"):
        with pytest.raises(FormatError):
            io.parse_config(text)


def run(argv, capsys):
    code = main([str(a) for a in argv])
    err = capsys.readouterr().err
    return code, err


@pytest.fixture
def sim(tmp_path, capsys):
    data = tmp_path / "train.tulk"
    test = tmp_path / "test.tulk"
    assert run(["simulate", "--preset", "paper-timeonly-small", "--num", 300, "--seed", 3,
                "--out", data], capsys)[0] == 0
    assert run(["simulate", "--preset", "paper-timeonly-small", "--num", 40, "--seed", 3,
                "--offset", 300, "--out", test], capsys)[0] == 0
    return tmp_path, data, test


def test_simulate_is_deterministic(sim, capsys):
    tmp, data, _ = sim
    again = tmp / "again.tulk"
    run(["simulate", "--preset", "paper-timeonly-small", "--num", 300, "--seed", 3, "--out", again], capsys)
    assert again.read_bytes() == data.read_bytes()
    ds = io.read_dataset(data)
    assert (ds.M, ds.grid.N, ds.grid.Nprime) == (300, 32, 8)
    assert ds.truth is not None and ds.meta["preset"] == "paper-timeonly-small"
    empty = tmp / "empty.tulk"
    assert run(["simulate", "--preset", "paper-network", "--num", 0, "--out", empty], capsys)[0] == 0
    e = io.read_dataset(empty)
    assert e.M == 0 and e.V == 5 and len(e.meta["edges"]) == 8


def test_simulate_from_params_file(tmp_path, capsys):
    g = TimeGrid(0.5, 5, 2)
    io.write_params(tmp_path / "p", random_params(np.random.default_rng(0), g, 2))
    assert run(["simulate", "--params", tmp_path / "p", "--num", 7, "--out", tmp_path / "d"], capsys)[0] == 0
    assert io.read_dataset(tmp_path / "d").Y.shape == (7, g.L, 2)


def test_train_predict_eval_pipeline(sim, capsys):
    tmp, data, test = sim
    (tmp / "cfg").write_text("max_epochs=3\nlr_schedule=3:0.4\n")
    code, err = run(["train", "--data", data, "--config", tmp / "cfg", "--out", tmp / "p",
                     "--report", tmp / "r.jsonl"], capsys)
    assert code == 0, err
    recs = io.read_report(tmp / "r.jsonl")
    assert [r["epoch"] for r in recs[:-1]] == [1, 2, 3]
    assert recs[-1]["summary"] and recs[-1]["metadata"]["method"] == "vi"
    params = io.read_params(tmp / "p")
    ds = io.read_dataset(test)

    assert run(["predict", "--params", tmp / "p", "--data", test, "--out", tmp / "s.csv"], capsys)[0] == 0
    rows = np.genfromtxt(tmp / "s.csv", delimiter=",", skip_header=1, usecols=(0, 1, 2, 3))
    P = step_probabilities(params, ds.Y)
    assert np.array_equal(rows[:, 3], P.reshape(-1))

    windows = [(0, 4), (4, 10), (10, 32)]
    total = np.zeros(ds.M)
    for a, b in windows:
        assert run(["predict", "--params", tmp / "p", "--data", test, "--mode", "interval",
                    "--from", a, "--to", b, "--last", 0, "--out", tmp / "i.csv"], capsys)[0] == 0
        col = np.genfromtxt(tmp / "i.csv", delimiter=",", skip_header=1, usecols=4)
        assert col[0] == predict_interval_time_only(params, Trajectory(ds.grid, ds.Y[0]), a, b, t_last=0)
        total += col
    # the three windows plus survival past N partition the outcomes (no events in 1..N)
    from tulik import survival_probability
    surv = np.array([survival_probability(params, Trajectory(ds.grid, y), 32, t_last=0) for y in ds.Y])
    assert np.allclose(total + surv, 1, atol=1e-12)

    assert run(["eval", "--params", tmp / "p", "--data", test, "--target-node", 0,
                "--out", tmp / "e1.json"], capsys)[0] == 0
    e1 = json.loads((tmp / "e1.json").read_text())
    assert {"mu_l1", "kernel_l2", "prediction_linf", "tpr", "tnr", "ba", "threshold"} <= set(e1)
    assert run(["eval", "--aggregate", tmp / "e1.json", tmp / "e1.json", "--out", tmp / "agg.json"],
               capsys)[0] == 0
    agg = json.loads((tmp / "agg.json").read_text())
    assert agg["kernel_l2"]["mean"] == e1["kernel_l2"] and agg["kernel_l2"]["std"] == 0


def test_eval_truth_and_scaled(sim, capsys):
    tmp, _, test = sim
    truth = io.read_dataset(test).truth
    io.write_params(tmp / "t", truth)
    run(["eval", "--params", tmp / "t", "--data", test, "--out", tmp / "e.json"], capsys)
    e = json.loads((tmp / "e.json").read_text())
    assert all(e[k] == 0 for k in e if k.startswith(("mu_", "kernel_", "prediction_")))
    io.write_params(tmp / "t2", ModelParams(2 * truth.mu, Kernel(truth.grid, 2 * truth.kernel.values)))
    run(["eval", "--params", tmp / "t2", "--truth", tmp / "t", "--data", test, "--out", tmp / "e2.json"], capsys)
    e2 = json.loads((tmp / "e2.json").read_text())
    assert e2["kernel_l2"] == pytest.approx(1) and e2["mu_l1"] == pytest.approx(1)


def test_error_exit_codes(sim, capsys):
    tmp, data, test = sim
    code, err = run(["train", "--data", tmp / "missing.tulk", "--out", tmp / "p"], capsys)
    assert code == 2 and err.count("\n") == 1 and err.startswith("tulik: error[2]")
    assert run(["simulate", "--preset", "bogus", "--out", tmp / "x"], capsys)[0] == 2
    assert run(["simulate", "--preset", "paper-stationary", "--params", "x", "--out", tmp / "x"], capsys)[0] == 2
    assert run(["predict", "--params", "x"], capsys)[0] == 2
    (tmp / "junk").write_bytes(b"not a dataset")
    code, err = run(["train", "--data", tmp / "junk", "--out", tmp / "p"], capsys)
    assert code == 3 and err.count("\n") == 1
    (tmp / "badcfg").write_text("unknown=1\n")
    assert run(["train", "--data", data, "--config", tmp / "badcfg", "--out", tmp / "p"], capsys)[0] == 3
    other = TimeGrid(0.5, 10, 2)
    io.write_params(tmp / "wrong", ModelParams([0.2], Kernel.zeros(other)))
    code, err = run(["eval", "--params", tmp / "wrong", "--data", test], capsys)
    assert code == 3 and "do not match" in err
    # a kernel that drives the intensity negative at an observed event
    g = io.read_dataset(test).grid
    io.write_params(tmp / "neg", ModelParams([0.2], Kernel(g, np.full((g.L, g.Nprime), -1.0))))
    code, err = run(["eval", "--params", tmp / "neg", "--data", test, "--target-node", 0], capsys)
    assert code == 4 and err.count("\n") == 1
    # predict reports infeasible trajectories as error rows instead of failing
    assert run(["predict", "--params", tmp / "neg", "--data", test, "--out", tmp / "n.csv"], capsys)[0] == 0
    assert "nonpositive" in (tmp / "n.csv").read_text()


def test_no_truth_needs_target_node(tmp_path, capsys):
    g = TimeGrid(0.5, 6, 2)
    Y = random_batch(np.random.default_rng(0), g, 1, 30, rate=0.3)
    io.write_dataset(tmp_path / "d", io.Dataset(g, Y))
    io.write_params(tmp_path / "p", ModelParams([0.3], Kernel.zeros(g)))
    assert run(["eval", "--params", tmp_path / "p", "--data", tmp_path / "d"], capsys)[0] == 3
    code, _ = run(["eval", "--params", tmp_path / "p", "--data", tmp_path / "d", "--target-node", 0,
                   "--out", tmp_path / "e"], capsys)
    assert code == 0
    assert "ba" in json.loads((tmp_path / "e").read_text())


def test_console_script_and_thread_cap(sim, monkeypatch, capsys):
    tmp, data, _ = sim
    env_bad = {"TULIK_THREADS": "zero"}
    monkeypatch.setenv("TULIK_THREADS", "zero")
    assert run(["eval", "--aggregate", tmp / "none.json"], capsys)[0] == 2
    monkeypatch.setenv("TULIK_THREADS", "1")
    (tmp / "cfg").write_text("max_epochs=1\nlr_schedule=1:0.4\n")
    assert run(["train", "--data", data, "--config", tmp / "cfg", "--out", tmp / "p"], capsys)[0] == 0
    out = subprocess.run([sys.executable, "-m", "tulik.cli", "simulate", "--preset", "nope", "--out", "x"],
                         capture_output=True, text=True, env={**env_bad, "PATH": ""})
    assert out.returncode == 2 and out.stderr.count("\n") == 1
