import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from dqtrader import autodiff as ad
from dqtrader.cli import main

from conftest import make_series
from dqtrader.market_data import save_series

FAST = "[train]\nepisodes = 1\nhidden = 8, 8\nbatch_size = 4\nreplay_capacity = 64\nsync_every = 8\n"


def write_asset(tmp_path, name, n=50, split=35, seed=0):
    rng = np.random.default_rng(seed)
    closes = 100 * np.cumprod(np.exp(rng.normal(0.001, 0.02, n)))
    s = make_series(closes, split, wick=0.005, symbol=name)
    path = tmp_path / f"{name}.csv"
    save_series(s, path)
    return path, s.dates[split].isoformat()


def write_config(tmp_path, assets, body="", name="run.ini"):
    text = "[run]\nseed = 3\n" + body
    for sym, (path, split) in assets.items():
        text += f"\n[asset:{sym}]\npath = {os.path.basename(path)}\nsplit = {split}\n"
    p = tmp_path / name
    p.write_text(text)
    return p


def read_summary(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# seed=")
    return list(csv.reader(lines[1:]))


def test_gamma_out_of_range(tmp_path, capsys):
    cfg = write_config(tmp_path, {"A": write_asset(tmp_path, "A")}, "[train]\ngamma = 1.5\n")
    assert main(["validate", "--config", str(cfg)]) == 1
    assert "train.gamma: discount out of [0,1)" in capsys.readouterr().err


def test_missing_data_file(tmp_path, capsys):
    cfg = write_config(tmp_path, {"A": (tmp_path / "absent.csv", "2020-01-10")})
    assert main(["run", "--config", str(cfg)]) == 1
    err = capsys.readouterr().err
    assert "asset:A.path" in err and str(tmp_path / "absent.csv") in err


def test_unknown_key_and_section(tmp_path, capsys):
    cfg = write_config(tmp_path, {"A": write_asset(tmp_path, "A")},
                       "[train]\ngama = 0.5\n[extra]\nx = 1\n[per]\nalpha = -1\n")
    assert main(["validate", "--config", str(cfg)]) == 1
    err = capsys.readouterr().err
    assert "train.gama: unknown key" in err
    assert "extra: unknown section" in err
    assert "per.alpha: must be non-negative" in err


def test_missing_config_file(tmp_path, capsys):
    assert main(["validate", "--config", str(tmp_path / "none.ini")]) == 1
    assert main(["bogus"]) == 1


def test_minimal_config_resolves_defaults(tmp_path, capsys):
    p, split = write_asset(tmp_path, "A")
    cfg = tmp_path / "min.ini"
    cfg.write_text(f"[asset:A]\npath = A.csv\nsplit = {split}\n")
    assert main(["validate", "--config", str(cfg)]) == 0
    dump = json.loads(capsys.readouterr().out)
    t = dump["train"]
    assert (t["gamma"], t["batch_size"], t["replay_capacity"], t["sync_every"]) == (0.9, 16, 4096, 256)
    assert (t["episodes"], t["l2"], t["hidden"], t["noisy"], t["double"]) == (50, 1e-4, [128, 256], True, True)
    assert dump["per"] == {"alpha": 0.6, "beta_start": 0.4, "beta_end": 1.0, "eps": 1e-5}
    assert dump["env"] == {"initial_cash": 1000.0, "transaction_cost": 0.0, "window": 3}
    assert dump["run"] == {"seed": 0, "mode": "all", "representations": ["windowed"]}
    assert dump["assets"][0]["path"] == str(p)


def test_baseline_only(tmp_path):
    cfg = write_config(tmp_path, {"AAPL": write_asset(tmp_path, "AAPL")})
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--mode", "baseline", "--out", str(out)]) == 0
    rows = read_summary(out / "summary.csv")
    assert [r[:2] for r in rows[1:]] == [["AAPL", "B&H"]]
    assert sorted(os.listdir(out / "AAPL")) == ["buy_and_hold"]


def test_four_assets_one_representation(tmp_path):
    assets = {s: write_asset(tmp_path, s, seed=k) for k, s in enumerate(["BTC", "AAPL", "GOOGL", "KSS"])}
    cfg = write_config(tmp_path, assets, "representations = vanilla\nmode = train\n" + FAST)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    rows = read_summary(out / "summary.csv")
    assert len(rows[0]) == 2 + 9
    assert rows[0][2:] == ["Arithmetic Return", "Average Daily Return", "Daily Return Variance",
                           "Time Weighted Return", "Total Return (%)", "Sharpe Ratio", "Volatility",
                           "Initial Investment", "Final Portfolio Value"]
    body = rows[1:]
    assert [r[:2] for r in body] == [[s, "DQN-vanilla"] for s in assets]
    for r in body:
        total, initial, final = float(r[6]), float(r[9]), float(r[10])
        assert total == pytest.approx(100 * (final / initial - 1), abs=1e-9)


def tree_bytes(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in files:
            p = os.path.join(dirpath, f)
            out[os.path.relpath(p, root)] = open(p, "rb").read()
    return out


def test_full_run_layout_and_determinism(tmp_path):
    cfg = write_config(tmp_path, {"A": write_asset(tmp_path, "A")},
                       "representations = windowed, pattern\n" + FAST)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(b)]) == 0
    ta, tb = tree_bytes(a), tree_bytes(b)
    assert ta == tb
    for rep in ("windowed", "pattern"):
        names = {k.split(os.sep)[-1] for k in ta if k.startswith(os.path.join("A", rep))}
        assert names == {"report.txt", "report.csv", "curve.csv", "actions.csv", "trainlog.csv",
                         "checkpoint.bin", "resolved_config.json"}
    digest = json.loads(ta["resolved_config.json"])
    assert digest["run"]["seed"] == 3
    for name, data in ta.items():
        if name.endswith(".csv"):
            assert data.startswith(b"# seed=3 config_sha256="), name
        if name.endswith("report.txt"):
            assert b"seed: 3" in data
    ckpt = ad.load_checkpoint(a / "A" / "windowed" / "checkpoint.bin")
    assert "meta.seed" in ckpt and float(ckpt["meta.seed"]) == 3
    assert any(k.startswith("meta.config_sha256:") for k in ckpt)
    # a different seed changes the trained artifacts
    c = tmp_path / "c"
    assert main(["run", "--config", str(cfg), "--out", str(c), "--seed", "4"]) == 0
    assert tree_bytes(c)["A/windowed/checkpoint.bin"] != ta["A/windowed/checkpoint.bin"]


def test_eval_mode_reuses_checkpoint(tmp_path):
    cfg = write_config(tmp_path, {"A": write_asset(tmp_path, "A")}, FAST)
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--mode", "train"]) == 0
    first = (out / "A" / "windowed" / "report.csv").read_bytes()
    assert main(["run", "--config", str(cfg), "--out", str(out), "--mode", "eval"]) == 0
    assert (out / "A" / "windowed" / "report.csv").read_bytes().split(b"\n")[1:] == first.split(b"\n")[1:]


def test_eval_without_checkpoint_is_runtime_error(tmp_path, capsys):
    cfg = write_config(tmp_path, {"A": write_asset(tmp_path, "A")}, FAST)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "x"), "--mode", "eval"]) == 2
    assert "no checkpoint" in capsys.readouterr().err


def test_bad_data_is_runtime_error(tmp_path, capsys):
    bad = tmp_path / "B.csv"
    bad.write_text("2020-01-01,1,1,1,1\n2020-01-02,1,0.5,0.9,1\n2020-01-03,1,1,1,1\n")
    cfg = write_config(tmp_path, {"B": (bad, "2020-01-02")}, FAST)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2
    assert "B.csv:2" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    cfg = write_config(tmp_path, {"A": write_asset(tmp_path, "A")})
    res = subprocess.run([sys.executable, "-m", "dqtrader", "validate", "--config", str(cfg)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["run"]["seed"] == 3
