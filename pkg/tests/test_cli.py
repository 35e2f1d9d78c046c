import json

import numpy as np
import pytest
import yaml

from karst.cli import main
from karst.serialize import load_merged, load_model
from karst.training import forward

FAST = {"train": {"epochs": 3}, "task": {"widths": [16, 16, 4], "n_train": 64, "n_test": 16}}


def write_config(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return str(path)


def test_train_writes_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["train", "--config", write_config(tmp_path, FAST), "--seed", "3", "--out", str(out)]) == 0
    for name in ("config.json", "metrics.jsonl", "metrics.csv", "model.npz"):
        assert (out / name).exists()
    resolved = json.loads((out / "config.json").read_text())
    assert resolved["train"]["seed"] == 3 and resolved["output"]["dir"] == str(out)
    lines = (out / "metrics.csv").read_text().splitlines()
    assert lines[0] == "# config: " + json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    assert lines[1] == "epoch,train_loss,train_acc,test_acc,param_count,seed"
    assert len(lines) == 2 + 4
    records = [json.loads(l) for l in (out / "metrics.jsonl").read_text().splitlines()]
    assert records[0] == {"type": "config", "config": resolved}
    assert [r["epoch"] for r in records[1:]] == [0, 1, 2, 3]
    _, meta = load_model(out / "model.npz")
    assert meta["config"] == resolved


def test_train_default_config(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = write_config(tmp_path, {"train": {"epochs": 1}})
    assert main(["train", "--config", cfg]) == 0
    assert (tmp_path / "runs" / "default" / "metrics.csv").exists()


def test_rerun_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path, {**FAST, "output": {"dir": str(tmp_path / "same")}})
    assert main(["train", "--config", cfg]) == 0
    first = (tmp_path / "same" / "metrics.csv").read_bytes()
    assert main(["train", "--config", cfg]) == 0
    assert (tmp_path / "same" / "metrics.csv").read_bytes() == first


def test_divisibility_error_surfaces_verbatim(tmp_path, capsys):
    cfg = write_config(tmp_path, {"train": {"m": 7}, "task": {"widths": [768, 768, 8], "n_train": 4, "n_test": 2}})
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "x")]) == 2
    assert "stacking dimension m=7 must divide both d_in=768 and d_out=768" in capsys.readouterr().err


def test_bad_config_exit_code(tmp_path, capsys):
    assert main(["train", "--config", write_config(tmp_path, {"train": {"nope": 1}})]) == 2
    assert "unknown keys" in capsys.readouterr().err
    assert main(["train", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_merge_fresh_model_is_exact(tmp_path, capsys):
    cfg = write_config(tmp_path, {**FAST, "train": {"epochs": 0}})
    main(["train", "--config", cfg, "--out", str(tmp_path / "r")])
    capsys.readouterr()
    assert main(["merge", "--model", str(tmp_path / "r" / "model.npz"), "--out", str(tmp_path / "m.npz")]) == 0
    assert "deviation over 64 probe inputs: 0.000e+00" in capsys.readouterr().out
    merged, meta = load_merged(tmp_path / "m.npz")
    model, _ = load_model(tmp_path / "r" / "model.npz")
    for (w, b), layer in zip(merged, model.layers):
        assert np.array_equal(w, layer.w0) and np.array_equal(b, layer.bias0)
    assert meta["config"]["train"]["epochs"] == 0


def test_merge_trained_model(tmp_path, capsys):
    cfg = write_config(tmp_path, {**FAST, "train": {"epochs": 5, "lr": 0.05}})
    main(["train", "--config", cfg, "--out", str(tmp_path / "r")])
    capsys.readouterr()
    assert main(["merge", "--model", str(tmp_path / "r" / "model.npz"), "--out", str(tmp_path / "m.npz")]) == 0
    dev = float(capsys.readouterr().out.rsplit(":", 1)[1])
    assert dev <= 1e-10
    with np.load(tmp_path / "m.npz") as npz:
        assert not any("kernels" in k or k.endswith(("s1", "s2")) for k in npz.files)


def test_merge_corrupt_file(tmp_path, capsys):
    bad = tmp_path / "bad.npz"
    bad.write_bytes(b"\x00" * 10)
    assert main(["merge", "--model", str(bad), "--out", str(tmp_path / "o.npz")]) != 0
    assert "cannot read" in capsys.readouterr().err


def test_verify_command(capsys):
    assert main(["verify"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") >= 5 and "FAIL" not in out


def test_bench_command(tmp_path, capsys):
    out = tmp_path / "bench.csv"
    assert main(["bench", "--d-in", "64", "--d-out", "32", "--m", "4", "--r", "2", "--n", "2", "--reps", "30", "--out", str(out)]) == 0
    text = out.read_text()
    assert text.splitlines()[0].startswith("path,multiplies_per_input,median_seconds,ratio_to_plain")
    assert len(text.splitlines()) == 5
    assert main(["bench", "--d-in", "64", "--d-out", "32", "--m", "5"]) == 2


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_default_config_command(capsys):
    assert main(["default-config"]) == 0
    assert yaml.safe_load(capsys.readouterr().out)["train"]["n_kernels"] == 2
