import numpy as np
import pytest

from karst.numerics import make_rng
from karst.serialize import (
    ModelFileError,
    count_serialized_trainables,
    load_merged,
    load_model,
    model_arrays,
    save_merged,
    save_model,
    trainable_names,
)
from karst.training import TaskSpec, TrainConfig, build_model, make_task, merge_model, randomize_trainables
from karst.training.loop import model_param_count


@pytest.fixture(params=["karst", "ka", "probe"])
def model(request):
    task = make_task("low-rank-shift", 0, TaskSpec(widths=(8, 8, 4), n_train=8, n_test=4))
    m = build_model(task.base, TrainConfig(m=2, r=2, n_kernels=3, method=request.param, seed=9))
    return randomize_trainables(m, make_rng(1))


def test_round_trip_is_bit_exact(model, tmp_path):
    path = tmp_path / "model.npz"
    save_model(path, model, {"config": {"x": 1}})
    loaded, meta = load_model(path)
    a, b = model_arrays(model), model_arrays(loaded)
    assert a.keys() == b.keys()
    assert all(a[k].tobytes() == b[k].tobytes() for k in a)
    assert meta["config"] == {"x": 1}
    assert [type(l) for l in loaded.layers] == [type(l) for l in model.layers]


def test_metadata_records_adapter_hyperparameters(tmp_path):
    task = make_task("low-rank-shift", 0, TaskSpec(widths=(8, 8, 4), n_train=8, n_test=4))
    m = build_model(task.base, TrainConfig(m=2, r=3, n_kernels=2, seed=42))
    save_model(tmp_path / "m.npz", m)
    _, meta = load_model(tmp_path / "m.npz")
    assert meta["layers"][0] == {"kind": "adapted", "d_in": 8, "d_out": 8, "m": 2, "r": 3, "n_kernels": 2,
                                 "seed": 42, "has_bias": True, "has_rescale": True}


def test_serialized_trainables_match_param_count(model, tmp_path):
    path = tmp_path / "model.npz"
    save_model(path, model)
    assert count_serialized_trainables(path) == model_param_count(model)
    assert set(trainable_names(path)) == {n for n, _ in model.named_parameters()}


def test_merged_file_has_no_adapter_tensors(model, tmp_path):
    path = tmp_path / "merged.npz"
    save_merged(path, merge_model(model))
    with np.load(path) as npz:
        names = set(npz.files) - {"meta"}
    assert all(n.endswith((".weight", ".bias")) for n in names)
    merged, _ = load_merged(path)
    for (w1, b1), (w2, b2) in zip(merged, merge_model(model)):
        assert w1.tobytes() == w2.tobytes() and b1.tobytes() == b2.tobytes()


def test_corrupt_and_wrong_format(tmp_path, model):
    bad = tmp_path / "bad.npz"
    bad.write_bytes(b"not a zip")
    with pytest.raises(ModelFileError):
        load_model(bad)
    merged = tmp_path / "merged.npz"
    save_merged(merged, merge_model(model))
    with pytest.raises(ModelFileError, match="karst-model"):
        load_model(merged)
    with pytest.raises(ModelFileError):
        load_model(tmp_path / "missing.npz")


def test_missing_tensor_reported(tmp_path, model):
    path = tmp_path / "m.npz"
    save_model(path, model)
    with np.load(path) as npz:
        arrays = {k: npz[k] for k in npz.files}
    arrays.pop(next(k for k in arrays if k.endswith(".w0")))
    np.savez(path, **arrays)
    with pytest.raises(ModelFileError, match="malformed"):
        load_model(path)
