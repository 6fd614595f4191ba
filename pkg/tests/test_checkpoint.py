from autodiff import checkpoint
from autodiff.checkpoint import (
    MAGIC,
    assign_parameters,
    dumps_parameters,
    load_parameters,
    loads_parameters,
    save_parameters,
)
from autodiff.layers import Mlp, MlpSpec
from autodiff.tensor import Tensor
from interfaces.errors import DatasetError, ShapeError
import numpy as np
import pytest

SPEC = {"kind": "test", "widths": [3, 4, 2]}


@pytest.fixture
def mlp(rng):
    return Mlp(MlpSpec((3, 4, 2)), rng)


def test_blob_layout_and_values(mlp):
    blob = dumps_parameters(mlp.named_parameters(), SPEC)
    assert blob.startswith(MAGIC)
    header, arrays = loads_parameters(blob)
    assert header["spec"] == SPEC
    assert [t["name"] for t in header["tensors"]] == list(arrays)
    for name, p in mlp.named_parameters():
        np.testing.assert_array_equal(arrays[name], p.data.astype(np.float32).astype(np.float64))


def test_dumps_is_deterministic(mlp):
    assert dumps_parameters(mlp.named_parameters(), SPEC) == dumps_parameters(mlp.named_parameters(), SPEC)


def test_reload_is_a_fixed_point(mlp, rng):
    blob = dumps_parameters(mlp.named_parameters(), SPEC)
    other = Mlp(MlpSpec((3, 4, 2)), rng)
    assign_parameters(other.named_parameters(), loads_parameters(blob)[1])
    assert dumps_parameters(other.named_parameters(), SPEC) == blob


def test_save_and_load_file(mlp, tmp_path):
    path = tmp_path / "model.ckpt"
    save_parameters(path, mlp.named_parameters(), SPEC)
    header, arrays = load_parameters(path)
    assert header["op_version"] == checkpoint.OP_VERSION
    assert set(arrays) == {name for name, _ in mlp.named_parameters()}


def test_bad_magic_is_rejected(mlp):
    blob = dumps_parameters(mlp.named_parameters(), SPEC)
    with pytest.raises(DatasetError):
        loads_parameters(b"NOTACKPT" + blob[len(MAGIC) :])


def test_unsupported_op_version_is_rejected(mlp, monkeypatch):
    monkeypatch.setattr(checkpoint, "OP_VERSION", 99)
    blob = dumps_parameters(mlp.named_parameters(), SPEC)
    monkeypatch.undo()
    with pytest.raises(DatasetError):
        loads_parameters(blob)


def test_truncated_blob_is_rejected(mlp):
    blob = dumps_parameters(mlp.named_parameters(), SPEC)
    with pytest.raises(DatasetError):
        loads_parameters(blob[:-4])


def test_assign_rejects_missing_and_misshaped(mlp):
    _, arrays = loads_parameters(dumps_parameters(mlp.named_parameters(), SPEC))
    missing = dict(arrays)
    missing.pop("layer1.bias")
    with pytest.raises(ShapeError):
        assign_parameters(mlp.named_parameters(), missing)
    arrays["layer0.weight"] = np.zeros((4, 3))
    with pytest.raises(ShapeError):
        assign_parameters(mlp.named_parameters(), arrays)


def test_scalar_tensor_round_trip():
    named = [("scale", Tensor(np.array(1.5)))]
    _, arrays = loads_parameters(dumps_parameters(named, {}))
    assert arrays["scale"].shape == ()
    assert arrays["scale"] == 1.5
