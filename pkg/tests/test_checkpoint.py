import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from povsat.checkpoint import Checkpoint, load_checkpoint, param_count, save_checkpoint
from povsat.errors import (
    CheckpointCorruptError,
    CheckpointFormatError,
    CheckpointMagicError,
    CheckpointSizeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
)
from povsat.nn import init_model


def _params_equal(a, b):
    return all(np.array_equal(p, q) for p, q in zip(a.parameters(), b.parameters()))


def test_round_trip_file(tmp_path):
    model = init_model(12, [6, 5], seed=4)
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path, epoch=3, tune_rmse=0.42)
    ck = load_checkpoint(path)
    assert ck.layer_dims == (12, 6, 5, 1)
    assert ck.activation == "relu"
    assert ck.epoch == 3 and ck.tune_rmse == 0.42
    assert _params_equal(ck.to_model(), model)


def test_missing_tune_rmse_round_trips_as_none():
    ck = Checkpoint.from_model(init_model(3, [2]))
    assert Checkpoint.from_bytes(ck.to_bytes()).tune_rmse is None


def test_identity_activation_preserved():
    from povsat.nn import MlpRegressor
    m = init_model(3, [2])
    m = MlpRegressor(m.layers, "identity")
    back = Checkpoint.from_bytes(Checkpoint.from_model(m).to_bytes())
    assert back.activation == "identity"


def test_header_layout_is_little_endian():
    data = Checkpoint.from_model(init_model(2, [3]), epoch=5).to_bytes()
    assert data[:5] == b"PVSAT"
    version, n_layers = struct.unpack_from("<II", data, 5)
    assert (version, n_layers) == (1, 2)
    assert struct.unpack_from("<III", data, 13) == (2, 3, 1)
    assert len(data) == 5 + 8 + 12 + 1 + 4 + 8 + 4 * param_count([2, 3, 1])


def test_wrong_magic():
    data = bytearray(Checkpoint.from_model(init_model(2, [3])).to_bytes())
    data[:5] = b"XXXXX"
    with pytest.raises(CheckpointMagicError):
        Checkpoint.from_bytes(bytes(data))


def test_garbage_is_format_error_not_crash():
    with pytest.raises(CheckpointFormatError):
        Checkpoint.from_bytes(b"\x00\x01")


def test_version_mismatch():
    data = bytearray(Checkpoint.from_model(init_model(2, [3])).to_bytes())
    struct.pack_into("<I", data, 5, 99)
    with pytest.raises(CheckpointVersionError):
        Checkpoint.from_bytes(bytes(data))


def test_short_payload_for_default_dims():
    ck = Checkpoint.from_model(init_model(4, [512, 512]))
    data = ck.to_bytes()
    with pytest.raises(CheckpointCorruptError) as info:
        Checkpoint.from_bytes(data[:-100])
    assert isinstance(info.value, CheckpointTruncatedError)


def test_truncated_header():
    data = Checkpoint.from_model(init_model(4, [8])).to_bytes()
    with pytest.raises(CheckpointTruncatedError):
        Checkpoint.from_bytes(data[:15])


def test_trailing_bytes_are_size_error():
    data = Checkpoint.from_model(init_model(4, [8])).to_bytes()
    with pytest.raises(CheckpointSizeError):
        Checkpoint.from_bytes(data + b"\0\0\0\0")


def test_param_count_mismatch_in_constructor():
    with pytest.raises(CheckpointSizeError):
        Checkpoint((4, 2, 1), "relu", np.zeros(3))


def test_errors_are_distinct_types():
    kinds = {CheckpointMagicError, CheckpointVersionError, CheckpointTruncatedError, CheckpointSizeError}
    assert len(kinds) == 4
    assert not issubclass(CheckpointVersionError, CheckpointCorruptError)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 20),
    st.lists(st.integers(1, 10), min_size=0, max_size=3),
    st.integers(0, 2**32 - 1),
    st.integers(0, 1000),
    st.one_of(st.none(), st.floats(0, 10)),
)
def test_round_trip_property(in_dim, hidden, seed, epoch, tune):
    ck = Checkpoint.from_model(init_model(in_dim, hidden, seed=seed), epoch, tune)
    back = Checkpoint.from_bytes(ck.to_bytes())
    assert back.layer_dims == ck.layer_dims and back.activation == ck.activation
    assert back.epoch == epoch and back.tune_rmse == tune
    assert back.params.tobytes() == ck.params.tobytes()
    assert back.to_bytes() == ck.to_bytes()
