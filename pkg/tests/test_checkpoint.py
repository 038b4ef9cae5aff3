"""Checkpoint byte format and model reconstruction."""

import numpy as np
import pytest

from trivqa.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from trivqa.config import build_run_config, config_hash
from trivqa.errors import CheckpointError
from trivqa.evaluation import evaluate
from trivqa.train import (
    dataset_from_canonical,
    eval_split,
    model_from_checkpoint,
    run_training,
)

from conftest import tiny_train_config


def sample_blocks():
    rng = np.random.default_rng(0)
    return {
        "scalar": np.asarray(3.25),
        "vec": rng.standard_normal(5),
        "mat": rng.standard_normal((3, 4)),
        "wide": rng.standard_normal((1, 7)),
    }


def sample_config():
    return {"model": {"d": 8}, "seed": 1}


def test_round_trip_is_bit_identical(tmp_path):
    path = tmp_path / "ck.bin"
    blocks = sample_blocks()
    hash_hex = save_checkpoint(path, sample_config(), blocks)
    canonical, loaded, stored_hash = load_checkpoint(path)
    assert canonical == sample_config()
    assert stored_hash == hash_hex
    assert list(loaded) == list(blocks)
    for name, arr in blocks.items():
        assert loaded[name].shape == arr.shape
        assert np.array_equal(loaded[name], arr)
    assert config_hash(sample_config()) == hash_hex


def test_rejects_missing_file(tmp_path):
    with pytest.raises(CheckpointError) as err:
        load_checkpoint(tmp_path / "absent.bin")
    assert "not found" in str(err.value)


def test_rejects_wrong_magic(tmp_path):
    path = tmp_path / "ck.bin"
    save_checkpoint(path, sample_config(), sample_blocks())
    blob = bytearray(path.read_bytes())
    blob[:4] = b"WHAT"
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError) as err:
        load_checkpoint(path)
    assert "magic" in str(err.value)


def test_rejects_wrong_version(tmp_path):
    path = tmp_path / "ck.bin"
    save_checkpoint(path, sample_config(), sample_blocks())
    blob = bytearray(path.read_bytes())
    blob[len(MAGIC)] = 9
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError) as err:
        load_checkpoint(path)
    assert "version" in str(err.value)


def test_rejects_corrupted_config(tmp_path):
    path = tmp_path / "ck.bin"
    save_checkpoint(path, sample_config(), sample_blocks())
    blob = bytearray(path.read_bytes())
    # flip one byte inside the config JSON region
    blob[len(MAGIC) + 16 + 2] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError) as err:
        load_checkpoint(path)
    assert "hash mismatch" in str(err.value)


def test_rejects_truncation(tmp_path):
    path = tmp_path / "ck.bin"
    save_checkpoint(path, sample_config(), sample_blocks())
    blob = path.read_bytes()
    path.write_bytes(blob[:-4])
    with pytest.raises(CheckpointError) as err:
        load_checkpoint(path)
    assert "truncated" in str(err.value)


def test_rejects_trailing_bytes(tmp_path):
    path = tmp_path / "ck.bin"
    save_checkpoint(path, sample_config(), sample_blocks())
    path.write_bytes(path.read_bytes() + b"\x00" * 3)
    with pytest.raises(CheckpointError) as err:
        load_checkpoint(path)
    assert "trailing" in str(err.value)


def test_model_from_checkpoint_reproduces_eval(tmp_path):
    raw = tiny_train_config(str(tmp_path / "run"))
    result = run_training(build_run_config(raw, out_override=str(tmp_path / "run")))
    ck = tmp_path / "run" / "checkpoint.bin"
    assert ck.exists()

    model, canonical, stats, hash_hex = model_from_checkpoint(ck)
    assert stats is not None
    assert hash_hex == config_hash(canonical)
    for name, p in result.model.params.items():
        assert np.array_equal(model.params[name].data, p.data)

    # rebuilding the dataset and split from the stored config must land on
    # the exact evaluation the training run saw
    full = dataset_from_canonical(canonical)
    part = eval_split(canonical, full, "test", stats)
    assert part.ids() == result.test_ds.ids()
    assert np.array_equal(part.v_matrix(), result.test_ds.v_matrix())

    direct = evaluate(result.model, result.test_ds, "test")
    reloaded = evaluate(model, part, "test")
    assert reloaded.mean_attribute_accuracy == direct.mean_attribute_accuracy
    assert reloaded.per_attribute_accuracy == direct.per_attribute_accuracy


def test_model_from_checkpoint_rejects_foreign_payload(tmp_path):
    path = tmp_path / "ck.bin"
    save_checkpoint(path, {"whatever": 1}, sample_blocks())
    with pytest.raises(CheckpointError) as err:
        model_from_checkpoint(path)
    assert "does not reconstruct a model" in str(err.value)


def test_model_from_checkpoint_requires_all_norm_blocks(tmp_path):
    raw = tiny_train_config(str(tmp_path / "run"))
    run_training(build_run_config(raw, out_override=str(tmp_path / "run")))
    ck = tmp_path / "run" / "checkpoint.bin"
    canonical, blocks, _ = load_checkpoint(ck)
    del blocks["norm.q_std"]
    crippled = tmp_path / "crippled.bin"
    save_checkpoint(crippled, canonical, blocks)
    with pytest.raises(CheckpointError) as err:
        model_from_checkpoint(crippled)
    assert "norm" in str(err.value)
