import numpy as np
import pytest

from trivqa.data import SynthConfig, synth_generate
from trivqa.model import AttributeSchema


def tiny_schema():
    return AttributeSchema([("size", 3), ("edge", 2)])


def tiny_synth(**over):
    """A dataset small enough for per-test generation."""
    base = dict(
        schema=tiny_schema(),
        n=80,
        d_v=8,
        d_q=4,
        noise_sigma=0.1,
        class_sep=1.0,
        answer_coupling=0.0,
        hint_strength=0.0,
        n_centers=2,
        seed=0,
    )
    base.update(over)
    return SynthConfig(**base)


@pytest.fixture
def tiny_dataset():
    return synth_generate(tiny_synth())


def tiny_train_config(out_dir, **over):
    """Raw config dict for fast end-to-end runs (seconds, not minutes)."""
    raw = {
        "dataset": {
            "schema": [
                {"name": "size", "classes": 3},
                {"name": "edge", "classes": 2},
            ],
            "n": 400,
            "d_v": 10,
            "d_q": 6,
            "noise_sigma": 0.1,
            "answer_coupling": 0.0,
            "hint_strength": 1.0,
            "hint_reliability": 0.8,
            "n_centers": 2,
        },
        "model": {"d": 16},
        "train": {"epochs": 4, "batch_size": 32, "curve_samples": 128},
        "seed": 0,
        "out_dir": str(out_dir),
    }
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(raw.get(key), dict):
            raw[key].update(val)
        else:
            raw[key] = val
    return raw


def rng_for(test_seed):
    return np.random.default_rng(test_seed)
