"""
Test configuration and fixtures for the deskasr tests
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from deskasr.config import RunConfig  # noqa: E402
from deskasr.synthdata import SynthSpec, generate_corpus  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow end-to-end training tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end training runs (enable with --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _isolated_logs(tmp_path, monkeypatch):
    """Keep JSON log files out of the repository during tests"""
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("DESKASR_DTYPE", "float64")


@pytest.fixture
def rng_np():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_aed_config():
    """Smallest AED config, float64 for exact comparisons"""
    return RunConfig.model_validate(
        {
            "kind": "aed",
            "dtype": "float64",
            "encoder": {"d_model": 16, "num_layers": 1, "num_heads": 2, "conv_kernel": 3},
            "decoder": {"d_model": 16, "num_layers": 1, "num_heads": 2},
            "optimizer": {"base_peak_lr": 0.003, "reference_d_model": 16, "warmup_steps": 10},
            "data": {"num_merges": 0, "frame_budget": 400},
            "train": {"epochs": 1},
        }
    )


@pytest.fixture
def tiny_llm_config():
    return RunConfig.model_validate(
        {
            "kind": "llm",
            "dtype": "float64",
            "encoder": {"d_model": 16, "num_layers": 1, "num_heads": 2, "conv_kernel": 3},
            "llm": {
                "lm": {"d_model": 16, "num_layers": 1, "num_heads": 2},
                "lora": {"rank": 2, "alpha": 4.0},
                "prompt_text": "转写",
            },
            "optimizer": {"base_peak_lr": 0.003, "reference_d_model": 16, "warmup_steps": 10},
            "data": {"num_merges": 0, "frame_budget": 400},
            "train": {"epochs": 1},
        }
    )


@pytest.fixture
def synth_corpus(tmp_path):
    """Six short tone-coded utterances over a four-token inventory"""
    spec = SynthSpec(tokens=tuple("一二三四"), min_tokens=1, max_tokens=2, seed=7)
    return generate_corpus(spec, 6, tmp_path / "synth")
