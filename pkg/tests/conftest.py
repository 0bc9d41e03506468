import sys

import numpy as np
import pytest
import torch

from ptgan.datasets import make_synthetic_dataset

torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_synthetic():
    return make_synthetic_dataset(4, 4, seed=7, dims=(64, 64))


@pytest.fixture
def synthetic_on_disk(tmp_path):
    return make_synthetic_dataset(3, 3, seed=11, dims=(128, 64), out_dir=tmp_path / "data")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
