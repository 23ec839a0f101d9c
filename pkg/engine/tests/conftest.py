"""
Shared fixtures for aigdiff tests.
"""

import os

import numpy as np
import pytest
import torch

from aigdiff.config import reset_config
from aigdiff.models.aig import Aig, AndGate, OutputWire, simulate
from aigdiff.repositories.dataset_repository import DatasetRepository
from aigdiff.services.level_structure import LevelStructureStats
from aigdiff.services.selftest import (
    noise_for,
    random_circuits,
    tiny_model,
    tiny_train_config,
)


def pytest_collection_modifyitems(config, items):
    if os.getenv("AIGDIFF_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="set AIGDIFF_RUN_SLOW=1 to run desk-scale experiments")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def fresh_runtime_config():
    """Every test sees the environment as it is, not a cached singleton"""
    reset_config()
    yield
    reset_config()


@pytest.fixture
def rng():
    """Seeded numpy stream"""
    return np.random.default_rng(1234)


@pytest.fixture
def nand_aig():
    """¬(a ∧ b): inputs 0, 1; AND 2; output 3"""
    return Aig(2, 1, (AndGate(0, False, 1, False),), (OutputWire(2, True),))


@pytest.fixture
def nand_tt(nand_aig):
    return simulate(nand_aig)


@pytest.fixture
def circuits(rng):
    """Ten canonical 3-input, 1-output circuits as (Dag, TruthTable)"""
    return random_circuits(10, rng)


@pytest.fixture
def noise(circuits):
    """Small noise model estimated from the circuits fixture"""
    return noise_for([dag for dag, _ in circuits], T=10, beta=5.0)


@pytest.fixture
def stats(circuits):
    return LevelStructureStats.estimate(dag for dag, _ in circuits)


@pytest.fixture
def train_config():
    return tiny_train_config()


@pytest.fixture
def model():
    """Tiny float64 denoiser"""
    return tiny_model(0)


@pytest.fixture
def dataset_path(tmp_path, circuits):
    """JSONL file with the circuits fixture plus its stats sidecar"""
    path = tmp_path / "train.jsonl"
    repository = DatasetRepository(path)
    repository.write(circuits)
    repository.write_stats(LevelStructureStats.estimate(dag for dag, _ in circuits))
    return path


@pytest.fixture(autouse=True)
def torch_seed():
    torch.manual_seed(0)
