import pytest
import torch


@pytest.fixture(autouse=True, scope="session")
def single_thread():
    # The latency and determinism assumptions in the suite hold per-core.
    torch.set_num_threads(1)
