import math

import numpy as np
import pytest

from models.states import InputSpec, build_input_state

# 测试统一使用的种子
SEED = 3856349111


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


@pytest.fixture
def noon2():
    return build_input_state(InputSpec(n=2, amps=((1 / math.sqrt(2), 1 / math.sqrt(2)), (0, 0))))


@pytest.fixture
def two_equal_components():
    """(|2,0⟩ + |1,1⟩)/√2：两个等权重的混合分量"""
    return build_input_state(InputSpec(n=2, amps=((1, 0), (1, 0))))


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch):
    for name in ('KERR_CONFIG', 'KERR_SEED', 'KERR_LOG_LEVEL'):
        monkeypatch.delenv(name, raising=False)
