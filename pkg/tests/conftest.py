import numpy as np
import pytest
import torch

from textpure.corpus import SPECIAL_TOKENS, Vocabulary
from textpure.models import JointModel, ModelConfig

WORDS = ("good", "bad", "great", "awful", "movie", "plot", "very", "the", "was", "it", ",", ".")


@pytest.fixture
def vocab():
    return Vocabulary(SPECIAL_TOKENS + WORDS)


def tiny_model(vocab_size=len(SPECIAL_TOKENS) + len(WORDS), dim=8, heads=2, layers=1, ff_dim=16,
               max_len=16, seed=0, zero_head=False, dtype=torch.float64) -> JointModel:
    torch.manual_seed(seed)
    model = JointModel(ModelConfig(vocab_size, 2, dim, heads, layers, ff_dim, max_len, zero_head=zero_head))
    return model.to(dtype)


@pytest.fixture
def model64():
    return tiny_model()


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# criterion number -> (passed, description, measured values); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        passed, desc, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {num}. {desc}: {detail}")
