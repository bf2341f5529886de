from __future__ import annotations

import numpy as np
import pytest

from delaycrn.modelfile import parse_model

MODEL_NAMES = ["example1_massaction", "example1_transformed", "example2", "example3"]


@pytest.fixture(scope="session")
def models():
    out = {}
    for name in MODEL_NAMES:
        model = parse_model(name)
        out[name] = (model, model.network())
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
