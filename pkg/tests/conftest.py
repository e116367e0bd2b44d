import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# --- acceptance verdicts ------------------------------------------------------------

VERDICTS: dict[int, list[tuple[bool, str]]] = {}


@pytest.fixture
def verdict(capsys):
    """Record (and print) one acceptance check; the test still asserts."""

    def record(criterion: int, ok: bool, detail: str) -> bool:
        VERDICTS.setdefault(criterion, []).append((bool(ok), detail))
        with capsys.disabled():
            print(f"\n[criterion {criterion}] {'PASS' if ok else 'FAIL'}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        checks = VERDICTS[n]
        ok = all(c[0] for c in checks)
        details = "; ".join(d for _, d in checks)
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  ({details})")
