import numpy as np
import pytest

from swarmsca.dataset import SyntheticSpec, generate_synthetic


@pytest.fixture(scope="session")
def small_masked():
    spec = SyntheticSpec(n_profiling=4000, n_attack=1000, seed=11)
    return spec, *generate_synthetic(spec)


@pytest.fixture(scope="session")
def small_unmasked():
    spec = SyntheticSpec(n_profiling=4000, n_attack=1000, masked=False, seed=12)
    return spec, *generate_synthetic(spec)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def criterion():
    """Record one pass/fail line for an acceptance criterion."""

    def report(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
