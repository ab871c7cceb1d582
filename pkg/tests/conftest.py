import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_psd(g, n, rank=None, scale=1.0):
    rank = n if rank is None else rank
    x = (g.standard_normal((n, rank)) + 1j * g.standard_normal((n, rank))) / np.sqrt(2 * rank)
    return scale * (x @ x.conj().T)


_ACCEPTANCE = []


class _Report:
    """Collects the sub-checks of one acceptance criterion."""

    def __init__(self, number, title):
        self.number, self.title = number, title
        self.checks = []

    def check(self, name, ok, detail=""):
        self.checks.append((name, bool(ok), detail))
        return bool(ok)

    @property
    def ok(self):
        return all(ok for _, ok, _ in self.checks)

    def line(self):
        status = "PASS" if self.ok else "FAIL"
        parts = [f"{n}={'ok' if ok else 'FAIL'}" + (f" ({d})" if d else "")
                 for n, ok, d in self.checks]
        return f"[{status}] criterion {self.number}: {self.title}: " + "; ".join(parts)

    def finish(self):
        line = self.line()
        print(line)
        _ACCEPTANCE.append((self.number, line))
        failed = [f"{n}: {d}" for n, ok, d in self.checks if not ok]
        assert not failed, "; ".join(failed)


@pytest.fixture
def acceptance():
    return _Report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)
