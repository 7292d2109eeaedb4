import numpy as np
import pytest

from vpcasimir.casimir import CasimirModel, LWeight
from vpcasimir.functional import discretize_steady
from vpcasimir.minimize import GridSpec, build_grid
from vpcasimir.steady import solve_for_mass


@pytest.fixture(scope="session")
def poly1():
    return CasimirModel.polytrope(1.0)


@pytest.fixture(scope="session")
def mixed_model():
    return CasimirModel.mixed(0.8, 1.2, LWeight.constant(1.0), LWeight.shifted_inverse(1.0, 1.0))


@pytest.fixture(scope="session")
def state1(poly1):
    return solve_for_mass(poly1, 1.0)


@pytest.fixture(scope="session")
def grid24(state1):
    return build_grid(GridSpec(shape=(24, 24, 24)), state1)


@pytest.fixture(scope="session")
def ref24(poly1, state1, grid24):
    return discretize_steady(poly1, state1, grid24)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class AcceptanceLedger:
    """One verdict per acceptance criterion; a criterion passes only if all its checks do."""

    def __init__(self):
        self.rows = {}

    def record(self, n, ok, detail):
        prev_ok, prev = self.rows.get(n, (True, []))
        self.rows[n] = (prev_ok and bool(ok), prev + [(bool(ok), detail)])
        print(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        return bool(ok)

    def lines(self):
        def part(ok, detail, many):
            return f"[{'ok' if ok else 'FAIL'}] {detail}" if many else detail

        return [f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  "
                + "; ".join(part(o, d, len(parts) > 1) for o, d in parts)
                for n, (ok, parts) in sorted(self.rows.items())]


_LEDGER = AcceptanceLedger()


@pytest.fixture(scope="session")
def acceptance():
    return _LEDGER


def pytest_terminal_summary(terminalreporter):
    if _LEDGER.rows:
        terminalreporter.section("acceptance criteria")
        for line in _LEDGER.lines():
            terminalreporter.write_line(line)
