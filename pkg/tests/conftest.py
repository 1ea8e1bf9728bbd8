import numpy as np
import pytest

from hexrefit.demos import block_mesh, unit_cube

CUBE = unit_cube().element_coords()[0]


def random_hex(rng, scale=0.15):
    """Unit cube with every node jittered; stays well shaped for scale <= 0.2."""
    return CUBE + scale * rng.uniform(-1.0, 1.0, size=(8, 3))


def parallelepiped(a, b, c):
    """Hex8 corners spanned by the three edge vectors a, b, c."""
    a, b, c = (np.asarray(v, dtype=np.float64) for v in (a, b, c))
    return np.array([np.zeros(3), a, a + b, b, c, a + c, a + b + c, b + c])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def grid3():
    return block_mesh(3, 3, 3)


# criterion number -> one-line verdict, filled by test_acceptance
ACCEPTANCE = {}


def record_criterion(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[n] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
