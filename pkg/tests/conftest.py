import shutil

import numpy as np
import pytest

from fnosmt.fno import FnoSpec, planted
from fnosmt.pde import Grid, gen_dataset
from fnosmt.trainer import fit_projection, init_random

HAVE_Z3 = shutil.which("z3") is not None

needs_z3 = pytest.mark.skipif(not HAVE_Z3, reason="z3 executable not on PATH")


@pytest.fixture(scope="session")
def data8():
    return gen_dataset(120, Grid(8), seed=11)


@pytest.fixture(scope="session")
def model_l1(data8):
    return fit_projection(init_random(FnoSpec(8, 2, 1, seed=42)), data8)


@pytest.fixture(scope="session")
def model_l2(data8):
    return fit_projection(init_random(FnoSpec(8, 2, 2, seed=123)), data8)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


@pytest.fixture(params=["identity", "doubling", "negation"])
def planted_model(request):
    return planted(request.param, 8)


# acceptance criteria report one line each at the end of the session
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_runtest_makereport(item, call):
    num = getattr(item.function, "criterion", None)
    if num is None or call.when != "call":
        return
    ok = call.excinfo is None
    detail = ACCEPTANCE.get(num, (ok, ""))[1]
    if not ok and not detail:
        detail = call.excinfo.exconly().splitlines()[0][:160]
    ACCEPTANCE[num] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
