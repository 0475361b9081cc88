import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from demon_sim.demon import DEFAULT_T_LASER, DemonConfig, build_block  # noqa: E402
from demon_sim.qutrit import HamiltonianSpec  # noqa: E402

TWO_PI = 2 * math.pi
NV_SPEC = HamiltonianSpec("NV", delta=TWO_PI * 2.87e9, zeeman=TWO_PI * 100e6)
MW_SPEC = HamiltonianSpec("MW", rabi=TWO_PI * 10.3e6)


def make_config(kind="NV", p_absorb=0.3, gamma_t=0.5, n_pulses=0, tau=424e-9):
    spec = NV_SPEC if kind == "NV" else MW_SPEC
    return DemonConfig(spec, p_absorb=p_absorb, tau=tau, gamma_rate=gamma_t / DEFAULT_T_LASER, n_pulses=n_pulses)


def make_demon(kind="NV", p_absorb=0.3, gamma_t=0.5, tau=424e-9):
    return build_block(make_config(kind, p_absorb, gamma_t, tau=tau))


def random_state(rng, dim=3):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=["NV", "MW"])
def kind(request):
    return request.param


# one line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: (int(k.split(".")[0].rstrip("ab")), k)):
        passed, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if passed else 'FAIL'}  {detail}")
