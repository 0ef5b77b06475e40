from pathlib import Path

import numpy as np
import pytest

from orbitron.cli import load_config
from orbitron.equilibrium import solve_equilibrium
from orbitron.errors import OrbitronError
from orbitron.search import Candidate

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def config_problem(name):
    cfg = load_config(CONFIGS / f"{name}.toml")
    return cfg.problem


@pytest.fixture(scope="session")
def acceptance():
    prob = config_problem("acceptance")
    return prob, solve_equilibrium(prob)


@pytest.fixture(scope="session")
def negative():
    prob = config_problem("negative_control")
    return prob, solve_equilibrium(prob)


def random_candidate(rng, signed=True):
    sigma = 10 ** rng.uniform(-1.5, 1)
    if signed and rng.random() < 0.3:
        sigma = -sigma
    return Candidate(
        h_ratio=rng.uniform(0.3, 1.5), sigma=sigma, lam_frac=rng.uniform(0.02, 0.98),
        b0_ratio=rng.uniform(-20, 20), inertia_ratio=10 ** rng.uniform(-2, 2), axial_ratio=rng.uniform(0.2, 2),
    )


def sample_equilibria(n, seed, signed=True):
    """``n`` solvable orbital equilibria from a seeded sweep of the dimensionless box."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        c = random_candidate(rng, signed)
        try:
            prob = c.problem()
            eq = solve_equilibrium(prob)
        except OrbitronError:
            continue
        if eq.kind == "orbital" and abs(eq.nu1) > 1e-6 and abs(eq.nu3) > 1e-6:
            out.append((prob, eq))
    return out


@pytest.fixture(scope="session")
def light_rotor():
    prob = config_problem("light_rotor")
    return prob, solve_equilibrium(prob)


# acceptance ledger: one line per criterion in the terminal summary
ACCEPTANCE: dict = {}


def record(key, ok, detail):
    ACCEPTANCE[key] = (bool(ok), detail)
    print(f"{key} {'PASS' if ok else 'FAIL'}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (len(k), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key} {'PASS' if ok else 'FAIL'}: {detail}")
