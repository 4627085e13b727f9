import functools
import math
import time

import numpy as np
import pytest

from choquard.field import Grid
from choquard.riesz import build_kernel
from choquard.solver import SolverConfig, solve

# Actions of the power-p groundstate (N = 3, alpha = 2) from the radial
# shooting oracle; recorded once and kept as regression constants.
ORACLE_ACTION = {2.0: 29.366181446064683, 3.0: 32.13623865479643}

# Grids on which the spectral solver is run per exponent: (n, L).  Larger p
# gives a narrower core and a faster-decaying tail, so the box shrinks and
# the spacing drops with p.
SOLVE_GRID = {1.5: (64, 15.0), 2.0: (64, 15.0), 2.5: (64, 10.0), 3.0: (96, 8.0), 4.0: (256, 6.5), 6.0: (64, 15.0)}

# p = 4 needs a fine grid; a narrow start keeps the descent in the basin of
# the smooth solution and a short Krylov memory keeps the Newton step in RAM
SOLVE_OPTIONS = {4.0: {"init_width": 0.5, "newton_krylov_dim": 5}}

# wall-clock seconds of every cached solve, keyed like the cache
SOLVE_SECONDS: dict = {}


@functools.lru_cache(maxsize=None)
def kernel_for(dim, n, L, alpha):
    return build_kernel(Grid(dim, n, L), alpha)


def cached_solve(p: float, n: int | None = None, L: float | None = None, **kw):
    """One solve per parameter set for the whole session."""
    if n is None:
        n, L = SOLVE_GRID[p]
    if (n, L) == SOLVE_GRID.get(p):
        kw = {**SOLVE_OPTIONS.get(p, {}), **kw}
    return _solve(p, n, L, tuple(sorted(kw.items())))


@functools.lru_cache(maxsize=None)
def _solve(p, n, L, kw):
    cfg = SolverConfig(dim=3, alpha=2.0, nonlinearity=f"power:p={p!r}", n=n, half_width=L, **dict(kw))
    t0 = time.perf_counter()
    rep = solve(cfg, kernel=build_kernel(Grid(3, n, L), 2.0))
    SOLVE_SECONDS[(p, n, L)] = time.perf_counter() - t0
    return rep


@pytest.fixture(scope="session")
def solve_power():
    return cached_solve


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def gaussian(grid, width=1.0, amp=1.0):
    return grid.sample(lambda r: amp * np.exp(-r * r / (2 * width * width)))


def rel(a, b):
    return abs(a - b) / abs(b)


def tau_star_unit():
    """Maximiser of tau + tau^3 - tau^5 (A = B = C = 1, N = 3, alpha = 2)."""
    return math.sqrt((3 + math.sqrt(29)) / 10)


# ------------------------------------------------------- acceptance summary

CRITERIA = {
    1: "Pohozaev residual of the converged solve",
    2: "reduced-energy identity",
    3: "spectral action vs shooting oracle",
    4: "Riesz kernel accuracy",
    5: "gradient against finite differences",
    6: "dilation path identity",
    7: "existence window",
    8: "sign and radial symmetry",
    9: "polarization and rearrangement",
    10: "exponent-window validator",
}
_criterion_of: dict = {}
_outcomes: dict = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            _criterion_of[item.nodeid] = mark.args[0]


def pytest_runtest_logreport(report):
    n = _criterion_of.get(report.nodeid)
    if n is None or report.skipped:
        return
    if report.when == "call" or report.failed:
        _outcomes.setdefault(n, []).append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in CRITERIA.items():
        runs = _outcomes.get(n)
        if runs is None:
            verdict = "NOT RUN"
        else:
            verdict = "PASS" if all(runs) else "FAIL"
        count = f"{sum(runs)}/{len(runs)} checks" if runs else ""
        terminalreporter.write_line(f"criterion {n:>2}  {verdict:<7} {title}  {count}")
