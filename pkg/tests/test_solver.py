import csv
import json
import math

import numpy as np
import pytest
from scipy import optimize

from choquard.energy import EnergyBreakdown, breakdown
from choquard.errors import ConfigInvalid, NoInteriorMax, NonlinearityRejected
from choquard.field import Grid, recentre
from choquard.nonlinearity import Nonlinearity, power_nonlinearity
from choquard.solver import (
    SolverConfig,
    Status,
    lift_to_path,
    pohozaev_residual,
    project_to_pohozaev,
    radial_profile,
    solve,
    write_profile_csv,
)
from choquard.symmetry import symmetry_diagnostic

from conftest import ORACLE_ACTION, gaussian, kernel_for, rel, tau_star_unit

# a coarse, fast configuration for behavioural tests
SMALL = dict(n=32, half_width=12.0, nonlinearity="power:p=2")


@pytest.fixture(scope="module")
def small_report():
    return solve(SolverConfig(**SMALL))


# ------------------------------------------------------------------ config


@pytest.mark.parametrize(
    "kw",
    [
        {"dim": 2},
        {"alpha": 0.0},
        {"alpha": 3.0},
        {"tol_pohozaev": 0.0},
        {"tol_gradient": -1.0},
        {"n": 31},
        {"half_width": 0.0},
        {"nonlinearity": "cubic:p=3"},
        {"max_iterations": 0},
        {"backtrack_factor": 1.0},
    ],
)
def test_config_validation(kw):
    with pytest.raises(ConfigInvalid):
        SolverConfig(**kw)


def test_config_dict_round_trip():
    cfg = SolverConfig(n=48, seed=7, symmetric_mode=True)
    assert SolverConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    with pytest.raises(ConfigInvalid):
        SolverConfig.from_dict({"n": 32, "mesh": 3})


def test_rejects_nonlinearity_without_antiderivative():
    nl = Nonlinearity(lambda s: s * s / 2, lambda s: 3 * s, 1.0, 1.0, True, "nonneg")
    with pytest.raises(NonlinearityRejected):
        solve(SolverConfig(**SMALL), nl=nl)


def test_rejects_mismatched_kernel():
    with pytest.raises(ConfigInvalid):
        solve(SolverConfig(**SMALL), kernel=kernel_for(3, 32, 10.0, 2.0))


# -------------------------------------------------------------- projection


def test_projection_on_manifold_is_identity():
    g = Grid(3, 32, 12.0)
    k = kernel_for(3, 32, 12.0, 2.0)
    nl = power_nonlinearity(2.0)
    u = gaussian(g, 2.0)
    t = optimize.brentq(lambda t: breakdown(u * t, k, nl).pohozaev(), 1e-2, 1e2, xtol=1e-15, rtol=1e-15)
    v = u * t
    assert abs(breakdown(v, k, nl).pohozaev()) <= 1e-12 * breakdown(v, k, nl).A
    assert np.array_equal(project_to_pohozaev(v, k, nl).values, v.values)


def test_projection_reduces_pohozaev_residual():
    g = Grid(3, 64, 15.0)
    k = kernel_for(3, 64, 15.0, 2.0)
    nl = power_nonlinearity(2.0)
    u = gaussian(g, 2.5, 0.3)
    before = pohozaev_residual(breakdown(u, k, nl))
    after = pohozaev_residual(breakdown(project_to_pohozaev(u, k, nl), k, nl))
    assert after < before and after <= 5e-2


def test_projection_needs_interaction():
    g = Grid(3, 16, 4.0)
    with pytest.raises(NoInteriorMax):
        project_to_pohozaev(g.zeros(), kernel_for(3, 16, 4.0, 2.0), power_nonlinearity(2.0))


# ------------------------------------------------------------------- solve


def test_p2_converges_and_matches_oracle(solve_power):
    rep = solve_power(2.0)
    assert rep.status == Status.CONVERGED and rep.converged
    assert rep.pohozaev_residual <= 5e-3 and rep.gradient_residual <= 1e-3
    assert rel(rep.mountain_pass_level, ORACLE_ACTION[2.0]) <= 1e-2
    assert rep.mountain_pass_level > 0


def test_reduced_identity_on_report(solve_power):
    e = solve_power(2.0).breakdown
    gap = abs(e.energy() - e.reduced())
    assert abs(gap - abs(e.pohozaev()) / (e.N + e.alpha)) <= 1e-13 * (e.A + e.B)


def test_history_non_increasing_between_resamplings(small_report):
    h = np.array(small_report.history)
    assert len(h) >= 2
    cuts = set(small_report.rescales)
    for i in range(1, len(h)):
        if i not in cuts:
            assert h[i] <= h[i - 1] * (1 + 1e-12)


def test_deterministic(small_report):
    again = solve(SolverConfig(**SMALL))
    assert json.dumps(again.to_json(), sort_keys=True) == json.dumps(small_report.to_json(), sort_keys=True)
    assert again.solution.values.tobytes() == small_report.solution.values.tobytes()


def test_seed_changes_the_start():
    a = solve(SolverConfig(**SMALL, max_iterations=1, newton_iterations=0))
    b = solve(SolverConfig(**SMALL, max_iterations=1, newton_iterations=0, seed=1))
    assert a.solution.values.tobytes() != b.solution.values.tobytes()


def test_max_iterations_status():
    rep = solve(SolverConfig(**SMALL, max_iterations=1, newton_switch=1e-12))
    assert rep.status == Status.MAX_ITERATIONS and not rep.converged


def test_lambda_scaling_of_nonlinearity():
    # F(s) = s^2/2 enters the right-hand side twice, so u solves the problem
    # for F iff u / lam solves it for lam F; the discrete problem shares this
    lam = 4.0
    nl = Nonlinearity(lambda s: lam * s * s / 2, lambda s: lam * s, lam, 1.0, True, "nonneg")
    base = solve(SolverConfig(**SMALL))
    scaled = solve(SolverConfig(**SMALL), nl=nl)
    assert scaled.converged and base.converged
    assert rel(scaled.breakdown.A, base.breakdown.A / lam**2) <= 1e-4
    assert rel(scaled.breakdown.B, base.breakdown.B / lam**2) <= 1e-4


def test_symmetric_mode_converges():
    rep = solve(SolverConfig(**SMALL, symmetric_mode=True, schwarz_every=2))
    assert rep.converged
    assert symmetry_diagnostic(recentre(rep.solution), tol=1e-2).passed


@pytest.mark.parametrize("p, reason", [(1.5, {"vanishing", "boundary_mass"}), (6.0, {"collapse", "boundary_mass"})])
def test_outside_window_no_groundstate(solve_power, p, reason):
    rep = solve_power(p)
    assert rep.status == Status.NO_GROUNDSTATE
    assert rep.diagnostics["reason"] in reason


def test_solution_is_positive_and_radial(solve_power):
    u = recentre(solve_power(2.0).solution)
    assert symmetry_diagnostic(u, tol=1e-2).passed
    assert np.min(u.values) >= -1e-6 * np.max(u.values)


# ------------------------------------------------------------------ output


def test_lift_to_path_unit():
    e = EnergyBreakdown(1.0, 1.0, 1.0, 3, 2.0)
    path = lift_to_path(e=e, u=None, samples=2001)
    i = int(np.argmax(path[:, 1]))
    step = path[1, 0] - path[0, 0]
    assert abs(path[i, 0] - tau_star_unit()) <= step
    assert path[i, 1] == pytest.approx(0.5199, abs=1e-4)
    assert path[0].tolist() == [0.0, 0.0]
    assert path[-1, 1] < 0


def test_lift_to_path_solution_peaks_at_one(solve_power):
    rep = solve_power(2.0)
    path = lift_to_path(rep.solution, rep.breakdown, samples=257)
    i = int(np.argmax(path[:, 1]))
    step = path[1, 0] - path[0, 0]
    assert abs(path[i, 0] - 1.0) <= step
    assert path[-1, 1] < 0


def test_lift_to_path_errors():
    with pytest.raises(ValueError):
        lift_to_path(None, EnergyBreakdown(1, 1, 1, 3, 2.0), samples=8)
    with pytest.raises(NoInteriorMax):
        lift_to_path(None, EnergyBreakdown(1, 1, 0, 3, 2.0))


def test_profile_csv(tmp_path, small_report):
    k = kernel_for(3, 32, 12.0, 2.0)
    prof = radial_profile(small_report.solution, k, power_nonlinearity(2.0))
    assert prof[0, 0] == 0.0 and np.all(np.diff(prof[:, 0]) > 0)
    path = tmp_path / "profile.csv"
    write_profile_csv(path, prof)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["r", "u", "v"]
    back = np.array(rows[1:], dtype=float)
    assert np.array_equal(back, prof)


def test_report_json_keys(small_report):
    data = small_report.to_json()
    assert {"status", "A", "B", "C", "energy", "pohozaev", "reduced", "pohozaev_residual",
            "gradient_residual", "iterations", "b_estimate", "diagnostics"} <= set(data)
    assert {"boundary_mass", "concentration"} <= set(data["diagnostics"])
    assert math.isfinite(data["energy"])
