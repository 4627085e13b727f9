import math

import numpy as np
import pytest
from scipy import integrate as sint
from scipy import optimize

from choquard.energy import (
    EnergyBreakdown,
    augmented_energy,
    breakdown,
    evaluate,
    gradient_action,
    mountain_pass_value,
    optimal_dilation,
    path_derivative,
    path_energy,
)
from choquard.errors import GridMismatch, NoInteriorMax, TauNonpositive
from choquard.field import Field, Grid, dilate, dirichlet_energy, lp_norm
from choquard.nonlinearity import power_nonlinearity
from choquard.riesz import build_kernel, quadratic_form
from choquard.shooting import shooting_oracle
from choquard.solver import gradient_residual

from conftest import gaussian, kernel_for, rel, tau_star_unit

UNIT = EnergyBreakdown(1.0, 1.0, 1.0, 3, 2.0)


def test_zero_field():
    g = Grid(3, 16, 4.0)
    e = breakdown(g.zeros(), build_kernel(g, 2.0), power_nonlinearity(2.0))
    assert (e.A, e.B, e.C, e.energy()) == (0.0, 0.0, 0.0, 0.0)


def test_breakdown_components_match_field_module(rng):
    g = Grid(3, 16, 4.0)
    k = build_kernel(g, 1.5)
    nl = power_nonlinearity(2.5)
    u = gaussian(g, 1.0) * 1.3
    e = breakdown(u, k, nl)
    assert e.A == dirichlet_energy(u)
    assert rel(e.B, lp_norm(u, 2) ** 2) <= 1e-13
    assert rel(e.C, quadratic_form(k, u.with_values(nl.F(u.values)))) <= 1e-13


def _radial_coulomb_self_energy(rho):
    # int rho(x) (|x|^-1 / 4pi * rho)(x) dx for a radial density, by shells
    def phi(r):
        inner = sint.quad(lambda s: rho(s) * s * s, 0, r)[0] / r
        outer = sint.quad(lambda s: rho(s) * s, r, np.inf)[0]
        return inner + outer

    return sint.quad(lambda r: 4 * math.pi * r * r * rho(r) * phi(r), 0, np.inf, limit=200)[0]


def test_gaussian_interaction_against_radial_quadrature():
    ref = _radial_coulomb_self_energy(lambda r: 0.5 * math.exp(-2 * r * r))
    # Gaussian charge q with per-axis width s: q^2 / (s sqrt(pi)) against 1/|x|
    q, s = 0.5 * (math.pi / 2) ** 1.5, 0.5
    assert rel(ref, q * q / (s * math.sqrt(math.pi)) / (4 * math.pi)) <= 1e-8
    g = Grid(3, 128, 10.0)
    C = breakdown(g.sample(lambda r: np.exp(-r * r)), kernel_for(3, 128, 10.0, 2.0), power_nonlinearity(2.0)).C
    assert rel(C, ref) <= 1e-2


def test_smoothed_ball_has_positive_interaction():
    g = Grid(3, 32, 3.0)
    k = build_kernel(g, 2.0)
    s0 = 0.7
    u = g.sample(lambda r: s0 * 0.5 * (1 - np.tanh((r - 1) / 0.1)))
    for p in (1.8, 2.0, 4.5):
        assert breakdown(u, k, power_nonlinearity(p)).C > 0


def test_algebraic_identities_exact(rng):
    for _ in range(50):
        A, B, C = rng.uniform(0.1, 10, 3)
        N = int(rng.integers(3, 6))
        a = float(rng.uniform(0.1, N - 0.1))
        e = EnergyBreakdown(A, B, C, N, a)
        lhs = e.energy() - e.pohozaev() / (N + a)
        assert abs(lhs - e.reduced()) <= 8 * np.finfo(float).eps * (A + B + C)


def test_json_keys():
    assert set(UNIT.to_json()) == {"A", "B", "C", "N", "alpha", "energy", "pohozaev", "reduced"}


# ------------------------------------------------------------------ gradient


def test_gradient_of_zero_is_zero():
    g = Grid(3, 16, 4.0)
    out = gradient_action(g.zeros(), build_kernel(g, 2.0), power_nonlinearity(2.0))
    assert np.all(out.values == 0.0)


def _smooth_random(g, rng, width=1.2):
    x, y, z = g.coords()
    kx, ky, kz = rng.normal(0, 0.7, 3)
    phase = rng.uniform(0, 2 * math.pi)
    env = np.exp(-(x * x + y * y + z * z) / (2 * width**2))
    return env * (1 + 0.5 * np.cos(kx * x + ky * y + kz * z + phase))


def test_gradient_matches_central_differences(rng):
    g = Grid(3, 32, 6.0)
    k = build_kernel(g, 2.0)
    nl = power_nonlinearity(2.5)
    u = Field(g, 1.5 * _smooth_random(g, rng))
    grad = gradient_action(u, k, nl).values
    eps = 1e-4
    for _ in range(20):
        phi = Field(g, _smooth_random(g, rng) * rng.choice([-1.0, 1.0]))
        fd = (breakdown(u + eps * phi, k, nl).energy() - breakdown(u - eps * phi, k, nl).energy()) / (2 * eps)
        exact = float(np.sum(grad * phi.values)) * g.cell_volume
        assert rel(fd, exact) <= 1e-5


def test_gradient_grid_mismatch():
    g = Grid(3, 16, 4.0)
    with pytest.raises(GridMismatch):
        gradient_action(Grid(3, 16, 5.0).zeros(), build_kernel(g, 2.0), power_nonlinearity(2.0))


def _sampled_oracle(grid, p):
    prof = shooting_oracle(p).profile
    return grid.sample(lambda r: np.interp(r, prof[:, 0], prof[:, 1], right=0.0))


def test_sampled_oracle_has_small_gradient_residual():
    g = Grid(3, 64, 15.0)
    u = _sampled_oracle(g, 2.0)
    assert gradient_residual(u, kernel_for(3, 64, 15.0, 2.0), power_nonlinearity(2.0)) <= 1e-2


# --------------------------------------------------------------------- paths


def test_path_energy_examples():
    assert path_energy(UNIT, 1.0) == 0.5
    t = optimize.minimize_scalar(lambda t: -(t + t**3 - t**5) / 2, bounds=(0.5, 1.5), method="bounded",
                                 options={"xatol": 1e-10}).x
    assert path_energy(UNIT, tau_star_unit()) == pytest.approx((t + t**3 - t**5) / 2, rel=1e-12)
    assert path_energy(UNIT, tau_star_unit()) == pytest.approx(0.5199, abs=1e-4)
    free = EnergyBreakdown(1.0, 2.0, 0.0, 3, 2.0)
    vals = [path_energy(free, t) for t in np.linspace(0.1, 5, 30)]
    assert all(v > 0 for v in vals) and all(np.diff(vals) > 0)


def test_path_energy_rejects_nonpositive_tau():
    for tau in (0.0, -1.0):
        with pytest.raises(TauNonpositive):
            path_energy(UNIT, tau)


def test_path_derivative_at_one_is_pohozaev(rng):
    for _ in range(20):
        A, B, C = rng.uniform(0.1, 10, 3)
        e = EnergyBreakdown(A, B, C, 3, 2.0)
        assert abs(path_derivative(e, 1.0) - e.pohozaev()) <= 8 * np.finfo(float).eps * (A + B + C)
        fd = (path_energy(e, 1 + 1e-6) - path_energy(e, 1 - 1e-6)) / 2e-6
        assert fd == pytest.approx(e.pohozaev(), rel=1e-6, abs=1e-8)


def test_optimal_dilation_unit():
    ref = optimize.brentq(lambda t: t + 3 * t**3 - 5 * t**5, 0.5, 1.5, xtol=1e-15)
    assert optimal_dilation(UNIT) == pytest.approx(ref, rel=1e-12)
    assert ref == pytest.approx(0.91571, abs=1e-5)


def test_optimal_dilation_on_manifold_is_one(rng):
    # choose C so that P = 0 at tau = 1
    A, B = rng.uniform(0.5, 5, 2)
    e = EnergyBreakdown(A, B, (A + 3 * B) / 5, 3, 2.0)
    assert abs(optimal_dilation(e) - 1.0) <= 1e-12


def test_optimal_dilation_maximises_path(rng):
    for _ in range(10):
        A, B, C = rng.uniform(0.1, 10, 3)
        e = EnergyBreakdown(A, B, C, 4, float(rng.uniform(0.5, 3.5)))
        t = optimal_dilation(e)
        best = path_energy(e, t)
        for s in (0.9, 0.99, 1.01, 1.1):
            assert path_energy(e, t * s) < best
        assert mountain_pass_value(e) == best


@pytest.mark.parametrize("A, C", [(1.0, 0.0), (0.0, 1.0), (1.0, -1.0)])
def test_optimal_dilation_degenerate(A, C):
    with pytest.raises(NoInteriorMax):
        optimal_dilation(EnergyBreakdown(A, 1.0, C, 3, 2.0))


def test_scaled_matches_dilated_field():
    g = Grid(3, 96, 12.0)
    k = kernel_for(3, 96, 12.0, 2.0)
    nl = power_nonlinearity(2.0)
    u = gaussian(g, 1.0, 1.2)
    e = breakdown(u, k, nl)
    for tau in (0.8, 1.25):
        d = breakdown(dilate(u, tau), k, nl)
        s = e.scaled(tau)
        assert rel(d.A, s.A) <= 1e-2 and rel(d.B, s.B) <= 1e-2 and rel(d.C, s.C) <= 1e-2


# ----------------------------------------------------------------- augmented


def test_augmented_at_zero_is_exact():
    g = Grid(3, 16, 4.0)
    k = build_kernel(g, 2.0)
    nl = power_nonlinearity(2.0)
    u = gaussian(g, 0.8, 2.0)
    e = breakdown(u, k, nl)
    val, d = augmented_energy(0.0, u, k, nl)
    assert val == e.energy() and d == e.pohozaev()


def test_augmented_vanishes_at_optimal_dilation():
    _, d = augmented_energy(math.log(tau_star_unit()), UNIT)
    assert abs(d) <= 1e-10


def test_augmented_derivative_is_sigma_derivative(rng):
    e = EnergyBreakdown(*rng.uniform(0.5, 3, 3), 3, 2.0)
    for s in (-0.3, 0.2):
        _, d = augmented_energy(s, e)
        fd = (augmented_energy(s + 1e-6, e)[0] - augmented_energy(s - 1e-6, e)[0]) / 2e-6
        assert fd == pytest.approx(d, rel=1e-6)


def test_augmented_rejects_nonfinite_sigma():
    with pytest.raises(ValueError):
        augmented_energy(math.inf, UNIT)


def test_small_fields_have_positive_energy():
    g = Grid(3, 32, 6.0)
    k = build_kernel(g, 2.0)
    nl = power_nonlinearity(3.0)
    u = gaussian(g, 1.0)
    for amp in (1e-3, 1e-2, 1e-1):
        assert breakdown(amp * u, k, nl).energy() > 0


def test_evaluate_returns_potential():
    g = Grid(3, 16, 4.0)
    k = build_kernel(g, 2.0)
    nl = power_nonlinearity(2.0)
    u = gaussian(g, 1.0)
    e, pot = evaluate(u, k, nl)
    assert rel(e.C, float(np.sum(pot.values * nl.F(u.values))) * g.cell_volume) <= 1e-14
