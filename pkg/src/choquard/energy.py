"""Action functional, Pohozaev functional and closed-form dilation paths.

Everything downstream of a field is expressed through three integrals

    A = int |grad u|^2,   B = int u^2,   C = int (I_alpha * F(u)) F(u),

and the dilation ``u_tau(x) = u(x / tau)`` rescales them exactly as
``(tau^(N-2) A, tau^N B, tau^(N+alpha) C)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch, NoInteriorMax, TauNonpositive
from .field import Field, dirichlet_energy, laplacian
from .nonlinearity import Nonlinearity
from .riesz import RieszKernel, convolve

__all__ = [
    "EnergyBreakdown",
    "breakdown",
    "evaluate",
    "gradient_action",
    "path_energy",
    "path_derivative",
    "optimal_dilation",
    "mountain_pass_value",
    "augmented_energy",
]


@dataclass(frozen=True)
class EnergyBreakdown:
    A: float
    B: float
    C: float
    N: int
    alpha: float

    def energy(self) -> float:
        return 0.5 * (self.A + self.B) - 0.5 * self.C

    def pohozaev(self) -> float:
        N, a = self.N, self.alpha
        return 0.5 * (N - 2) * self.A + 0.5 * N * self.B - 0.5 * (N + a) * self.C

    def reduced(self) -> float:
        """``((alpha + 2) A + alpha B) / (2 (N + alpha))``, the action on the Pohozaev manifold."""
        N, a = self.N, self.alpha
        return ((a + 2) * self.A + a * self.B) / (2 * (N + a))

    def scaled(self, tau: float) -> "EnergyBreakdown":
        """Breakdown of ``u(x / tau)`` in closed form."""
        if not tau > 0:
            raise TauNonpositive(f"tau must be positive, got {tau}")
        N, a = self.N, self.alpha
        return EnergyBreakdown(self.A * tau ** (N - 2), self.B * tau**N, self.C * tau ** (N + a), N, a)

    def to_json(self) -> dict:
        return {
            "A": self.A,
            "B": self.B,
            "C": self.C,
            "N": self.N,
            "alpha": self.alpha,
            "energy": self.energy(),
            "pohozaev": self.pohozaev(),
            "reduced": self.reduced(),
        }


def _check(u: Field, k: RieszKernel) -> None:
    if u.grid != k.grid:
        raise GridMismatch(f"field grid {u.grid} does not match kernel grid {k.grid}")


def evaluate(u: Field, k: RieszKernel, nl: Nonlinearity) -> tuple[EnergyBreakdown, Field]:
    """Breakdown of ``u`` together with the potential ``I_alpha * F(u)``."""
    _check(u, k)
    Fu = u.with_values(nl.F(u.values))
    pot = convolve(k, Fu)
    g = u.grid
    A = dirichlet_energy(u)
    B = float(np.sum(u.values * u.values)) * g.cell_volume
    C = float(np.sum(pot.values * Fu.values)) * g.cell_volume
    return EnergyBreakdown(A, B, C, g.dim, k.alpha), pot


def breakdown(u: Field, k: RieszKernel, nl: Nonlinearity) -> EnergyBreakdown:
    return evaluate(u, k, nl)[0]


def gradient_action(u: Field, k: RieszKernel, nl: Nonlinearity, potential: Field | None = None) -> Field:
    """L^2 gradient ``-Delta_h u + u - (I_alpha * F(u)) f(u)`` of the discrete action.

    ``potential`` may be passed to reuse ``I_alpha * F(u)`` from :func:`evaluate`.
    """
    _check(u, k)
    if potential is None:
        potential = convolve(k, u.with_values(nl.F(u.values)))
    lap = laplacian(u).values
    return u.with_values(-lap + u.values - potential.values * nl.f(u.values))


def path_energy(e: EnergyBreakdown, tau: float) -> float:
    """``I(u_tau) = tau^(N-2) A / 2 + tau^N B / 2 - tau^(N+alpha) C / 2``."""
    return e.scaled(tau).energy()


def path_derivative(e: EnergyBreakdown, tau: float) -> float:
    """``d/dtau I(u_tau)``; equals ``P(u_tau) / tau``."""
    return e.scaled(tau).pohozaev() / tau


def _stationarity(e: EnergyBreakdown, tau: float) -> float:
    # tau^(2-N) * P(u_tau): positive below the maximiser, negative above.
    N, a = e.N, e.alpha
    return (N - 2) * e.A + N * e.B * tau**2 - (N + a) * e.C * tau ** (a + 2)


def optimal_dilation(e: EnergyBreakdown, rtol: float = 1e-13) -> float:
    """Unique ``tau* > 0`` with ``P(u_tau*) = 0``, where the dilation path peaks.

    Bisection brackets the root to 1e-6 relative, then Newton steps polish it.
    """
    if not (e.C > 0 and e.A > 0):
        raise NoInteriorMax(f"dilation path has no interior maximum (A={e.A:.3g}, C={e.C:.3g})")
    N, a = e.N, e.alpha
    lo, hi = 0.0, 1.0
    while _stationarity(e, hi) >= 0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e150:
            raise NoInteriorMax("no sign change of the Pohozaev function")
    while _stationarity(e, lo) <= 0 and lo > 0:
        lo = 0.5 * lo
    while hi - lo > 1e-6 * hi:
        mid = 0.5 * (lo + hi)
        if _stationarity(e, mid) > 0:
            lo = mid
        else:
            hi = mid
    tau = 0.5 * (lo + hi)
    # the root may sit within rounding of a bracket end; let Newton step past it
    lo, hi = lo - (hi - lo), hi + (hi - lo)
    for _ in range(50):
        g = _stationarity(e, tau)
        dg = 2 * N * e.B * tau - (N + a) * (a + 2) * e.C * tau ** (a + 1)
        if dg == 0:
            break
        step = g / dg
        tau_new = tau - step
        if not (lo <= tau_new <= hi):
            break
        tau = tau_new
        if abs(step) <= rtol * tau:
            break
    return tau


def mountain_pass_value(e: EnergyBreakdown) -> float:
    """``max_tau I(u_tau)`` along the dilation ray of ``u``."""
    return path_energy(e, optimal_dilation(e))


def augmented_energy(sigma: float, v: Field | EnergyBreakdown, k: RieszKernel | None = None,
                     nl: Nonlinearity | None = None) -> tuple[float, float]:
    """``(I(Phi(sigma, v)), d/dsigma I(Phi(sigma, v)))`` with ``Phi(sigma, v) = v(e^-sigma x)``.

    The sigma-derivative is the Pohozaev functional of the dilated field, read
    off the closed form; no field is interpolated.  ``v`` may be a
    precomputed :class:`EnergyBreakdown`.
    """
    if not math.isfinite(sigma):
        raise ValueError("sigma must be finite")
    e = v if isinstance(v, EnergyBreakdown) else breakdown(v, k, nl)
    if sigma == 0.0:
        return e.energy(), e.pohozaev()
    d = e.scaled(math.exp(sigma))
    return d.energy(), d.pohozaev()
