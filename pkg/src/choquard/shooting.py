"""Radial shooting solver for the power-law Choquard problem with N = 3, alpha = 2.

With ``v = I_2 * F(u)`` the problem becomes the radial ODE system

    u'' + (2/r) u' - u + v f(u) = 0,
    v'' + (2/r) v' = -F(u),

and the groundstate is the positive solution with ``u, v -> 0``.  For a fixed
``v(0) = b`` the value ``u(0) = a`` is bisected between trajectories that
cross zero and trajectories that turn back up; ``b`` is then adjusted until the
far-field constant ``v_inf = v + r v'`` vanishes.  Nothing here touches the
grid or FFT code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import optimize

from .errors import ShootingFailed

__all__ = ["OracleResult", "shooting_oracle", "integrate_radial"]

CROSS, TURN, NONE = 1, -1, 0

_DR = 2.5e-3
_R_MAX = 40.0


@njit(cache=True)
def _rhs(r, u, du, v, dv, p):
    a = abs(u)
    Fu = a**p / p
    fu = a ** (p - 1.0) * (1.0 if u > 0 else (-1.0 if u < 0 else 0.0))
    ddu = -2.0 * du / r + u - v * fu
    ddv = -2.0 * dv / r - Fu
    w = 4.0 * math.pi * r * r
    return du, ddu, dv, ddv, w * du * du, w * u * u, w * v * Fu


@njit(cache=True)
def _shoot(a, b, p, dr, r_max, record):
    """RK4 from the regular singular point; returns event code and end state."""
    fa = a ** (p - 1.0)
    Fa = a**p / p
    u2 = (a - b * fa) / 3.0
    v2 = -Fa / 3.0
    r = dr
    u = a + 0.5 * u2 * r * r
    du = u2 * r
    v = b + 0.5 * v2 * r * r
    dv = v2 * r
    w0 = 4.0 * math.pi / 3.0 * r**3
    qa = 4.0 * math.pi * u2 * u2 * r**5 / 5.0
    qb = a * a * w0
    qc = b * Fa * w0
    nmax = int(r_max / dr) + 2
    prof = np.zeros((nmax if record else 1, 3))
    k = 0
    if record:
        prof[0, 0] = 0.0
        prof[0, 1] = a
        prof[0, 2] = b
        k = 1
    code = NONE
    while r < r_max:
        k1 = _rhs(r, u, du, v, dv, p)
        h2 = 0.5 * dr
        k2 = _rhs(r + h2, u + h2 * k1[0], du + h2 * k1[1], v + h2 * k1[2], dv + h2 * k1[3], p)
        k3 = _rhs(r + h2, u + h2 * k2[0], du + h2 * k2[1], v + h2 * k2[2], dv + h2 * k2[3], p)
        k4 = _rhs(r + dr, u + dr * k3[0], du + dr * k3[1], v + dr * k3[2], dv + dr * k3[3], p)
        c = dr / 6.0
        un = u + c * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        dun = du + c * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        vn = v + c * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        dvn = dv + c * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
        qan = qa + c * (k1[4] + 2 * k2[4] + 2 * k3[4] + k4[4])
        qbn = qb + c * (k1[5] + 2 * k2[5] + 2 * k3[5] + k4[5])
        qcn = qc + c * (k1[6] + 2 * k2[6] + 2 * k3[6] + k4[6])
        if un <= 0.0:
            code = CROSS
            break
        if dun > 0.0:
            code = TURN
            break
        u, du, v, dv, qa, qb, qc = un, dun, vn, dvn, qan, qbn, qcn
        r += dr
        if record:
            prof[k, 0] = r
            prof[k, 1] = u
            prof[k, 2] = v
            k += 1
    return code, r, u, du, v, dv, qa, qb, qc, prof[:k]


def integrate_radial(a: float, b: float, p: float, record: bool = False, dr: float = _DR, r_max: float = _R_MAX):
    """One shot from ``(u(0), v(0)) = (a, b)``; stops where ``u`` crosses zero or turns up."""
    return _shoot(float(a), float(b), float(p), dr, r_max, record)


def _separatrix(b, p, a_lo, a_hi, rtol):
    """Bisect ``u(0)`` between a crossing and a turning trajectory."""
    c_lo = integrate_radial(a_lo, b, p)[0]
    c_hi = integrate_radial(a_hi, b, p)[0]
    if c_lo == c_hi or NONE in (c_lo, c_hi):
        return None
    for _ in range(200):
        mid = 0.5 * (a_lo + a_hi)
        if mid in (a_lo, a_hi) or a_hi - a_lo <= rtol * mid:
            break
        c = integrate_radial(mid, b, p)[0]
        if c == NONE:
            return mid, mid
        if c == c_lo:
            a_lo = mid
        else:
            a_hi = mid
    return a_lo, a_hi


def _bracket_a(b, p, grid):
    # Large u(0) drains v and the trajectory turns up; the groundstate branch is
    # the last crossing -> turning transition as u(0) increases.
    codes = [integrate_radial(a, b, p)[0] for a in grid]
    for i in range(len(grid) - 2, -1, -1):
        if codes[i] == CROSS and codes[i + 1] == TURN:
            return grid[i], grid[i + 1]
    return None


def _far_field(b, p, a_grid, rtol):
    """``v_inf`` of the separatrix trajectory at ``v(0) = b``, or ``None``."""
    br = _bracket_a(b, p, a_grid)
    if br is None:
        return None
    lo, hi = _separatrix(b, p, br[0], br[1], rtol)
    # the trajectory that lasts longer follows the separatrix further
    runs = [integrate_radial(a, b, p) for a in (lo, hi)]
    run = max(runs, key=lambda s: s[1])
    _, r, u, du, v, dv = run[:6]
    return v + r * dv, (lo, hi), run


@dataclass
class OracleResult:
    action: float
    profile: np.ndarray  # columns r, u, v
    A: float
    B: float
    C: float
    u0: float
    v0: float
    radius: float

    def __iter__(self):
        yield self.action
        yield self.profile


def shooting_oracle(p: float, tol: float = 1e-10) -> OracleResult:
    """Groundstate of ``F(s) = |s|^p / p`` for N = 3, alpha = 2 by two-parameter shooting.

    Returns the action, the radial profile (columns ``r, u, v``) and the
    integrals ``A = int |u'|^2``, ``B = int u^2``, ``C = int v F(u)``
    accumulated along the trajectory.
    """
    p = float(p)
    if not (5.0 / 3.0 < p < 5.0):
        raise ValueError(f"shooting oracle needs 5/3 < p < 5, got {p}")
    a_grid = np.logspace(-2, 3, 51)
    b_grid = np.logspace(-1.5, 2.5, 161)

    # scan v(0) for a sign change of the far-field constant
    prev = None
    bracket = None
    for b in b_grid:
        res = _far_field(b, p, a_grid, 1e-12)
        if res is None:
            prev = None
            continue
        if prev is not None and np.sign(prev[1]) != np.sign(res[0]):
            bracket = (prev[0], b)
            break
        prev = (b, res[0])
    if bracket is None:
        raise ShootingFailed(f"no sign change of v_inf found for p={p}")

    def objective(b):
        res = _far_field(b, p, a_grid, 1e-15)
        if res is None:
            raise ShootingFailed(f"separatrix lost at v(0)={b}")
        return res[0]

    b_star = optimize.brentq(objective, bracket[0], bracket[1], xtol=tol * bracket[1], rtol=4 * np.finfo(float).eps)
    v_inf, (lo, hi), run = _far_field(b_star, p, a_grid, 1e-15)
    a_star = lo if integrate_radial(lo, b_star, p)[1] >= integrate_radial(hi, b_star, p)[1] else hi
    out = integrate_radial(a_star, b_star, p, record=True)
    A, B, C = float(out[6]), float(out[7]), float(out[8])
    action = 0.5 * (A + B) - 0.5 * C
    return OracleResult(action, np.asarray(out[9]), A, B, C, float(a_star), float(b_star), float(out[1]))
