"""Groundstate search on the discrete Pohozaev manifold.

The search runs in two phases.

1. Projected descent.  The iterate ``u`` stays on the manifold ``P = 0`` by
   dilation.  The descent direction is the gradient of
   ``J(v) = max_tau I(v_tau)``, taken in the ``H^1`` metric (preconditioned by
   ``(1 - Delta_h)^-1``).  Armijo backtracking is applied to the energy of the
   re-projected trial field.  This drives ``u`` into the basin of the least
   energy solution.
2. Newton polish.  A Jacobian-free Newton-Krylov solve of
   ``u = (1 - Delta_h)^-1 [(I_alpha * F(u)) f(u)]`` removes the residual that
   interpolated dilations leave behind.

Nonexistence shows up as vanishing (``B -> 0``), mass reaching the box
boundary, or collapse of the profile to the grid scale.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import fft, optimize

from .energy import EnergyBreakdown, evaluate, gradient_action, optimal_dilation, path_energy
from .errors import ConfigInvalid, NoInteriorMax, ZeroField
from .field import (
    Field,
    Grid,
    boundary_mass,
    concentration_function,
    dilate,
    effective_radius,
    laplacian,
    recentre,
)
from .nonlinearity import Nonlinearity, parse_nonlinearity, require_usable
from .riesz import RieszKernel, build_kernel, convolve, convolve_values
from .symmetry import schwarz_rearrange

__all__ = [
    "SolverConfig",
    "SolveReport",
    "Status",
    "project_to_pohozaev",
    "solve",
    "lift_to_path",
    "radial_profile",
    "write_profile_csv",
    "gradient_residual",
    "pohozaev_residual",
]


log = logging.getLogger(__name__)

# the descent re-samples the field once tau* leaves [e^-0.1, e^0.1]
_RESCALE_LOG = 0.1


class Status:
    CONVERGED = "Converged"
    NO_GROUNDSTATE = "NoGroundstate"
    MAX_ITERATIONS = "MaxIterations"


@dataclass(frozen=True)
class SolverConfig:
    dim: int = 3
    n: int = 64
    half_width: float = 15.0
    alpha: float = 2.0
    nonlinearity: str = "power:p=2"
    tol_pohozaev: float = 5e-3
    tol_gradient: float = 1e-3
    max_iterations: int = 500
    # Armijo rule
    initial_step: float = 1.0
    backtrack_factor: float = 0.5
    armijo_c: float = 1e-4
    max_backtracks: int = 30
    max_log_dilation: float = math.log(1.5)
    # phase switch: hand over to Newton below this descent residual
    newton_switch: float = 2e-2
    newton_iterations: int = 25
    newton_inner: int = 20
    newton_krylov_dim: int = 30  # Krylov vectors kept per restart; bounds memory
    symmetric_mode: bool = False
    schwarz_every: int = 10
    recentre_every: int = 25
    seed: int = 0
    init_noise: float = 1e-2
    init_width: float | None = None
    # nonexistence detectors
    vanishing_floor: float = 1e-8
    boundary_mass_max: float = 1e-4
    max_projection_failures: int = 50
    collapse_radius: float = 1.5  # in grid spacings
    kernel_cache: str | None = None

    def __post_init__(self):
        def bad(msg):
            raise ConfigInvalid(msg)

        if not isinstance(self.dim, (int, np.integer)) or self.dim < 3:
            bad(f"dim must be an integer >= 3, got {self.dim!r}")
        if not isinstance(self.n, (int, np.integer)) or self.n < 8 or self.n % 2:
            bad(f"grid size must be an even integer >= 8, got {self.n!r}")
        if not (self.half_width > 0 and math.isfinite(self.half_width)):
            bad(f"half width must be positive, got {self.half_width!r}")
        if not (0 < self.alpha < self.dim):
            bad(f"alpha must lie in (0, {self.dim}), got {self.alpha!r}")
        if not (self.tol_pohozaev > 0 and self.tol_gradient > 0):
            bad("tolerances must be positive")
        if self.max_iterations < 1 or self.newton_iterations < 0 or self.newton_krylov_dim < 1:
            bad("iteration limits must be positive")
        if not (0 < self.backtrack_factor < 1 and self.initial_step > 0 and 0 < self.armijo_c < 1):
            bad("bad step rule parameters")
        if self.schwarz_every < 1 or self.recentre_every < 1:
            bad("schwarz_every and recentre_every must be >= 1")
        if self.init_noise < 0:
            bad("init_noise must be nonnegative")
        try:
            parse_nonlinearity(self.nonlinearity)
        except ValueError as exc:
            bad(str(exc))

    @property
    def grid(self) -> Grid:
        return Grid(self.dim, self.n, self.half_width)

    def make_nonlinearity(self) -> Nonlinearity:
        return parse_nonlinearity(self.nonlinearity)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigInvalid(str(exc)) from None


@dataclass
class SolveReport:
    solution: Field
    breakdown: EnergyBreakdown
    status: str
    pohozaev_residual: float
    gradient_residual: float
    iterations: int
    diagnostics: dict
    history: list = dc_field(default_factory=list, repr=False)
    # indices into ``history`` whose entry follows a re-sampling of the field
    rescales: list = dc_field(default_factory=list, repr=False)

    @property
    def mountain_pass_level(self) -> float:
        """Estimate of ``b``; an upper estimate since it is a path maximum."""
        return self.breakdown.energy()

    @property
    def converged(self) -> bool:
        return self.status == Status.CONVERGED

    def to_json(self) -> dict:
        e = self.breakdown
        return {
            "status": self.status,
            "A": e.A,
            "B": e.B,
            "C": e.C,
            "energy": e.energy(),
            "pohozaev": e.pohozaev(),
            "reduced": e.reduced(),
            "pohozaev_residual": self.pohozaev_residual,
            "gradient_residual": self.gradient_residual,
            "iterations": self.iterations,
            "b_estimate": self.mountain_pass_level,
            "diagnostics": dict(self.diagnostics),
        }


# ---------------------------------------------------------------- helpers


def _symbol(grid: Grid) -> np.ndarray:
    """Eigenvalues of ``1 - Delta_h`` on the rfft half-spectrum."""
    h = grid.spacing
    n = grid.n
    full = (4.0 / h**2) * np.sin(np.pi * np.arange(n) / n) ** 2
    half = full[: n // 2 + 1]
    out = np.ones((n,) * (grid.dim - 1) + (n // 2 + 1,))
    for j in range(grid.dim):
        shape = [1] * grid.dim
        if j == grid.dim - 1:
            shape[j] = n // 2 + 1
            out = out + half.reshape(shape)
        else:
            shape[j] = n
            out = out + full.reshape(shape)
    return out


class _Preconditioner:
    def __init__(self, grid: Grid):
        self.symbol = _symbol(grid)
        self.shape = grid.shape

    def solve(self, g: np.ndarray) -> np.ndarray:
        t = fft.rfftn(g)
        t /= self.symbol
        return fft.irfftn(t, s=self.shape, overwrite_x=True)


def _apply_helmholtz(u: Field) -> np.ndarray:
    return u.values - laplacian(u).values


def gradient_residual(u: Field, k: RieszKernel, nl: Nonlinearity, potential: Field | None = None) -> float:
    """``||grad I_h(u)||_2 / ||(1 - Delta_h) u||_2``: both terms of the equation on the same scale."""
    g = gradient_action(u, k, nl, potential)
    denom = float(np.linalg.norm(_apply_helmholtz(u)))
    if denom == 0.0:
        return math.inf
    return float(np.linalg.norm(g.values)) / denom


def pohozaev_residual(e: EnergyBreakdown) -> float:
    """``|P| / (A + B)``."""
    s = e.A + e.B
    return abs(e.pohozaev()) / s if s > 0 else math.inf


def _project(u: Field, e: EnergyBreakdown) -> tuple[Field, float]:
    tau = optimal_dilation(e)
    if abs(tau - 1.0) < 1e-12:
        return u, 1.0
    return dilate(u, tau, floor=None), tau


def project_to_pohozaev(u: Field, k: RieszKernel, nl: Nonlinearity) -> Field:
    """Dilate ``u`` to the maximiser of its dilation path, where ``P = 0`` in closed form.

    The recomputed ``P`` of the returned field differs from 0 only by
    interpolation error.  Raises :class:`NoInteriorMax` when ``C <= 0``.
    """
    e, _ = evaluate(u, k, nl)
    return _project(u, e)[0]


def _initial_field(cfg: SolverConfig, grid: Grid, k: RieszKernel, nl: Nonlinearity) -> Field:
    """Centred Gaussian, scaled in amplitude onto ``P = 0`` when such an amplitude exists.

    Fixing the amplitude first keeps the first dilation moderate; a unit
    amplitude can be far from the manifold when ``F`` is strongly nonquadratic.
    """
    width = cfg.init_width if cfg.init_width is not None else grid.half_width / 6.0
    vals = np.exp(-0.5 * grid.radius_squared / width**2)
    if cfg.init_noise > 0:
        rng = np.random.default_rng(cfg.seed)
        vals = vals * (1.0 + cfg.init_noise * rng.standard_normal(grid.shape))
    u = Field(grid, vals)

    def poh(log_t):
        return evaluate(u * math.exp(log_t), k, nl)[0].pohozaev()

    logs = np.linspace(-6.0, 6.0, 25)
    signs = np.sign([poh(s) for s in logs])
    for i in range(len(logs) - 1):
        if signs[i] != 0 and signs[i] != signs[i + 1]:
            log_t = optimize.brentq(poh, logs[i], logs[i + 1], xtol=1e-10)
            return u * math.exp(log_t)
    return u


def _path_gradient(u: Field, pot: Field, nl: Nonlinearity, tau: float, N: int, alpha: float) -> np.ndarray:
    """L^2 gradient of ``J(v) = I(v_tau*)`` at ``u`` (envelope theorem)."""
    lap = laplacian(u).values
    return (
        tau ** (N - 2) * (-lap)
        + tau**N * u.values
        - tau ** (N + alpha) * pot.values * nl.f(u.values)
    )


def _verdict(u: Field, e: EnergyBreakdown, cfg: SolverConfig) -> str | None:
    """Name of the nonexistence symptom shown by ``u``, if any."""
    if not e.B >= cfg.vanishing_floor:
        return "vanishing"
    if boundary_mass(u) > cfg.boundary_mass_max:
        return "boundary_mass"
    if effective_radius(u) < cfg.collapse_radius * u.grid.spacing:
        return "collapse"
    return None


def _diagnostics(u: Field, cfg: SolverConfig, **extra) -> dict:
    d = {"boundary_mass": boundary_mass(u)}
    upper = 2.0 * cfg.dim / (cfg.dim - 2)
    try:
        d["effective_radius"] = effective_radius(u)
        d["concentration"] = concentration_function(u, min(3.0, 0.5 * (2.0 + upper)))
    except ZeroField:
        d["effective_radius"] = 0.0
        d["concentration"] = 0.0
    d.update(extra)
    return d


# ------------------------------------------------------------------ solve


def solve(cfg: SolverConfig, init: Field | str = "gaussian", nl: Nonlinearity | None = None,
          kernel: RieszKernel | None = None) -> SolveReport:
    """Search for a groundstate of the discrete problem described by ``cfg``.

    ``nl`` overrides the nonlinearity named in ``cfg``; ``kernel`` may be
    passed to reuse a precomputed Riesz kernel on the same grid.
    """
    grid = cfg.grid
    nl = nl if nl is not None else cfg.make_nonlinearity()
    require_usable(nl, (cfg.dim, cfg.alpha))
    if kernel is None:
        kernel = build_kernel(grid, cfg.alpha, cfg.kernel_cache)
    elif kernel.grid != grid or kernel.alpha != cfg.alpha:
        raise ConfigInvalid("kernel does not match the configured grid and alpha")
    if isinstance(init, str):
        if init != "gaussian":
            raise ConfigInvalid(f"unknown initial guess {init!r}")
        u = _initial_field(cfg, grid, kernel, nl)
    else:
        if init.grid != grid:
            raise ConfigInvalid("initial field lives on a different grid")
        u = init

    N, alpha = cfg.dim, cfg.alpha
    pre = _Preconditioner(grid)
    dV = grid.cell_volume
    history: list[float] = []
    rescales: list[int] = []

    def finish(u, status, iterations, **extra):
        e, pot = evaluate(u, kernel, nl)
        return SolveReport(
            solution=u,
            breakdown=e,
            status=status,
            pohozaev_residual=pohozaev_residual(e),
            gradient_residual=gradient_residual(u, kernel, nl, pot),
            iterations=iterations,
            diagnostics=_diagnostics(u, cfg, **extra),
            history=history,
            rescales=rescales,
        )

    # ---- phase 1: H^1 descent on J(v) = max_tau I(v_tau)
    # J is read off the closed-form dilation law, so the field itself is only
    # dilated (by interpolation) when tau* drifts far from 1; interpolating on
    # every step smears a narrow core faster than the descent sharpens it.
    e, pot = evaluate(u, kernel, nl)
    try:
        u, _ = _project(u, e)
    except NoInteriorMax:
        return finish(u, Status.NO_GROUNDSTATE, 0, reason="no_interior_max")
    e, pot = evaluate(u, kernel, nl)
    tau = 1.0
    level = e.energy()
    history.append(level)

    failures = 0
    it = 0
    phase1 = 0
    while it < cfg.max_iterations:
        reason = _verdict(u, e, cfg)
        if reason:
            return finish(u, Status.NO_GROUNDSTATE, it, reason=reason)
        g = _path_gradient(u, pot, nl, tau, N, alpha)
        res = float(np.linalg.norm(g)) / float(np.linalg.norm(_apply_helmholtz(u)))
        log.debug("descent %d: level %.10g residual %.3e tau* %.6f", it, level, res, tau)
        if res <= cfg.newton_switch:
            break
        d = pre.solve(g)
        slope = float(np.sum(g * d)) * dV
        step = cfg.initial_step
        accepted = None
        for _ in range(cfg.max_backtracks):
            trial = u.with_values(u.values - step * d)
            e_t, pot_t = evaluate(trial, kernel, nl)
            try:
                tau_t = optimal_dilation(e_t)
            except NoInteriorMax:
                failures += 1
                step *= cfg.backtrack_factor
                continue
            if abs(math.log(tau_t / tau)) > cfg.max_log_dilation:
                # a large change of scale means the step left the region where
                # the first-order model of J holds
                step *= cfg.backtrack_factor
                continue
            level_t = path_energy(e_t, tau_t)
            if 0 < level_t <= level - cfg.armijo_c * step * slope:
                accepted = (trial, e_t, pot_t, tau_t, level_t)
                break
            step *= cfg.backtrack_factor
        it += 1
        phase1 += 1
        if failures >= cfg.max_projection_failures:
            return finish(u, Status.NO_GROUNDSTATE, it, reason="projection_failures")
        if accepted is None:
            # rounding dominates the descent; leave the rest to Newton
            break
        failures = 0
        u, e, pot, tau, level = accepted
        if abs(math.log(tau)) > _RESCALE_LOG:
            u, e, pot, tau, level = _rescale(u, e, kernel, nl)
            rescales.append(len(history))
        if cfg.symmetric_mode and nl.symmetric and it % cfg.schwarz_every == 0:
            u, e, pot, tau, level = _schwarz_step(u, e, pot, tau, level, kernel, nl)
        if it % cfg.recentre_every == 0:
            u = recentre(u)
            e, pot = evaluate(u, kernel, nl)
        history.append(level)
    else:
        u, e, pot, tau, level = _rescale(u, e, kernel, nl)
        reason = _verdict(u, e, cfg)
        if reason:
            return finish(u, Status.NO_GROUNDSTATE, it, reason=reason)
        return finish(u, Status.MAX_ITERATIONS, it, phase1_iterations=phase1, newton_iterations=0)

    # release the descent work arrays before the Krylov basis is allocated
    g = d = trial = pot_t = accepted = pot = None
    u, e, _, tau, level = _rescale(u, e, kernel, nl)

    # ---- phase 2: Newton-Krylov polish
    u, newton_its = _newton_polish(u, kernel, nl, pre, cfg)
    it += newton_its
    e, pot = evaluate(u, kernel, nl)
    reason = _verdict(u, e, cfg)
    if reason:
        return finish(u, Status.NO_GROUNDSTATE, it, reason=reason)
    rep = finish(u, Status.MAX_ITERATIONS, it, phase1_iterations=phase1, newton_iterations=newton_its)
    if rep.pohozaev_residual <= cfg.tol_pohozaev and rep.gradient_residual <= cfg.tol_gradient \
            and rep.mountain_pass_level > 0:
        rep.status = Status.CONVERGED
    return rep


def _rescale(u: Field, e: EnergyBreakdown, k: RieszKernel, nl: Nonlinearity):
    """Dilate ``u`` onto the Pohozaev manifold; returns the descent state."""
    u, _ = _project(u, e)
    e, pot = evaluate(u, k, nl)
    return u, e, pot, 1.0, e.energy()


def _schwarz_step(u: Field, e: EnergyBreakdown, pot: Field, tau: float, level: float,
                  k: RieszKernel, nl: Nonlinearity):
    """Rearrange; kept only if the path maximum does not increase."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        s = schwarz_rearrange(u)
    e_s, pot_s = evaluate(s, k, nl)
    try:
        tau_s = optimal_dilation(e_s)
    except NoInteriorMax:
        return u, e, pot, tau, level
    level_s = path_energy(e_s, tau_s)
    if level_s <= level:
        return s, e_s, pot_s, tau_s, level_s
    return u, e, pot, tau, level


def _newton_polish(u: Field, k: RieszKernel, nl: Nonlinearity, pre: _Preconditioner, cfg: SolverConfig):
    if cfg.newton_iterations == 0:
        return u, 0
    grid = u.grid
    count = [0]

    def residual(x):
        # bare arrays: at 256^3 every Field copy is another 134 MB
        rhs = convolve_values(k, nl.F(x))
        rhs *= nl.f(x)
        return x - pre.solve(rhs)

    # sup-norm target well below what the gradient tolerance needs
    scale = float(np.max(np.abs(u.values)))
    target = 1e-3 * cfg.tol_gradient * scale

    def callback(x, f):
        count[0] += 1
        log.debug("newton %d: max|R| %.3e", count[0], float(np.max(np.abs(f))))

    try:
        x = optimize.newton_krylov(
            residual,
            np.array(u.values),
            method="lgmres",
            f_tol=target,
            maxiter=cfg.newton_iterations,
            line_search="armijo",
            inner_maxiter=cfg.newton_inner,
            inner_inner_m=cfg.newton_krylov_dim,
            inner_outer_k=max(1, cfg.newton_krylov_dim // 3),
            callback=callback,
        )
    except optimize.NoConvergence as exc:
        x = exc.args[0]
    except (ValueError, FloatingPointError):
        return u, count[0]
    if not np.all(np.isfinite(x)):
        return u, count[0]
    return Field(grid, x), count[0]


# ----------------------------------------------------------------- output


def lift_to_path(u: Field, e: EnergyBreakdown, samples: int = 64) -> np.ndarray:
    """Tabulate ``tau -> I(u_tau)`` on ``[0, tau_end]`` with ``I(u_tau_end) < 0``.

    Returns an array of shape ``(samples, 2)`` with columns ``tau, energy``.
    """
    if samples < 16:
        raise ValueError("samples must be at least 16")
    tau_star = optimal_dilation(e)
    tau_end = 2.0 * tau_star
    while path_energy(e, tau_end) >= 0:
        tau_end *= 2.0
    taus = np.linspace(0.0, tau_end, samples)
    vals = np.array([0.0] + [path_energy(e, t) for t in taus[1:]])
    return np.column_stack([taus, vals])


def radial_profile(u: Field, k: RieszKernel, nl: Nonlinearity) -> np.ndarray:
    """``(r, u, v)`` along the positive first axis from the origin node, ``v = I_alpha * F(u)``."""
    g = u.grid
    pot = convolve(k, u.with_values(nl.F(u.values)))
    c = g.n // 2
    idx = (slice(c, None),) + (c,) * (g.dim - 1)
    r = g.axis[c:]
    return np.column_stack([r, u.values[idx], pot.values[idx]])


def write_profile_csv(path, profile: np.ndarray) -> None:
    np.savetxt(path, np.asarray(profile), delimiter=",", header="r,u,v", comments="", fmt="%.17g")
