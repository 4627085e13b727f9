"""Command-line driver: ``choquard solve | verify <suite> | oracle --p <p>``.

Exit codes: 0 success, 1 operational failure, 2 no groundstate, 64 usage.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .energy import EnergyBreakdown, breakdown, gradient_action, path_derivative, path_energy
from .errors import ChoquardError, ConfigInvalid, NonlinearityRejected
from .field import Field, Grid, ball_indicator, dirichlet_energy, lp_norm, write_field
from .nonlinearity import power_nonlinearity
from .riesz import bilinear_form, build_kernel, convolve, quadratic_form
from .solver import SolverConfig, Status, lift_to_path, radial_profile, solve, write_profile_csv
from .symmetry import HalfSpace, polarization_inequality_check, polarize, schwarz_rearrange

EXIT_OK, EXIT_ERROR, EXIT_NO_GROUNDSTATE, EXIT_USAGE = 0, 1, 2, 64

SUITES = ("pohozaev", "gradient", "polarization", "riesz", "path")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _json_dump(obj, path) -> int:
    data = (json.dumps(obj, sort_keys=True, indent=2) + "\n").encode()
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
    return len(data)


# ------------------------------------------------------------------ solve

_FLAG_TO_FIELD = {
    "dim": "dim",
    "alpha": "alpha",
    "nonlinearity": "nonlinearity",
    "grid": "n",
    "halfwidth": "half_width",
    "tol_pohozaev": "tol_pohozaev",
    "tol_gradient": "tol_gradient",
    "max_iter": "max_iterations",
    "symmetric": "symmetric_mode",
    "seed": "seed",
}


def config_from_args(args) -> SolverConfig:
    """JSON config file first, command-line flags on top."""
    data = {}
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigInvalid("config file must hold a JSON object")
    for flag, name in _FLAG_TO_FIELD.items():
        value = getattr(args, flag)
        if value is not None:
            data[name] = value
    return SolverConfig.from_dict(data)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def cmd_solve(args) -> int:
    cfg = config_from_args(args)
    started = _now()
    report = solve(cfg)
    os.makedirs(args.out, exist_ok=True)
    files = {}
    rep_path = os.path.join(args.out, "report.json")
    files["report"] = (rep_path, _json_dump(report.to_json(), rep_path))
    sol_path = os.path.join(args.out, "solution.chqf")
    files["solution"] = (sol_path, write_field(sol_path, report.solution))
    prof_path = os.path.join(args.out, "profile.csv")
    kernel = build_kernel(cfg.grid, cfg.alpha, cfg.kernel_cache)
    write_profile_csv(prof_path, radial_profile(report.solution, kernel, cfg.make_nonlinearity()))
    files["profile"] = (prof_path, os.path.getsize(prof_path))

    e = report.breakdown
    N, a = e.N, e.alpha
    checks = {
        "reduced_identity": abs(abs(e.energy() - e.reduced()) - abs(e.pohozaev()) / (N + a))
        <= 1e-12 * (abs(e.A) + abs(e.B) + abs(e.C) + 1.0),
        "pohozaev_within_tol": report.pohozaev_residual <= cfg.tol_pohozaev,
        "gradient_within_tol": report.gradient_residual <= cfg.tol_gradient,
    }
    manifest = {
        "config": cfg.to_dict(),
        "version": __version__,
        "started": started,
        "finished": _now(),
        "files": {k: {"path": os.path.basename(p), "bytes": n} for k, (p, n) in files.items()},
        "checks": checks,
        "status": report.status,
    }
    _json_dump(manifest, os.path.join(args.out, "manifest.json"))
    print(f"status {report.status}  energy {e.energy():.10g}  "
          f"pohozaev_residual {report.pohozaev_residual:.3g}  gradient_residual {report.gradient_residual:.3g}")
    if report.status == Status.CONVERGED:
        return EXIT_OK
    if report.status == Status.NO_GROUNDSTATE:
        return EXIT_NO_GROUNDSTATE
    return EXIT_ERROR


# ----------------------------------------------------------------- verify


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def suite_riesz():
    out = []
    grid = Grid(3, 64, 4.0)
    k = build_kernel(grid, 2.0)
    ball = quadratic_form(k, ball_indicator(grid))
    exact = 8 * math.pi / 15
    out.append(("ball self-interaction = 8pi/15 within 2%", _rel(ball, exact) <= 2e-2, f"{ball:.6f}"))

    grid = Grid(3, 128, 10.0)
    k = build_kernel(grid, 2.0)
    g = grid.sample(lambda r: np.exp(-r * r))
    v0 = float(convolve(k, g).values[grid.origin_index])
    out.append(("Gaussian potential at origin = 1/2 within 1e-3", abs(v0 - 0.5) <= 1e-3, f"{v0:.6f}"))

    grid = Grid(3, 16, 2.0)
    k = build_kernel(grid, 1.5)
    rng = np.random.default_rng(1)
    f = Field(grid, rng.standard_normal(grid.shape))
    h = Field(grid, rng.standard_normal(grid.shape))
    fg, gf = bilinear_form(k, f, h), bilinear_form(k, h, f)
    scale = math.sqrt(quadratic_form(k, f) * quadratic_form(k, h))
    out.append(("self-adjoint within 1e-12", abs(fg - gf) <= 1e-12 * scale, f"{abs(fg - gf) / scale:.2e}"))
    return out


def suite_gradient(directions: int = 20, eps: float = 1e-4, seed: int = 0):
    grid = Grid(3, 32, 6.0)
    k = build_kernel(grid, 2.0)
    nl = power_nonlinearity(2.5)
    rng = np.random.default_rng(seed)
    r2 = grid.radius_squared
    u = Field(grid, (1.0 + 0.3 * grid.coords()[0]) * np.exp(-r2 / 4))
    g = gradient_action(u, k, nl)
    worst = 0.0
    for _ in range(directions):
        c = rng.normal(size=3)
        phi = Field(grid, rng.standard_normal() * np.exp(-((grid.coords()[0] - c[0]) ** 2
                                                          + (grid.coords()[1] - c[1]) ** 2
                                                          + (grid.coords()[2] - c[2]) ** 2) / 3))
        fd = (breakdown(u + eps * phi, k, nl).energy() - breakdown(u - eps * phi, k, nl).energy()) / (2 * eps)
        exact = float(np.sum(g.values * phi.values)) * grid.cell_volume
        worst = max(worst, _rel(fd, exact))
    return [(f"finite differences match gradient over {directions} directions (<= 1e-5)", worst <= 1e-5,
             f"{worst:.2e}")]


def suite_path():
    out = []
    rng = np.random.default_rng(3)
    worst_id, worst_fd, worst_red = 0.0, 0.0, 0.0
    for _ in range(200):
        A, B, C = rng.uniform(0.01, 10, 3)
        e = EnergyBreakdown(A, B, C, 3, 2.0)
        # term-by-term derivative of tau A/2 + tau^3 B/2 - tau^5 C/2 at tau = 1
        direct = 0.5 * A + 1.5 * B - 2.5 * C
        worst_id = max(worst_id, abs(direct - e.pohozaev()) / (A + B + C))
        fd = (path_energy(e, 1 + 1e-5) - path_energy(e, 1 - 1e-5)) / 2e-5
        worst_fd = max(worst_fd, abs(fd - path_derivative(e, 1.0)) / (A + B + C))
        worst_red = max(worst_red, abs(e.energy() - e.pohozaev() / 5 - e.reduced()) / (A + B + C))
    out.append(("dI(u_tau)/dtau at 1 equals P", worst_id <= 1e-14, f"{worst_id:.1e}"))
    out.append(("path derivative matches central differences", worst_fd <= 1e-8, f"{worst_fd:.1e}"))
    out.append(("energy - P/(N+alpha) = reduced", worst_red <= 1e-14, f"{worst_red:.1e}"))
    e = EnergyBreakdown(1.0, 1.0, 1.0, 3, 2.0)
    tab = lift_to_path(None, e, 201)
    k = int(np.argmax(tab[:, 1]))
    step = tab[1, 0] - tab[0, 0]
    tau_star = math.sqrt((3 + math.sqrt(29)) / 10)
    out.append(("lifted path peaks at tau*", abs(tab[k, 0] - tau_star) <= step, f"{tab[k, 0]:.4f}"))
    out.append(("lifted path ends below zero", tab[-1, 1] < 0, f"{tab[-1, 1]:.3g}"))
    return out


def suite_polarization(trials: int = 100, seed: int = 0):
    grid = Grid(3, 8, 1.0)
    rng = np.random.default_rng(seed)
    bad_ineq = bad_norm = bad_dir = 0
    for _ in range(trials):
        u = Field(grid, rng.random(grid.shape))
        # the mid-plane pairs never wrap, so any field is admissible there
        H = HalfSpace(int(rng.integers(3)), grid.n / 2 - 0.5, ("keep_low", "keep_high")[rng.integers(2)])
        try:
            polarization_inequality_check(u, H, 2.0)
        except AssertionError:
            bad_ineq += 1
        Hp = HalfSpace(int(rng.integers(3)), float(rng.integers(0, grid.n - 1)) + 0.5,
                       ("keep_low", "keep_high")[rng.integers(2)])
        up = polarize(u, Hp)
        s = schwarz_rearrange(u)
        for p in (1, 2, 3, 4.5):
            bad_norm += lp_norm(up, p) != lp_norm(u, p)
            bad_norm += lp_norm(s, p) != lp_norm(u, p)
        if dirichlet_energy(up) > dirichlet_energy(u):
            bad_dir += 1
    return [
        (f"nonlocal polarization inequality, {trials} trials", bad_ineq == 0, f"{bad_ineq} failures"),
        ("Lp norms preserved exactly by polarize and rearrange", bad_norm == 0, f"{bad_norm} failures"),
        ("Dirichlet energy non-increasing under polarize", bad_dir == 0, f"{bad_dir} failures"),
    ]


def suite_pohozaev():
    cfg = SolverConfig()
    rep = solve(cfg)
    e = rep.breakdown
    ident = abs(abs(e.energy() - e.reduced()) - abs(e.pohozaev()) / (e.N + e.alpha))
    return [
        ("p=2 solve converges", rep.status == Status.CONVERGED, rep.status),
        ("pohozaev residual <= 5e-3", rep.pohozaev_residual <= 5e-3, f"{rep.pohozaev_residual:.2e}"),
        ("|energy - reduced| = |P|/(N+alpha)", ident <= 1e-12 * (e.A + e.B + e.C), f"{ident:.1e}"),
    ]


def cmd_verify(args) -> int:
    names = SUITES if args.suite == "all" else (args.suite,)
    funcs = {"riesz": suite_riesz, "gradient": suite_gradient, "path": suite_path,
             "polarization": suite_polarization, "pohozaev": suite_pohozaev}
    ok = True
    for name in names:
        for label, passed, detail in funcs[name]():
            ok &= bool(passed)
            print(f"{'PASS' if passed else 'FAIL'}  {name:<12} {label}  [{detail}]")
    return EXIT_OK if ok else EXIT_ERROR


# ----------------------------------------------------------------- oracle


def oracle_grid(p: float) -> tuple[int, float]:
    """Grid ``(n, L)`` that resolves the power-``p`` groundstate and contains its tail."""
    if p <= 2.25:
        return 64, 15.0
    if p <= 2.75:
        return 96, 10.0
    if p <= 3.25:
        return 96, 8.0
    return 256, 6.5


def oracle_settings(p: float) -> dict:
    """Solver settings besides the grid for the power-``p`` comparison."""
    if p <= 3.25:
        return {}
    # narrow cores: start inside the basin of the smooth solution and keep
    # the Krylov basis small enough for a 256^3 grid
    return {"init_width": 0.5, "newton_krylov_dim": 5}


def cmd_oracle(args) -> int:
    from .shooting import shooting_oracle

    p = args.p
    if not (5.0 / 3.0 < p < 5.0):
        raise UsageError(f"p must lie in (5/3, 5), got {p}")
    t0 = time.perf_counter()
    ref = shooting_oracle(p)
    t1 = time.perf_counter()
    n, L = oracle_grid(p)
    n = args.grid or n
    L = args.halfwidth or L
    rep = solve(SolverConfig(dim=3, alpha=2.0, nonlinearity=f"power:p={p!r}", n=n, half_width=L,
                             **oracle_settings(p)))
    t2 = time.perf_counter()
    spectral = rep.breakdown.energy()
    gap = abs(spectral - ref.action) / abs(ref.action)
    print(f"oracle   action {ref.action:.10g}  ({t1 - t0:.1f} s)")
    print(f"spectral action {spectral:.10g}  ({t2 - t1:.1f} s, n={n}, L={L:g}, {rep.status})")
    print(f"relative gap {gap:.3e}")
    return EXIT_OK if gap <= 1e-2 else EXIT_ERROR


# ------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="choquard", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="compute a groundstate")
    s.add_argument("--dim", type=int)
    s.add_argument("--alpha", type=float)
    s.add_argument("--nonlinearity", help='"power:p=<real>" or "powers:p=<real>,q=<real>"')
    s.add_argument("--grid", type=int, help="nodes per axis")
    s.add_argument("--halfwidth", type=float, help="box is [-L, L)^N")
    s.add_argument("--tol-pohozaev", type=float)
    s.add_argument("--tol-gradient", type=float)
    s.add_argument("--max-iter", type=int)
    s.add_argument("--symmetric", action="store_true", default=None)
    s.add_argument("--seed", type=int)
    s.add_argument("--config", help="JSON file of solver settings; flags take precedence")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="run an invariant suite")
    v.add_argument("suite", choices=SUITES + ("all",))
    v.set_defaults(func=cmd_verify)

    o = sub.add_parser("oracle", help="compare the spectral solver with radial shooting")
    o.add_argument("--p", type=float, required=True)
    o.add_argument("--grid", type=int)
    o.add_argument("--halfwidth", type=float)
    o.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigInvalid, NonlinearityRejected) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ChoquardError, OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
