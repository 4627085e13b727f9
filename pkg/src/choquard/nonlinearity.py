"""Nonlinearities ``(F, f = F')`` and numerical checks of their growth assumptions.

For dimension ``N`` and Riesz order ``alpha`` the admissible growth window is
``[(N + alpha) / N, (N + alpha) / (N - 2)]``: ``|s f(s)|`` must be dominated by
``C (|s|^low + |s|^high)``, and ``F`` must be strictly subcritical at both ends.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import NonlinearityRejected

__all__ = [
    "Nonlinearity",
    "power_nonlinearity",
    "powers_nonlinearity",
    "parse_nonlinearity",
    "exponent_window",
    "CheckResult",
    "ValidationReport",
    "validate_assumptions",
]

ArrayFn = Callable[[np.ndarray], np.ndarray]


def exponent_window(dim: int, alpha: float) -> tuple[float, float]:
    """``((N + alpha) / N, (N + alpha) / (N - 2))``; the upper end is infinite for N <= 2."""
    low = (dim + alpha) / dim
    high = (dim + alpha) / (dim - 2) if dim > 2 else math.inf
    return low, high


@dataclass(frozen=True)
class Nonlinearity:
    """A pair ``(F, f)`` with ``F(0) = 0`` and ``F' = f``.

    ``eval_F`` and ``eval_f`` must accept numpy arrays.  ``witness_s0`` is a
    point with ``F(s0) != 0``; ``growth_constant`` is the ``C`` in the growth
    bound.  ``sign_on_positive`` is one of ``"nonneg"``, ``"nonpos"``,
    ``"mixed"`` and describes ``f`` on ``(0, inf)``.
    """

    eval_F: ArrayFn
    eval_f: ArrayFn
    growth_constant: float
    witness_s0: float
    is_odd_f: bool
    sign_on_positive: str
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.sign_on_positive not in ("nonneg", "nonpos", "mixed"):
            raise ValueError(f"bad sign_on_positive {self.sign_on_positive!r}")
        if self.witness_s0 == 0:
            raise ValueError("witness_s0 must be nonzero")
        if not self.growth_constant > 0:
            raise ValueError("growth_constant must be positive")

    def F(self, s):
        return self.eval_F(np.asarray(s, dtype=float))

    def f(self, s):
        return self.eval_f(np.asarray(s, dtype=float))

    @property
    def symmetric(self) -> bool:
        """Odd ``f`` of constant sign on ``(0, inf)``: the setting where groundstates are radial."""
        return self.is_odd_f and self.sign_on_positive != "mixed"

    def exponent_window(self, dim: int, alpha: float) -> tuple[float, float]:
        return exponent_window(dim, alpha)

    def spec(self) -> str:
        if not self.params:
            return self.name
        args = ",".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{self.name}:{args}"


def power_nonlinearity(p: float) -> Nonlinearity:
    """``F(s) = |s|^p / p`` and ``f(s) = |s|^(p-2) s``."""
    p = float(p)
    if not p > 1:
        raise ValueError(f"power exponent must exceed 1, got {p}")

    def F(s):
        return np.abs(s) ** p / p

    def f(s):
        return np.abs(s) ** (p - 1) * np.sign(s)

    return Nonlinearity(F, f, 1.0, 1.0, True, "nonneg", "power", {"p": p})


def powers_nonlinearity(p: float, q: float) -> Nonlinearity:
    """``F(s) = |s|^p / p + |s|^q / q`` with ``1 < p <= q``; non-homogeneous when ``p < q``."""
    p, q = float(p), float(q)
    if not (1 < p <= q):
        raise ValueError(f"need 1 < p <= q, got p={p}, q={q}")

    def F(s):
        a = np.abs(s)
        return a**p / p + a**q / q

    def f(s):
        a = np.abs(s)
        return (a ** (p - 1) + a ** (q - 1)) * np.sign(s)

    return Nonlinearity(F, f, 2.0, 1.0, True, "nonneg", "powers", {"p": p, "q": q})


_SPEC = re.compile(r"^\s*(\w+)\s*(?::\s*(.*))?$")


def parse_nonlinearity(spec: str) -> Nonlinearity:
    """Parse ``"power:p=<real>"`` or ``"powers:p=<real>,q=<real>"``."""
    m = _SPEC.match(spec)
    if not m:
        raise ValueError(f"cannot parse nonlinearity {spec!r}")
    kind, rest = m.group(1), m.group(2) or ""
    kwargs = {}
    for item in filter(None, (t.strip() for t in rest.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"expected key=value in {spec!r}")
        try:
            kwargs[key.strip()] = float(value)
        except ValueError:
            raise ValueError(f"non-numeric value in {spec!r}") from None
    try:
        if kind == "power":
            return power_nonlinearity(**kwargs)
        if kind == "powers":
            return powers_nonlinearity(**kwargs)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {kind!r}: {exc}") from None
    raise ValueError(f"unknown nonlinearity kind {kind!r}")


@dataclass
class CheckResult:
    name: str
    passed: bool
    witness: float | None = None
    detail: str = ""

    def to_json(self) -> dict:
        return {"name": self.name, "passed": self.passed, "witness": self.witness, "detail": self.detail}


@dataclass
class ValidationReport:
    dim: int
    alpha: float
    checks: list[CheckResult]

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> dict:
        return {"dim": self.dim, "alpha": self.alpha, "passed": self.passed,
                "checks": [c.to_json() for c in self.checks]}


#: Minimal log-log slope of the (f2) ratios over the extreme decades.
_MIN_DECAY_SLOPE = 1e-3


def _decay_check(name, s, ratio) -> CheckResult:
    """``ratio`` sampled along ``s`` ordered toward the limit; it must decay to 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        if not np.all(np.isfinite(ratio)):
            bad = s[~np.isfinite(ratio)][0]
            return CheckResult(name, False, float(bad), "non-finite ratio")
        if np.all(ratio == 0):
            return CheckResult(name, True, float(s[-1]), "identically zero")
        increments = np.diff(ratio)
        if np.any(increments > 1e-12 * np.abs(ratio[:-1])):
            k = int(np.argmax(increments))
            return CheckResult(name, False, float(s[k + 1]), "ratio grows toward the limit")
        if ratio[-1] == 0:
            return CheckResult(name, True, float(s[-1]), "ratio reaches 0")
        slope = math.log(ratio[0] / ratio[-1]) / abs(math.log(abs(s[-1] / s[0])))
    if slope < _MIN_DECAY_SLOPE:
        return CheckResult(name, False, float(s[-1]), f"decay rate {slope:.3g} per log-unit is not resolved")
    return CheckResult(name, True, float(s[-1]), f"decay rate {slope:.3g} per log-unit")


def validate_assumptions(nl: Nonlinearity, problem: tuple[int, float], sample_count: int = 400) -> ValidationReport:
    """Sample-based checks of the growth bound, subcriticality and nontriviality.

    Samples are log-spaced on ``[1e-8, 1e8]`` with both signs.  The
    subcriticality limits are accepted when the ratio decays monotonically
    over the extreme decade with a resolvable power-law rate.  A final check
    compares ``F`` with the quadrature of ``f`` for ``|s| <= 10``.
    """
    if sample_count < 100:
        raise ValueError("sample_count must be at least 100")
    dim, alpha = problem
    low, high = exponent_window(dim, alpha)
    mag = np.logspace(-8, 8, sample_count)
    checks = []

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        # growth bound
        worst, worst_s = 0.0, None
        for sign in (1.0, -1.0):
            s = sign * mag
            lhs = np.abs(s * nl.f(s))
            rhs = nl.growth_constant * (mag**low + mag**high)
            ratio = lhs / rhs
            ratio[~np.isfinite(ratio)] = np.inf
            k = int(np.argmax(ratio))
            if ratio[k] > worst or worst_s is None:
                worst, worst_s = float(ratio[k]), float(s[k])
        checks.append(CheckResult("f1", bool(worst <= 1.0 + 1e-9), worst_s, f"max |s f(s)| / bound = {worst:.4g}"))

        # subcriticality near 0 and near infinity
        per_decade = max(2, int(round(sample_count / 16)))
        near0 = np.logspace(-7, -8, per_decade)
        nearinf = np.logspace(7, 8, per_decade)
        f2 = []
        for sign in (1.0, -1.0):
            f2.append(_decay_check("f2_zero", sign * near0, np.abs(nl.F(sign * near0)) / near0**low))
            if math.isfinite(high):
                f2.append(_decay_check("f2_infinity", sign * nearinf, np.abs(nl.F(sign * nearinf)) / nearinf**high))
        for name in ("f2_zero", "f2_infinity"):
            group = [c for c in f2 if c.name == name]
            if group:
                failed = [c for c in group if not c.passed]
                checks.append(failed[0] if failed else group[0])

    s0 = float(nl.witness_s0)
    F0 = float(nl.F(s0))
    checks.append(CheckResult("f3", bool(F0 != 0.0 and math.isfinite(F0)), s0, f"F(s0) = {F0:.6g}"))

    checks.append(_antiderivative_check(nl))
    return ValidationReport(dim, float(alpha), checks)


def _antiderivative_check(nl: Nonlinearity, rtol: float = 1e-6) -> CheckResult:
    if float(nl.F(0.0)) != 0.0:
        return CheckResult("antiderivative", False, 0.0, "F(0) != 0")
    worst, at = 0.0, None
    for s in np.concatenate([np.logspace(-3, 1, 9), -np.logspace(-3, 1, 9)]):
        q, _ = integrate.quad(lambda t: float(nl.f(t)), 0.0, float(s), epsabs=0.0, epsrel=1e-11, limit=200)
        F = float(nl.F(s))
        err = abs(q - F) / max(abs(F), 1e-300)
        if err > worst:
            worst, at = err, float(s)
    return CheckResult("antiderivative", bool(worst <= rtol), at, f"max relative mismatch {worst:.3g}")


def require_usable(nl: Nonlinearity, problem: tuple[int, float]) -> ValidationReport:
    """Validate and raise :class:`NonlinearityRejected` on structural defects.

    A failing growth or subcriticality check is *not* an error here: such
    problems are solved and end in a nonexistence verdict.  Only an ``F`` that is
    not the antiderivative of ``f`` or is identically trivial is rejected.
    """
    report = validate_assumptions(nl, problem)
    for name in ("f3", "antiderivative"):
        if not report[name].passed:
            raise NonlinearityRejected(f"{name}: {report[name].detail}")
    return report
