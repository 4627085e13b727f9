"""Uniform grids on a centred cube and real fields sampled on them.

A :class:`Field` is the discrete stand-in for a function in H^1(R^N).  The cube
is ``[-L, L)^N`` with ``n`` nodes per axis, so node ``n // 2`` on every axis is
the origin.  Differences wrap periodically; fields of interest decay well
before the boundary, so the wrap is invisible to them.
"""

from __future__ import annotations

import math
import os
import struct
import tempfile
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage

from .errors import FieldFormatError, GridMismatch, TauNonpositive, ZeroField

__all__ = [
    "Grid",
    "Field",
    "integrate",
    "dirichlet_energy",
    "laplacian",
    "lp_norm",
    "dilate",
    "recentre",
    "barycenter",
    "concentration_function",
    "boundary_mass",
    "effective_radius",
    "ball_indicator",
    "write_field",
    "read_field",
]

#: Relative size of boundary values above which a field counts as not decayed.
BOUNDARY_FLOOR = 1e-8


@dataclass(frozen=True)
class Grid:
    """Uniform Cartesian grid on ``[-half_width, half_width)^dim``."""

    dim: int
    n: int
    half_width: float

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")
        if int(self.n) != self.n or self.n < 8 or self.n % 2:
            raise ValueError(f"n must be an even integer >= 8, got {self.n}")
        if not (self.half_width > 0 and math.isfinite(self.half_width)):
            raise ValueError(f"half_width must be positive, got {self.half_width}")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "half_width", float(self.half_width))

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def origin_index(self) -> tuple[int, ...]:
        return (self.n // 2,) * self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        """Node coordinates along one axis, ``-L + i h``."""
        return -self.half_width + self.spacing * np.arange(self.n)

    def coords(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays, one per axis."""
        out = []
        for j in range(self.dim):
            shape = [1] * self.dim
            shape[j] = self.n
            out.append(self.axis.reshape(shape))
        return out

    @cached_property
    def radius_squared(self) -> np.ndarray:
        r2 = np.zeros(self.shape)
        for c in self.coords():
            r2 = r2 + c * c
        return r2

    def sample(self, func) -> "Field":
        """Field with values ``func(r)`` where ``r`` is the distance to the origin."""
        return Field(self, func(np.sqrt(self.radius_squared)))

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.shape))


class Field:
    """Real values on a :class:`Grid`, stored as an ``(n,) * dim`` array.

    Fields behave as immutable values: the stored array is marked read-only.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values):
        arr = np.array(values, dtype=np.float64)
        if arr.size != grid.size:
            raise GridMismatch(f"expected {grid.size} values, got {arr.size}")
        arr = arr.reshape(grid.shape)
        if not np.all(np.isfinite(arr)):
            raise ValueError("field values must be finite")
        arr.setflags(write=False)
        self.grid = grid
        self.values = arr

    def with_values(self, values) -> "Field":
        return Field(self.grid, values)

    def __repr__(self):
        return f"Field({self.grid!r}, max|u|={np.max(np.abs(self.values)):.4g})"

    def _coerce(self, other):
        if isinstance(other, Field):
            check_same_grid(self, other)
            return other.values
        return other

    def __add__(self, other):
        return self.with_values(self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.with_values(self.values - self._coerce(other))

    def __rsub__(self, other):
        return self.with_values(self._coerce(other) - self.values)

    def __mul__(self, other):
        return self.with_values(self.values * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self.with_values(self.values / self._coerce(other))

    def __neg__(self):
        return self.with_values(-self.values)

    def __abs__(self):
        return self.with_values(np.abs(self.values))


def check_same_grid(*fields: Field) -> Grid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatch(f"{f.grid} != {grid}")
    return grid


def integrate(u: Field) -> float:
    """Midpoint rule: ``h^N * sum(values)``."""
    return float(u.grid.cell_volume * np.sum(u.values))


def _forward_differences(u: Field):
    h = u.grid.spacing
    for j in range(u.grid.dim):
        yield (np.roll(u.values, -1, axis=j) - u.values) / h


def dirichlet_energy(u: Field) -> float:
    """Discrete ``int |grad u|^2``.

    Each axis contributes the squared difference quotient across every
    nearest-neighbour edge, i.e. the centred difference at the edge midpoint.
    The periodic wrap edge is included.  This is the energy whose gradient is
    ``-2 h^N`` times :func:`laplacian`.
    """
    total = 0.0
    for d in _forward_differences(u):
        total += float(np.sum(d * d))
    return total * u.grid.cell_volume


def laplacian(u: Field) -> Field:
    """Periodic ``(2N + 1)``-point Laplacian."""
    h2 = u.grid.spacing**2
    v = u.values
    out = np.zeros_like(v)
    for j in range(u.grid.dim):
        out += np.roll(v, 1, axis=j) + np.roll(v, -1, axis=j) - 2.0 * v
    return u.with_values(out / h2)


def lp_norm(u: Field, p: float) -> float:
    """``(h^N sum |u|^p)^(1/p)``.

    The sum is correctly rounded (``math.fsum``), so the result depends only on
    the multiset of values: permuting nodes leaves it bitwise unchanged.
    """
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    total = math.fsum((np.abs(u.values) ** p).ravel())
    return (u.grid.cell_volume * total) ** (1.0 / p)


def boundary_values_max(u: Field) -> float:
    """Largest ``|u|`` on the outermost layer of nodes."""
    v = np.abs(u.values)
    m = 0.0
    for j in range(u.grid.dim):
        m = max(m, float(np.max(np.take(v, [0, -1], axis=j))))
    return m


def dilate(u: Field, tau: float, order: int = 3, floor: float | None = BOUNDARY_FLOOR) -> Field:
    """Return ``v(x) = u(x / tau)`` sampled on the same grid.

    Values between nodes come from spline interpolation of the given ``order``
    (``order=1`` is multilinear).  Points whose preimage lies outside the cube
    receive 0.  ``tau == 1`` returns the input values unchanged.  A warning is
    issued when the result does not decay below ``floor * max|v|`` on the
    boundary layer; pass ``floor=None`` to skip the check.
    """
    if not tau > 0:
        raise TauNonpositive(f"tau must be positive, got {tau}")
    if tau == 1.0:
        return u.with_values(u.values)
    g = u.grid
    idx = (g.axis / tau + g.half_width) / g.spacing
    mesh = np.meshgrid(*([idx] * g.dim), indexing="ij")
    out = ndimage.map_coordinates(u.values, mesh, order=order, mode="grid-constant", cval=0.0)
    v = u.with_values(out)
    if floor is not None:
        peak = float(np.max(np.abs(out)))
        if peak > 0 and boundary_values_max(v) > floor * peak:
            warnings.warn(
                f"dilated field does not decay at the boundary (tau={tau:.4g})",
                RuntimeWarning,
                stacklevel=2,
            )
    return v


def barycenter(u: Field) -> np.ndarray:
    """Barycenter of ``|u|^2`` in box coordinates."""
    w = u.values**2
    total = float(np.sum(w))
    if total == 0.0:
        raise ZeroField("barycenter of the zero field is undefined")
    return np.array([float(np.sum(w * c)) / total for c in u.grid.coords()])


def recentre(u: Field, max_rounds: int = 8) -> Field:
    """Cyclically shift ``u`` so that the barycenter of ``|u|^2`` is at the origin node.

    The shift is rounded to whole nodes.  Because mass that wraps around moves
    the barycenter nonlinearly, the shift is repeated until it is zero.
    """
    if not np.any(u.values):
        raise ZeroField("cannot recentre the zero field")
    v = u.values
    h = u.grid.spacing
    for _ in range(max_rounds):
        shift = np.rint(-barycenter(u.with_values(v)) / h).astype(int)
        if not np.any(shift):
            break
        v = np.roll(v, tuple(shift), axis=tuple(range(u.grid.dim)))
    return u.with_values(v)


def _box_sum(w: np.ndarray, m: int) -> np.ndarray:
    # Same operation order at every node, so the result is exactly shift-equivariant.
    out = w
    for j in range(w.ndim):
        acc = np.zeros_like(out)
        for k in range(-m, m + 1):
            acc = acc + np.roll(out, k, axis=j)
        out = acc
    return out


def concentration_function(u: Field, p: float, radius: float = 1.0) -> float:
    """Discrete ``sup_a int_{Q(a, radius)} |u|^p`` over node-centred cubes of side ``2 radius``."""
    N = u.grid.dim
    upper = math.inf if N <= 2 else 2.0 * N / (N - 2)
    if not (2 < p < upper):
        raise ValueError(f"p must lie in (2, {upper}), got {p}")
    if not radius > 0:
        raise ValueError("radius must be positive")
    m = min(int(math.floor(radius / u.grid.spacing + 1e-12)), (u.grid.n - 1) // 2)
    sums = _box_sum(np.abs(u.values) ** p, m)
    return float(np.max(sums)) * u.grid.cell_volume


def boundary_mass(u: Field) -> float:
    """Fraction of ``int u^2`` carried by the outer shell ``|x|_inf >= 3L/4``."""
    w = u.values**2
    total = float(np.sum(w))
    if total == 0.0:
        return 0.0
    g = u.grid
    inner = np.ones(g.shape, dtype=bool)
    for c in g.coords():
        inner &= np.abs(c) < 0.75 * g.half_width
    return float(np.sum(w[~inner])) / total


def effective_radius(u: Field) -> float:
    """Root mean square distance of ``|u|^2`` from its barycenter."""
    w = u.values**2
    total = float(np.sum(w))
    if total == 0.0:
        raise ZeroField("effective radius of the zero field is undefined")
    b = barycenter(u)
    r2 = np.zeros(u.grid.shape)
    for c, bj in zip(u.grid.coords(), b):
        r2 = r2 + (c - bj) ** 2
    return math.sqrt(float(np.sum(w * r2)) / total)


def ball_indicator(grid: Grid, radius: float = 1.0, supersample: int = 8) -> Field:
    """Indicator of the centred ball, averaged over each cell.

    Cell values are the fraction of ``supersample^N`` sub-cell midpoints lying
    in the ball, which keeps the discrete volume accurate where pointwise
    sampling of the indicator would be off by several percent.
    """
    h = grid.spacing
    offsets = ((np.arange(supersample) + 0.5) / supersample - 0.5) * h
    coords = grid.coords()
    acc = np.zeros(grid.shape)
    for shift in np.ndindex(*(supersample,) * grid.dim):
        r2 = sum((c + offsets[s]) ** 2 for c, s in zip(coords, shift))
        acc += r2 <= radius * radius
    return Field(grid, acc / supersample**grid.dim)


# Binary layout: magic, u32 version, u32 dim, u32 n, f64 half_width, then n^dim f64.
_MAGIC = b"CHQF"
_VERSION = 1
_HEADER = struct.Struct("<4sIIId")


def field_to_bytes(u: Field) -> bytes:
    g = u.grid
    head = _HEADER.pack(_MAGIC, _VERSION, g.dim, g.n, g.half_width)
    return head + np.ascontiguousarray(u.values, dtype="<f8").tobytes()


def field_from_bytes(data: bytes) -> Field:
    if len(data) < _HEADER.size:
        raise FieldFormatError("truncated header")
    magic, version, dim, n, half_width = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise FieldFormatError(f"bad magic {magic!r}")
    if version != _VERSION:
        raise FieldFormatError(f"unsupported version {version}")
    grid = Grid(dim, n, half_width)
    body = data[_HEADER.size :]
    if len(body) != 8 * grid.size:
        raise FieldFormatError(f"expected {8 * grid.size} payload bytes, got {len(body)}")
    return Field(grid, np.frombuffer(body, dtype="<f8").reshape(grid.shape))


def write_field(path, u: Field) -> int:
    """Write ``u`` atomically in the binary field format; returns the byte count."""
    data = field_to_bytes(u)
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)), suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return len(data)


def read_field(path) -> Field:
    with open(path, "rb") as fh:
        return field_from_bytes(fh.read())
