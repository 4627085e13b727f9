"""Riesz potential ``I_alpha * g`` as a free-space convolution on a doubled grid.

The kernel ``A(N, alpha) / |x|^(N - alpha)`` is sampled on a grid with twice as
many nodes per axis, indexed by minimum-image offsets, and transformed once.
Zero-padding the density to the same size makes the circular convolution equal
to the aperiodic one on the original nodes.  The singular cell at the origin
holds the exact mean of the kernel over that cell.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import fft, integrate, special

from .errors import AlphaOutOfRange, GridMismatch
from .field import Field, Grid, check_same_grid, read_field, write_field

__all__ = [
    "riesz_constant",
    "riesz_kernel",
    "unit_cell_mean",
    "singular_cell_value",
    "RieszKernel",
    "build_kernel",
    "convolve",
    "convolve_values",
    "quadratic_form",
    "bilinear_form",
]


def riesz_constant(dim: int, alpha: float) -> float:
    """``Gamma((N - alpha)/2) / (Gamma(alpha/2) pi^(N/2) 2^alpha)``."""
    _check_alpha(dim, alpha)
    return math.exp(
        special.gammaln((dim - alpha) / 2)
        - special.gammaln(alpha / 2)
        - 0.5 * dim * math.log(math.pi)
        - alpha * math.log(2.0)
    )


def riesz_kernel(r, dim: int, alpha: float):
    """Pointwise kernel ``I_alpha`` at distance ``r > 0``."""
    return riesz_constant(dim, alpha) * np.asarray(r, dtype=float) ** (alpha - dim)


def _check_alpha(dim: int, alpha: float) -> None:
    if not (0 < alpha < dim):
        raise AlphaOutOfRange(f"alpha must lie in (0, {dim}), got {alpha}")


def unit_cell_mean(dim: int, alpha: float) -> float:
    """``int_{[-1/2, 1/2]^N} |y|^(alpha - N) dy``.

    The integrand is homogeneous of degree ``alpha - N``, so the divergence
    theorem turns the volume integral into ``(N / alpha)`` times the (smooth)
    integral over one face at distance 1/2.
    """
    _check_alpha(dim, alpha)
    if dim == 3 and alpha == 2:
        return 3.0 * math.log(2.0 + math.sqrt(3.0)) - math.pi / 2.0
    if dim == 1:
        return 2.0 * 0.5**alpha / alpha
    expo = (alpha - dim) / 2.0

    def face(*z):
        return (sum(t * t for t in z) + 0.25) ** expo

    # face integrand is even in every coordinate: integrate over [0, 1/2]^(N-1)
    val, _ = integrate.nquad(face, [[0.0, 0.5]] * (dim - 1), opts={"epsabs": 1e-13, "epsrel": 1e-12})
    return dim / alpha * 2 ** (dim - 1) * val


def singular_cell_value(grid: Grid, alpha: float) -> float:
    """Mean of ``I_alpha`` over the cell ``[-h/2, h/2]^N``."""
    h = grid.spacing
    return riesz_constant(grid.dim, alpha) * h ** (alpha - grid.dim) * unit_cell_mean(grid.dim, alpha)


def _fold(n: int) -> np.ndarray:
    """Octant index ``min(k, 2n - k)`` of each node ``k`` of a ``2n`` axis."""
    k = np.arange(2 * n)
    return np.minimum(k, 2 * n - k)


def _unfold(a: np.ndarray, n: int, axes) -> np.ndarray:
    idx = _fold(n)
    for ax in axes:
        a = np.take(a, idx, axis=ax)
    return a


def sample_kernel_octant(grid: Grid, alpha: float) -> np.ndarray:
    """Kernel at the offsets ``(k_1 h, ..., k_N h)``, ``0 <= k_j <= n``.

    The minimum-image samples on the ``2n`` grid are even in every axis, so
    this ``(n + 1)^N`` block determines all of them.
    """
    _check_alpha(grid.dim, alpha)
    n1 = grid.n + 1
    d2 = (np.arange(n1) * grid.spacing) ** 2
    # built in place: at 256 nodes per axis this block is 140 MB
    K = np.zeros((n1,) * grid.dim)
    for j in range(grid.dim):
        shape = [1] * grid.dim
        shape[j] = n1
        K += d2.reshape(shape)
    K[(0,) * grid.dim] = 1.0
    np.power(K, (alpha - grid.dim) / 2.0, out=K)
    K *= riesz_constant(grid.dim, alpha)
    K[(0,) * grid.dim] = singular_cell_value(grid, alpha)
    return K


def sample_padded_kernel(grid: Grid, alpha: float) -> np.ndarray:
    """Kernel sampled at minimum-image offsets on the ``2n`` grid."""
    return _unfold(sample_kernel_octant(grid, alpha), grid.n, range(grid.dim))


@dataclass(frozen=True, eq=False)
class RieszKernel:
    """Precomputed transform of the sampled kernel, scaled by the cell volume.

    The transform of an even sequence is real and even, so only the block of
    frequencies ``0..n`` per axis is stored; ``spectral_multiplier`` expands
    it to the rfft layout of the ``2n`` grid.  Its ``[0, ..., 0]`` entry is
    the integral of the truncated kernel.
    """

    alpha: float
    grid: Grid
    octant: np.ndarray = dc_field(repr=False)

    @property
    def padded_shape(self) -> tuple[int, ...]:
        return (2 * self.grid.n,) * self.grid.dim

    @property
    def spectral_multiplier(self) -> np.ndarray:
        out = _unfold(self.octant, self.grid.n, range(self.grid.dim - 1))
        out.setflags(write=False)
        return out

    def multiply(self, spec: np.ndarray) -> None:
        """Scale an rfft-layout spectrum of the ``2n`` grid in place."""
        n, d = self.grid.n, self.grid.dim
        if d == 1:
            spec *= self.octant
            return
        # one slab at a time, so the full multiplier is never formed
        for i, fi in enumerate(_fold(n)):
            spec[i] *= _unfold(self.octant[fi], n, range(d - 2))


def _multiplier_octant(grid: Grid, K: np.ndarray) -> np.ndarray:
    # the DFT of the even extension of K is the type-I cosine transform of K
    mult = fft.dctn(K, type=1)
    mult *= grid.cell_volume
    mult.setflags(write=False)
    return mult


def build_kernel(grid: Grid, alpha: float, cache_dir=None) -> RieszKernel:
    """Build the kernel for ``grid``; optionally cache the real-space samples on disk.

    Cached samples use the binary field format on the padded grid
    (``2n`` nodes per axis, half width ``2L``) and are written atomically.
    """
    _check_alpha(grid.dim, alpha)
    alpha = float(alpha)
    K = None
    path = None
    if cache_dir is not None:
        name = f"riesz_d{grid.dim}_n{grid.n}_L{grid.half_width!r}_a{alpha!r}.chqf"
        path = os.path.join(os.fspath(cache_dir), name)
        if os.path.exists(path):
            K = np.array(read_field(path).values[(slice(0, grid.n + 1),) * grid.dim])
    if K is None:
        K = sample_kernel_octant(grid, alpha)
        if path is not None:
            os.makedirs(os.path.dirname(path), exist_ok=True)
            padded = Grid(grid.dim, 2 * grid.n, 2 * grid.half_width)
            write_field(path, Field(padded, _unfold(K, grid.n, range(grid.dim))))
    return RieszKernel(alpha, grid, _multiplier_octant(grid, K))


def _transform_in_place(fn, view: np.ndarray, axis: int) -> None:
    out = fn(view, axis=axis, overwrite_x=True)
    # overwrite_x permits, but does not promise, reuse of the input buffer
    if not np.may_share_memory(out, view):
        view[...] = out


def convolve_values(k: RieszKernel, g: np.ndarray) -> np.ndarray:
    """``I_alpha * g`` for a bare ``(n,) * N`` array of node values."""
    # Axis-by-axis padded transform, in place in one spectrum buffer.  The
    # density only fills the first n nodes of each axis and only the first n
    # outputs are kept, so slabs known to be zero are never transformed and
    # the padded real arrays of a plain rfftn/irfftn pair are never formed.
    n, d = k.grid.n, k.grid.dim
    m = 2 * n
    spec = np.zeros((m,) * (d - 1) + (n + 1,), dtype=complex)
    spec[(slice(0, n),) * (d - 1)] = fft.rfft(g, n=m, axis=-1)
    for ax in range(d - 2, -1, -1):
        _transform_in_place(fft.fft, spec[(slice(0, n),) * ax], ax)
    k.multiply(spec)
    for ax in range(d - 1):
        _transform_in_place(fft.ifft, spec[(slice(0, n),) * ax], ax)
    out = fft.irfft(spec[(slice(0, n),) * (d - 1)], n=m, axis=-1)
    return np.ascontiguousarray(out[..., :n])


def convolve(k: RieszKernel, g: Field) -> Field:
    """Discrete ``I_alpha * g`` on the nodes of ``g``'s grid."""
    if g.grid != k.grid:
        raise GridMismatch(f"field grid {g.grid} does not match kernel grid {k.grid}")
    return g.with_values(convolve_values(k, g.values))


def bilinear_form(k: RieszKernel, f: Field, g: Field) -> float:
    """``int (I_alpha * f) g``."""
    check_same_grid(f, g)
    pot = convolve(k, f)
    return float(np.sum(pot.values * g.values)) * g.grid.cell_volume


def quadratic_form(k: RieszKernel, g: Field) -> float:
    """``int (I_alpha * g) g``; nonnegative up to roundoff."""
    return bilinear_form(k, g, g)
