"""Spectral differential geometry on flat periodic complex tori.

A grid covers [0, 2pi)^(2d) for d complex coordinates z_j = x_j + i y_j, with
N points per real axis.  Scalar fields are real arrays of shape (N,)*(2d);
metric fields are pointwise Hermitian d x d matrices relative to the flat
coordinate frame.  All derivatives are Fourier-spectral:

    d/dz   = (d/dx - i d/dy) / 2,       d/dzbar = (d/dx + i d/dy) / 2,
    d2/dz dzbar = (d2/dx2 + d2/dy2) / 4   on the diagonal.

Nothing in this module truncates spectra on its own: operators act on
whatever modes their input carries.  Band-limiting of evolving quantities is
the caller's job via :meth:`TorusGrid.dealias` (2/3 rule, top third of modes
zeroed), which producers of nonlinear data apply.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import PositivityLost
from .reductions import tree_max, tree_min, tree_sum

TWO_PI = 2.0 * np.pi


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid on a torus of complex dimension 1 or 2.

    ``n`` points per real axis (a power of two, at least 8); the real
    dimension is twice the complex one, so fields have n**(2*dim) points.
    """

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"complex dimension must be 1 or 2, got {self.dim}")
        if self.n < 8 or not _is_power_of_two(self.n):
            raise ValueError(f"points per axis must be a power of two >= 8, got {self.n}")

    @property
    def shape(self) -> tuple:
        return (self.n,) * (2 * self.dim)

    @property
    def npoints(self) -> int:
        return self.n ** (2 * self.dim)

    @property
    def volume(self) -> float:
        """Total coordinate volume (2 pi)^(2 dim)."""
        return TWO_PI ** (2 * self.dim)

    @cached_property
    def axes(self) -> np.ndarray:
        return TWO_PI * np.arange(self.n) / self.n

    def coords(self) -> tuple:
        """x_1, y_1[, x_2, y_2] broadcast to the grid shape."""
        return np.meshgrid(*([self.axes] * (2 * self.dim)), indexing="ij", sparse=True)

    @cached_property
    def _k(self) -> np.ndarray:
        # integer wavenumbers in fft layout
        return np.fft.fftfreq(self.n, d=1.0 / self.n)

    def _k_axis(self, axis: int) -> np.ndarray:
        shape = [1] * (2 * self.dim)
        shape[axis] = self.n
        return self._k.reshape(shape)

    def _k_first(self, axis: int) -> np.ndarray:
        # First-derivative multiplier drops the Nyquist mode (its sign is
        # ambiguous for odd derivatives).
        k = self._k.copy()
        k[self.n // 2] = 0.0
        shape = [1] * (2 * self.dim)
        shape[axis] = self.n
        return k.reshape(shape)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        keep = np.abs(self._k) <= self.n // 3
        mask = np.ones(self.shape, dtype=bool)
        for axis in range(2 * self.dim):
            shape = [1] * (2 * self.dim)
            shape[axis] = self.n
            mask = mask & keep.reshape(shape)
        return mask

    def fft(self, values: np.ndarray) -> np.ndarray:
        return np.fft.fftn(values)

    def ifft(self, spec: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(spec)

    def dealias(self, values: np.ndarray) -> np.ndarray:
        """Zero the top third of modes per axis (2/3 rule).

        The mean passes through untouched (k = 0 is always retained); it is
        split off before the transform so roundoff scales with the
        oscillation, not with any large constant offset.
        """
        if np.isrealobj(values):
            mean = np.mean(values)
            spec = self.fft(values - mean)
            spec[~self.dealias_mask] = 0.0
            return self.ifft(spec).real + mean
        spec = self.fft(values)
        spec[~self.dealias_mask] = 0.0
        return self.ifft(spec)

    def dz_mult(self, j: int) -> np.ndarray:
        """Fourier multiplier of d/dz_j."""
        kx = self._k_first(2 * j)
        ky = self._k_first(2 * j + 1)
        return 0.5 * (1j * kx + ky)

    def dzbar_mult(self, j: int) -> np.ndarray:
        kx = self._k_first(2 * j)
        ky = self._k_first(2 * j + 1)
        return 0.5 * (1j * kx - ky)

    def lap_mult(self, j: int) -> np.ndarray:
        """Fourier multiplier of d2/dz_j dzbar_j = (d_xx + d_yy)/4."""
        kx = self._k_axis(2 * j)
        ky = self._k_axis(2 * j + 1)
        return -0.25 * (kx**2 + ky**2)

    def flat_symbol(self) -> np.ndarray:
        """Nonnegative symbol q(k) with flat Laplacian = -q in Fourier space."""
        q = np.zeros(self.shape)
        for j in range(self.dim):
            q = q - self.lap_mult(j)
        return q


@dataclass
class ScalarField:
    """Real scalar field over a torus grid."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    @classmethod
    def zeros(cls, grid: TorusGrid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    def check_finite(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("scalar field contains non-finite values")


@dataclass
class MetricField:
    """Pointwise Hermitian d x d matrix field g_{j kbar} in flat coordinates."""

    grid: TorusGrid
    mat: np.ndarray

    def __post_init__(self):
        self.mat = np.asarray(self.mat, dtype=np.complex128)
        d = self.grid.dim
        if self.mat.shape != self.grid.shape + (d, d):
            raise ValueError(f"metric shape {self.mat.shape} invalid for grid")

    @classmethod
    def identity(cls, grid: TorusGrid) -> "MetricField":
        d = grid.dim
        mat = np.zeros(grid.shape + (d, d), dtype=np.complex128)
        for j in range(d):
            mat[..., j, j] = 1.0
        return cls(grid, mat)

    def scaled(self, c: float) -> "MetricField":
        return MetricField(self.grid, c * self.mat)

    def plus(self, other: "MetricField") -> "MetricField":
        return MetricField(self.grid, self.mat + other.mat)

    def hermiticity_defect(self) -> float:
        return tree_max(np.abs(self.mat - np.conj(np.swapaxes(self.mat, -1, -2))))

    def det(self) -> np.ndarray:
        d = self.grid.dim
        if d == 1:
            return self.mat[..., 0, 0].real
        a = self.mat[..., 0, 0].real
        b = self.mat[..., 1, 1].real
        off = self.mat[..., 0, 1]
        return a * b - (off * np.conj(off)).real

    def min_eig(self) -> np.ndarray:
        d = self.grid.dim
        if d == 1:
            return self.mat[..., 0, 0].real
        tr = self.mat[..., 0, 0].real + self.mat[..., 1, 1].real
        disc = np.sqrt(np.maximum(tr**2 - 4.0 * self.det(), 0.0))
        return 0.5 * (tr - disc)

    def inv(self) -> np.ndarray:
        """Pointwise matrix inverse; raises PositivityLost if degenerate."""
        d = self.grid.dim
        me = self.min_eig()
        idx = np.unravel_index(np.argmin(me), me.shape)
        if me[idx] <= 0.0:
            raise PositivityLost(me[idx], idx)
        if d == 1:
            out = np.empty_like(self.mat)
            out[..., 0, 0] = 1.0 / self.mat[..., 0, 0].real
            return out
        det = self.det()
        out = np.empty_like(self.mat)
        out[..., 0, 0] = self.mat[..., 1, 1] / det
        out[..., 1, 1] = self.mat[..., 0, 0] / det
        out[..., 0, 1] = -self.mat[..., 0, 1] / det
        out[..., 1, 0] = -self.mat[..., 1, 0] / det
        return out


@dataclass
class Density:
    """Strictly positive volume density relative to the Euclidean cell measure."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise ValueError("density shape does not match grid")


def complex_hessian(f: ScalarField) -> MetricField:
    """Matrix field of second complex derivatives d2 f / dz_j dzbar_k.

    Hermitian by construction: the lower triangle is the conjugate of the
    upper one, and diagonal entries are real.  The mean is removed before
    transforming; it carries no derivative content but would otherwise set
    the roundoff scale of every mode.
    """
    f.check_finite()
    grid = f.grid
    d = grid.dim
    spec = grid.fft(f.values - np.mean(f.values))
    mat = np.zeros(grid.shape + (d, d), dtype=np.complex128)
    for j in range(d):
        mat[..., j, j] = grid.ifft(spec * grid.lap_mult(j)).real
    if d == 2:
        mult = grid.dz_mult(0) * grid.dzbar_mult(1)
        h01 = grid.ifft(spec * mult)
        mat[..., 0, 1] = h01
        mat[..., 1, 0] = np.conj(h01)
    return MetricField(grid, mat)


def metric_from_potential(grid: TorusGrid, eta: np.ndarray | None = None) -> MetricField:
    """Flat metric perturbed by a potential: identity + complex_hessian(eta)."""
    g = MetricField.identity(grid)
    if eta is None:
        return g
    return g.plus(complex_hessian(ScalarField(grid, eta)))


def ma_density(g0: MetricField, f: ScalarField) -> Density:
    """det(g0 + complex_hessian(f)) per point, dealiased.

    Raises PositivityLost if the perturbed matrix (or the resulting density)
    fails to be positive somewhere.
    """
    g = g0.plus(complex_hessian(f))
    me = g.min_eig()
    idx = np.unravel_index(np.argmin(me), me.shape)
    if me[idx] <= 0.0:
        raise PositivityLost(me[idx], idx)
    dens = g0.grid.dealias(g.det())
    dmin_idx = np.unravel_index(np.argmin(dens), dens.shape)
    if dens[dmin_idx] <= 0.0:
        raise PositivityLost(dens[dmin_idx], dmin_idx)
    return Density(g0.grid, dens)


def laplacian_g(f: ScalarField, g: MetricField) -> ScalarField:
    """Metric Laplacian g^{j kbar} d_j d_kbar f."""
    inv = g.inv()
    hess = complex_hessian(f).mat
    lap = np.einsum("...kj,...jk->...", inv, hess).real
    return ScalarField(f.grid, lap)


def gradient_norm_g(f: ScalarField, g: MetricField) -> ScalarField:
    """Squared gradient g^{j kbar} (d_j f)(d_kbar f); nonnegative."""
    grid = f.grid
    inv = g.inv()
    spec = grid.fft(f.values)
    w = np.stack(
        [grid.ifft(spec * grid.dz_mult(j)) for j in range(grid.dim)], axis=-1
    )
    out = np.einsum("...kj,...j,...k->...", inv, w, np.conj(w)).real
    return ScalarField(grid, np.maximum(out, 0.0))


def scalar_curvature_direct(g: MetricField) -> ScalarField:
    """Scalar curvature R = -g^{j kbar} d_j d_kbar log det g.

    Two spectral differentiations of the pointwise log determinant; the
    complex-trace convention makes R = -d on a negatively curved Einstein
    factor of complex dimension d.  The log determinant is a nonlinear
    product and is band-limited (2/3 rule) before differentiation, like
    every other nonlinearly produced scalar field.
    """
    det = g.det()
    idx = np.unravel_index(np.argmin(det), det.shape)
    if det[idx] <= 0.0:
        raise PositivityLost(det[idx], idx)
    logdet = ScalarField(g.grid, g.grid.dealias(np.log(det)))
    ric = complex_hessian(logdet).mat
    inv = g.inv()
    r = -np.einsum("...kj,...jk->...", inv, ric).real
    return ScalarField(g.grid, r)


def positivity_margin(g: MetricField) -> float:
    """Minimum over grid points of the smallest metric eigenvalue."""
    return tree_min(g.min_eig())


def integrate(f, workers: int = 1) -> float:
    """Integral over the torus: mean value times (2 pi)^(2 dim).

    Exact for band-limited periodic data (trapezoidal = spectral on the
    torus).  Accepts a ScalarField or a Density.
    """
    grid = f.grid
    return tree_sum(f.values, workers=workers) / grid.npoints * grid.volume


def sup(values: np.ndarray) -> float:
    return tree_max(values)


def inf(values: np.ndarray) -> float:
    return tree_min(values)
