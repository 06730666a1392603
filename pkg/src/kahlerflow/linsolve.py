"""Preconditioned Krylov solve for shifted metric Laplacians.

Solves (alpha * Lap_g - beta) x = rhs on a torus grid, where Lap_g is the
metric Laplacian contracted with a pointwise inverse metric.  The system is
left-preconditioned by the same operator with the metric replaced by its mean
scale (diagonal in Fourier space), and convergence is measured in the
preconditioned norm; for collapsing metrics the raw operator norm grows like
the inverse metric scale, which would otherwise push the residual's roundoff
floor above any tight relative tolerance.  All fields are kept on the
band-limited (dealiased) subspace, which the operator preserves; rhs content
outside it is unreachable there and is dropped.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import LinearSolveFailure
from .geometry import TorusGrid


def _hessian_contract(grid: TorusGrid, inv: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Lap_g values = Re tr(g^{-1} Hess values), spectrally."""
    spec = grid.fft(values)
    d = grid.dim
    if d == 1:
        h00 = grid.ifft(spec * grid.lap_mult(0)).real
        return inv[..., 0, 0].real * h00
    h00 = grid.ifft(spec * grid.lap_mult(0)).real
    h11 = grid.ifft(spec * grid.lap_mult(1)).real
    h01 = grid.ifft(spec * grid.dz_mult(0) * grid.dzbar_mult(1))
    out = inv[..., 0, 0].real * h00 + inv[..., 1, 1].real * h11
    out = out + 2.0 * (inv[..., 1, 0] * h01).real
    return out


def solve_shifted_laplacian(
    grid: TorusGrid,
    inv: np.ndarray,
    alpha: float,
    beta: float,
    rhs: np.ndarray,
    rtol: float = 1e-12,
    restart: int = 40,
    maxiter: int = 200,
) -> np.ndarray:
    """Solve (alpha * Lap_g - beta) x = rhs on the band-limited subspace."""
    mask = grid.dealias_mask
    rspec = grid.fft(rhs)
    rspec[~mask] = 0.0
    rhs = grid.ifft(rspec).real
    if float(np.max(np.abs(rhs))) == 0.0:
        return np.zeros_like(rhs)

    q = grid.flat_symbol()
    d = grid.dim
    cbar = float(np.mean(np.einsum("...jj->...", inv).real)) / d
    precond_mult = np.where(mask, -1.0 / (alpha * cbar * q + beta), 0.0)

    shape = grid.shape
    size = int(np.prod(shape))

    def matvec(x):
        v = x.reshape(shape)
        out = alpha * _hessian_contract(grid, inv, v) - beta * v
        spec = grid.fft(out)
        spec[~mask] = 0.0
        return grid.ifft(spec * precond_mult).real.ravel()

    b = grid.ifft(grid.fft(rhs) * precond_mult).real.ravel()
    op = LinearOperator((size, size), matvec=matvec, dtype=np.float64)
    sol, info = gmres(op, b, rtol=rtol, atol=0.0, restart=restart, maxiter=maxiter)
    if info != 0:
        raise LinearSolveFailure(f"gmres failed to converge (info={info})")
    return sol.reshape(shape)
