from __future__ import annotations

import numpy as np

from ..grid import Grid1D


def poisson_periodic(rho, grid: Grid1D, background: float = 1.0, tol: float = 1e-10) -> np.ndarray:
    """Solve E_x = rho - background on a periodic grid; E has zero mean.

    Raises ValueError when the right-hand side has a mean above ``tol``
    (no periodic solution exists).
    """
    rhs = np.asarray(rho, dtype=float) - background
    if rhs.shape != (grid.n,):
        raise ValueError(f"rho has shape {rhs.shape}, expected ({grid.n},)")
    mean = float(np.mean(rhs))
    if abs(mean) > tol:
        raise ValueError(f"Poisson problem not solvable: mean(rho - {background}) = {mean:.3e}")
    k = 2.0 * np.pi * np.fft.rfftfreq(grid.n, d=grid.h)
    rhs_hat = np.fft.rfft(rhs)
    E_hat = np.zeros_like(rhs_hat)
    E_hat[1:] = rhs_hat[1:] / (1j * k[1:])
    if grid.n % 2 == 0:
        E_hat[-1] = 0.0
    return np.fft.irfft(E_hat, n=grid.n)
