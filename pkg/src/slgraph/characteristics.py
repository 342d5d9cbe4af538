"""Backward characteristic tracing over one time step.

Every grid point is integrated from ``t_end`` back to ``t_end - dt`` with the
classical fourth-order Runge-Kutta method in ``substeps`` equal pieces. The
result is returned as normalized shifts ``(x_upstream - x) / h``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Grid1D, Grid2D


def default_substeps(cfl: float) -> int:
    """Keep the per-substep Courant number at or below 1/4."""
    return max(1, math.ceil(4.0 * abs(cfl)))


def _check(dt, substeps):
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    if substeps < 1:
        raise ValueError(f"substeps must be >= 1, got {substeps}")


def _finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise FloatingPointError("non-finite velocity encountered while tracing")


def _rk4_backward(rhs, state, t_end, dt, substeps):
    """Integrate ``dstate/dt = rhs(state, t)`` from t_end down to t_end - dt."""
    tau = -dt / substeps
    t = t_end
    for step in range(substeps):
        k1 = rhs(state, t)
        k2 = rhs(tuple(s + 0.5 * tau * k for s, k in zip(state, k1)), t + 0.5 * tau)
        k3 = rhs(tuple(s + 0.5 * tau * k for s, k in zip(state, k2)), t + 0.5 * tau)
        k4 = rhs(tuple(s + tau * k for s, k in zip(state, k3)), t + tau)
        state = tuple(s + tau / 6.0 * (a + 2 * b + 2 * c + d)
                      for s, a, b, c, d in zip(state, k1, k2, k3, k4))
        t = t_end + tau * (step + 1)
    return state


def trace_1d(vfield, grid: Grid1D, t_end: float, dt: float, substeps: int = 1) -> np.ndarray:
    """Normalized shifts xi of shape ``(n,)``."""
    _check(dt, substeps)
    x0 = grid.coordinates()

    if getattr(vfield, "constant", None) is not None:
        return np.full(grid.n, -vfield.constant * dt / grid.h)

    def rhs(state, t):
        a = vfield(state[0], t)
        _finite(a)
        return (a,)

    (x,) = _rk4_backward(rhs, (x0,), t_end, dt, substeps)
    return (x - x0) / grid.h


def trace_2d(vfield, grid: Grid2D, t_end: float, dt: float,
             substeps: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Normalized shifts (xi, eta), each of shape ``(ny, nx)``."""
    _check(dt, substeps)
    X, Y = grid.meshgrid()

    if getattr(vfield, "constant", None) is not None:
        a, b = vfield.constant
        return (np.full(grid.shape, -a * dt / grid.hx),
                np.full(grid.shape, -b * dt / grid.hy))

    def rhs(state, t):
        a, b = vfield(state[0], state[1], t)
        _finite(a, b)
        return (a, b)

    x, y = _rk4_backward(rhs, (X, Y), t_end, dt, substeps)
    return (x - X) / grid.hx, (y - Y) / grid.hy


def interp_periodic_cubic(values: np.ndarray, grid: Grid1D, x: np.ndarray) -> np.ndarray:
    """Cubic Lagrange interpolation on the 4 nearest periodic grid points."""
    p = (np.asarray(x) - grid.x_min) / grid.h
    i0 = np.floor(p).astype(np.int64)
    s = p - i0
    n = grid.n
    fm1 = values[(i0 - 1) % n]
    f0 = values[i0 % n]
    f1 = values[(i0 + 1) % n]
    f2 = values[(i0 + 2) % n]
    return (-s * (s - 1) * (s - 2) / 6.0 * fm1
            + (s + 1) * (s - 1) * (s - 2) / 2.0 * f0
            - (s + 1) * s * (s - 2) / 2.0 * f1
            + (s + 1) * s * (s - 1) / 6.0 * f2)


def interp_periodic_spectral(values: np.ndarray, grid: Grid1D, x: np.ndarray) -> np.ndarray:
    """Trigonometric interpolation of periodic samples (smooth in x)."""
    n = grid.n
    coef = np.fft.rfft(values) / n
    k = 2.0 * np.pi * np.fft.rfftfreq(n, d=grid.h)
    mult = np.full(k.size, 2.0)
    mult[0] = 1.0
    if n % 2 == 0:
        # the Nyquist mode is split evenly so the interpolant stays real
        mult[-1] = 1.0
        coef = coef.copy()
        coef[-1] = coef[-1].real
    phase = np.exp(1j * (np.asarray(x, dtype=float) - grid.x_min)[..., None] * k)
    return np.real(phase @ (mult * coef))


_INTERPOLANTS = {"cubic": interp_periodic_cubic, "spectral": interp_periodic_spectral}


@dataclass
class VPTrace:
    xi: np.ndarray
    eta: np.ndarray
    clamped: int  # number of upstream velocities pulled back into [-Vc, Vc]

    def __iter__(self):
        return iter((self.xi, self.eta))


def trace_vp(E: np.ndarray, grid: Grid2D, dt: float, substeps: int = 1,
             interp: str = "cubic") -> VPTrace:
    """Trace dx/dt = v, dv/dt = E(x) backward with the field frozen.

    ``E`` lives on the x axis of ``grid`` and is evaluated off-grid by cubic
    Lagrange interpolation on the 4 nearest points (``interp="cubic"``) or by
    trigonometric interpolation (``"spectral"``). The cubic interpolant is
    only continuous, which caps the observed order of the RK4 tracing near 2;
    the spectral one is smooth. Shifts are in units of ``hx`` and ``hv``.
    """
    _check(dt, substeps)
    try:
        interpolate = _INTERPOLANTS[interp]
    except KeyError:
        raise ValueError(f"unknown interpolation {interp!r}") from None
    E = np.asarray(E, dtype=float)
    if E.shape != (grid.nx,):
        raise ValueError(f"E has shape {E.shape}, expected ({grid.nx},)")
    _finite(E)
    X, V = grid.meshgrid()

    if not np.any(E):
        xi = -V * dt / grid.hx
        return VPTrace(xi, np.zeros(grid.shape), 0)

    def rhs(state, t):
        return (state[1], interpolate(E, grid.x, state[0]))

    x, v = _rk4_backward(rhs, (X, V), 0.0, dt, substeps)
    vc_lo, vc_hi = grid.y.x_min, grid.y.x_max
    outside = (v < vc_lo) | (v > vc_hi)
    v = np.clip(v, vc_lo, vc_hi)
    return VPTrace((x - X) / grid.hx, (v - V) / grid.hy, int(np.count_nonzero(outside)))
