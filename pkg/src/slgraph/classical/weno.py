"""Fifth-order WENO finite differences with SSPRK3 time stepping.

Fluxes are split with global Lax-Friedrichs (alpha = max |velocity| over the
domain at the stage time) and reconstructed at cell faces by the classical
Jiang-Shu weights. Periodic axes wrap; non-periodic axes use zero ghosts.
"""

from __future__ import annotations

import math

import numpy as np

from ..grid import Grid1D, Grid2D
from .poisson import poisson_periodic

WENO_EPS = 1e-6
MAX_CFL = 0.6
_CFL_SLACK = 1e-12


def weno5_reconstruct(vm2, vm1, v0, vp1, vp2, eps=WENO_EPS):
    """Left-biased value at the face i+1/2 from the five values around i."""
    q0 = (2.0 * vm2 - 7.0 * vm1 + 11.0 * v0) / 6.0
    q1 = (-vm1 + 5.0 * v0 + 2.0 * vp1) / 6.0
    q2 = (2.0 * v0 + 5.0 * vp1 - vp2) / 6.0
    b0 = 13.0 / 12.0 * (vm2 - 2.0 * vm1 + v0) ** 2 + 0.25 * (vm2 - 4.0 * vm1 + 3.0 * v0) ** 2
    b1 = 13.0 / 12.0 * (vm1 - 2.0 * v0 + vp1) ** 2 + 0.25 * (vm1 - vp1) ** 2
    b2 = 13.0 / 12.0 * (v0 - 2.0 * vp1 + vp2) ** 2 + 0.25 * (3.0 * v0 - 4.0 * vp1 + vp2) ** 2
    a0 = 0.1 / (eps + b0) ** 2
    a1 = 0.6 / (eps + b1) ** 2
    a2 = 0.3 / (eps + b2) ** 2
    return (a0 * q0 + a1 * q1 + a2 * q2) / (a0 + a1 + a2)


def _pad(a, axis, periodic):
    width = [(0, 0)] * a.ndim
    width[axis] = (3, 3)
    return np.pad(a, width, mode="wrap" if periodic else "constant")


def _window(a, axis, start, count):
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + count)
    return a[tuple(idx)]


def flux_divergence(u, velocity, alpha, h, axis=-1, periodic=True):
    """d(velocity*u)/dx along ``axis`` in WENO5 flux form."""
    axis = axis % u.ndim
    n = u.shape[axis]
    flux = velocity * u
    fp = _pad(0.5 * (flux + alpha * u), axis, periodic)
    fm = _pad(0.5 * (flux - alpha * u), axis, periodic)
    m = n + 1  # faces -1/2 .. n-1/2
    w = [_window(fp, axis, k, m) for k in range(5)]
    face = weno5_reconstruct(*w)
    w = [_window(fm, axis, k, m) for k in range(1, 6)]
    face = face + weno5_reconstruct(w[4], w[3], w[2], w[1], w[0])
    return (_window(face, axis, 1, n) - _window(face, axis, 0, n)) / h


def _stage_times(t, dt):
    return (t, t + dt, t + 0.5 * dt)


def ssprk3(u, rhs, t, dt):
    t0, t1, th = _stage_times(t, dt)
    u1 = u + dt * rhs(u, t0)
    u2 = 0.75 * u + 0.25 * (u1 + dt * rhs(u1, t1))
    return u / 3.0 + 2.0 / 3.0 * (u2 + dt * rhs(u2, th))


def _check_cfl(cfl):
    if not np.isfinite(cfl) or cfl > MAX_CFL + _CFL_SLACK:
        raise ValueError(f"CFL number {cfl:.4g} exceeds the WENO5 limit {MAX_CFL}")


def weno5_advect_step_1d(U, vfield, grid: Grid1D, t: float, dt: float) -> np.ndarray:
    """One SSPRK3 step of u_t + (a u)_x = 0."""
    x = grid.coordinates()
    speeds = {tt: vfield(x, tt) for tt in _stage_times(t, dt)}
    _check_cfl(max(np.max(np.abs(a)) for a in speeds.values()) * dt / grid.h)

    def rhs(u, tt):
        a = speeds[tt]
        return -flux_divergence(u, a, np.max(np.abs(a)), grid.h, periodic=grid.periodic)

    return ssprk3(np.asarray(U, dtype=float), rhs, t, dt)


def weno5_advect_step_2d(U, vfield, grid: Grid2D, t: float, dt: float) -> np.ndarray:
    """One SSPRK3 step of u_t + (a u)_x + (b u)_y = 0 on a (ny, nx) array."""
    X, Y = grid.meshgrid()
    speeds = {tt: vfield(X, Y, tt) for tt in _stage_times(t, dt)}
    _check_cfl(max(max(np.max(np.abs(a)) / grid.hx, np.max(np.abs(b)) / grid.hy) * dt
                   for a, b in speeds.values()))

    def rhs(u, tt):
        a, b = speeds[tt]
        return -(flux_divergence(u, a, np.max(np.abs(a)), grid.hx, axis=1,
                                 periodic=grid.x.periodic)
                 + flux_divergence(u, b, np.max(np.abs(b)), grid.hy, axis=0,
                                   periodic=grid.y.periodic))

    return ssprk3(np.asarray(U, dtype=float), rhs, t, dt)


def weno5_evolve(U, vfield, grid, t0: float, t1: float, cfl: float = 0.4):
    """Advance from t0 to t1 in equal SSPRK3 steps with Courant number <= cfl."""
    if t1 <= t0:
        return np.array(U, dtype=float)
    speed = vfield.max_speed(grid, t0, t1)
    h = grid.h if isinstance(grid, Grid1D) else min(grid.hx, grid.hy)
    nsteps = max(1, math.ceil((t1 - t0) * speed / (cfl * h) - 1e-9))
    dt = (t1 - t0) / nsteps
    step = weno5_advect_step_1d if isinstance(grid, Grid1D) else weno5_advect_step_2d
    u = np.array(U, dtype=float)
    for k in range(nsteps):
        u = step(u, vfield, grid, t0 + k * dt, dt)
    return u


# --------------------------------------------------------------------------
# Vlasov-Poisson reference solver
# --------------------------------------------------------------------------


def vp_density(f: np.ndarray, grid: Grid2D) -> np.ndarray:
    return grid.hy * np.sum(f, axis=0)


def vp_field(f: np.ndarray, grid: Grid2D) -> np.ndarray:
    """Electric field for a neutralizing background equal to the mean density."""
    rho = vp_density(f, grid)
    return poisson_periodic(rho, grid.x, background=float(np.mean(rho)))


def vp_cfl(E: np.ndarray, grid: Grid2D, dt: float) -> float:
    vmax = max(abs(grid.y.x_min), abs(grid.y.x_max - grid.hy))
    return dt * max(vmax / grid.hx, float(np.max(np.abs(E))) / grid.hy)


def vlasov_reference_step(f: np.ndarray, grid: Grid2D, dt: float) -> np.ndarray:
    """One SSPRK3 step of f_t + v f_x + E f_v = 0 with E from Poisson per stage.

    ``f`` has shape ``(nv, nx)``; the velocity axis has zero ghost values.
    """
    v = grid.y.coordinates()[:, None]
    alpha_x = float(np.max(np.abs(v)))

    def rhs(u, tt):
        E = vp_field(u, grid)
        _check_cfl(vp_cfl(E, grid, dt))
        Eb = np.broadcast_to(E[None, :], u.shape)
        return -(flux_divergence(u, v, alpha_x, grid.hx, axis=1, periodic=True)
                 + flux_divergence(u, Eb, float(np.max(np.abs(E))), grid.hy, axis=0,
                                   periodic=False))

    return ssprk3(np.asarray(f, dtype=float), rhs, 0.0, dt)
