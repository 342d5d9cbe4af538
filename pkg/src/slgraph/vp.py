"""Vlasov-Poisson stepping with frozen-field semi-Lagrangian stages.

An *evolve* operator maps ``(f, xi, eta) -> f_new`` for one frozen-field
transport step given the normalized shifts. The learned model, the
conservative bilinear baseline and a high-order interpolation reference all
fit this signature, so the exponential-integrator drivers below are shared.

Arrays are laid out as ``f[j, i]`` with ``j`` along velocity and ``i`` along x.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import model as nn
from .characteristics import default_substeps, trace_vp
from .classical import sl_interp_highorder_2d, sl_linear_conservative
from .classical.poisson import poisson_periodic
from .grid import Grid2D

Evolve = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
FieldSolver = Callable[[np.ndarray, Grid2D, float], np.ndarray]


def density(f: np.ndarray, grid: Grid2D) -> np.ndarray:
    """rho_i = hv * sum_j f_ji (rectangle rule)."""
    return grid.hy * np.sum(np.asarray(f, dtype=float), axis=0)


def poisson_field(f: np.ndarray, grid: Grid2D, t: float = 0.0) -> np.ndarray:
    """Self-consistent E with a neutralizing background equal to the mean density."""
    rho = density(f, grid)
    return poisson_periodic(rho, grid.x, background=float(np.mean(rho)))


def zero_field(f: np.ndarray, grid: Grid2D, t: float = 0.0) -> np.ndarray:
    return np.zeros(grid.nx)


def electric_energy(E, hx: float) -> float:
    E = np.asarray(E, dtype=float)
    return 0.5 * hx * float(np.sum(E * E))


def mass(f: np.ndarray, grid: Grid2D) -> float:
    return float(np.sum(f)) * grid.hx * grid.hy


@dataclass(frozen=True)
class VPState:
    f: np.ndarray
    E: np.ndarray
    rho: np.ndarray
    t: float
    grid: Grid2D

    def __post_init__(self):
        if self.f.shape != self.grid.shape:
            raise ValueError(f"f has shape {self.f.shape}, grid is {self.grid.shape}")
        if not np.all(np.isfinite(self.f)):
            raise FloatingPointError("distribution function is not finite")

    @classmethod
    def from_f(cls, f, grid: Grid2D, t: float = 0.0,
               field: FieldSolver = poisson_field) -> VPState:
        f = np.array(f, dtype=float)
        return cls(f, field(f, grid, t), density(f, grid), float(t), grid)

    @property
    def mass(self) -> float:
        return mass(self.f, self.grid)

    @property
    def energy(self) -> float:
        return electric_energy(self.E, self.grid.hx)


def _shifts(E, grid, dt, substeps):
    if substeps is None:
        vmax = max(abs(grid.y.x_min), abs(grid.y.x_max))
        cfl = dt * max(vmax / grid.hx, float(np.max(np.abs(E))) / grid.hy)
        substeps = default_substeps(cfl)
    return trace_vp(E, grid, dt, substeps)


def rkei1_step(state: VPState, dt: float, evolve: Evolve,
               field: FieldSolver = poisson_field, substeps: int | None = None) -> VPState:
    """F^{m+1} = S(E^m, dt) F^m."""
    tr = _shifts(state.E, state.grid, dt, substeps)
    f1 = evolve(state.f, tr.xi, tr.eta)
    t1 = state.t + dt
    return replace(state, f=f1, E=field(f1, state.grid, t1), rho=density(f1, state.grid), t=t1)


def rkei2_step(state: VPState, dt: float, evolve: Evolve,
               field: FieldSolver = poisson_field, substeps: int | None = None) -> VPState:
    """F* = S(E^m, dt/2) F^m, then F^{m+1} = S(E*, dt) F^m.

    The second stage restarts from F^m; only the field comes from F*.
    """
    grid = state.grid
    tr = _shifts(state.E, grid, 0.5 * dt, substeps)
    f_half = evolve(state.f, tr.xi, tr.eta)
    E_half = field(f_half, grid, state.t + 0.5 * dt)
    tr = _shifts(E_half, grid, dt, substeps)
    f1 = evolve(state.f, tr.xi, tr.eta)
    t1 = state.t + dt
    return replace(state, f=f1, E=field(f1, grid, t1), rho=density(f1, grid), t=t1)


SCHEMES = {"rkei1": rkei1_step, "rkei2": rkei2_step}


# ---------------------------------------------------------------- evolve operators

def baseline_evolve(grid: Grid2D) -> Evolve:
    """Conservative first-order bilinear SL update on the upstream graph."""
    return lambda f, xi, eta: sl_linear_conservative(f, grid, xi, eta)


def highorder_evolve(grid: Grid2D, v_order: int = 8) -> Evolve:
    """Spectral-in-x, Lagrange-in-v interpolation (non-conservative reference)."""
    return lambda f, xi, eta: sl_interp_highorder_2d(f, grid, xi, eta, v_order)


def model_evolve(params: nn.ModelParams, grid: Grid2D) -> Evolve:
    return lambda f, xi, eta: nn.step(params, grid, f, xi, eta)


# ---------------------------------------------------------------- driving and diagnostics

DIAGNOSTIC_COLUMNS = ("t", "mass", "electric_energy", "min_f", "max_f")


def diagnostics(state: VPState) -> tuple[float, float, float, float, float]:
    return (state.t, state.mass, state.energy, float(np.min(state.f)), float(np.max(state.f)))


def run(state: VPState, dt: float, steps: int, evolve: Evolve, scheme: str = "rkei2",
        field: FieldSolver = poisson_field, callback=None) -> tuple[VPState, list[tuple]]:
    """Advance ``steps`` steps; returns the final state and diagnostic rows."""
    stepper = SCHEMES[scheme]
    rows = [diagnostics(state)]
    for m in range(steps):
        state = stepper(state, dt, evolve, field)
        rows.append(diagnostics(state))
        if callback is not None:
            callback(m + 1, state)
    return state, rows


def diagnostics_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DIAGNOSTIC_COLUMNS)
    for r in rows:
        w.writerow([repr(float(v)) for v in r])
    return buf.getvalue()


def stable_dt(grid: Grid2D, cfl: float, E_max: float = 0.0) -> float:
    """Time step giving Courant number ``cfl`` for the x free-streaming."""
    vmax = max(abs(grid.y.x_min), abs(grid.y.x_max))
    return cfl / max(vmax / grid.hx, E_max / grid.hy)


def landau_damping_rate_fit(times, energies, t_window=None) -> float:
    """Least-squares slope of log(energy) through its local maxima."""
    t = np.asarray(times, dtype=float)
    e = np.log(np.asarray(energies, dtype=float))
    peaks = [k for k in range(1, len(e) - 1) if e[k] >= e[k - 1] and e[k] > e[k + 1]]
    if t_window is not None:
        peaks = [k for k in peaks if t_window[0] <= t[k] <= t_window[1]]
    if len(peaks) < 2:
        raise ValueError("not enough energy maxima to fit a slope")
    return float(np.polyfit(t[peaks], e[peaks], 1)[0])

