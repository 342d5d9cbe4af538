"""Reference trajectories: fine-grid classical solves, coarsened, with shifts."""

from __future__ import annotations

import math

import numpy as np

from .characteristics import default_substeps, trace_1d, trace_2d
from .classical import vlasov_reference_step, weno5_evolve
from .grid import Grid1D, coarsen_array
from .io import TrajectoryFile
from .problems import ProblemSpec, make_rng

GENERATOR_TAG = "weno5-ssprk3/v1"


def coarse_time_step(problem: ProblemSpec, cfl: float) -> tuple[float, int]:
    """Return (dt, number of states) for a coarse trajectory at Courant number ``cfl``.

    Fixed-period problems round the step count up so that the period is hit
    exactly; the effective Courant number is then at most ``cfl``.
    """
    grid = problem.grid_coarse
    if problem.kind == "vp":
        vmax = max(abs(grid.y.x_min), abs(grid.y.x_max))
        dt = cfl * grid.hx / vmax
    else:
        h = grid.h if isinstance(grid, Grid1D) else min(grid.hx, grid.hy)
        vmax = problem.velocity().max_speed(grid)
        dt = cfl * h / vmax
    if problem.period is not None and problem.steps == 0:
        n = max(1, math.ceil(problem.period / dt - 1e-9))
        return problem.period / n, n + 1
    return dt, problem.steps


def generate_linear(problem: ProblemSpec, rng: np.random.Generator, cfl: float | None = None,
                    seed: int | None = None) -> TrajectoryFile:
    if cfl is None:
        lo, hi = problem.cfl_range
        cfl = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
    init, ic_params = problem.sample_initial(rng)
    fine, coarse = problem.grid_fine, problem.grid_coarse
    vfield = problem.velocity()
    dt, n_states = coarse_time_step(problem, cfl)
    u = problem.initial_values(init, fine)
    states = [coarsen_array(u, problem.factor)]
    xis, etas = [], []
    sub = default_substeps(cfl)
    for m in range(n_states - 1):
        t0, t1 = m * dt, (m + 1) * dt
        u = weno5_evolve(u, vfield, fine, t0, t1, cfl=problem.fine_cfl)
        states.append(coarsen_array(u, problem.factor))
        if problem.dim == 1:
            xis.append(trace_1d(vfield, coarse, t1, dt, sub))
        else:
            xi, eta = trace_2d(vfield, coarse, t1, dt, sub)
            xis.append(xi)
            etas.append(eta)
    arrays = {"U": np.stack(states), "xi": np.stack(xis) if xis else
              np.zeros((0,) + coarse.shape)}
    if problem.dim == 2:
        arrays["eta"] = np.stack(etas) if etas else np.zeros((0,) + coarse.shape)
    header = _header(problem, coarse, cfl, dt, n_states, seed, ic_params, "U")
    header["initial_exact"] = True
    return TrajectoryFile(header, arrays)


def generate_vp(problem: ProblemSpec, rng: np.random.Generator, cfl: float | None = None,
                seed: int | None = None) -> TrajectoryFile:
    if cfl is None:
        lo, hi = problem.cfl_range
        cfl = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
    init, ic_params = problem.sample_initial(rng)
    fine, coarse = problem.grid_fine, problem.grid_coarse
    dt, n_states = coarse_time_step(problem, cfl)
    X, V = fine.meshgrid()
    f = np.asarray(init(X, V), dtype=float)
    vmax = max(abs(fine.y.x_min), abs(fine.y.x_max))
    states = [coarsen_array(f, problem.factor)]
    for _m in range(n_states - 1):
        # substeps sized for the free-streaming limit; the field term is checked per stage
        n_sub = max(1, math.ceil(dt * vmax / (problem.fine_cfl * fine.hx) - 1e-9))
        for _k in range(n_sub):
            f = vlasov_reference_step(f, fine, dt / n_sub)
        states.append(coarsen_array(f, problem.factor))
    header = _header(problem, coarse, cfl, dt, n_states, seed, ic_params, "f")
    return TrajectoryFile(header, {"f": np.stack(states)})


def generate(problem: ProblemSpec, rng: np.random.Generator, **kw) -> TrajectoryFile:
    if problem.kind == "vp":
        return generate_vp(problem, rng, **kw)
    return generate_linear(problem, rng, **kw)


def generate_many(problem: ProblemSpec, count: int, seed: int) -> list[TrajectoryFile]:
    """``count`` trajectories from one seeded stream; trajectory k is reproducible."""
    rng = make_rng(seed)
    out = []
    for k in range(count):
        traj = generate(problem, rng, seed=seed)
        traj.header["trajectory_id"] = k
        out.append(traj)
    return out


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer, int)) and not isinstance(v, bool):
        return int(v)
    return v


def problem_to_dict(problem: ProblemSpec) -> dict:
    return _jsonable({
        "name": problem.name, "dim": problem.dim, "kind": problem.kind,
        "domain": problem.domain, "n_fine": problem.n_fine, "factor": problem.factor,
        "steps": problem.steps, "cfl_range": problem.cfl_range, "fine_cfl": problem.fine_cfl,
        "params": problem.params, "period": problem.period, "periodic_y": problem.periodic_y})


def _header(problem, coarse, cfl, dt, n_states, seed, ic_params, state_field) -> dict:
    return _jsonable({
        "generator": GENERATOR_TAG, "problem": problem_to_dict(problem),
        "grid": coarse.to_dict(), "cfl": cfl, "dt": dt, "n_states": n_states,
        "state_field": state_field, "seed": seed, "ic_params": ic_params,
        "cfl_sampling": "per-trajectory"})
