"""Datasets, one-step and unrolled training, and evaluation reports."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import graph as graphs
from . import model as nn
from . import nnad as ad
from . import vp
from .classical import sl_fd_first_order, sl_linear_conservative
from .grid import Grid1D, Grid2D, grid_from_dict
from .io import FormatError, TrajectoryFile
from .problems import make_rng

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class TrainingPair:
    U: np.ndarray
    target: np.ndarray
    xi: np.ndarray
    eta: np.ndarray | None
    meta: dict = field(default_factory=dict)
    _graph: graphs.UpstreamGraph | None = field(default=None, repr=False)

    def graph(self, grid) -> graphs.UpstreamGraph:
        if self._graph is None:
            self._graph = graphs.build(grid, self.xi, self.eta)
        return self._graph


@dataclass
class Dataset:
    grid: Grid1D | Grid2D
    pairs: list[TrainingPair]
    cfl_range: tuple[float, float]
    problem: str = ""
    source_hash: str = ""

    def __len__(self):
        return len(self.pairs)

    def __getitem__(self, k):
        return self.pairs[k]

    def __iter__(self):
        return iter(self.pairs)


def _load(t) -> TrajectoryFile:
    if isinstance(t, TrajectoryFile):
        return t
    try:
        return TrajectoryFile.read(t)
    except OSError as exc:
        raise FormatError(f"cannot read {t}: {exc}") from None


def build_dataset(trajectories) -> Dataset:
    """Adjacent-step pairs from every trajectory; all must share one grid."""
    trajs = [_load(t) for t in trajectories]
    if not trajs:
        raise ValueError("no trajectories given")
    grid_spec = trajs[0].header["grid"]
    pairs, cfls = [], []
    for k, tr in enumerate(trajs):
        if tr.header["grid"] != grid_spec:
            raise ValueError(f"trajectory {k} is on a different grid")
        U = tr.arrays["U"]
        xi = tr.arrays["xi"]
        eta = tr.arrays.get("eta")
        if len(xi) != len(U) - 1:
            raise FormatError(f"trajectory {k} has {len(U)} states but {len(xi)} shift records")
        cfl = float(tr.header["cfl"])
        cfls.append(cfl)
        tid = tr.header.get("trajectory_id", k)
        for m in range(len(U) - 1):
            pairs.append(TrainingPair(
                U[m], U[m + 1], xi[m], None if eta is None else eta[m],
                {"trajectory": tid, "step": m, "cfl": cfl, "dt": float(tr.header["dt"])}))
    return Dataset(grid_from_dict(grid_spec), pairs, (min(cfls), max(cfls)),
                   trajs[0].header.get("problem", {}).get("name", ""))


def _batch(pairs: list[TrainingPair], grid):
    U = np.stack([p.U for p in pairs])
    target = np.stack([p.target for p in pairs])
    xi = np.stack([p.xi for p in pairs])
    eta = None if pairs[0].eta is None else np.stack([p.eta for p in pairs])
    g = graphs.union([p.graph(grid) for p in pairs])
    return U, target, xi, eta, g


def _grads(params: nn.ModelParams) -> dict:
    return {k: t.grad for k, t in params}


def windows(data: Dataset, length: int = 1) -> list[list[TrainingPair]]:
    """Runs of ``length`` consecutive pairs from one trajectory (all pairs when 1)."""
    if length < 1:
        raise ValueError("unroll length must be positive")
    if length == 1:
        return [[p] for p in data.pairs]
    out, run = [], []
    for p in data.pairs:
        if run and (p.meta["trajectory"] != run[-1].meta["trajectory"]
                    or p.meta["step"] != run[-1].meta["step"] + 1):
            run = []
        run.append(p)
        if len(run) >= length:
            out.append(run[-length:])
    return out


def _window_loss(params: nn.ModelParams, grid, chunk: list[list[TrainingPair]], tensor: bool,
                 noise: np.ndarray | None = None):
    """Mean over unrolled steps of the batch MSE, starting from the first stored state."""
    length = len(chunk[0])
    U = np.stack([w[0].U for w in chunk])
    if noise is not None:
        U = U + noise
    u = ad.Tensor(U) if tensor else U
    loss = None
    for k in range(length):
        step_pairs = [w[k] for w in chunk]
        _, target, xi, eta, g = _batch(step_pairs, grid)
        u = nn.step(params, grid, u, xi, eta, g=g)
        term = ad.mse(u, target) if tensor else float(np.mean((u - target) ** 2))
        loss = term if loss is None else loss + term
    return loss * (1.0 / length)


def unrolled_loss(params: nn.ModelParams, data: Dataset, length: int = 1,
                  batch_size: int = 64) -> float:
    """Mean over windows of the ``length``-step rollout loss (one-step MSE when 1)."""
    wins = windows(data, length)
    if not wins:
        raise ValueError(f"no trajectory has {length} consecutive pairs")
    total = 0.0
    for lo in range(0, len(wins), batch_size):
        chunk = wins[lo:lo + batch_size]
        total += _window_loss(params, data.grid, chunk, tensor=False) * len(chunk)
    return total / len(wins)


def dataset_loss(params: nn.ModelParams, data: Dataset, batch_size: int = 64) -> float:
    """Mean over pairs of the per-pair MSE of one model step."""
    return unrolled_loss(params, data, 1, batch_size)


@dataclass
class TrainResult:
    params: nn.ModelParams
    history: list[float]
    val_history: list[float] = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False


def train_one_step(params: nn.ModelParams, dataset: Dataset, epochs: int, lr: float = 1e-3,
                   seed: int = 0, batch_size: int = 8, validation: Dataset | None = None,
                   patience: int = 50, on_epoch: Callable | None = None,
                   unroll: int = 1, val_unroll: int | None = None,
                   input_noise: float = 0.0) -> TrainResult:
    """Adam on the MSE of model steps with shuffled minibatches.

    With ``unroll`` > 1 each sample is a window of consecutive pairs and the
    loss is the mean MSE along a free rollout from the window's first state.
    With ``validation`` the parameters of the best validation epoch are
    returned and training stops after ``patience`` epochs without improvement.
    ``val_unroll`` sets the validation window length (default ``unroll``).
    ``input_noise`` adds Gaussian noise of that standard deviation to each
    window's starting state (targets unchanged).
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    wins = windows(dataset, unroll)
    if not wins:
        raise ValueError(f"no trajectory has {unroll} consecutive pairs")
    params = params.copy()
    rng = make_rng(seed)
    opt = ad.Adam(params.tensors, lr=lr)
    history, val_history = [], []
    best, best_state, best_epoch, stale = math.inf, None, -1, 0
    stopped = False
    for epoch in range(epochs):
        order = rng.permutation(len(wins))
        total = 0.0
        for lo in range(0, len(order), batch_size):
            chunk = [wins[k] for k in order[lo:lo + batch_size]]
            noise = None
            if input_noise > 0:
                noise = input_noise * rng.standard_normal((len(chunk),) + chunk[0][0].U.shape)
            params.zero_grad()
            with ad.Tape() as tape:
                loss = _window_loss(params, dataset.grid, chunk, tensor=True, noise=noise)
            if not np.isfinite(loss.data):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch starting {lo}")
            tape.backward(loss)
            opt.step()
            total += float(loss.data) * len(chunk)
        history.append(total / len(wins))
        if validation is not None:
            v = unrolled_loss(params, validation, val_unroll or unroll)
            val_history.append(v)
            if v < best:
                best, best_epoch, stale = v, epoch, 0
                best_state = {k: t.data.copy() for k, t in params}
            else:
                stale += 1
        if on_epoch is not None:
            on_epoch(epoch, history[-1], val_history[-1] if val_history else None)
        if validation is not None and stale >= patience:
            stopped = True
            break
    if best_state is not None:
        for k, t in params:
            t.data = best_state[k]
    return TrainResult(params, history, val_history, best_epoch, stopped)


# ---------------------------------------------------------------- VP unrolled training

@dataclass
class RolloutWindow:
    f0: np.ndarray
    refs: np.ndarray  # (L, nv, nx) states after steps 1..L
    dt: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.refs.ndim != 3 or self.refs.shape[1:] != self.f0.shape:
            raise ValueError("reference states must match the initial state")


def build_windows(trajectories, length: int = 8, stride: int | None = None) -> tuple[Grid2D,
                                                                                      list]:
    """Consecutive windows of ``length`` steps from VP trajectory files."""
    trajs = [_load(t) for t in trajectories]
    grid_spec = trajs[0].header["grid"]
    stride = stride or length
    out = []
    for k, tr in enumerate(trajs):
        if tr.header["grid"] != grid_spec:
            raise ValueError(f"trajectory {k} is on a different grid")
        f = tr.arrays["f"]
        for s in range(0, len(f) - length, stride):
            out.append(RolloutWindow(f[s], f[s + 1:s + 1 + length], float(tr.header["dt"]),
                                     {"trajectory": tr.header.get("trajectory_id", k), "start": s}))
    return grid_from_dict(grid_spec), out


def _rkei2_tensor_step(params, grid: Grid2D, f: ad.Tensor, dt: float) -> ad.Tensor:
    """rkei2 with the learned evolve; gradients flow only through solution values."""
    E = vp.poisson_field(f.data, grid)
    tr = vp._shifts(E, grid, 0.5 * dt, None)
    f_half = nn.step(params, grid, f.data, tr.xi, tr.eta)
    tr = vp._shifts(vp.poisson_field(f_half, grid), grid, dt, None)
    return nn.step(params, grid, f, tr.xi, tr.eta)


def rollout_loss(params, grid: Grid2D, window: RolloutWindow,
                 mass_tol: float = 1e-12) -> tuple[ad.Tensor, float]:
    """Mean over the window of per-step MSE; returns (loss, max relative mass drift)."""
    f = ad.Tensor(window.f0)
    m0 = abs(float(np.sum(window.f0)))
    loss = None
    drift = 0.0
    for k in range(len(window.refs)):
        f = _rkei2_tensor_step(params, grid, f, window.dt)
        drift = max(drift, abs(float(np.sum(f.data)) - float(np.sum(window.f0))) / m0)
        term = ad.mse(f, window.refs[k])
        loss = term if loss is None else loss + term
    if drift > mass_tol:
        raise FloatingPointError(f"mass drift {drift:.3e} during rollout")
    return loss * (1.0 / len(window.refs)), drift


def train_unrolled(params: nn.ModelParams, grid: Grid2D, windows: list[RolloutWindow],
                   epochs: int, lr: float = 1e-3, seed: int = 0,
                   on_epoch: Callable | None = None) -> TrainResult:
    if not windows:
        raise ValueError("no rollout windows")
    params = params.copy()
    rng = make_rng(seed)
    opt = ad.Adam(params.tensors, lr=lr)
    history = []
    for epoch in range(epochs):
        total = 0.0
        for k in rng.permutation(len(windows)):
            params.zero_grad()
            with ad.Tape() as tape:
                loss, _ = rollout_loss(params, grid, windows[k])
            if not np.isfinite(loss.data):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, window {k}")
            tape.backward(loss)
            opt.step()
            total += float(loss.data)
        history.append(total / len(windows))
        if on_epoch is not None:
            on_epoch(epoch, history[-1], None)
    return TrainResult(params, history)


# ---------------------------------------------------------------- evaluation

Stepper = Callable[[np.ndarray, np.ndarray, np.ndarray | None], np.ndarray]


def model_stepper(params: nn.ModelParams, grid) -> Stepper:
    return lambda U, xi, eta: nn.step(params, grid, U, xi, eta)


def baseline_stepper(grid) -> Stepper:
    """First-order conservative SL: flux form in 1D, bilinear + equalization in 2D."""
    if isinstance(grid, Grid1D):
        return lambda U, xi, eta: sl_fd_first_order(U, xi)
    return lambda U, xi, eta: sl_linear_conservative(U, grid, xi, eta)


def rollout(stepper: Stepper, traj: TrajectoryFile, steps: int | None = None):
    """Autoregressive rollout from the first stored state with stored shifts.

    Returns (states, seconds per step).
    """
    U = traj.arrays["U"]
    xi = traj.arrays["xi"]
    eta = traj.arrays.get("eta")
    n = len(xi) if steps is None else min(steps, len(xi))
    out = [U[0].copy()]
    t0 = time.perf_counter()
    for m in range(n):
        out.append(stepper(out[-1], xi[m], None if eta is None else eta[m]))
    elapsed = (time.perf_counter() - t0) / max(n, 1)
    return np.stack(out), elapsed


def _mse(a, b) -> float:
    return float(np.mean((np.asarray(a) - np.asarray(b)) ** 2))


def evaluate(stepper: Stepper | nn.ModelParams, trajectories, trained_cfl_range=None,
             baseline: bool = True, steps: int | None = None) -> tuple[dict, dict]:
    """Per-trajectory MSE and mass deviation histories.

    Returns ``(report, timing)``. The report depends only on the inputs and is
    reproducible byte for byte; wall-clock figures go to ``timing``.
    """
    trajs = [_load(t) for t in trajectories]
    if not trajs:
        raise ValueError("no trajectories to evaluate")
    grid = grid_from_dict(trajs[0].header["grid"])
    if isinstance(stepper, nn.ModelParams):
        stepper = model_stepper(stepper, grid)
    base = baseline_stepper(grid) if baseline else None
    entries, timing, warnings_ = [], [], []
    for k, tr in enumerate(trajs):
        if tr.header["grid"] != trajs[0].header["grid"]:
            raise ValueError(f"trajectory {k} is on a different grid")
        cfl = float(tr.header["cfl"])
        msg = nn.cfl_warning(trained_cfl_range, cfl) if trained_cfl_range else None
        if msg and msg not in warnings_:
            warnings_.append(msg)
        states, sec = rollout(stepper, tr, steps)
        ref = tr.arrays["U"][: len(states)]
        m0 = float(np.sum(states[0]))
        scale = abs(m0) if m0 != 0 else 1.0
        entry = {
            "id": tr.header.get("trajectory_id", k), "cfl": cfl, "dt": float(tr.header["dt"]),
            "steps": len(states) - 1,
            "mse": [_mse(s, r) for s, r in zip(states, ref)],
            "mass_deviation": [abs(float(np.sum(s)) - m0) / scale for s in states],
        }
        entry["final_mse"] = entry["mse"][-1]
        entry["mean_mse"] = float(np.mean(entry["mse"][1:])) if len(states) > 1 else 0.0
        entry["max_mass_deviation"] = max(entry["mass_deviation"])
        if base is not None:
            bstates, _ = rollout(base, tr, steps)
            entry["baseline_mse"] = [_mse(s, r) for s, r in zip(bstates, ref)]
            entry["baseline_final_mse"] = entry["baseline_mse"][-1]
            entry["baseline_mean_mse"] = (float(np.mean(entry["baseline_mse"][1:]))
                                          if len(bstates) > 1 else 0.0)
        entries.append(entry)
        timing.append({"id": entry["id"], "seconds_per_step": sec})
    summary = {
        "n_trajectories": len(entries),
        "mean_final_mse": float(np.mean([e["final_mse"] for e in entries])),
        "mean_mse": float(np.mean([e["mean_mse"] for e in entries])),
        "max_mass_deviation": max(e["max_mass_deviation"] for e in entries),
    }
    if base is not None:
        summary["baseline_mean_final_mse"] = float(np.mean([e["baseline_final_mse"]
                                                            for e in entries]))
        summary["baseline_mean_mse"] = float(np.mean([e["baseline_mean_mse"] for e in entries]))
    report = {"grid": trajs[0].header["grid"], "problem": trajs[0].header.get("problem", {}),
              "trained_cfl_range": list(trained_cfl_range) if trained_cfl_range else None,
              "warnings": warnings_, "trajectories": entries, "summary": summary}
    return report, {"trajectories": timing}


def paths_in(directory) -> list[Path]:
    return sorted(Path(directory).glob("*.traj"))
