"""Command-line entry point: generate, train, simulate, evaluate, vp.

Exit codes: 0 success, 1 usage error, 2 invalid config, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import datagen
from . import model as nn
from . import train as tr
from . import vp
from .characteristics import default_substeps, trace_1d, trace_2d
from .grid import Grid1D, Grid2D
from .io import FormatError, TrajectoryFile, canonical_json, dataset_hash, file_sha256
from .io import load_checkpoint, save_checkpoint
from .problems import (PROBLEMS, eval_landau, eval_multi_mode, eval_two_stream, get_problem,
                       make_rng)

log = logging.getLogger("slgraph")

EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 1, 2, 3

_RANGE = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["problem"],
    "properties": {
        "problem": {"enum": sorted(PROBLEMS)},
        "seed": {"type": "integer", "minimum": 0},
        "n_fine": {"type": "integer", "minimum": 4},
        "factor": {"type": "integer", "minimum": 1},
        "steps": {"type": "integer", "minimum": 0},
        "cfl_range": _RANGE,
        "fine_cfl": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.6},
        "problem_params": {"type": "object"},
        "trajectories": {"type": "integer", "minimum": 0},
        "data_dir": {"type": "string"},
        "validation_dir": {"type": "string"},
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "conv_layers": {"type": "integer", "minimum": 1},
                "filters": {"type": "integer", "minimum": 1},
                "kernel": {"type": "integer", "minimum": 1},
                "gat_layers": {"type": "integer", "minimum": 1},
                "hidden": {"type": "integer", "minimum": 1},
                "heads": {"type": "integer", "minimum": 1},
                "decoder_hidden": {"type": "integer", "minimum": 1},
                "attention": {"enum": ["v1", "v2"]},
                "self_loops": {"type": "boolean"},
                "upstream_coords": {"type": "boolean"},
                "local_shift_input": {"type": "boolean"},
                "shift_gate": {"type": "boolean"},
                "edge_offsets": {"type": "boolean"},
                "linear_skip": {"type": "boolean"},
                "init_seed": {"type": "integer", "minimum": 0},
            },
        },
        "training": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epochs": {"type": "integer", "minimum": 0},
                "lr": {"type": "number", "exclusiveMinimum": 0},
                "batch_size": {"type": "integer", "minimum": 1},
                "patience": {"type": "integer", "minimum": 1},
                "unroll": {"type": "integer", "minimum": 1},
                "val_unroll": {"type": "integer", "minimum": 1},
                "input_noise": {"type": "number", "minimum": 0},
                "loss": {"enum": ["mse"]},
            },
        },
        "simulate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "cfl": {"type": "number", "exclusiveMinimum": 0},
                "steps": {"type": "integer", "minimum": 0},
            },
        },
        "vp": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alpha": {"type": "number", "minimum": 0},
                "nx": {"type": "integer", "minimum": 4},
                "nv": {"type": "integer", "minimum": 4},
                "cfl": {"type": "number", "exclusiveMinimum": 0},
                "t_end": {"type": "number", "minimum": 0},
                "scheme": {"enum": ["rkei1", "rkei2"]},
                "save_every": {"type": "integer", "minimum": 1},
            },
        },
    },
}


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def load_config(path, seed: int | None = None) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config {path}: {where}: {exc.message}") from None
    if seed is not None:
        cfg["seed"] = seed
    cfg.setdefault("seed", 0)
    return cfg


def problem_from_config(cfg: dict):
    base = get_problem(cfg["problem"])
    over = {k: cfg.get(k) for k in ("n_fine", "factor", "steps", "fine_cfl")}
    if "cfl_range" in cfg:
        lo, hi = cfg["cfl_range"]
        if lo > hi or lo <= 0:
            raise ConfigError("cfl_range must satisfy 0 < lo <= hi")
        over["cfl_range"] = (float(lo), float(hi))
    over["params"] = cfg.get("problem_params")
    try:
        p = base.with_overrides(**over)
        p.grid_coarse  # noqa: B018 - validates divisibility
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return p


def model_config(cfg: dict, problem) -> nn.ModelConfig:
    kw = {k: v for k, v in cfg.get("model", {}).items() if k != "init_seed"}
    try:
        if problem.kind == "vp":
            return nn.ModelConfig.vlasov(**kw)
        if problem.dim == 2:
            return nn.ModelConfig.linear_2d(periodic=(problem.periodic_y, True), **kw)
        return nn.ModelConfig.linear_1d(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _out_dir(args, default: str) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_bytes(canonical_json(obj))


def _trajectory_paths(ref) -> list[Path]:
    p = Path(ref)
    paths = tr.paths_in(p) if p.is_dir() else [p]
    if not paths:
        raise FormatError(f"no trajectory files under {ref}")
    return paths


# ---------------------------------------------------------------- subcommands

def cmd_generate(args) -> int:
    cfg = load_config(args.config, args.seed)
    problem = problem_from_config(cfg)
    out = _out_dir(args, "data")
    count = cfg.get("trajectories", 30)
    rng = make_rng(cfg["seed"])
    for k in range(count):
        traj = datagen.generate(problem, rng, seed=cfg["seed"])
        traj.header["trajectory_id"] = k
        path = traj.write(out / f"traj_{k:04d}.traj")
        log.info("wrote %s (cfl %.4f, %d states)", path, traj.header["cfl"], traj.n_states)
    return 0


def _progress(epoch, loss, val):
    extra = "" if val is None else f" val {val:.4e}"
    log.info("epoch %d loss %.4e%s", epoch, loss, extra)


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.seed)
    problem = problem_from_config(cfg)
    if "data_dir" not in cfg:
        raise ConfigError("training needs data_dir")
    paths = _trajectory_paths(cfg["data_dir"])
    tcfg = cfg.get("training", {})
    mcfg = model_config(cfg, problem)
    params = nn.init_params(mcfg, cfg.get("model", {}).get("init_seed", cfg["seed"]))
    epochs = tcfg.get("epochs", 300)
    lr = tcfg.get("lr", 1e-3)
    if problem.kind == "vp":
        grid, windows = tr.build_windows(paths, tcfg.get("unroll", 8))
        result = tr.train_unrolled(params, grid, windows, epochs, lr, cfg["seed"],
                                   on_epoch=_progress)
        trained_range = list(problem.cfl_range)
    else:
        data = tr.build_dataset(paths)
        val = tr.build_dataset(_trajectory_paths(cfg["validation_dir"])) \
            if "validation_dir" in cfg else None
        result = tr.train_one_step(params, data, epochs, lr, cfg["seed"],
                                   tcfg.get("batch_size", 8), val, tcfg.get("patience", 50),
                                   on_epoch=_progress, unroll=tcfg.get("unroll", 1),
                                   val_unroll=tcfg.get("val_unroll"),
                                   input_noise=tcfg.get("input_noise", 0.0))
        trained_range = [float(v) for v in TrajectoryFile.read(paths[0]).header["problem"]
                         ["cfl_range"]]
    out = _out_dir(args, "run")
    meta = {"problem": problem.name, "trained_cfl_range": trained_range,
            "dataset_sha256": dataset_hash(paths), "seed": cfg["seed"], "epochs": epochs,
            "lr": lr, "unroll": tcfg.get("unroll", 8 if problem.kind == "vp" else 1),
            "loss": tcfg.get("loss", "mse"), "loss_history": result.history,
            "val_history": result.val_history, "best_epoch": result.best_epoch}
    path = save_checkpoint(out / "model", result.params, meta)
    log.info("wrote %s", path)
    return 0


def _simulate_linear(params, meta, problem, cfg, seed):
    scfg = cfg.get("simulate", {})
    cfl = float(scfg.get("cfl", problem.cfl_range[1]))
    steps = scfg.get("steps", max(problem.steps - 1, 1))
    rng = make_rng(seed)
    init, ic = problem.sample_initial(rng)
    grid = problem.grid_coarse
    dt, n_states = datagen.coarse_time_step(problem, cfl)
    if problem.period is None or problem.steps:
        n_states = steps + 1
    vfield = problem.velocity()
    U = problem.initial_values(init, grid)
    states, xis, etas = [U], [], []
    sub = default_substeps(cfl)
    for m in range(n_states - 1):
        t1 = (m + 1) * dt
        if problem.dim == 1:
            xi, eta = trace_1d(vfield, grid, t1, dt, sub), None
        else:
            xi, eta = trace_2d(vfield, grid, t1, dt, sub)
            etas.append(eta)
        xis.append(xi)
        states.append(nn.step(params, grid, states[-1], xi, eta))
    arrays = {"U": np.stack(states), "xi": np.stack(xis)}
    if problem.dim == 2:
        arrays["eta"] = np.stack(etas)
    header = datagen._header(problem, grid, cfl, dt, n_states, seed, ic, "U")
    header["generator"] = "slgraph-model/v1"
    return TrajectoryFile(header, arrays), cfl


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.seed)
    problem = problem_from_config(cfg)
    if problem.kind == "vp":
        raise ConfigError("use the vp subcommand for Vlasov-Poisson runs")
    params, meta = load_checkpoint(args.checkpoint)
    traj, cfl = _simulate_linear(params, meta, problem, cfg, cfg["seed"])
    warnings_ = []
    msg = nn.cfl_warning(meta.get("trained_cfl_range"), cfl)
    if msg:
        warnings_.append(msg)
        print(msg, file=sys.stderr)
    traj.header["checkpoint_sha256"] = file_sha256(args.checkpoint if str(args.checkpoint)
                                                   .endswith(".json") else
                                                   str(args.checkpoint) + ".json")
    out = _out_dir(args, "sim")
    traj.write(out / "simulation.traj")
    states = traj.arrays["U"]
    m0 = float(np.sum(states[0]))
    report = {"cfl": cfl, "dt": traj.header["dt"], "steps": int(len(states) - 1),
              "grid": traj.header["grid"], "trained_cfl_range": meta.get("trained_cfl_range"),
              "warnings": warnings_,
              "mass_deviation": [abs(float(np.sum(s)) - m0) / max(abs(m0), 1e-300)
                                 for s in states]}
    _write_json(out / "report.json", report)
    return 0


def cmd_evaluate(args) -> int:
    if not args.reference:
        raise ConfigError("evaluate needs --reference")
    params, meta = load_checkpoint(args.checkpoint)
    paths = _trajectory_paths(args.reference)
    report, timing = tr.evaluate(params, paths, meta.get("trained_cfl_range"))
    for w in report["warnings"]:
        print(w, file=sys.stderr)
    out = _out_dir(args, "eval")
    _write_json(out / "report.json", report)
    _write_json(out / "timing.json", timing)
    log.info("mean final MSE %.4e (baseline %.4e)", report["summary"]["mean_final_mse"],
             report["summary"].get("baseline_mean_final_mse", float("nan")))
    return 0


def cmd_vp(args) -> int:
    cfg = load_config(args.config, args.seed)
    problem = problem_from_config(cfg)
    if problem.kind != "vp":
        raise ConfigError("vp needs a Vlasov-Poisson problem")
    vcfg = cfg.get("vp", {})
    nx, nv = vcfg.get("nx", 32), vcfg.get("nv", 64)
    (xl, xh), (vl, vh) = problem.domain
    grid = Grid2D(Grid1D(nx, xl, xh), Grid1D(nv, vl, vh, periodic=False))
    X, V = grid.meshgrid()
    alpha = vcfg.get("alpha", 0.05)
    k = problem.params.get("k", 0.5)
    if problem.name == "landau":
        f0 = eval_landau(X, V, alpha, k)
    elif problem.name == "two_stream":
        f0 = eval_two_stream(X, V, alpha, k)
    else:
        f0 = eval_multi_mode(X, V, alpha, alpha / 1.2, alpha / 1.2, k)
    cfl = vcfg.get("cfl", problem.cfl_range[0])
    dt = vp.stable_dt(grid, cfl)
    t_end = vcfg.get("t_end", 10.0)
    steps = int(np.ceil(t_end / dt - 1e-9))
    if args.checkpoint:
        params, meta = load_checkpoint(args.checkpoint)
        evolve = vp.model_evolve(params, grid)
        tag = "model"
        msg = nn.cfl_warning(meta.get("trained_cfl_range"), cfl)
        if msg:
            print(msg, file=sys.stderr)
    else:
        evolve, tag = vp.baseline_evolve(grid), "baseline"
    every = vcfg.get("save_every", 1)
    saved = [f0]

    def keep(m, state):
        if m % every == 0:
            saved.append(state.f)

    state = vp.VPState.from_f(f0, grid)
    _, rows = vp.run(state, dt, steps, evolve, vcfg.get("scheme", "rkei2"), callback=keep)
    out = _out_dir(args, "vp")
    header = datagen._header(problem, grid, cfl, dt, len(saved), cfg["seed"],
                             {"alpha": alpha, "k": k}, "f")
    header.update({"generator": f"slgraph-vp-{tag}/v1", "save_every": every})
    TrajectoryFile(header, {"f": np.stack(saved)}).write(out / "vp.traj")
    (out / "diagnostics.csv").write_text(vp.diagnostics_csv(rows))
    return 0


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "simulate": cmd_simulate,
            "evaluate": cmd_evaluate, "vp": cmd_vp}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="slgraph", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=name != "evaluate")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--checkpoint", required=name in ("simulate", "evaluate"))
        p.add_argument("--reference")
        p.add_argument("--quiet", action="store_true")
    return parser


def _thread_limit():
    value = os.environ.get("SLGRAPH_THREADS")
    if not value:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, int(value)))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr, force=True)
    try:
        with _thread_limit():
            return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, ValueError, FloatingPointError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
