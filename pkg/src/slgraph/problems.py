"""Velocity fields, initial conditions and the experiment registry.

All random draws go through ``numpy.random.Generator(PCG64(seed))`` so that a
dataset is fully determined by its seed on every platform numpy supports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .grid import Grid1D, Grid2D, periodic_distance

SQRT_2PI = math.sqrt(2.0 * math.pi)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


# --------------------------------------------------------------------------
# velocity fields
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class VelocityField1D:
    tag: str
    func: Callable[[np.ndarray, float], np.ndarray]
    constant: float | None = None

    def __call__(self, x, t):
        return np.broadcast_to(self.func(np.asarray(x, dtype=float), t),
                               np.shape(x)).astype(float)

    def max_speed(self, grid: Grid1D, t0: float = 0.0, t1: float | None = None) -> float:
        if self.constant is not None:
            return abs(self.constant)
        times = [t0] if t1 is None else np.linspace(t0, t1, 9)
        x = grid.coordinates()
        return float(max(np.max(np.abs(self(x, t))) for t in times))


@dataclass(frozen=True)
class VelocityField2D:
    tag: str
    func: Callable[[np.ndarray, np.ndarray, float], tuple[np.ndarray, np.ndarray]]
    constant: tuple[float, float] | None = None

    def __call__(self, x, y, t):
        a, b = self.func(np.asarray(x, dtype=float), np.asarray(y, dtype=float), t)
        shape = np.broadcast_shapes(np.shape(x), np.shape(y))
        return (np.broadcast_to(a, shape).astype(float),
                np.broadcast_to(b, shape).astype(float))

    def max_speed(self, grid: Grid2D, t0: float = 0.0, t1: float | None = None) -> float:
        if self.constant is not None:
            return max(abs(self.constant[0]), abs(self.constant[1]))
        X, Y = grid.meshgrid()
        times = [t0] if t1 is None else np.linspace(t0, t1, 9)
        best = 0.0
        for t in times:
            a, b = self(X, Y, t)
            best = max(best, float(np.max(np.abs(a))), float(np.max(np.abs(b))))
        return best


def constant_velocity(a: float = 1.0) -> VelocityField1D:
    return VelocityField1D("constant", lambda x, t: np.full(np.shape(x), a), constant=a)


def sinusoidal_velocity() -> VelocityField1D:
    """a(x, t) = sin(x + t)."""
    return VelocityField1D("sinusoidal", lambda x, t: np.sin(x + t))


def constant_velocity_2d(a: float = 1.0, b: float = 1.0) -> VelocityField2D:
    return VelocityField2D(
        "constant", lambda x, y, t: (np.full(np.shape(x), a), np.full(np.shape(y), b)),
        constant=(a, b))


def eval_swirl(x, y, t, T):
    """Periodic swirling deformation flow; reverses at t = T/2."""
    c = np.cos(np.pi * t / T)
    a = np.sin(np.pi * x) ** 2 * np.sin(2 * np.pi * y) * c
    b = -np.sin(np.pi * y) ** 2 * np.sin(2 * np.pi * x) * c
    return a, b


def swirl_velocity(T: float = 2.0) -> VelocityField2D:
    return VelocityField2D("swirl", lambda x, y, t: eval_swirl(x, y, t, T))


# --------------------------------------------------------------------------
# initial conditions
# --------------------------------------------------------------------------


def _check_range(r, name):
    lo, hi = float(r[0]), float(r[1])
    if lo > hi:
        raise ValueError(f"degenerate {name} range: min {lo} > max {hi}")
    return lo, hi


def _uniform(rng: np.random.Generator, r, name) -> float:
    lo, hi = _check_range(r, name)
    return float(rng.uniform(lo, hi))


def square_profile(x, height, width, center, length):
    return np.where(periodic_distance(x, center, length) <= width / 2, height, 0.0)


def triangle_profile(x, height, width, center, length):
    d = periodic_distance(x, center, length)
    return np.where(d <= width / 2, height * (1.0 - 2.0 * d / width), 0.0)


def sample_square(rng, height_range, width_range, center_range=None, *, domain=(0.0, 1.0)):
    """Draw a square-wave initializer ``x -> u0(x)`` and its parameters.

    The center defaults to the domain midpoint unless ``center_range`` is
    given. Draw order is height, width, center.
    """
    height = _uniform(rng, height_range, "height")
    width = _uniform(rng, width_range, "width")
    lo, hi = domain
    center = 0.5 * (lo + hi) if center_range is None else _uniform(rng, center_range, "center")
    params = {"height": height, "width": width, "center": center}

    def init(x):
        return square_profile(np.asarray(x, dtype=float), height, width, center, hi - lo)

    return init, params


def sample_triangle_square(rng, height_range, width_range, *, domain=(0.0, 1.0)):
    """Tent at the first quarter of the domain plus a square at the third.

    Triangle and square draw their heights and widths independently.
    """
    lo, hi = domain
    length = hi - lo
    th = _uniform(rng, height_range, "height")
    tw = _uniform(rng, width_range, "width")
    sh = _uniform(rng, height_range, "height")
    sw = _uniform(rng, width_range, "width")
    tc, sc = lo + 0.25 * length, lo + 0.75 * length
    params = {"triangle_height": th, "triangle_width": tw, "triangle_center": tc,
              "square_height": sh, "square_width": sw, "square_center": sc}

    def init(x):
        x = np.asarray(x, dtype=float)
        return (triangle_profile(x, th, tw, tc, length)
                + square_profile(x, sh, sw, sc, length))

    return init, params


def sample_square_2d(rng, height_range, width_range, *, domain=((-1.0, 1.0), (-1.0, 1.0))):
    """Axis-aligned square plateau centered in the domain."""
    height = _uniform(rng, height_range, "height")
    width = _uniform(rng, width_range, "width")
    (xl, xh), (yl, yh) = domain
    cx, cy = 0.5 * (xl + xh), 0.5 * (yl + yh)
    params = {"height": height, "width": width, "center_x": cx, "center_y": cy}

    def init(x, y):
        inside = ((periodic_distance(x, cx, xh - xl) <= width / 2)
                  & (periodic_distance(y, cy, yh - yl) <= width / 2))
        return np.where(inside, height, 0.0)

    return init, params


def eval_cosine_bell(x, y, r0, cx, cy):
    r = np.minimum(1.0, r0 * np.hypot(np.asarray(x) - cx, np.asarray(y) - cy))
    return 0.5 * (1.0 + np.cos(np.pi * r))


def eval_two_bells(x, y, r0, c1, c2):
    """Sum of two single cosine bells (zero background)."""
    return eval_cosine_bell(x, y, r0, *c1) + eval_cosine_bell(x, y, r0, *c2)


def sample_cosine_bell(rng, r0_range=(4.0, 6.0), center_range=(0.25, 0.75)):
    r0 = _uniform(rng, r0_range, "r0")
    cx = _uniform(rng, center_range, "center")
    cy = _uniform(rng, center_range, "center")
    params = {"r0": r0, "center_x": cx, "center_y": cy}
    return (lambda x, y: eval_cosine_bell(x, y, r0, cx, cy)), params


def eval_landau(x, v, alpha, k):
    return (1.0 + alpha * np.cos(k * np.asarray(x))) * np.exp(-0.5 * np.asarray(v) ** 2) / SQRT_2PI


def eval_two_stream(x, v, alpha, k):
    v = np.asarray(v)
    return (1.0 + alpha * np.cos(k * np.asarray(x))) * v ** 2 * np.exp(-0.5 * v ** 2) / SQRT_2PI


def eval_multi_mode(x, v, alpha1, alpha2, alpha3, k):
    x, v = np.asarray(x), np.asarray(v)
    spatial = (1.0 + alpha1 * np.cos(k * x) + alpha2 * np.cos(2 * k * x)
               + alpha3 * np.cos(3 * k * x))
    return 2.0 / (7.0 * SQRT_2PI) * (1.0 + 5.0 * v ** 2) * spatial * np.exp(-0.5 * v ** 2)


# --------------------------------------------------------------------------
# experiment registry
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ProblemSpec:
    """Everything needed to regenerate one family of trajectories.

    ``cfl_range`` is the coarse-grid Courant number range; ``fine_cfl`` is the
    Courant number of the WENO5 reference on the fine grid. ``period`` fixes
    the end time of a trajectory (deformation flow) instead of a step count.
    """

    name: str
    dim: int
    kind: str  # "linear" or "vp"
    domain: tuple
    n_fine: int
    factor: int
    steps: int
    cfl_range: tuple[float, float]
    fine_cfl: float
    params: dict = field(default_factory=dict)
    period: float | None = None
    periodic_y: bool = True

    def with_overrides(self, **kw) -> ProblemSpec:
        kw = {k: v for k, v in kw.items() if v is not None}
        params = dict(self.params)
        params.update(kw.pop("params", {}) or {})
        return replace(self, params=params, **kw)

    @property
    def grid_fine(self):
        if self.dim == 1:
            return Grid1D(self.n_fine, *self.domain)
        if self.kind == "vp":
            nv = int(self.params.get("nv_fine", 2 * self.n_fine))
            return Grid2D(Grid1D(self.n_fine, *self.domain[0]),
                          Grid1D(nv, *self.domain[1], periodic=False))
        return Grid2D.uniform(self.n_fine, self.n_fine, self.domain[0], self.domain[1],
                              periodic_y=self.periodic_y)

    @property
    def grid_coarse(self):
        return self.grid_fine.coarsen(self.factor)

    def velocity(self):
        p = self.params
        if self.name in ("square", "triangle_square"):
            return constant_velocity(1.0)
        if self.name == "variable":
            return sinusoidal_velocity()
        if self.name == "square2d":
            return constant_velocity_2d(1.0, 1.0)
        if self.name == "deformation":
            return swirl_velocity(p.get("T", 2.0))
        raise ValueError(f"problem {self.name!r} has no prescribed velocity field")

    def sample_initial(self, rng: np.random.Generator):
        """Return ``(callable, params)`` for one randomized initial condition."""
        p = self.params
        if self.name == "square":
            return sample_square(rng, p["height_range"], p["width_range"],
                                 p.get("center_range"), domain=self.domain)
        if self.name == "triangle_square":
            return sample_triangle_square(rng, p["height_range"], p["width_range"],
                                          domain=self.domain)
        if self.name == "variable":
            return sample_square(rng, p["height_range"], p["width_range"],
                                 p.get("center_range", self.domain), domain=self.domain)
        if self.name == "square2d":
            return sample_square_2d(rng, p["height_range"], p["width_range"],
                                    domain=self.domain)
        if self.name == "deformation":
            return sample_cosine_bell(rng, p["r0_range"], p["center_range"])
        if self.name == "landau":
            alpha = _uniform(rng, p["alpha_range"], "alpha")
            k = p.get("k", 0.5)
            return (lambda x, v: eval_landau(x, v, alpha, k)), {"alpha": alpha, "k": k}
        if self.name == "two_stream":
            alpha = _uniform(rng, p["alpha_range"], "alpha")
            k = p.get("k", 0.5)
            return (lambda x, v: eval_two_stream(x, v, alpha, k)), {"alpha": alpha, "k": k}
        if self.name == "multi_mode":
            a = [_uniform(rng, p["alpha_range"], "alpha") for _ in range(3)]
            k = p.get("k", 0.5)
            return ((lambda x, v: eval_multi_mode(x, v, *a, k)),
                    {"alpha1": a[0], "alpha2": a[1], "alpha3": a[2], "k": k})
        raise ValueError(f"unknown problem {self.name!r}")

    def initial_values(self, init, grid):
        if self.dim == 1:
            return np.asarray(init(grid.coordinates()), dtype=float)
        X, Y = grid.meshgrid()
        return np.asarray(init(X, Y), dtype=float)


VP_L = 4.0 * math.pi
VP_VC = 2.0 * math.pi

PROBLEMS: dict[str, ProblemSpec] = {
    "square": ProblemSpec(
        "square", 1, "linear", (0.0, 1.0), 256, 8, 20, (6.0, 10.2), 0.4,
        {"height_range": (0.1, 1.0), "width_range": (0.2, 0.4)}),
    "triangle_square": ProblemSpec(
        "triangle_square", 1, "linear", (0.0, 1.0), 256, 8, 20, (6.0, 10.2), 0.4,
        {"height_range": (0.2, 0.8), "width_range": (0.2, 0.3)}),
    "variable": ProblemSpec(
        "variable", 1, "linear", (0.0, 2.0 * math.pi), 256, 8, 2, (5.0, 9.0), 0.4,
        {"height_range": (0.1, 1.0), "width_range": (2.5, 3.5),
         "center_range": (0.0, 2.0 * math.pi)}),
    "square2d": ProblemSpec(
        "square2d", 2, "linear", ((-1.0, 1.0), (-1.0, 1.0)), 256, 8, 15, (10.2, 10.2), 0.4,
        {"height_range": (0.5, 1.0), "width_range": (0.3, 0.5)}),
    "deformation": ProblemSpec(
        "deformation", 2, "linear", ((0.0, 1.0), (0.0, 1.0)), 256, 8, 0, (10.2, 10.2), 0.6,
        {"T": 2.0, "r0_range": (4.0, 6.0), "center_range": (0.25, 0.75)}, period=2.0),
    "landau": ProblemSpec(
        "landau", 2, "vp", ((0.0, VP_L), (-VP_VC, VP_VC)), 256, 8, 0, (10.8, 10.8), 0.5,
        {"alpha_range": (0.05, 0.45), "k": 0.5, "nv_fine": 512}, period=40.0,
        periodic_y=False),
    "two_stream": ProblemSpec(
        "two_stream", 2, "vp", ((0.0, VP_L), (-VP_VC, VP_VC)), 256, 8, 0, (10.8, 10.8), 0.5,
        {"alpha_range": (0.01, 0.05), "k": 0.5, "nv_fine": 512}, period=53.0,
        periodic_y=False),
    "multi_mode": ProblemSpec(
        "multi_mode", 2, "vp", ((0.0, VP_L), (-VP_VC, VP_VC)), 256, 8, 0, (10.8, 10.8), 0.5,
        {"alpha_range": (0.01, 0.02), "k": 0.5, "nv_fine": 512}, period=53.0,
        periodic_y=False),
}


def get_problem(name: str) -> ProblemSpec:
    try:
        return PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
