from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slgraph.classical import (
    poisson_periodic,
    sl_fd_first_order,
    sl_linear_conservative,
    vlasov_reference_step,
    vp_field,
    weno5_advect_step_1d,
    weno5_advect_step_2d,
    weno5_evolve,
    weno5_reconstruct,
)
from slgraph.grid import Grid1D, Grid2D
from slgraph.problems import (VelocityField2D, constant_velocity, constant_velocity_2d,
                              eval_landau)


def _weno_error(n, cfl=0.1, t_end=0.5):
    g = Grid1D(n)
    u = np.sin(2 * np.pi * g.coordinates())
    out = weno5_evolve(u, constant_velocity(1.0), g, 0.0, t_end, cfl=cfl)
    return np.max(np.abs(out - np.sin(2 * np.pi * (g.coordinates() - t_end))))


def test_weno_convergence_order():
    e64, e128 = _weno_error(64), _weno_error(128)
    assert e64 / e128 >= 2 ** 4.5


@pytest.mark.parametrize("k", range(5))
def test_weno_reconstruct_polynomials_linear_weights(k):
    # on smooth data with all smoothness indicators equal the weights reduce to the
    # linear ones; compare the ideal 5-point face value for degree <= 4
    x = np.arange(-2, 3, dtype=float)
    cells = x ** k
    # face value at +1/2 of the unique degree-4 interpolant of the point values
    coeffs = np.polyfit(x, cells, 4)
    face_interp = np.polyval(coeffs, 0.5)
    lin = (2 * cells[0] - 13 * cells[1] + 47 * cells[2] + 27 * cells[3] - 3 * cells[4]) / 60
    got = weno5_reconstruct(*cells, eps=1e30)  # huge eps forces the linear weights
    assert got == pytest.approx(lin, abs=1e-12)
    if k <= 1:
        # flux reconstruction of point values equals interpolation for degree <= 1
        assert got == pytest.approx(face_interp, abs=1e-12)


def test_weno_constant_preserved():
    g = Grid1D(32)
    u = np.full(32, 0.7)
    out = weno5_advect_step_1d(u, constant_velocity(1.0), g, 0.0, 0.5 * g.h)
    assert np.max(np.abs(out - 0.7)) < 1e-14
    g2 = Grid2D.uniform(16, 16)
    out2 = weno5_advect_step_2d(np.full((16, 16), 0.3), constant_velocity_2d(), g2, 0.0,
                                0.3 * g2.hx)
    assert np.max(np.abs(out2 - 0.3)) < 1e-14


def test_weno_mass_conservation(rng):
    g = Grid1D(64)
    u = rng.random(64)
    out = weno5_advect_step_1d(u, constant_velocity(1.0), g, 0.0, 0.5 * g.h)
    assert abs(out.sum() - u.sum()) / u.sum() < 1e-12
    g2 = Grid2D.uniform(16, 16)
    swirl = VelocityField2D("test", lambda x, y, t: (np.sin(2 * np.pi * y) + 0.0 * x,
                                                      np.cos(2 * np.pi * x) + 0.0 * y))
    u2 = rng.random((16, 16))
    out2 = weno5_advect_step_2d(u2, swirl, g2, 0.0, 0.5 * g2.hx)
    assert abs(out2.sum() - u2.sum()) / u2.sum() < 1e-12


def test_weno_2d_convergence():
    def err(n):
        g = Grid2D.uniform(n, n)
        X, Y = g.meshgrid()
        u = np.sin(2 * np.pi * (X + Y))
        out = weno5_evolve(u, constant_velocity_2d(1.0, 1.0), g, 0.0, 0.25, cfl=0.1)
        return np.max(np.abs(out - np.sin(2 * np.pi * (X + Y - 0.5))))

    assert err(32) / err(64) >= 2 ** 4.5


def test_weno_cfl_violation():
    g = Grid1D(32)
    with pytest.raises(ValueError):
        weno5_advect_step_1d(np.zeros(32), constant_velocity(1.0), g, 0.0, 0.7 * g.h)


def test_sl_fd_half_shift(rng):
    u = rng.random(16)
    out = sl_fd_first_order(u, np.full(16, -0.5))
    assert np.max(np.abs(out - (0.5 * np.roll(u, 1) + 0.5 * u))) < 1e-15


@pytest.mark.parametrize("shift", [-3, -10, 0, 2, -33])
def test_sl_fd_integer_shift_exact(rng, shift):
    u = rng.random(32)
    out = sl_fd_first_order(u, np.full(32, float(shift)))
    assert np.max(np.abs(out - np.roll(u, -shift))) < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(-15, 15))
def test_sl_fd_conservation(seed, center):
    r = np.random.default_rng(seed)
    u = r.random(24)
    xi = center + r.uniform(-3, 3, 24)
    out = sl_fd_first_order(u, xi)
    assert abs(out.sum() - u.sum()) / u.sum() < 1e-12


def test_sl_fd_matches_upwind_for_small_shift(rng):
    u = rng.random(20)
    xi = rng.uniform(-1, 0, 20) * 0.999
    # first-order flux form with positive speed: U_i - (theta_i U_i - theta_{i-1} U_{i-1})
    theta = -xi
    expect = u - theta * u + np.roll(theta * u, 1)
    assert np.max(np.abs(sl_fd_first_order(u, xi) - expect)) < 1e-14


def test_sl_linear_conservative_2d(rng):
    g = Grid2D.uniform(12, 10)
    u = rng.random(g.shape)
    xi, eta = rng.uniform(-5, 5, g.shape), rng.uniform(-5, 5, g.shape)
    out = sl_linear_conservative(u, g, xi, eta)
    assert abs(out.sum() - u.sum()) / u.sum() < 1e-12
    # integer translation is exact
    out = sl_linear_conservative(u, g, np.full(g.shape, -2.0), np.full(g.shape, -1.0))
    assert np.max(np.abs(out - np.roll(u, (1, 2), axis=(0, 1)))) < 1e-14


def test_poisson_examples():
    g = Grid1D(64, 0.0, 2 * np.pi)
    x = g.coordinates()
    assert np.max(np.abs(poisson_periodic(1.0 + np.cos(x), g) - np.sin(x))) < 1e-12
    assert np.max(np.abs(poisson_periodic(np.ones(64), g))) == 0.0
    g2 = Grid1D(64, 0.0, 4 * np.pi)
    x2 = g2.coordinates()
    E = poisson_periodic(1.0 + np.cos(0.5 * x2), g2)
    assert np.max(np.abs(E - 2 * np.sin(0.5 * x2))) < 1e-12
    assert abs(E.mean()) < 1e-15


def test_poisson_solvability():
    g = Grid1D(16, 0.0, 2 * np.pi)
    with pytest.raises(ValueError):
        poisson_periodic(np.full(16, 1.1), g)


def _vp_grid(nx, nv):
    return Grid2D(Grid1D(nx, 0.0, 4 * np.pi), Grid1D(nv, -2 * np.pi, 2 * np.pi, periodic=False))


def test_vlasov_equilibrium():
    g = _vp_grid(16, 64)
    X, V = g.meshgrid()
    f = eval_landau(X, V, 0.0, 0.5)
    f0 = f.copy()
    dt = 0.4 * g.hx / (2 * np.pi)
    for _ in range(10):
        f = vlasov_reference_step(f, g, dt)
        assert np.max(np.abs(vp_field(f, g))) < 1e-10
    assert np.max(np.abs(f - f0)) < 1e-10


def test_vlasov_mass_short():
    g = _vp_grid(32, 64)
    X, V = g.meshgrid()
    f = eval_landau(X, V, 0.05, 0.5)
    m0 = f.sum()
    dt = 0.5 * g.hx / (2 * np.pi)
    for _ in range(20):
        f = vlasov_reference_step(f, g, dt)
    assert abs(f.sum() - m0) / m0 < 1e-8


def test_vlasov_cfl_violation():
    g = _vp_grid(16, 32)
    with pytest.raises(ValueError):
        vlasov_reference_step(np.zeros(g.shape), g, 2.0 * g.hx / (2 * math.pi))
