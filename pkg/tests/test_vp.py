from __future__ import annotations

import math

import numpy as np
import pytest

from slgraph import vp
from slgraph.characteristics import trace_vp
from slgraph.classical import sl_linear_conservative
from slgraph.grid import Grid1D, Grid2D
from slgraph.problems import eval_landau


def vp_grid(nx=32, nv=64, vmax=2 * math.pi):
    return Grid2D(Grid1D(nx, 0.0, 4 * math.pi), Grid1D(nv, -vmax, vmax, periodic=False))


def landau(grid, alpha=0.05, k=0.5):
    X, V = grid.meshgrid()
    return eval_landau(X, V, alpha, k)


def test_density_examples():
    g = vp_grid(16, 128)
    assert np.max(np.abs(vp.density(landau(g, 0.0), g) - 1.0)) < 1e-8
    assert not np.any(vp.density(np.zeros(g.shape), g))
    x = g.x.coordinates()
    rho = vp.density(landau(g, 0.3), g)
    assert np.max(np.abs(rho - (1 + 0.3 * np.cos(0.5 * x)))) < 1e-8


def test_electric_energy():
    gx = Grid1D(64, 0.0, 2 * math.pi)
    assert vp.electric_energy(np.sin(gx.coordinates()), gx.h) == pytest.approx(math.pi / 2,
                                                                               abs=1e-13)
    assert vp.electric_energy(np.zeros(8), 0.1) == 0.0


def test_state_invariants():
    g = vp_grid(16, 128)
    s = vp.VPState.from_f(landau(g, 0.1), g)
    # the Maxwellian tail beyond |v| = 2 pi carries erfc(2 pi / sqrt 2) ~ 3e-10 of the mass
    tail = math.erfc(2 * math.pi / math.sqrt(2))
    assert abs(np.mean(s.rho) - 1) < 2 * tail
    assert abs(np.mean(s.E)) < 1e-14
    with pytest.raises(ValueError):
        vp.VPState.from_f(np.zeros((3, 3)), g)
    bad = landau(g)
    bad[0, 0] = np.nan
    with pytest.raises(FloatingPointError):
        vp.VPState.from_f(bad, g)


def _external_field(f, grid, t):
    return 0.2 * np.sin(0.5 * grid.x.coordinates())


@pytest.mark.parametrize("field", [vp.zero_field, _external_field])
def test_rkei2_collapses_for_frozen_field(field):
    g = vp_grid(16, 32)
    s = vp.VPState.from_f(landau(g, 0.2), g, field=field)
    dt = 0.3
    evolve = vp.baseline_evolve(g)
    out2 = vp.rkei2_step(s, dt, evolve, field, substeps=4)
    out1 = vp.rkei1_step(s, dt, evolve, field, substeps=4)
    tr = trace_vp(s.E, g, dt, 4)
    direct = evolve(s.f, tr.xi, tr.eta)
    assert np.array_equal(out2.f, direct)
    assert np.array_equal(out1.f, direct)


def test_rkei2_stage_two_starts_from_previous_state():
    g = vp_grid(16, 32)
    s = vp.VPState.from_f(landau(g, 0.3), g)
    seen = []

    def evolve(f, xi, eta):
        seen.append(f.copy())
        return sl_linear_conservative(f, g, xi, eta)

    out = vp.rkei2_step(s, 0.4, evolve, substeps=4)
    assert len(seen) == 2
    assert np.array_equal(seen[0], s.f) and np.array_equal(seen[1], s.f)
    # explicit construction of the two stages
    tr = trace_vp(s.E, g, 0.2, 4)
    f_half = sl_linear_conservative(s.f, g, tr.xi, tr.eta)
    tr = trace_vp(vp.poisson_field(f_half, g), g, 0.4, 4)
    assert np.array_equal(out.f, sl_linear_conservative(s.f, g, tr.xi, tr.eta))
    # evolving F* in stage two would give something else
    assert not np.allclose(out.f, sl_linear_conservative(f_half, g, tr.xi, tr.eta))


@pytest.mark.parametrize("scheme", ["rkei1", "rkei2"])
def test_mass_conserved_per_step(scheme):
    g = vp_grid(32, 64)
    s = vp.VPState.from_f(landau(g, 0.4), g)
    m0 = s.mass
    for _ in range(5):
        s = vp.SCHEMES[scheme](s, 0.5, vp.baseline_evolve(g))
        assert abs(s.mass - m0) / m0 < 1e-12


def test_equilibrium_is_fixed_point():
    g = vp_grid(16, 64)
    s = vp.VPState.from_f(landau(g, 0.0), g)
    f0 = s.f.copy()
    for _ in range(10):
        s = vp.rkei2_step(s, 0.5, vp.baseline_evolve(g))
        assert np.max(np.abs(s.E)) < 1e-10
    assert np.max(np.abs(s.f - f0)) < 1e-10


def _order(scheme, steps=(8, 16), ref_steps=256, t_end=2.0):
    g = vp_grid(32, 64)
    evolve = vp.highorder_evolve(g)
    s0 = vp.VPState.from_f(landau(g, 0.5), g)

    def solve(n):
        return vp.run(s0, t_end / n, n, evolve, scheme)[0].f

    ref = solve(ref_steps)
    e = [np.max(np.abs(solve(n) - ref)) for n in steps]
    return math.log2(e[0] / e[1])


def test_rkei2_temporal_order():
    assert _order("rkei2") >= 1.7


def test_rkei1_temporal_order():
    assert _order("rkei1") >= 0.8


def test_diagnostics_csv():
    g = vp_grid(16, 32)
    s = vp.VPState.from_f(landau(g), g)
    _, rows = vp.run(s, 0.2, 3, vp.baseline_evolve(g))
    lines = vp.diagnostics_csv(rows).splitlines()
    assert lines[0] == "t,mass,electric_energy,min_f,max_f"
    assert len(lines) == 5
    assert float(lines[-1].split(",")[0]) == pytest.approx(0.6)


def test_damping_rate_fit():
    t = np.linspace(0, 20, 2001)
    e = np.exp(-0.3 * t) * np.cos(1.4 * t) ** 2 + 1e-12
    assert vp.landau_damping_rate_fit(t, e) == pytest.approx(-0.3, rel=1e-3)
    with pytest.raises(ValueError):
        vp.landau_damping_rate_fit(t[:3], e[:3])


def test_model_evolve_conserves(rng):
    from slgraph import model as nn

    g = vp_grid(16, 16)
    p = nn.init_params(nn.ModelConfig.vlasov(), 0)
    s = vp.VPState.from_f(landau(g, 0.2), g)
    out = vp.rkei2_step(s, 0.5, vp.model_evolve(p, g))
    assert abs(out.mass - s.mass) / s.mass < 1e-12
