from __future__ import annotations

import numpy as np
import pytest
from conftest import model_fd_error

from slgraph import model as nn
from slgraph import nnad as ad
from slgraph.graph import UpstreamGraph, build
from slgraph.grid import Grid1D, Grid2D

SMALL_1D = nn.ModelConfig(dim=1, conv_layers=2, filters=4, kernel=5, gat_layers=2, hidden=8,
                          heads=2, decoder_hidden=16)


def test_default_config_sizes():
    cfg = nn.ModelConfig.linear_1d()
    assert (cfg.conv_layers, cfg.filters, cfg.kernel) == (6, 32, 5)
    assert (cfg.gat_layers, cfg.hidden, cfg.heads, cfg.head_dim) == (2, 32, 4, 8)
    assert cfg.decoder_input == 64 and cfg.decoder_hidden == 256
    assert nn.ModelConfig.vlasov().conv_layers == 9
    assert nn.ModelConfig.linear_2d().in_channels == 3
    with pytest.raises(ValueError):
        nn.ModelConfig(dim=1, hidden=30, heads=4)


def test_config_round_trip():
    cfg = nn.ModelConfig.vlasov(upstream_coords=True)
    assert nn.ModelConfig.from_dict(cfg.to_dict()) == cfg


def test_zero_weights_zero_embedding(rng):
    p = nn.zeros_like_params(nn.ModelConfig.linear_1d())
    h = nn.encode(p, rng.random(16), rng.uniform(-3, 0, 16))
    assert h.shape == (16, 32) and not np.any(h.data)


@pytest.mark.parametrize("n", [5, 16, 33])
def test_encode_shape(rng, n):
    p = nn.init_params(nn.ModelConfig.linear_1d(), 1)
    assert nn.encode(p, rng.random(n), rng.random(n)).shape == (n, 32)


def test_encode_translation_equivariance(rng):
    p = nn.init_params(nn.ModelConfig.linear_1d(), 2)
    U, xi = rng.random(24), rng.uniform(-11, -6, 24)
    h = nn.encode(p, U, xi).data
    hs = nn.encode(p, np.roll(U, 5), np.roll(xi, 5)).data
    assert np.max(np.abs(np.roll(h, 5, axis=0) - hs)) < 1e-12
    p2 = nn.init_params(nn.ModelConfig.linear_2d(conv_layers=3), 3)
    U, xi, eta = (rng.random((8, 10)) for _ in range(3))
    h = nn.encode(p2, U, xi, eta).data.reshape(8, 10, 32)
    hs = nn.encode(p2, *(np.roll(a, (2, 3), axis=(0, 1)) for a in (U, xi, eta))).data
    assert np.max(np.abs(np.roll(h, (2, 3), axis=(0, 1)) - hs.reshape(8, 10, 32))) < 1e-12


def _self_loop_graph(n):
    idx = np.arange(n, dtype=np.int64)
    return UpstreamGraph(n_nodes=n, src=idx, dst=idx, stencil=idx[:, None],
                         upstream=idx[:, None].astype(float), shape=(n,), periodic=(True,),
                         spacing=(1.0,))


def test_self_loop_graph_isolates_nodes(rng):
    cfg = nn.ModelConfig.linear_1d()
    p = nn.init_params(cfg, 4)
    for k in range(cfg.gat_layers):
        p[f"gat.{k}.upd_h"].data = np.eye(cfg.hidden)
    g = _self_loop_graph(10)
    h0 = rng.normal(size=(10, 32))
    out = nn.process(p, g, ad.Tensor(h0)).data
    h1 = h0.copy()
    h1[3] += 1.0
    out1 = nn.process(p, g, ad.Tensor(h1)).data
    changed = np.flatnonzero(np.any(out1 != out, axis=1))
    assert changed.tolist() == [3]
    # each row depends on its own embedding only: evaluate one node alone
    alone = nn.process(p, _self_loop_graph(10), ad.Tensor(np.tile(h0[7], (10, 1)))).data
    assert np.allclose(alone[0], out[7], atol=1e-14)


def test_attention_normalized(rng):
    p = nn.init_params(nn.ModelConfig.linear_1d(), 5)
    g = build(Grid1D(20), rng.uniform(-8, 8, 20))
    _, att = nn.process(p, g, ad.Tensor(rng.normal(size=(20, 32))), return_attention=True)
    center = g.neighborhood[0]
    for a in att:
        sums = np.zeros((20, 4))
        np.add.at(sums, center, a.data)
        assert np.max(np.abs(sums - 1)) < 1e-14


def _relabel(g: UpstreamGraph, perm: np.ndarray) -> UpstreamGraph:
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    return UpstreamGraph(n_nodes=g.n_nodes, src=perm[g.src], dst=perm[g.dst],
                         stencil=perm[g.stencil][inv], upstream=g.upstream[inv], shape=g.shape,
                         periodic=g.periodic, spacing=g.spacing)


def test_permutation_equivariance(rng):
    p = nn.init_params(nn.ModelConfig.linear_1d(), 6)
    n = 18
    g = build(Grid1D(n), rng.uniform(-6, 6, n))
    perm = rng.permutation(n)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(n)
    h0 = rng.normal(size=(n, 32))
    out = nn.process(p, g, ad.Tensor(h0)).data
    gp = _relabel(g, perm)
    outp = nn.process(p, gp, ad.Tensor(h0[inv])).data
    assert np.max(np.abs(outp[perm] - out)) < 1e-12
    d = nn.decode(p, g, ad.Tensor(out)).data
    dp = nn.decode(p, gp, ad.Tensor(outp)).data
    assert np.max(np.abs(d - dp)) < 1e-12


def test_zero_decoder_gives_uniform_split(rng):
    p = nn.init_params(nn.ModelConfig.linear_1d(), 7)
    p["dec.w2"].data[:] = 0.0
    p["dec.b2"].data[:] = 0.0
    g = build(Grid1D(16), rng.uniform(-3, 3, 16))
    d = nn.decode(p, g, ad.Tensor(rng.normal(size=(16, 32)))).data
    assert np.array_equal(d, 1.0 / g.out_degree[g.src])


def _tiny_graph():
    # donor 0 -> receivers {0, 1}; donor 1 -> {1}; donor 2 -> {0, 1, 2}
    src = np.array([0, 0, 1, 2, 2, 2])
    dst = np.array([0, 1, 1, 0, 1, 2])
    return UpstreamGraph(n_nodes=3, src=src, dst=dst, stencil=np.zeros((3, 2), dtype=np.int64),
                         upstream=np.zeros((3, 1)), shape=(3,), periodic=(True,), spacing=(1.0,))


def test_constraint_examples():
    g = _tiny_graph()
    d = nn.constraint(np.array([0.2, 0.2, 0.4, 0.0, 0.0, 0.0]), g)
    assert d[:2].tolist() == [0.5, 0.5]
    assert d[2] == 1.0
    assert np.allclose(d[3:], 1 / 3, atol=1e-16)
    ok = np.array([0.3, 0.7, 1.0, 0.5, 0.25, 0.25])
    assert np.array_equal(nn.constraint(ok, g), ok)


def test_constraint_tensor_matches_array(rng):
    g = build(Grid1D(12), rng.uniform(-5, 5, 12))
    raw = rng.normal(size=g.n_edges)
    t = nn.constraint(ad.Tensor(raw), g).data
    assert np.allclose(t, nn.constraint(raw, g), atol=1e-15)


def test_constraint_sum_and_idempotence(rng):
    grid = Grid2D.uniform(10, 10)
    g = build(grid, rng.uniform(-9, 9, grid.shape), rng.uniform(-9, 9, grid.shape))
    d = nn.constraint(rng.uniform(-1, 1, g.n_edges), g)
    s = np.bincount(g.src, weights=d, minlength=g.n_nodes)
    assert np.max(np.abs(s - 1)) < 1e-12
    assert np.max(np.abs(nn.constraint(d, g) - d)) < 1e-15


def test_constraint_requires_out_edges():
    g = UpstreamGraph(n_nodes=2, src=np.array([0]), dst=np.array([1]),
                      stencil=np.zeros((2, 1), dtype=np.int64), upstream=np.zeros((2, 1)),
                      shape=(2,), periodic=(True,), spacing=(1.0,))
    with pytest.raises(ValueError):
        nn.constraint(np.ones(1), g)


def test_identity_coefficients(rng):
    g = build(Grid1D(12), np.zeros(12))
    d = (g.src == g.dst).astype(float)
    U = rng.random(12)
    assert np.array_equal(nn.apply(g, d, U), U)


@pytest.mark.parametrize("cfl", [0.4, 3.7, 10.2])
def test_step_conserves_mass(rng, cfl):
    p = nn.init_params(nn.ModelConfig.linear_1d(), 8)
    grid = Grid1D(32)
    U = rng.random(32)
    xi = -cfl + 0.3 * rng.standard_normal(32)
    out = nn.step(p, grid, U, xi)
    assert abs(out.sum() - U.sum()) / abs(U.sum()) < 1e-12
    c = np.full(32, 0.4)
    assert abs(nn.step(p, grid, c, xi).sum() - c.sum()) / c.sum() < 1e-12


def test_step_2d_conserves_mass(rng):
    p = nn.init_params(nn.ModelConfig.linear_2d(), 9)
    grid = Grid2D.uniform(12, 12)
    U = rng.random(grid.shape)
    out = nn.step(p, grid, U, rng.uniform(-4, 4, grid.shape), rng.uniform(-4, 4, grid.shape))
    assert abs(out.sum() - U.sum()) / U.sum() < 1e-12


def test_step_deterministic(rng):
    p = nn.init_params(nn.ModelConfig.linear_1d(), 10)
    grid = Grid1D(20)
    U, xi = rng.random(20), rng.uniform(-10, -9, 20)
    a, b = nn.step(p, grid, U, xi), nn.step(p.copy(), grid, U.copy(), xi.copy())
    assert a.tobytes() == b.tobytes()


def test_step_batched_matches_single(rng):
    p = nn.init_params(nn.ModelConfig.linear_1d(), 11)
    grid = Grid1D(16)
    U, xi = rng.random((3, 16)), rng.uniform(-7, -2, (3, 16))
    batched = nn.step(p, grid, U, xi)
    for k in range(3):
        assert np.allclose(batched[k], nn.step(p, grid, U[k], xi[k]), atol=1e-14)


def test_step_dimension_checks(rng):
    p = nn.init_params(nn.ModelConfig.linear_2d(), 0)
    with pytest.raises(ValueError):
        nn.step(p, Grid2D.uniform(8, 8), rng.random((8, 8)), rng.random((8, 8)))
    with pytest.raises(ValueError):
        nn.step(p, Grid1D(8), rng.random(8), rng.random(8), rng.random(8))


def test_init_is_seeded():
    a = nn.init_params(nn.ModelConfig.linear_1d(), 3)
    b = nn.init_params(nn.ModelConfig.linear_1d(), 3)
    assert all(np.array_equal(a[k].data, b[k].data) for k in a.names())
    assert a.count == 55_489


def test_cfl_warning():
    with pytest.warns(UserWarning):
        msg = nn.cfl_warning((6.0, 10.2), 12.0)
    assert "outside the trained range" in msg
    assert nn.cfl_warning((6.0, 10.2), 10.2) is None


def _loss_fn(grid, U, xi, target, eta=None):
    g = nn.build_graph(grid, xi, eta)

    def loss(p):
        return ad.mse(nn.step(p, grid, ad.Tensor(U), xi, eta, g=g), target)
    return loss


@pytest.mark.parametrize("upstream_coords", [False, True])
def test_full_gradient_small_widths(rng, upstream_coords):
    cfg = nn.ModelConfig(**{**SMALL_1D.to_dict(), "upstream_coords": upstream_coords})
    p = nn.init_params(cfg, 12)
    grid = Grid1D(16)
    U, xi = rng.random(16), rng.uniform(-3.5, -2.5, 16)
    assert model_fd_error(p, _loss_fn(grid, U, xi, rng.random(16))) < 1e-5


def test_gradient_2d_sampled(rng):
    cfg = nn.ModelConfig(dim=2, conv_layers=2, filters=4, gat_layers=2, hidden=8, heads=2,
                         decoder_hidden=16, periodic=(False, True))
    p = nn.init_params(cfg, 13)
    grid = Grid2D(Grid1D(4), Grid1D(4, periodic=False))
    U = rng.random(grid.shape)
    xi, eta = rng.uniform(-2, 2, grid.shape), rng.uniform(-1, 1, grid.shape)
    err = model_fd_error(p, _loss_fn(grid, U, xi, rng.random(grid.shape), eta), entries=20)
    assert err < 1e-5


def test_linear_skip_starts_at_conservative_linear_scheme(rng):
    from slgraph.classical import sl_fd_first_order, sl_linear_conservative

    p = nn.init_params(nn.ModelConfig.linear_1d(edge_offsets=True, linear_skip=True), 0)
    assert not np.any(p["dec.w2"].data) and not np.any(p["dec.b2"].data)
    grid = Grid1D(32)
    U = rng.random(32)
    out = nn.step(p, grid, U, np.full(32, -10.2))
    assert np.max(np.abs(out - sl_fd_first_order(U, np.full(32, -10.2)))) < 1e-14
    xi = rng.uniform(-4, 4, 32)
    assert np.max(np.abs(nn.step(p, grid, U, xi) - sl_linear_conservative(U, grid, xi))) < 1e-14
    p2 = nn.init_params(nn.ModelConfig.linear_2d(linear_skip=True), 0)
    g2 = Grid2D.uniform(8, 8)
    U2, a, b = rng.random((8, 8)), rng.uniform(-3, 3, (8, 8)), rng.uniform(-3, 3, (8, 8))
    assert np.max(np.abs(nn.step(p2, g2, U2, a, b) - sl_linear_conservative(U2, g2, a, b))) < 1e-14


def test_edge_offsets_values(rng):
    g = build(Grid1D(16), np.full(16, -10.2))
    off = g.edge_offsets[:, 0].reshape(16, 2)
    assert np.allclose(off[:, 0], 0.8, atol=1e-12) and np.allclose(off[:, 1], -0.2, atol=1e-12)
    grid = Grid2D.uniform(6, 6)
    g2 = build(grid, rng.uniform(-9, 9, grid.shape), rng.uniform(-9, 9, grid.shape))
    stencil = g2.edge_offsets[: 4 * 36]
    assert np.all((stencil > -1) & (stencil <= 1))


def test_optional_inputs_gradient(rng):
    cfg = nn.ModelConfig(**{**SMALL_1D.to_dict(), "upstream_coords": True, "edge_offsets": True,
                            "linear_skip": True})
    p = nn.init_params(cfg, 14)
    p["dec.w2"].data = rng.uniform(-0.3, 0.3, p["dec.w2"].shape)
    grid = Grid1D(16)
    U, xi = rng.random(16), rng.uniform(-7.5, -6.5, 16)
    assert model_fd_error(p, _loss_fn(grid, U, xi, rng.random(16))) < 1e-5


def test_shift_gate_values():
    g = build(Grid1D(8), np.full(8, -3.5))
    assert np.allclose(nn.shift_gate(g), 1.0, atol=1e-14)
    g = build(Grid1D(8), np.full(8, -3.0))
    assert np.all(nn.shift_gate(g) == 0.0)


def test_shift_gate_exact_at_integer_shift(rng):
    cfg = nn.ModelConfig(**{**SMALL_1D.to_dict(), "edge_offsets": True, "linear_skip": True,
                            "shift_gate": True})
    p = nn.init_params(cfg, 3)
    p["dec.w2"].data = rng.uniform(-1, 1, p["dec.w2"].shape)
    p["dec.b2"].data = rng.uniform(-1, 1, p["dec.b2"].shape)
    U = rng.random(16)
    out = nn.step(p, Grid1D(16), U, np.full(16, -7.0))
    assert np.max(np.abs(out - np.roll(U, 7))) < 1e-14


def test_local_shift_input_channels(rng):
    cfg = nn.ModelConfig.linear_2d(local_shift_input=True)
    grid = Grid2D.uniform(6, 6)
    xi, eta = np.full(grid.shape, -10.2), np.full(grid.shape, 3.75)
    g = build(grid, xi, eta)
    a, b = nn.encoder_shifts(cfg, g, xi, eta)
    assert a.shape == xi.shape and np.allclose(a, 0.8) and np.allclose(b, 0.75)
    raw = nn.encoder_shifts(nn.ModelConfig.linear_2d(), g, xi, eta)
    assert raw[0] is xi and raw[1] is eta


def test_all_options_gradient(rng):
    cfg = nn.ModelConfig(**{**SMALL_1D.to_dict(), "upstream_coords": True, "edge_offsets": True,
                            "linear_skip": True, "local_shift_input": True,
                            "shift_gate": True})
    p = nn.init_params(cfg, 15)
    p["dec.w2"].data = rng.uniform(-0.3, 0.3, p["dec.w2"].shape)
    grid = Grid1D(16)
    U, xi = rng.random(16), rng.uniform(-7.8, -6.2, 16)
    assert model_fd_error(p, _loss_fn(grid, U, xi, rng.random(16))) < 1e-5
