"""Encode-process-decode network for conservative semi-Lagrangian coefficients.

* encode: stacked same-size convolutions over (U, xi[, eta]) channels, ELU
  between layers, last layer linear; one feature vector per grid node.
* process: graph attention over N(i) = N_in(i) | N_out(i) (| {i}).
* decode: an MLP on [h_donor; h_receiver] per edge followed by the
  parameter-free constraint that makes every donor's coefficients sum to one.

All functions accept batches: ``U`` of shape ``(B, *S)`` is processed as the
disjoint union of ``B`` graphs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import graph as graphs
from . import nnad as ad
from .grid import Grid1D, Grid2D
from .nnad import SegmentIndex, Tensor
from .problems import make_rng


@dataclass(frozen=True)
class ModelConfig:
    dim: int = 1
    conv_layers: int = 6
    filters: int = 32
    kernel: int = 5
    gat_layers: int = 2
    hidden: int = 32
    heads: int = 4
    decoder_hidden: int = 256
    attention: str = "v2"  # "v2": score inside the nonlinearity; "v1": outside
    self_loops: bool = True
    upstream_coords: bool = False
    edge_offsets: bool = False
    linear_skip: bool = False
    local_shift_input: bool = False
    shift_gate: bool = False
    negative_slope: float = 0.2
    periodic: tuple = (True,)  # conv padding per grid-array axis

    def __post_init__(self):
        object.__setattr__(self, "periodic", tuple(bool(p) for p in self.periodic))
        for name in ("conv_layers", "filters", "kernel", "gat_layers", "hidden", "heads",
                     "decoder_hidden"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if len(self.periodic) != self.dim:
            raise ValueError("periodic needs one flag per grid axis")
        if self.kernel % 2 == 0:
            raise ValueError("kernel size must be odd")
        if self.hidden % self.heads:
            raise ValueError("hidden width must be divisible by the number of heads")
        if self.attention not in ("v1", "v2"):
            raise ValueError("attention must be 'v1' or 'v2'")

    @property
    def in_channels(self) -> int:
        return 1 + self.dim

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads

    @property
    def decoder_input(self) -> int:
        return 2 * self.hidden + (self.dim if self.edge_offsets else 0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["periodic"] = list(self.periodic)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        d = dict(d)
        d["periodic"] = tuple(d.get("periodic", (True,) * d.get("dim", 1)))
        return cls(**d)

    @classmethod
    def linear_1d(cls, **kw) -> ModelConfig:
        return cls(**{"dim": 1, "conv_layers": 6, "periodic": (True,), **kw})

    @classmethod
    def linear_2d(cls, **kw) -> ModelConfig:
        return cls(**{"dim": 2, "conv_layers": 6, "periodic": (True, True), **kw})

    @classmethod
    def vlasov(cls, **kw) -> ModelConfig:
        # array axes are (v, x): v truncated, x periodic
        return cls(**{"dim": 2, "conv_layers": 9, "periodic": (False, True), **kw})


@dataclass
class ModelParams:
    config: ModelConfig
    tensors: dict[str, Tensor] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors.items())

    def names(self) -> list[str]:
        return list(self.tensors)

    @property
    def count(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))

    def copy(self) -> ModelParams:
        return ModelParams(self.config, {k: Tensor(t.data.copy(), requires_grad=t.requires_grad,
                                                   name=k)
                                         for k, t in self.tensors.items()})

    def state(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.tensors.items()}

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[tuple, int]]:
    """Name -> (shape, fan_in) in a fixed order."""
    k = (cfg.kernel,) * cfg.dim
    out: dict[str, tuple[tuple, int]] = {}
    c_in = cfg.in_channels
    for layer in range(cfg.conv_layers):
        fan = c_in * cfg.kernel ** cfg.dim
        out[f"enc.{layer}.w"] = ((cfg.filters, c_in) + k, fan)
        out[f"enc.{layer}.b"] = ((cfg.filters,), fan)
        c_in = cfg.filters
    width = cfg.filters + (cfg.dim if cfg.upstream_coords else 0)
    hd = cfg.hidden
    for layer in range(cfg.gat_layers):
        p = f"gat.{layer}."
        out[p + "msg_i"] = ((hd, width), 2 * width)
        out[p + "msg_j"] = ((hd, width), 2 * width)
        out[p + "msg_b"] = ((hd,), 2 * width)
        out[p + "att_i"] = ((hd, width), 2 * width)
        out[p + "att_j"] = ((hd, width), 2 * width)
        out[p + "att_a"] = ((cfg.heads, cfg.head_dim), cfg.head_dim)
        out[p + "upd_h"] = ((cfg.hidden, width), width + hd)
        out[p + "upd_m"] = ((cfg.hidden, hd), width + hd)
        out[p + "upd_b"] = ((cfg.hidden,), width + hd)
        width = cfg.hidden
    out["dec.w1_donor"] = ((cfg.decoder_hidden, cfg.hidden), cfg.decoder_input)
    out["dec.w1_recv"] = ((cfg.decoder_hidden, cfg.hidden), cfg.decoder_input)
    if cfg.edge_offsets:
        out["dec.w1_edge"] = ((cfg.decoder_hidden, cfg.dim), cfg.decoder_input)
    out["dec.b1"] = ((cfg.decoder_hidden,), cfg.decoder_input)
    out["dec.w2"] = ((1, cfg.decoder_hidden), cfg.decoder_hidden)
    out["dec.b2"] = ((1,), cfg.decoder_hidden)
    return out


def init_params(cfg: ModelConfig, seed: int = 0) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.

    With ``linear_skip`` the decoder output layer starts at zero.
    """
    rng = make_rng(seed)
    tensors = {}
    for name, (shape, fan) in param_shapes(cfg).items():
        bound = 1.0 / math.sqrt(fan)
        data = rng.uniform(-bound, bound, size=shape)
        if cfg.linear_skip and name in ("dec.w2", "dec.b2"):
            data[...] = 0.0  # start from the conservative linear scheme
        tensors[name] = Tensor(data, requires_grad=True, name=name)
    return ModelParams(cfg, tensors)


def zeros_like_params(cfg: ModelConfig) -> ModelParams:
    return ModelParams(cfg, {n: Tensor(np.zeros(s), requires_grad=True, name=n)
                             for n, (s, _) in param_shapes(cfg).items()})


# ---------------------------------------------------------------- network parts

def _batched(x, spatial_ndim: int):
    """Return (array-or-tensor with leading batch axis, was_batched)."""
    nd = x.ndim
    if nd == spatial_ndim + 1:
        return x, True
    if nd == spatial_ndim:
        return (x.reshape((1,) + tuple(x.shape)) if isinstance(x, Tensor)
                else np.asarray(x, dtype=float)[None]), False
    raise ValueError(f"expected {spatial_ndim} or {spatial_ndim + 1} axes, got {nd}")


def encode(params: ModelParams, U, xi, eta=None) -> Tensor:
    """Node embeddings of shape (B*N, filters); B=1 for unbatched input."""
    cfg = params.config
    U, _ = _batched(U if isinstance(U, Tensor) else np.asarray(U, dtype=float), cfg.dim)
    xi, _ = _batched(np.asarray(xi, dtype=float), cfg.dim)
    chans = [xi] if cfg.dim == 1 else [xi, _batched(np.asarray(eta, dtype=float), cfg.dim)[0]]
    if any(c.shape != U.shape for c in chans):
        raise ValueError("U and shift fields must share a grid")
    B, spatial = U.shape[0], tuple(U.shape[1:])
    cshape = (B, 1) + spatial
    x = ad.concat([ad.reshape(U, cshape)] + [Tensor(c.reshape(cshape)) for c in chans], axis=1)
    for layer in range(cfg.conv_layers):
        x = ad.conv(x, params[f"enc.{layer}.w"], params[f"enc.{layer}.b"], cfg.periodic)
        if layer < cfg.conv_layers - 1:
            x = ad.elu(x)
    x = ad.transpose(x, (0,) + tuple(range(2, 2 + cfg.dim)) + (1,))
    return ad.reshape(x, (B * int(np.prod(spatial)), cfg.filters))


class GraphIndex:
    """Segment indices derived from a graph, built once per forward pass."""

    def __init__(self, g: graphs.UpstreamGraph, self_loops: bool = True):
        n = g.n_nodes
        self.graph = g
        self.src = SegmentIndex(g.src, n)
        self.dst = SegmentIndex(g.dst, n)
        center, nbr = g.neighborhood
        if not self_loops:
            keep = center != nbr
            center, nbr = center[keep], nbr[keep]
        self.center = SegmentIndex(center, n)
        self.neighbor = SegmentIndex(nbr, n)
        q = g.out_degree
        if np.any(q == 0):
            raise ValueError("donor without out-edges; repair the graph first")
        self.inv_out_degree = 1.0 / q


def _as_index(g, cfg: ModelConfig) -> GraphIndex:
    return g if isinstance(g, GraphIndex) else GraphIndex(g, cfg.self_loops)


def process(params: ModelParams, g, h: Tensor, return_attention: bool = False):
    cfg = params.config
    gi = _as_index(g, cfg)
    if cfg.upstream_coords:
        h = ad.concat([h, Tensor(gi.graph.local_coords)], axis=1)
    n_pairs = len(gi.center)
    attention = []
    for layer in range(cfg.gat_layers):
        p = f"gat.{layer}."
        msg = ad.elu(ad.gather(ad.linear(h, params[p + "msg_i"]), gi.center)
                     + ad.gather(ad.linear(h, params[p + "msg_j"]), gi.neighbor)
                     + params[p + "msg_b"])
        pre = (ad.gather(ad.linear(h, params[p + "att_i"]), gi.center)
               + ad.gather(ad.linear(h, params[p + "att_j"]), gi.neighbor))
        pre = ad.reshape(pre, (n_pairs, cfg.heads, cfg.head_dim))
        if cfg.attention == "v2":
            score = ad.reduce_sum(ad.leaky_relu(pre, cfg.negative_slope) * params[p + "att_a"],
                                  axis=2)
        else:
            score = ad.leaky_relu(ad.reduce_sum(pre * params[p + "att_a"], axis=2),
                                  cfg.negative_slope)
        alpha = ad.segment_softmax(score, gi.center)
        attention.append(alpha)
        weighted = ad.reshape(ad.reshape(msg, (n_pairs, cfg.heads, cfg.head_dim))
                              * ad.reshape(alpha, (n_pairs, cfg.heads, 1)), (n_pairs, cfg.hidden))
        m = ad.scatter_sum(weighted, gi.center)
        h = (ad.linear(h, params[p + "upd_h"]) + ad.linear(m, params[p + "upd_m"])
             + params[p + "upd_b"])
        if layer < cfg.gat_layers - 1:
            h = ad.elu(h)
    return (h, attention) if return_attention else h


def decode_raw(params: ModelParams, g, h: Tensor) -> Tensor:
    """Unconstrained per-edge coefficients from [h_donor; h_receiver].

    Optional extras: the edge offset as decoder input and the (bi)linear
    interpolation weight of the edge added to the output.
    """
    cfg = params.config
    gi = _as_index(g, cfg)
    pre = (ad.gather(ad.linear(h, params["dec.w1_donor"]), gi.src)
           + ad.gather(ad.linear(h, params["dec.w1_recv"]), gi.dst) + params["dec.b1"])
    if cfg.edge_offsets:
        pre = pre + ad.linear(gi.graph.edge_offsets, params["dec.w1_edge"])
    z = ad.elu(pre)
    out = ad.reshape(ad.linear(z, params["dec.w2"], params["dec.b2"]), (gi.graph.n_edges,))
    if cfg.shift_gate:
        out = out * shift_gate(gi.graph)
    if cfg.linear_skip:
        out = out + graphs.linear_weights(gi.graph)
    return out


def shift_gate(g: graphs.UpstreamGraph) -> np.ndarray:
    """Per-edge factor 4 sum_ax theta(1 - theta) of the receiver; zero at integer shifts."""
    theta = np.clip(g.local_coords, 0.0, 1.0)
    return 4.0 * np.sum(theta * (1.0 - theta), axis=1)[g.dst]


def constraint(d_raw, g):
    """d = d_raw + (1 - s_j) / q_j on every out-edge of donor j.

    Works on arrays (returns an array) and on tensors (differentiable).
    """
    if not isinstance(d_raw, Tensor):
        gr = g.graph if isinstance(g, GraphIndex) else g
        d_raw = np.asarray(d_raw, dtype=float)
        q = gr.out_degree
        if np.any(q == 0):
            raise ValueError("donor without out-edges; repair the graph first")
        s = np.bincount(gr.src, weights=d_raw, minlength=gr.n_nodes)
        return d_raw + ((1.0 - s) / q)[gr.src]
    gi = g if isinstance(g, GraphIndex) else GraphIndex(g)
    s = ad.scatter_sum(d_raw, gi.src)
    corr = (1.0 - s) * gi.inv_out_degree
    return d_raw + ad.gather(corr, gi.src)


def decode(params: ModelParams, g, h: Tensor) -> Tensor:
    gi = _as_index(g, params.config)
    return constraint(decode_raw(params, gi, h), gi)


def build_graph(grid, xi, eta=None) -> graphs.UpstreamGraph:
    """Repaired graph for one sample or the disjoint union over a batch."""
    spatial = 1 if isinstance(grid, Grid1D) else 2
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == spatial:
        return graphs.build(grid, xi, eta)
    eta_b = [None] * len(xi) if eta is None else np.asarray(eta, dtype=float)
    return graphs.union([graphs.build(grid, x, e) for x, e in zip(xi, eta_b)])


def encoder_shifts(cfg: ModelConfig, g: graphs.UpstreamGraph, xi, eta=None):
    """Shift channels fed to the encoder: raw shifts, or in-cell positions if configured."""
    if not cfg.local_shift_input:
        return xi, eta
    lc = g.local_coords
    xi_l = lc[:, 0].reshape(np.shape(xi))
    return xi_l, (None if eta is None else lc[:, 1].reshape(np.shape(eta)))


def coefficients(params: ModelParams, grid, U, xi, eta=None, g=None):
    """Return (graph, coefficient tensor) for the given state and shifts."""
    if g is None:
        g = build_graph(grid, xi, eta)
    gi = GraphIndex(g, params.config.self_loops)
    h = encode(params, U, *encoder_shifts(params.config, g, xi, eta))
    h = process(params, gi, h)
    return g, decode(params, gi, h)


def apply(g, d, U):
    """U_new[i] = sum over edges (j -> i) of d_ji U_j, shaped like U."""
    gi = g if isinstance(g, GraphIndex) else None
    gr = gi.graph if gi else g
    shape = tuple(U.shape)
    if isinstance(U, Tensor) or isinstance(d, Tensor):
        src = gi.src if gi else SegmentIndex(gr.src, gr.n_nodes)
        dst = gi.dst if gi else SegmentIndex(gr.dst, gr.n_nodes)
        flat = ad.reshape(U, (gr.n_nodes,)) if isinstance(U, Tensor) else Tensor(
            np.asarray(U, dtype=float).reshape(-1))
        return ad.reshape(ad.scatter_sum(d * ad.gather(flat, src), dst), shape)
    flat = np.asarray(U, dtype=float).reshape(-1)
    return np.bincount(gr.dst, weights=d * flat[gr.src], minlength=gr.n_nodes).reshape(shape)


def step(params: ModelParams, grid, U, xi, eta=None, g=None):
    """One learned SL step. Returns a Tensor if U is a Tensor, else an array."""
    cfg = params.config
    if cfg.dim == 2 and eta is None:
        raise ValueError("2D model needs both shift components")
    if isinstance(grid, Grid1D) != (cfg.dim == 1):
        raise ValueError("grid dimension does not match the model")
    if g is None:
        g = build_graph(grid, xi, eta)
    gi = GraphIndex(g, cfg.self_loops)
    h = process(params, gi, encode(params, U, *encoder_shifts(cfg, g, xi, eta)))
    d = decode(params, gi, h)
    if isinstance(U, Tensor):
        return apply(gi, d, U)
    return apply(gi, d.data, np.asarray(U, dtype=float))


def cfl_warning(trained_range, cfl: float) -> str | None:
    """Message (and a warning) when ``cfl`` lies outside the trained range."""
    if not trained_range:
        return None
    lo, hi = trained_range
    if lo - 1e-12 <= cfl <= hi + 1e-12:
        return None
    msg = (f"WARNING: CFL {cfl:.4g} is outside the trained range [{lo:.4g}, {hi:.4g}]; "
           "accuracy may deteriorate")
    warnings.warn(msg, stacklevel=2)
    return msg


def grid_for(cfg: ModelConfig, shape) -> Grid1D | Grid2D:
    """Unit-spacing grid matching ``shape`` and the model's periodicity."""
    if cfg.dim == 1:
        return Grid1D(shape[-1], 0.0, float(shape[-1]), periodic=cfg.periodic[0])
    ny, nx = shape[-2:]
    return Grid2D(Grid1D(nx, 0.0, float(nx), periodic=cfg.periodic[1]),
                  Grid1D(ny, 0.0, float(ny), periodic=cfg.periodic[0]))
