"""Dynamical donor -> receiver graphs built from normalized shifts.

Receiver ``i`` gets its stencil from the grid cell that contains its upstream
point, using right-closed intervals ``(x_{j-1}, x_j]`` on every axis. In 1D
the stencil is ``(j-1, j)``; in 2D it is the four cell corners in the order
SW, SE, NW, NE. Edges are stored receiver-major so that edge ``S*i + s`` is
the ``s``-th stencil entry of receiver ``i``; repair edges follow at the end.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .grid import Grid1D, Grid2D


@dataclass(frozen=True, eq=False)
class UpstreamGraph:
    n_nodes: int
    src: np.ndarray
    dst: np.ndarray
    stencil: np.ndarray  # (n_nodes, S) donor ids in canonical order
    upstream: np.ndarray  # (n_nodes, dim) upstream points, index units, x first
    shape: tuple  # grid array shape, (n,) or (ny, nx)
    periodic: tuple  # per grid-array axis
    spacing: tuple  # per grid-array axis
    n_repairs: int = 0
    n_graphs: int = 1
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def stencil_size(self) -> int:
        return self.stencil.shape[1]

    @property
    def n_edges(self) -> int:
        return len(self.src)

    @cached_property
    def out_degree(self) -> np.ndarray:
        return np.bincount(self.src, minlength=self.n_nodes)

    @cached_property
    def in_degree(self) -> np.ndarray:
        return np.bincount(self.dst, minlength=self.n_nodes)

    @cached_property
    def _out_csr(self):
        order = np.argsort(self.src, kind="stable")
        offsets = np.zeros(self.n_nodes + 1, dtype=np.int64)
        np.cumsum(self.out_degree, out=offsets[1:])
        return offsets, order

    @property
    def out_offsets(self) -> np.ndarray:
        return self._out_csr[0]

    @property
    def out_edges(self) -> np.ndarray:
        """Edge ids grouped by donor; donor j owns out_edges[offsets[j]:offsets[j+1]]."""
        return self._out_csr[1]

    def out_neighbors(self, j: int) -> np.ndarray:
        lo, hi = self.out_offsets[j], self.out_offsets[j + 1]
        return self.dst[self.out_edges[lo:hi]]

    def in_neighbors(self, i: int) -> np.ndarray:
        return self.src[self.dst == i]

    @cached_property
    def neighborhood(self) -> tuple[np.ndarray, np.ndarray]:
        """(center, neighbor) pairs for N_in(i) | N_out(i) | {i}, sorted by center."""
        n = self.n_nodes
        nodes = np.arange(n, dtype=np.int64)
        center = np.concatenate([self.dst, self.src, nodes])
        other = np.concatenate([self.src, self.dst, nodes])
        key = np.unique(center * n + other)
        return key // n, key % n

    @cached_property
    def local_coords(self) -> np.ndarray:
        """Position of each upstream point relative to its stencil cell's lower corner.

        In (0, 1] per axis, except on a bounded axis where points beyond the
        end cells are measured from the clamped cell (and fall outside).
        """
        base = np.ceil(self.upstream) - 1.0
        sizes, periodic = self.shape[::-1], self.periodic[::-1]
        for ax in range(base.shape[1]):
            if not periodic[ax]:
                base[:, ax] = np.clip(base[:, ax], 0, sizes[ax] - 2)
        return self.upstream - base

    @cached_property
    def edge_offsets(self) -> np.ndarray:
        """Receiver's upstream point minus donor position per edge, index units, x first.

        Periodic axes use the nearest periodic image, so stencil edges lie in
        (-1, 1] on every periodic axis.
        """
        pos = np.tile(_node_positions(self), (self.n_graphs, 1))
        d = self.upstream[self.dst] - pos[self.src]
        sizes, periodic = self.shape[::-1], self.periodic[::-1]
        for ax in range(d.shape[1]):
            if periodic[ax]:
                d[:, ax] -= sizes[ax] * np.round(d[:, ax] / sizes[ax])
        return d

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("src,dst\n")
        for s, d in zip(self.src.tolist(), self.dst.tolist()):
            buf.write(f"{s},{d}\n")
        return buf.getvalue()


def _finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("shift field contains non-finite values")


def _cell(p: np.ndarray, n: int, periodic: bool) -> np.ndarray:
    """Upper cell index j with p in (j-1, j]; clamped to [1, n-1] if not periodic."""
    j = np.ceil(p).astype(np.int64)
    return j if periodic else np.clip(j, 1, n - 1)


def build_1d(xi, grid: Grid1D) -> UpstreamGraph:
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.shape != (grid.n,):
        raise ValueError(f"xi has {xi.size} entries, grid has {grid.n}")
    _finite(xi)
    n = grid.n
    p = np.arange(n) + xi
    j = _cell(p, n, grid.periodic)
    stencil = np.stack([(j - 1) % n, j % n], axis=1)
    return UpstreamGraph(
        n_nodes=n, src=stencil.reshape(-1),
        dst=np.repeat(np.arange(n, dtype=np.int64), 2), stencil=stencil,
        upstream=p[:, None], shape=(n,), periodic=(grid.periodic,), spacing=(grid.h,))


def build_2d(xi, eta, grid: Grid2D) -> UpstreamGraph:
    xi = np.asarray(xi, dtype=float).reshape(grid.shape)
    eta = np.asarray(eta, dtype=float).reshape(grid.shape)
    _finite(xi, eta)
    nx, ny = grid.nx, grid.ny
    jj, ii = np.indices(grid.shape)
    p = (ii + xi).reshape(-1)
    q = (jj + eta).reshape(-1)
    i1 = _cell(p, nx, grid.x.periodic)
    j1 = _cell(q, ny, grid.y.periodic)
    i0, i1 = (i1 - 1) % nx, i1 % nx
    j0, j1 = (j1 - 1) % ny, j1 % ny
    stencil = np.stack([j0 * nx + i0, j0 * nx + i1, j1 * nx + i0, j1 * nx + i1], axis=1)
    n = nx * ny
    return UpstreamGraph(
        n_nodes=n, src=stencil.reshape(-1),
        dst=np.repeat(np.arange(n, dtype=np.int64), 4), stencil=stencil,
        upstream=np.stack([p, q], axis=1), shape=grid.shape,
        periodic=(grid.y.periodic, grid.x.periodic), spacing=(grid.hy, grid.hx))


def build(grid, xi, eta=None) -> UpstreamGraph:
    """Build and repair the graph for either dimension."""
    g = build_1d(xi, grid) if isinstance(grid, Grid1D) else build_2d(xi, eta, grid)
    return repair_orphans(g)


def _node_positions(g: UpstreamGraph) -> np.ndarray:
    """Grid-point positions in index units, x first (matches ``upstream``)."""
    if len(g.shape) == 1:
        return np.arange(g.shape[0], dtype=float)[:, None]
    jj, ii = np.indices(g.shape)
    return np.stack([ii.reshape(-1), jj.reshape(-1)], axis=1).astype(float)


def repair_orphans(g: UpstreamGraph) -> UpstreamGraph:
    """Give every donor without receivers one edge to its nearest upstream point.

    Distances are physical and periodic on periodic axes; ties go to the
    lower receiver index.
    """
    orphans = np.flatnonzero(g.out_degree == 0)
    if orphans.size == 0:
        return g
    pos = _node_positions(g)
    # axis order of upstream/pos is x first; shape/periodic/spacing are array order
    sizes = g.shape[::-1]
    periodic = g.periodic[::-1]
    spacing = g.spacing[::-1]
    targets = np.empty(orphans.size, dtype=np.int64)
    chunk = max(1, 2_000_000 // g.n_nodes)
    for start in range(0, orphans.size, chunk):
        block = orphans[start:start + chunk]
        dist2 = np.zeros((block.size, g.n_nodes))
        for ax in range(pos.shape[1]):
            d = np.abs(pos[block, ax][:, None] - g.upstream[None, :, ax])
            if periodic[ax]:
                d = d % sizes[ax]
                d = np.minimum(d, sizes[ax] - d)
            dist2 += (d * spacing[ax]) ** 2
        targets[start:start + block.size] = np.argmin(dist2, axis=1)
    return UpstreamGraph(
        n_nodes=g.n_nodes, src=np.concatenate([g.src, orphans]),
        dst=np.concatenate([g.dst, targets]), stencil=g.stencil, upstream=g.upstream,
        shape=g.shape, periodic=g.periodic, spacing=g.spacing,
        n_repairs=g.n_repairs + int(orphans.size), n_graphs=g.n_graphs, meta=g.meta)


def union(graphs: list[UpstreamGraph]) -> UpstreamGraph:
    """Disjoint union with node ids offset graph by graph (for batching)."""
    if len(graphs) == 1:
        return graphs[0]
    offsets = np.cumsum([0] + [g.n_nodes for g in graphs[:-1]])
    g0 = graphs[0]
    return UpstreamGraph(
        n_nodes=int(sum(g.n_nodes for g in graphs)),
        src=np.concatenate([g.src + o for g, o in zip(graphs, offsets)]),
        dst=np.concatenate([g.dst + o for g, o in zip(graphs, offsets)]),
        stencil=np.concatenate([g.stencil + o for g, o in zip(graphs, offsets)]),
        upstream=np.concatenate([g.upstream for g in graphs]),
        shape=g0.shape, periodic=g0.periodic, spacing=g0.spacing,
        n_repairs=int(sum(g.n_repairs for g in graphs)),
        n_graphs=int(sum(g.n_graphs for g in graphs)))


def linear_weights(g: UpstreamGraph) -> np.ndarray:
    """(Bi)linear interpolation weight of each edge at the receiver's upstream point.

    Repair edges get weight zero.
    """
    s = np.clip(g.local_coords, 0.0, 1.0)
    if g.stencil_size == 2:
        w = np.stack([1.0 - s[:, 0], s[:, 0]], axis=1)
    else:
        sx, sy = s[:, 0], s[:, 1]
        w = np.stack([(1 - sx) * (1 - sy), sx * (1 - sy), (1 - sx) * sy, sx * sy], axis=1)
    out = np.zeros(g.n_edges)
    out[: w.size] = w.reshape(-1)
    return out
