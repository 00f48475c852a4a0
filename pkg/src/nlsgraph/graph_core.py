"""Noncompact metric graphs, their uniform-grid discretization and quadrature.

A graph is stored together with its grid: every edge carries a node count
``n >= 2`` and is sampled uniformly. Vertices own a single degree of freedom
shared by all incident edges, so continuity holds by construction and the
Kirchhoff condition is the natural condition of the discrete energy. The far
end of a truncated half-line is clamped to zero and carries no DOF.

Edge coordinates run from ``ends[0]`` (x = 0) to ``ends[1]`` (x = length). A
half-line starts at its only vertex. A self-loop has both ends at the same
vertex and is parameterized by [0, length].
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .errors import InvalidInputError, InvalidParameterError

DEFAULT_DENSITY = 100.0
DEFAULT_TRUNCATION = 20.0


@dataclass(frozen=True)
class Bounded:
    length: float


@dataclass(frozen=True)
class HalfLine:
    truncation: float


EdgeKind = Bounded | HalfLine


@dataclass(frozen=True)
class Edge:
    kind: EdgeKind
    ends: tuple  # (a, b) for bounded edges, (a,) for half-lines
    n: int
    label: str = ""

    @property
    def is_halfline(self) -> bool:
        return isinstance(self.kind, HalfLine)

    @property
    def is_loop(self) -> bool:
        return not self.is_halfline and self.ends[0] == self.ends[1]

    @property
    def length(self) -> float:
        """Metric length; the truncation length for half-lines."""
        if self.is_halfline:
            return self.kind.truncation
        return self.kind.length

    @property
    def h(self) -> float:
        return self.length / (self.n - 1)

    def coords(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.n)


@dataclass(frozen=True)
class GraphClass:
    n_halflines: int
    has_terminal_edge: bool
    is_type_A: bool


@dataclass(frozen=True, eq=False)
class MetricGraph:
    """Immutable discretized metric graph.

    ``vertices`` holds vertex names; edge endpoints are indices into it.
    ``params`` records the constructor arguments for standard topologies.
    """

    vertices: tuple
    edges: tuple
    name: str = "graph"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        nv = len(self.vertices)
        if nv == 0:
            raise InvalidParameterError("graph needs at least one vertex")
        for e in self.edges:
            if e.n < 2:
                raise InvalidParameterError(f"edge {e.label!r}: need n >= 2 grid points")
            if e.is_halfline:
                if len(e.ends) != 1:
                    raise InvalidParameterError("a half-line has exactly one vertex")
                if not e.kind.truncation > 0:
                    raise InvalidParameterError("half-line truncation must be positive")
            else:
                if len(e.ends) != 2:
                    raise InvalidParameterError("a bounded edge has two endpoints")
                if not e.kind.length > 0:
                    raise InvalidParameterError("edge lengths must be positive")
            for v in e.ends:
                if not 0 <= v < nv:
                    raise InvalidParameterError(f"edge {e.label!r}: unknown vertex {v}")
        if not self._connected():
            raise InvalidParameterError("graph must be connected")

    def _connected(self) -> bool:
        parent = list(range(len(self.vertices)))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for e in self.edges:
            if len(e.ends) == 2:
                parent[find(e.ends[0])] = find(e.ends[1])
        return len({find(i) for i in range(len(self.vertices))}) == 1

    # ------------------------------------------------------------------ layout

    @cached_property
    def _layout(self):
        nv = len(self.vertices)
        node_index = []
        offset = nv
        for e in self.edges:
            idx = np.empty(e.n, dtype=np.int64)
            idx[0] = e.ends[0]
            idx[1:-1] = np.arange(offset, offset + e.n - 2)
            offset += e.n - 2
            idx[-1] = -1 if e.is_halfline else e.ends[1]
            node_index.append(idx)
        ci = np.concatenate([idx[:-1] for idx in node_index])
        cj = np.concatenate([idx[1:] for idx in node_index])
        cell_h = np.concatenate([np.full(e.n - 1, e.h) for e in self.edges])
        weights = np.zeros(offset)
        np.add.at(weights, ci, 0.5 * cell_h)
        inner = cj >= 0
        np.add.at(weights, cj[inner], 0.5 * cell_h[inner])
        for arr in (ci, cj, cell_h, weights):
            arr.setflags(write=False)
        return node_index, ci, cj, cell_h, 1.0 / cell_h, weights, offset

    @property
    def n_dof(self) -> int:
        return self._layout[6]

    @property
    def node_index(self) -> list:
        return self._layout[0]

    @property
    def cells(self):
        """(ci, cj, h, inv_h); ``cj == -1`` is the clamped zero node."""
        _, ci, cj, h, inv_h, _, _ = self._layout
        return ci, cj, h, inv_h

    @property
    def weights(self) -> np.ndarray:
        """Lumped (trapezoid) quadrature weight of each DOF."""
        return self._layout[5]

    @cached_property
    def stiffness(self):
        """Sparse stiffness matrix K with ``u @ K @ u = sum (du)^2 / h``."""
        import scipy.sparse as sp

        ci, cj, _, inv_h = self.cells
        n = self.n_dof
        inner = cj >= 0
        rows = np.concatenate([ci, cj[inner], ci[inner], cj[inner]])
        cols = np.concatenate([ci, cj[inner], cj[inner], ci[inner]])
        vals = np.concatenate([inv_h, inv_h[inner], -inv_h[inner], -inv_h[inner]])
        return sp.csc_matrix((vals, (rows, cols)), shape=(n, n))

    # ------------------------------------------------------------------ queries

    def edge_id(self, key) -> int:
        """Resolve an edge by index or label."""
        if isinstance(key, (int, np.integer)):
            if not 0 <= key < len(self.edges):
                raise InvalidParameterError(f"no edge {key}")
            return int(key)
        for i, e in enumerate(self.edges):
            if e.label == key:
                return i
        if isinstance(key, str) and key.isdigit():
            return self.edge_id(int(key))
        raise InvalidParameterError(f"no edge labelled {key!r}")

    def vertex_id(self, key) -> int:
        if isinstance(key, (int, np.integer)):
            if not 0 <= key < len(self.vertices):
                raise InvalidParameterError(f"no vertex {key}")
            return int(key)
        try:
            return self.vertices.index(key)
        except ValueError:
            raise InvalidParameterError(f"no vertex named {key!r}") from None

    def degree(self, v: int) -> int:
        return sum(e.ends.count(v) for e in self.edges)

    def halfline_ids(self) -> list:
        return [i for i, e in enumerate(self.edges) if e.is_halfline]

    def incident_ends(self, v: int) -> list:
        """(edge id, end position) pairs attached to vertex ``v``; position 0 or -1."""
        out = []
        for i, e in enumerate(self.edges):
            if e.ends[0] == v:
                out.append((i, 0))
            if len(e.ends) == 2 and e.ends[1] == v:
                out.append((i, -1))
        return out

    @property
    def is_noncompact(self) -> bool:
        return any(e.is_halfline for e in self.edges)

    def total_length(self) -> float:
        """Total length with half-lines counted up to their truncation."""
        return float(sum(e.length for e in self.edges))

    def with_truncation(self, truncations: dict, density: float | None = None) -> "MetricGraph":
        """Copy of the graph with new truncation lengths for the given half-line ids."""
        edges = list(self.edges)
        for i, L in truncations.items():
            e = edges[i]
            if not e.is_halfline:
                raise InvalidParameterError(f"edge {i} is not a half-line")
            dens = density if density is not None else (e.n - 1) / e.length
            edges[i] = Edge(HalfLine(float(L)), e.ends, _npoints(L, dens), e.label)
        return MetricGraph(self.vertices, tuple(edges), self.name, dict(self.params))

    def to_json_dict(self) -> dict:
        edges = []
        for e in self.edges:
            d = {
                "kind": "halfline" if e.is_halfline else "bounded",
                "length": e.length,
                "ends": [self.vertices[v] for v in e.ends],
                "n": e.n,
            }
            if e.label:
                d["label"] = e.label
            edges.append(d)
        return {"vertices": list(self.vertices), "edges": edges, "name": self.name}

    def __repr__(self):
        kinds = ",".join(e.label or ("h" if e.is_halfline else "b") for e in self.edges)
        return f"MetricGraph({self.name!r}, edges=[{kinds}], n_dof={self.n_dof})"


def _npoints(length: float, density: float) -> int:
    return max(2, int(round(length * density)) + 1)


def _check_positive(**values):
    for k, v in values.items():
        if not (np.isfinite(v) and v > 0):
            raise InvalidParameterError(f"{k} must be positive, got {v}")


def _truncation(truncation):
    t = DEFAULT_TRUNCATION if truncation is None else float(truncation)
    _check_positive(truncation=t)
    return t


# ---------------------------------------------------------------------- constructors


def line(length: float | None = None, density: float = DEFAULT_DENSITY, truncation=None) -> MetricGraph:
    """Surrogate for the real line: two half-lines glued at vertex ``o`` (x = 0)."""
    half = _truncation(truncation) if length is None else 0.5 * float(length)
    _check_positive(length=half)
    n = _npoints(half, density)
    edges = (Edge(HalfLine(half), (0,), n, "h0"), Edge(HalfLine(half), (0,), n, "h1"))
    return MetricGraph(("o",), edges, "line", {"length": 2 * half})


def halfline(length: float | None = None, density: float = DEFAULT_DENSITY, truncation=None) -> MetricGraph:
    """Surrogate for [0, inf): one half-line whose origin has degree one."""
    L = _truncation(truncation) if length is None else float(length)
    _check_positive(length=L)
    return MetricGraph(("o",), (Edge(HalfLine(L), (0,), _npoints(L, density), "h0"),), "halfline", {"length": L})


def star(N: int, t: float, density: float = DEFAULT_DENSITY, truncation=None) -> MetricGraph:
    """N half-lines and a terminal edge of length ``t`` at vertex ``v``; tip vertex ``tip``."""
    if int(N) != N or N < 2:
        raise InvalidParameterError("star graphs need N >= 2 half-lines")
    _check_positive(t=t)
    L = _truncation(truncation)
    nh = _npoints(L, density)
    edges = [Edge(HalfLine(L), (0,), nh, f"h{k}") for k in range(int(N))]
    edges.append(Edge(Bounded(float(t)), (0, 1), _npoints(t, density), "t"))
    return MetricGraph(("v", "tip"), tuple(edges), "star", {"N": int(N), "t": float(t)})


def spider(N: int, density: float = DEFAULT_DENSITY, truncation=None) -> MetricGraph:
    """N half-lines at a single vertex ``v``: the t -> 0 limit of ``star``."""
    if int(N) != N or N < 1:
        raise InvalidParameterError("spider graphs need N >= 1 half-lines")
    L = _truncation(truncation)
    nh = _npoints(L, density)
    edges = tuple(Edge(HalfLine(L), (0,), nh, f"h{k}") for k in range(int(N)))
    return MetricGraph(("v",), edges, "spider", {"N": int(N)})


def tadpole(s: float, density: float = DEFAULT_DENSITY, truncation=None) -> MetricGraph:
    """Half-line plus a self-loop of total length ``2 s`` at vertex ``v``.

    The loop coordinate x in [0, 2s] corresponds to y = x - s in [-s, s], so the
    loop midpoint is x = s.
    """
    _check_positive(s=s)
    L = _truncation(truncation)
    edges = (
        Edge(HalfLine(L), (0,), _npoints(L, density), "h0"),
        Edge(Bounded(2.0 * s), (0, 0), _npoints(2.0 * s, density), "s"),
    )
    return MetricGraph(("v",), edges, "tadpole", {"s": float(s)})


def gamma(r: float, s: float, t: float, N: int, density: float = DEFAULT_DENSITY, truncation=None) -> MetricGraph:
    """N half-lines, terminal edge ``t`` and edge ``r`` at ``v``; self-loop of length ``s`` at ``w``.

    Here the loop length is ``s`` itself (not 2s as for the tadpole).
    """
    if int(N) != N or N < 2:
        raise InvalidParameterError("gamma graphs need N >= 2 half-lines")
    _check_positive(r=r, s=s, t=t)
    L = _truncation(truncation)
    nh = _npoints(L, density)
    edges = [Edge(HalfLine(L), (0,), nh, f"h{k}") for k in range(int(N))]
    edges.append(Edge(Bounded(float(t)), (0, 2), _npoints(t, density), "t"))
    edges.append(Edge(Bounded(float(r)), (0, 1), _npoints(r, density), "r"))
    edges.append(Edge(Bounded(float(s)), (1, 1), _npoints(s, density), "s"))
    return MetricGraph(("v", "w", "tip"), tuple(edges), "gamma", {"r": float(r), "s": float(s), "t": float(t), "N": int(N)})


def compact_path(length: float, density: float = DEFAULT_DENSITY) -> MetricGraph:
    """Single bounded edge [0, length] with two degree-one vertices (auxiliary compact graph)."""
    _check_positive(length=length)
    return MetricGraph(("a", "b"), (Edge(Bounded(float(length)), (0, 1), _npoints(length, density), "e"),), "path", {"length": float(length)})


_STANDARD = {
    "line": line,
    "halfline": halfline,
    "star": star,
    "spider": spider,
    "tadpole": tadpole,
    "gamma": gamma,
    "path": compact_path,
}


def build_standard(kind: str, *params, density: float = DEFAULT_DENSITY, truncation=None) -> MetricGraph:
    """Build a named topology: line, halfline, star(N,t), spider(N), tadpole(s), gamma(r,s,t,N)."""
    try:
        ctor = _STANDARD[kind]
    except KeyError:
        raise InvalidParameterError(f"unknown graph kind {kind!r}") from None
    if kind == "path":
        if len(params) != 1:
            raise InvalidParameterError("path takes one length")
        return ctor(*params, density=density)
    if kind in ("star", "spider", "gamma"):
        params = list(params)
        nidx = 0 if kind in ("star", "spider") else 3
        if len(params) > nidx:
            v = float(params[nidx])
            if v != int(v):
                raise InvalidParameterError("N must be an integer")
            params[nidx] = int(v)
    try:
        return ctor(*params, density=density, truncation=truncation)
    except TypeError:
        raise InvalidParameterError(f"wrong number of parameters for {kind!r}: {list(params)}") from None


def parse_graph_spec(spec: str, density: float = DEFAULT_DENSITY, truncation=None) -> MetricGraph:
    """Parse ``name:params`` shorthand (``star:3,1``, ``gamma:15,2,1.3,2``) or a JSON file path."""
    if spec.endswith(".json") or Path(spec).is_file():
        return load_graph_json(spec, density=density)
    name, _, rest = spec.partition(":")
    params = [float(x) for x in rest.split(",") if x.strip()] if rest else []
    return build_standard(name.strip(), *params, density=density, truncation=truncation)


def graph_from_dict(data: dict, density: float = DEFAULT_DENSITY) -> MetricGraph:
    vertices = tuple(data["vertices"])
    index = {v: i for i, v in enumerate(vertices)}
    edges = []
    for k, ed in enumerate(data["edges"]):
        kind = ed["kind"]
        length = float(ed["length"])
        try:
            ends = tuple(index[v] for v in ed["ends"])
        except KeyError as exc:
            raise InvalidParameterError(f"edge {k}: unknown vertex {exc.args[0]!r}") from None
        n = int(ed.get("n", _npoints(length, density)))
        label = str(ed.get("label", f"e{k}"))
        if kind == "halfline":
            edges.append(Edge(HalfLine(length), ends[:1] if len(ends) else ends, n, label))
            if len(ends) != 1:
                raise InvalidParameterError("a half-line has exactly one vertex")
        elif kind == "bounded":
            edges.append(Edge(Bounded(length), ends, n, label))
        else:
            raise InvalidParameterError(f"unknown edge kind {kind!r}")
    return MetricGraph(vertices, tuple(edges), str(data.get("name", "graph")))


def load_graph_json(path, density: float = DEFAULT_DENSITY) -> MetricGraph:
    with open(path) as fh:
        return graph_from_dict(json.load(fh), density=density)


# ---------------------------------------------------------------------- functions


class GraphFunction:
    """Real function on a discretized graph, stored as its DOF vector."""

    __slots__ = ("graph", "values")

    def __init__(self, graph: MetricGraph, values=None):
        self.graph = graph
        if values is None:
            values = np.zeros(graph.n_dof)
        values = np.asarray(values, dtype=float)
        if values.shape != (graph.n_dof,):
            raise InvalidInputError(f"expected {graph.n_dof} values, got shape {values.shape}")
        self.values = values

    @classmethod
    def from_edge_arrays(cls, graph: MetricGraph, arrays: Sequence, atol: float = 1e-12) -> "GraphFunction":
        """Assemble from per-edge arrays; arrays must agree at shared vertices."""
        vals = np.full(graph.n_dof, np.nan)
        for e, idx, arr in zip(graph.edges, graph.node_index, arrays):
            arr = np.asarray(arr, dtype=float)
            if arr.shape != (e.n,):
                raise InvalidInputError(f"edge {e.label!r}: expected {e.n} samples")
            inner = idx >= 0
            tgt = idx[inner]
            prev = vals[tgt]
            clash = ~np.isnan(prev) & (np.abs(prev - arr[inner]) > atol)
            if clash.any():
                raise InvalidInputError(f"edge {e.label!r} disagrees with a neighbour at a shared vertex")
            vals[tgt] = arr[inner]
        return cls(graph, np.nan_to_num(vals))

    @classmethod
    def from_callable(cls, graph: MetricGraph, f: Callable) -> "GraphFunction":
        """Sample ``f(edge_id, x)`` on every edge; vertex values come from the first incident edge."""
        vals = np.zeros(graph.n_dof)
        seen = np.zeros(graph.n_dof, dtype=bool)
        for i, (e, idx) in enumerate(zip(graph.edges, graph.node_index)):
            y = np.broadcast_to(np.asarray(f(i, e.coords()), dtype=float), (e.n,))
            inner = idx >= 0
            tgt = idx[inner]
            fresh = ~seen[tgt]
            vals[tgt[fresh]] = y[inner][fresh]
            seen[tgt] = True
        return cls(graph, vals)

    @classmethod
    def constant(cls, graph: MetricGraph, c: float) -> "GraphFunction":
        return cls(graph, np.full(graph.n_dof, float(c)))

    def edge_values(self, e) -> np.ndarray:
        i = self.graph.edge_id(e)
        idx = self.graph.node_index[i]
        out = np.where(idx >= 0, self.values[np.maximum(idx, 0)], 0.0)
        return out

    @property
    def edges(self) -> list:
        return [self.edge_values(i) for i in range(len(self.graph.edges))]

    def vertex_value(self, v) -> float:
        return float(self.values[self.graph.vertex_id(v)])

    def copy(self) -> "GraphFunction":
        return GraphFunction(self.graph, self.values.copy())

    def with_values(self, values) -> "GraphFunction":
        return GraphFunction(self.graph, values)

    def __mul__(self, c):
        return GraphFunction(self.graph, self.values * float(c))

    __rmul__ = __mul__

    def __add__(self, other):
        return GraphFunction(self.graph, self.values + other.values)

    def __sub__(self, other):
        return GraphFunction(self.graph, self.values - other.values)

    def abs(self):
        return GraphFunction(self.graph, np.abs(self.values))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def argmax_edge(self) -> int:
        """Edge carrying the global maximum (ties resolved towards bounded edges)."""
        best, best_val = -1, -np.inf
        for i in sorted(range(len(self.graph.edges)), key=lambda k: self.graph.edges[k].is_halfline):
            m = float(np.max(self.edge_values(i)))
            if best < 0 or m > best_val + 1e-14 * max(1.0, abs(best_val)):
                best, best_val = i, m
        return best

    def __repr__(self):
        return f"GraphFunction({self.graph.name}, n_dof={self.values.size}, sup={self.sup():.6g})"


# ---------------------------------------------------------------------- quadrature


def total_compact_length(g: MetricGraph) -> float:
    """Sum of bounded edge lengths (half-lines excluded)."""
    return float(sum(e.length for e in g.edges if not e.is_halfline))


def mass(u: GraphFunction) -> float:
    """Squared L2 norm by the composite trapezoid rule."""
    return float(np.dot(u.graph.weights, u.values * u.values))


def lp_norm_p(u: GraphFunction, p: float) -> float:
    """Integral of |u|^p by the composite trapezoid rule."""
    if not 2.0 < p <= 6.0 and p != 2.0:
        raise InvalidParameterError(f"p must lie in (2, 6], got {p}")
    return float(_kernels.power_sum(u.values, u.graph.weights, float(p)))


def kinetic(u: GraphFunction) -> float:
    """Integral of |u'|^2 with cell differences (exact for piecewise-linear u)."""
    ci, cj, _, inv_h = u.graph.cells
    return float(_kernels.kinetic(u.values, ci, cj, inv_h))


def inner(u: GraphFunction, v: GraphFunction) -> float:
    return float(np.dot(u.graph.weights, u.values * v.values))


def cell_arrays(u: GraphFunction):
    """(left values, right values, cell lengths) of the piecewise-linear interpolant."""
    ci, cj, h, _ = u.graph.cells
    a = u.values[ci]
    b = np.where(cj >= 0, u.values[np.maximum(cj, 0)], 0.0)
    return a, b, h


def exact_power_integral(u: GraphFunction, q: float) -> float:
    """Exact integral of |u|^q for the piecewise-linear interpolant of ``u``."""
    a, b, h = cell_arrays(u)
    return float(np.sum(_kernels.pl_power_integrals(a, b, h, float(q))))


def classify(g: MetricGraph) -> GraphClass:
    """Count half-lines and pendant edges; type A means exactly one half-line and no terminal edge."""
    nh = sum(e.is_halfline for e in g.edges)
    terminal = any(
        (not e.is_halfline) and (not e.is_loop) and min(g.degree(e.ends[0]), g.degree(e.ends[1])) == 1
        for e in g.edges
    )
    return GraphClass(n_halflines=nh, has_terminal_edge=terminal, is_type_A=(nh == 1 and not terminal))


# ---------------------------------------------------------------------- transfer


def resample(u: GraphFunction, target: MetricGraph) -> GraphFunction:
    """Transfer ``u`` to a graph with the same edge labels.

    Bounded edges map by relative position (so a tip maximum stays at the tip);
    half-lines map by absolute position, with zero beyond the old truncation.
    """
    src = u.graph
    arrays = []
    for e in target.edges:
        j = src.edge_id(e.label) if e.label else None
        if j is None:
            raise InvalidInputError("resample needs labelled edges")
        se = src.edges[j]
        y = u.edge_values(j)
        if e.is_halfline:
            x = e.coords()
            arrays.append(np.interp(x, se.coords(), y, right=0.0))
        else:
            x = np.linspace(0.0, 1.0, e.n)
            arrays.append(np.interp(x, np.linspace(0.0, 1.0, se.n), y))
    vals = np.zeros(target.n_dof)
    # vertex values are copied from the source to keep continuity exact
    for v in range(len(target.vertices)):
        vals[v] = u.values[v] if v < len(src.vertices) else 0.0
    for e, idx, arr in zip(target.edges, target.node_index, arrays):
        vals[idx[1:-1]] = arr[1:-1]
    return GraphFunction(target, vals)


def symmetry_maps(g: MetricGraph) -> list:
    """Index permutations of the DOF vector generated by graph symmetries.

    Covers permutations of equal half-lines sharing a vertex and reflection of
    each self-loop. The identity is always included.
    """
    base = np.arange(g.n_dof)
    groups = {}
    for i, e in enumerate(g.edges):
        if e.is_halfline:
            groups.setdefault((e.ends[0], e.n, e.length), []).append(i)
    loops = [i for i, e in enumerate(g.edges) if e.is_loop]
    gens_perm = [list(itertools.permutations(ids)) for ids in groups.values()]
    maps = []
    for perm_choice in itertools.product(*gens_perm) if gens_perm else [()]:
        for refl in itertools.product((False, True), repeat=len(loops)):
            m = base.copy()
            for ids, perm in zip(groups.values(), perm_choice):
                for src_edge, dst_edge in zip(ids, perm):
                    s_idx = g.node_index[src_edge][1:-1]
                    d_idx = g.node_index[dst_edge][1:-1]
                    m[s_idx] = d_idx
            for li, flip in zip(loops, refl):
                if flip:
                    inner_idx = g.node_index[li][1:-1]
                    m[inner_idx] = inner_idx[::-1]
            maps.append(m)
    return maps
