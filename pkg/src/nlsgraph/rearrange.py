"""Monotone rearrangements of piecewise-linear graph functions.

A discretized function is the continuous piecewise-linear interpolant of its
grid values, so its distribution function is piecewise linear in the level
between consecutive distinct grid values (with jumps at plateaus). The
rearrangements below are therefore computed exactly: their breakpoints are the
pairs ``(rho(t_k), t_k)`` over the distinct grid values ``t_k``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InvalidInputError, InvalidParameterError
from .graph_core import GraphFunction, MetricGraph, cell_arrays, kinetic, mass

TAIL_LENGTH = 20.0


def _check_nonnegative(values):
    values = np.asarray(values, dtype=float)
    if values.size and np.min(values) < 0.0:
        raise InvalidInputError("rearrangements need a nonnegative function")
    return values


def _pl_integral(x, v, q):
    dx = np.diff(x)
    return float(np.sum(_kernels.pl_power_integrals(v[:-1], v[1:], dx, float(q))))


def _pl_kinetic(x, v):
    dx = np.diff(x)
    dv = np.diff(v)
    # zero-width steps only separate levels that differ by rounding
    keep = (dv != 0.0) & (dx > 0.0)
    return float(np.sum(dv[keep] ** 2 / dx[keep]))


def decreasing_nodes(a, b, h):
    """Breakpoints of the decreasing rearrangement of linear cells ``a -> b`` of length ``h``.

    Returns ``(x, t)`` with ``x`` nondecreasing from 0 to ``sum(h)`` and ``t``
    nonincreasing; the rearrangement is the linear interpolant of these nodes.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    h = np.broadcast_to(np.asarray(h, dtype=float), a.shape)
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    T = np.unique(np.concatenate([lo, hi]))
    M = T.size
    ilo = np.searchsorted(T, lo)
    ihi = np.searchsorted(T, hi)
    # cells lying entirely above level k contribute their full length
    above = np.bincount(ilo, weights=h, minlength=M + 1)
    full = np.cumsum(above[::-1])[::-1][1:]
    # sloped cells contribute a fraction at the levels they straddle
    sloped = hi > lo
    span = (ihi - ilo)[sloped]
    cell = np.repeat(np.nonzero(sloped)[0], span)
    start = np.repeat(np.cumsum(span) - span, span)
    k = ilo[cell] + (np.arange(cell.size) - start)
    frac = h[cell] * (hi[cell] - T[k]) / (hi[cell] - lo[cell])
    rho = full + np.bincount(k, weights=frac, minlength=M)
    flat = ~sloped
    plateau = np.bincount(ilo[flat], weights=h[flat], minlength=M)

    rho, plateau, T = rho[::-1], plateau[::-1], T[::-1]
    xs = np.stack([rho, rho + plateau], axis=1).ravel()
    ts = np.repeat(T, 2)
    keep = np.ones(xs.size, dtype=bool)
    keep[1::2] = plateau > 0
    x, t = xs[keep], ts[keep]
    x = np.maximum.accumulate(x)
    x[-1] = float(np.sum(h))
    return x, t


@dataclass
class Rearranged:
    """Piecewise-linear monotone profile on an interval.

    ``kind`` is ``"decreasing"`` (on [0, |G|]) or ``"symmetric"`` (on
    [-|G|/2, |G|/2]); ``source_norms`` holds the source's mass, kinetic term
    and sup for auditing.
    """

    x: np.ndarray
    values: np.ndarray
    kind: str
    source_norms: dict = field(default_factory=dict)

    @property
    def length(self) -> float:
        return float(self.x[-1] - self.x[0])

    def sup(self) -> float:
        return float(np.max(self.values))

    def integral(self, q: float) -> float:
        return _pl_integral(self.x, self.values, q)

    def mass(self) -> float:
        return self.integral(2.0)

    def kinetic(self) -> float:
        return _pl_kinetic(self.x, self.values)

    def energy(self, p: float) -> float:
        return 0.5 * self.kinetic() - self.integral(p) / p

    def sample(self, x):
        return np.interp(x, self.x, self.values)


def _source_norms(u: GraphFunction) -> dict:
    return {"mass": mass(u), "kinetic": kinetic(u), "sup": u.sup()}


def decreasing_rearrangement(u: GraphFunction) -> Rearranged:
    """u*(x) = inf{t >= 0 : rho(t) <= x} on [0, |G|]."""
    _check_nonnegative(u.values)
    if not np.any(u.values > 0):
        raise InvalidInputError("cannot rearrange the zero function")
    x, t = decreasing_nodes(*cell_arrays(u))
    return Rearranged(x, t, "decreasing", _source_norms(u))


def _symmetrize(x, t):
    xs = np.concatenate([-0.5 * x[::-1], 0.5 * x[1:]])
    ts = np.concatenate([t[::-1], t[1:]])
    return xs, ts


def symmetric_rearrangement(u: GraphFunction) -> Rearranged:
    """u^(x) = inf{t >= 0 : rho(t) <= 2|x|} on [-|G|/2, |G|/2]."""
    _check_nonnegative(u.values)
    if not np.any(u.values > 0):
        raise InvalidInputError("cannot rearrange the zero function")
    x, t = decreasing_nodes(*cell_arrays(u))
    xs, ts = _symmetrize(x, t)
    return Rearranged(xs, ts, "symmetric", _source_norms(u))


def distribution(u: GraphFunction, t) -> float:
    """rho(t) = |{u > t}| for the piecewise-linear interpolant of ``u``."""
    _check_nonnegative(u.values)
    a, b, h = cell_arrays(u)
    t = float(t)
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(hi > lo, np.clip((hi - t) / (hi - lo), 0.0, 1.0), (lo > t).astype(float))
    return float(np.dot(frac, h))


def preimage_count(u: GraphFunction, quantile_grid=200) -> int:
    """Minimum number of transversal crossings over the sampled levels.

    ``quantile_grid`` is either a number of levels spread uniformly over
    (0, sup u) or an explicit array of levels. Levels within 1e-12 of a grid
    value are skipped, which removes plateaus and vertex hits.
    """
    values = _check_nonnegative(u.values)
    top = float(np.max(values)) if values.size else 0.0
    if top <= 0.0:
        return 0
    if np.ndim(quantile_grid) == 0:
        n = int(quantile_grid)
        if n < 1:
            raise InvalidParameterError("need at least one level")
        levels = top * (np.arange(1, n + 1) / (n + 1.0))
    else:
        levels = np.asarray(quantile_grid, dtype=float)
    a, b, _ = cell_arrays(u)
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    nodes = np.unique(np.concatenate([lo, hi]))
    best = None
    for tau in levels:
        if not 0.0 < tau < top:
            continue
        j = np.searchsorted(nodes, tau)
        near = [nodes[i] for i in (j - 1, j) if 0 <= i < nodes.size]
        if any(abs(tau - v) <= 1e-12 * max(1.0, top) for v in near):
            continue
        count = int(np.count_nonzero((lo < tau) & (tau < hi)))
        best = count if best is None else min(best, count)
    return 0 if best is None else best


# ---------------------------------------------------------------------- loop transplant


@dataclass
class HalfLineTransplant:
    """Function on [0, inf): piecewise linear on [0, s], then ``delta * exp(s - x)``."""

    x: np.ndarray
    values: np.ndarray
    delta: float
    tail_length: float = TAIL_LENGTH

    @property
    def s(self) -> float:
        return float(self.x[-1])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        tail = self.delta * np.exp(np.minimum(self.s - x, 0.0))
        return np.where(x <= self.s, np.interp(x, self.x, self.values), tail)

    def _tail(self, q):
        return self.delta**q * (1.0 - np.exp(-q * self.tail_length)) / q

    def integral(self, q: float) -> float:
        return _pl_integral(self.x, self.values, q) + float(self._tail(q))

    def kinetic(self) -> float:
        return _pl_kinetic(self.x, self.values) + float(self._tail(2.0))

    def to_graph_function(self, g: MetricGraph) -> GraphFunction:
        """Sample onto a single half-line graph."""
        if len(g.edges) != 1 or not g.edges[0].is_halfline:
            raise InvalidParameterError("target must be a half-line graph")
        return GraphFunction.from_callable(g, lambda i, x: self(x))


def _split_at_level(a, b, h, tau):
    """Split linear cells at level ``tau``: (upper cells, lower cells)."""
    cross = (np.minimum(a, b) < tau) & (tau < np.maximum(a, b))
    keep = ~cross
    up = keep & (np.minimum(a, b) >= tau)
    down = keep & ~up
    ua, ub, uh = [a[up]], [b[up]], [h[up]]
    da, db, dh = [a[down]], [b[down]], [h[down]]
    ca, cb, ch = a[cross], b[cross], h[cross]
    w = ch * (tau - ca) / (cb - ca)  # distance from the left end to the crossing
    # piece attached to the left end
    left_up = ca > tau
    ua.append(ca[left_up]); ub.append(np.full(left_up.sum(), tau)); uh.append(w[left_up])
    da.append(ca[~left_up]); db.append(np.full((~left_up).sum(), tau)); dh.append(w[~left_up])
    # piece attached to the right end
    ua.append(np.full((~left_up).sum(), tau)); ub.append(cb[~left_up]); uh.append((ch - w)[~left_up])
    da.append(np.full(left_up.sum(), tau)); db.append(cb[left_up]); dh.append((ch - w)[left_up])
    cat = np.concatenate
    return (cat(ua), cat(ub), cat(uh)), (cat(da), cat(db), cat(dh))


def loop_to_halfline(u_on_loop, p_point: float, loop_length: float | None = None) -> HalfLineTransplant:
    """Transplant a nonnegative loop function onto the half-line.

    ``u_on_loop`` is either the uniform-grid array of a loop (first and last
    samples equal) or ``(GraphFunction, edge)``; ``p_point`` is a coordinate on
    the loop. On [0, l] the result is the symmetric rearrangement of
    ``{u >= u(p)}``, on [l, s] the decreasing rearrangement of the rest, after
    which it continues as ``delta * exp(s - x)`` with ``delta = min u``.
    """
    if isinstance(u_on_loop, tuple):
        gf, e = u_on_loop
        eid = gf.graph.edge_id(e)
        edge = gf.graph.edges[eid]
        if not edge.is_loop:
            raise InvalidParameterError("edge is not a self-loop")
        vals = gf.edge_values(eid)
        loop_length = edge.length
    else:
        vals = np.asarray(u_on_loop, dtype=float)
        if loop_length is None:
            raise InvalidParameterError("loop_length is required for raw arrays")
    vals = _check_nonnegative(vals)
    if vals.size < 2:
        raise InvalidInputError("need at least two samples on the loop")
    s = float(loop_length)
    if not 0.0 <= p_point <= s:
        raise InvalidParameterError("p_point must lie on the loop")
    grid = np.linspace(0.0, s, vals.size)
    tau = float(np.interp(p_point, grid, vals))
    delta = float(np.min(vals))
    a, b = vals[:-1], vals[1:]
    h = np.diff(grid)
    (ua, ub, uh), (da, db, dh) = _split_at_level(a, b, h, tau)

    xs, ts = [], []
    ell = float(np.sum(uh))
    if ell > 0:
        x, t = decreasing_nodes(ua, ub, uh)
        sx, st = _symmetrize(x, t)
        xs.append(sx + 0.5 * ell)
        ts.append(st)
    if dh.size and np.sum(dh) > 0:
        x, t = decreasing_nodes(da, db, dh)
        xs.append(x + ell)
        ts.append(t)
    x = np.concatenate(xs)
    t = np.concatenate(ts)
    # glue: drop the duplicated junction node
    dup = np.concatenate([[False], (np.diff(x) == 0) & (np.diff(t) == 0)])
    return HalfLineTransplant(x[~dup], t[~dup], delta)
