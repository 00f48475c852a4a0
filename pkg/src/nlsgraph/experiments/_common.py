"""Shared plumbing for the experiments: worker pool, multistart runs, far level."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from functools import lru_cache

import numpy as np

from .. import graph_core as gc
from .. import solver as S
from ..errors import NLSGraphError

WORKER_ENV = "NLSGRAPH_WORKERS"


def workers() -> int:
    """Worker count from NLSGRAPH_WORKERS (default 1, sequential)."""
    try:
        n = int(os.environ.get(WORKER_ENV, "1"))
    except ValueError:
        n = 1
    return max(1, n)


def pmap(fn, items):
    """Order-preserving map, in a process pool when more than one worker is allowed."""
    items = list(items)
    n = min(workers(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def solve_task(task):
    """Top-level (picklable) wrapper around ``solver.minimize``.

    ``task = (graph, mu, p, constraint, config, initial, tag)``; solver errors are
    returned rather than raised so one failing start does not end a batch.
    """
    g, mu, p, constraint, config, initial, tag = task
    try:
        return tag, S.minimize(g, mu, p, constraint=constraint, config=config, initial=initial)
    except NLSGraphError as exc:
        return tag, exc


def best_result(results):
    """Lowest-energy converged result, else the lowest-energy one; None if all failed."""
    ok = [r for r in results if isinstance(r, S.GroundStateResult)]
    if not ok:
        return None
    conv = [r for r in ok if r.converged]
    return min(conv or ok, key=lambda r: r.energy)


def sharp_guess(g, p, mu, edge, x0, scale=2.0):
    """Soliton start with the profile of mass ``scale * mu``, renormalized to ``mu``."""
    return S.project_mass(S.soliton_guess(g, p, scale * mu, edge, x0), mu)


def multistart(g, p, mu, K, config, constraint=None, seed=0):
    """Run ``K`` menu starts on the prepared graph; returns ``[(descriptor, result)]``."""
    graph = S.prepare_graph(g, p, mu, config)
    menu = S.multistart_guesses(graph, p, mu, K, seed)
    tasks = [(graph, mu, p, constraint or S.MassOnly(), config, u0, desc) for desc, u0 in menu]
    return pmap(solve_task, tasks)


@lru_cache(maxsize=128)
def _far_level(p, mu, density, truncation, max_iter):
    cfg = S.SolverConfig(p=p, density=density, truncation=truncation, max_iter=max_iter)
    res = S.minimize(gc.line(density=density), mu, p, config=cfg)
    return res.energy, res.multiplier, res.converged


def far_level(p: float, mu: float, config: S.SolverConfig) -> float:
    """Level of a soliton escaping along a half-line at the grid density of ``config``.

    This is the discrete counterpart of the line level: the energy of the line
    surrogate computed with the same spacing, so sign tests against it are free
    of the O(h^2) discretization offset.
    """
    if p >= 6.0:
        return 0.0
    trunc = config.truncation if isinstance(config.truncation, (int, float)) else None
    return _far_level(float(p), float(mu), float(config.density), trunc, int(config.max_iter))[0]


def h1_norm_matrix(g: gc.MetricGraph):
    """K + W, the discrete H^1 Gram matrix."""
    import scipy.sparse as sp

    return (g.stiffness + sp.diags(g.weights)).tocsr()


def h1_distance(u: gc.GraphFunction, v: gc.GraphFunction, maps=None, gram=None) -> float:
    """Discrete H^1 distance minimized over the symmetries of the graph."""
    g = u.graph
    if v.graph is not g:
        v = gc.resample(v, g)
    maps = gc.symmetry_maps(g) if maps is None else maps
    gram = h1_norm_matrix(g) if gram is None else gram
    best = math.inf
    for m in maps:
        d = u.values - v.values[m]
        best = min(best, float(d @ (gram @ d)))
    return math.sqrt(max(best, 0.0))


def quiet(config: S.SolverConfig | None, **changes) -> S.SolverConfig:
    """Copy of ``config`` without energy histories (and with ``changes``)."""
    config = config or S.SolverConfig()
    return replace(config, record_history=False, **changes)


def finite(x) -> bool:
    return x is not None and bool(np.isfinite(x))
