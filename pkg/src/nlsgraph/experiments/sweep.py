"""Mass sweeps of the ground-state level and multistart uniqueness probes."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import analytic
from .. import solver as S
from ..errors import InvalidParameterError
from ._common import best_result, h1_distance, h1_norm_matrix, multistart, quiet

CLUSTER_FACTOR = 1e-3  # clustering threshold is CLUSTER_FACTOR * sqrt(mu)
ENERGY_WINDOW = 1e-4  # runs this close to the best energy count as ground-state candidates


@dataclass
class SweepRecord:
    mu: float
    energy: float
    multiplier: float
    n_clusters: int
    converged: bool
    diagnostics: dict = field(default_factory=dict)
    derivative: float | None = None  # finite-difference estimate of the level's slope
    derivative_residual: float | None = None  # |slope + multiplier / 2|
    second_difference: float | None = None
    interior: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class UniquenessReport:
    n_clusters: int
    representatives: list
    max_intra_distance: float
    cluster_ids: list
    energies: list
    multipliers: list
    n_converged: int
    n_runs: int
    inconclusive: bool
    threshold: float
    n_critical_clusters: int = 0

    def to_dict(self) -> dict:
        reps = [
            {"energy": r.energy, "multiplier": r.multiplier, "sup_edge": r.graph.edges[r.u.argmax_edge()].label}
            for r in self.representatives
        ]
        d = asdict(self)
        d["representatives"] = reps
        return d


def _cluster(results, mu, factor=CLUSTER_FACTOR):
    """Single-linkage clusters under the symmetry-reduced H^1 distance.

    Returns ``(ids, representatives, max intra-cluster distance)``; merging on
    ``d <= threshold`` breaks ties toward fewer clusters.
    """
    n = len(results)
    if n == 0:
        return [], [], 0.0
    g = max((r.graph for r in results), key=lambda g: g.n_dof)
    from ..graph_core import resample, symmetry_maps

    us = [r.u if r.graph is g else resample(r.u, g) for r in results]
    maps = symmetry_maps(g)
    gram = h1_norm_matrix(g)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            D[i, j] = D[j, i] = h1_distance(us[i], us[j], maps, gram)
    thr = factor * math.sqrt(mu)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if D[i, j] <= thr:
                parent[find(i)] = find(j)
    roots = {}
    ids = [roots.setdefault(find(i), len(roots)) for i in range(n)]
    ids_arr = np.array(ids)
    spread = 0.0
    reps = []
    for c in range(len(roots)):
        members = np.nonzero(ids_arr == c)[0]
        spread = max(spread, float(D[np.ix_(members, members)].max()))
        reps.append(min((results[i] for i in members), key=lambda r: r.energy))
    return ids, reps, spread


def uniqueness_probe(g, p: float, mu: float, config: S.SolverConfig | None = None, K: int = 20,
                     energy_window: float = ENERGY_WINDOW) -> UniquenessReport:
    """Cluster ``K`` converged multistart minimizers.

    ``n_clusters`` counts clusters among the ground-state candidates (energies
    within ``energy_window`` of the best); ``n_critical_clusters`` counts all
    converged runs. Fewer than K/2 converged runs marks the probe inconclusive.
    """
    config = quiet(config, p=p)
    runs = [r for _, r in multistart(g, p, mu, K, config, seed=config.seed)]
    ok = [r for r in runs if isinstance(r, S.GroundStateResult) and r.converged]
    thr = CLUSTER_FACTOR * math.sqrt(mu)
    if not ok:
        return UniquenessReport(0, [], 0.0, [], [], [], 0, K, True, thr, 0)
    emin = min(r.energy for r in ok)
    cand = [r for r in ok if r.energy <= emin + energy_window]
    all_ids, _, _ = _cluster(ok, mu)
    ids, reps, spread = _cluster(cand, mu)
    reps.sort(key=lambda r: r.energy)
    return UniquenessReport(
        n_clusters=len(reps),
        representatives=reps,
        max_intra_distance=spread,
        cluster_ids=ids,
        energies=[r.energy for r in cand],
        multipliers=[r.multiplier for r in cand],
        n_converged=len(ok),
        n_runs=K,
        inconclusive=len(ok) < K / 2,
        threshold=thr,
        n_critical_clusters=len(set(all_ids)),
    )


def _check_grid(p, mu_grid, g):
    mu = np.asarray(mu_grid, dtype=float)
    if mu.ndim != 1 or mu.size < 1 or not np.all(np.isfinite(mu)) or np.any(mu <= 0):
        raise InvalidParameterError("mass grid must be a list of positive numbers")
    if np.any(np.diff(mu) <= 0):
        raise InvalidParameterError("mass grid must be strictly increasing")
    if p >= 6.0 and g.name == "tadpole" and (mu[0] <= analytic.MU_R_PLUS or mu[-1] > analytic.MU_R):
        raise InvalidParameterError("at p = 6 tadpole ground states exist only for mu in (mu_R+, mu_R]")
    return mu


def _diag_summary(r: S.GroundStateResult) -> dict:
    return {
        "kirchhoff_residual": r.kirchhoff_residual,
        "el_residual": r.el_residual,
        "mech_variation": r.mech_variation,
        "halfline_constant": r.halfline_constant,
        "grad_norm": r.grad_norm,
        "iterations": r.iterations,
    }


def sweep_mu(g, p: float, mu_grid, config: S.SolverConfig | None = None, n_starts: int = 4) -> list:
    """Best multistart level and multiplier over a mass grid, with slope residuals.

    Interior rows get central differences of the level; endpoints one-sided
    differences (``interior=False``). Rows next to an unconverged row carry no
    derivative residual.
    """
    config = quiet(config, p=p)
    mu = _check_grid(p, mu_grid, g)
    rows = []
    for m in mu:
        runs = [r for _, r in multistart(g, p, float(m), n_starts, config, seed=config.seed)]
        best = best_result(runs)
        if best is None:
            rows.append(SweepRecord(float(m), math.nan, math.nan, 0, False))
            continue
        ok = [r for r in runs if isinstance(r, S.GroundStateResult) and r.converged]
        cand = [r for r in ok if r.energy <= best.energy + ENERGY_WINDOW]
        n_cl = len(_cluster(cand, float(m))[1]) if cand else 0
        rows.append(SweepRecord(float(m), best.energy, best.multiplier, n_cl, best.converged, _diag_summary(best)))
    E = np.array([r.energy for r in rows])
    conv = np.array([r.converged for r in rows])
    n = len(rows)
    for k, row in enumerate(rows):
        if n < 2 or not conv[k]:
            continue
        if 0 < k < n - 1:
            row.interior = True
            if conv[k - 1] and conv[k + 1]:
                row.derivative = float((E[k + 1] - E[k - 1]) / (mu[k + 1] - mu[k - 1]))
                h1, h2 = mu[k] - mu[k - 1], mu[k + 1] - mu[k]
                row.second_difference = float(2.0 * (h1 * E[k + 1] - (h1 + h2) * E[k] + h2 * E[k - 1]) / (h1 * h2 * (h1 + h2)) * h1 * h2)
        else:
            j = 1 if k == 0 else n - 2
            if conv[j]:
                row.derivative = float((E[max(k, j)] - E[min(k, j)]) / abs(mu[j] - mu[k]))
        if row.derivative is not None:
            row.derivative_residual = abs(row.derivative + 0.5 * row.multiplier)
    return rows


def sweep_summary(rows) -> dict:
    """Acceptance statistics over the interior converged rows of a sweep."""
    inner = [r for r in rows if r.interior and r.derivative_residual is not None]
    lam = np.array([r.multiplier for r in rows if r.converged])
    sd = [r.second_difference for r in inner if r.second_difference is not None]
    return {
        "max_relative_residual": max((r.derivative_residual / (1.0 + abs(r.multiplier)) for r in inner), default=math.nan),
        "max_residual": max((r.derivative_residual for r in inner), default=math.nan),
        "min_multiplier_increment": float(np.min(np.diff(lam))) if lam.size > 1 else math.nan,
        "max_second_difference": max(sd, default=math.nan),
        "all_converged": all(r.converged for r in rows),
    }
