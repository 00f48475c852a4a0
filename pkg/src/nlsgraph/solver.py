"""Mass-constrained minimization of the discrete NLS energy on a graph.

The discrete energy of the grid vector ``U`` is

    E(U) = 1/2 U^T K U - 1/p sum_i w_i |U_i|^p,

with K the P1 stiffness matrix and w the lumped trapezoid weights. Mass is
``U^T W U``. Minimization runs a preconditioned Riemannian gradient method
on the mass sphere: directions come from ``(K + sigma W)^{-1}`` applied to the
tangential residual ``r = G + Lambda W U`` (G the Euclidean gradient), steps
are retracted by rescaling, and Armijo backtracking keeps the energy
nonincreasing. ``r / w`` is the nodal residual ``-u'' - u^{p-1} + Lambda u``,
and at a vertex ``r_v`` is minus the Kirchhoff flux sum (computed with the
ODE-corrected one-sided derivative), so stationarity gives Kirchhoff for free.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import _kernels, analytic
from .errors import (
    CannotProjectError,
    InvalidParameterError,
    NumericalFailureError,
    RejectedInputError,
    UndefinedRatioError,
)
from .graph_core import GraphFunction, MetricGraph, resample

P6_TRUNCATION = 200.0


# ---------------------------------------------------------------------- configuration


@dataclass
class SolverConfig:
    p: float = 4.0
    density: float = 100.0
    # None: automatic truncation policy; a number: fixed half-line length;
    # "keep": use the graph as given
    truncation: float | str | None = None
    adaptive_truncation: bool = True
    max_doublings: int = 2
    max_iter: int = 20000
    step: str = "adaptive"  # or "fixed"
    step_size: float = 1.0
    tol_g: float = 1e-8
    tol_K: float = 1e-6
    drift_window: int = 50
    drift_tol: float = 1e-9
    kappa0: float = 1.0
    kappa_factor: float = 10.0
    kappa_stages: int = 4
    penalty_iter: int = 60
    n_starts: int = 20
    seed: int = 0
    blowup_kinetic: float = 1e12  # ||u'||^2 above this aborts at p = 6
    record_history: bool = True

    def __post_init__(self):
        if not 2.0 < self.p <= 6.0:
            raise InvalidParameterError(f"p must lie in (2, 6], got {self.p}")
        if not self.tol_g > 0:
            raise InvalidParameterError("tol_g must be positive")
        if self.step not in ("adaptive", "fixed"):
            raise InvalidParameterError("step must be 'adaptive' or 'fixed'")
        if not self.density > 0:
            raise InvalidParameterError("density must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MassOnly:
    def describe(self) -> dict:
        return {"kind": "mass"}


@dataclass(frozen=True)
class MassAndMaxOn:
    """Sup over the graph attained on the closed edge ``edge`` (index or label)."""

    edge: object

    def describe(self) -> dict:
        return {"kind": "max_on_edge", "edge": self.edge}


@dataclass(frozen=True)
class MassAndMaxAt:
    """Sup over the graph attained at the vertex ``vertex``."""

    vertex: object

    def describe(self) -> dict:
        return {"kind": "max_at_vertex", "vertex": self.vertex}


ConstraintSpec = MassOnly | MassAndMaxOn | MassAndMaxAt


def _inside_dofs(g: MetricGraph, constraint) -> np.ndarray | None:
    """Boolean mask of the DOFs on which the sup must be attained."""
    if isinstance(constraint, MassOnly):
        return None
    mask = np.zeros(g.n_dof, dtype=bool)
    if isinstance(constraint, MassAndMaxOn):
        idx = g.node_index[g.edge_id(constraint.edge)]
        mask[idx[idx >= 0]] = True
    elif isinstance(constraint, MassAndMaxAt):
        mask[g.vertex_id(constraint.vertex)] = True
    else:
        raise InvalidParameterError(f"unknown constraint {constraint!r}")
    if mask.all():
        return None
    return mask


# ---------------------------------------------------------------------- functionals


def energy(u: GraphFunction, p: float) -> float:
    """1/2 int |u'|^2 - 1/p int |u|^p."""
    ci, cj, _, inv_h = u.graph.cells
    kin, pw = _kernels.energy_parts(u.values, ci, cj, inv_h, u.graph.weights, float(p))
    return 0.5 * kin - pw / p


def gradient(u: GraphFunction, p: float) -> GraphFunction:
    """Nodal representative of the first variation, ``W^{-1}(K u - W |u|^{p-2} u)``.

    On interior nodes this is ``-u'' - |u|^{p-2} u``; at a vertex it is the
    negative outgoing flux sum divided by the vertex weight plus the same local
    term.
    """
    g = u.graph
    ci, cj, _, inv_h = g.cells
    G = _kernels.euclidean_gradient(u.values, ci, cj, inv_h, g.weights, float(p))
    return GraphFunction(g, G / g.weights)


def project_mass(u: GraphFunction, mu: float) -> GraphFunction:
    """Rescale ``u`` to mass ``mu``."""
    m = float(np.dot(u.graph.weights, u.values * u.values))
    if not m > 0:
        raise CannotProjectError("cannot rescale the zero function to positive mass")
    return GraphFunction(u.graph, u.values * math.sqrt(mu / m))


def lagrange_multiplier(u: GraphFunction, p: float) -> float:
    """Lambda(u) = (||u||_p^p - ||u'||^2) / ||u||^2."""
    g = u.graph
    ci, cj, _, inv_h = g.cells
    kin, pw = _kernels.energy_parts(u.values, ci, cj, inv_h, g.weights, float(p))
    m = float(np.dot(g.weights, u.values * u.values))
    if not m > 0:
        raise UndefinedRatioError("Lambda is undefined for the zero function")
    return (pw - kin) / m


def tangential_residual(u: GraphFunction, p: float, lam: float | None = None) -> np.ndarray:
    """Euclidean residual ``K u - W|u|^{p-2}u + lam W u`` (lam defaults to Lambda(u))."""
    g = u.graph
    ci, cj, _, inv_h = g.cells
    G = _kernels.euclidean_gradient(u.values, ci, cj, inv_h, g.weights, float(p))
    if lam is None:
        lam = lagrange_multiplier(u, p)
    return G + lam * g.weights * u.values


# ---------------------------------------------------------------------- diagnostics


@dataclass
class EdgeConstant:
    label: str
    value: float
    variation: float  # max - min of the corrected constant along the edge
    scale: float  # size of the individual terms, for relative comparisons
    is_halfline: bool

    @property
    def relative_variation(self) -> float:
        return self.variation / self.scale if self.scale > 0 else 0.0


@dataclass
class Diagnostics:
    kirchhoff_residual: float
    el_residual: float
    el_residual_max: float
    mech_energy_constants: list

    @property
    def mech_variation(self) -> float:
        return max((c.relative_variation for c in self.mech_energy_constants), default=0.0)

    @property
    def halfline_constant(self) -> float:
        return max((abs(c.value) for c in self.mech_energy_constants if c.is_halfline), default=0.0)

    def to_dict(self) -> dict:
        return {
            "kirchhoff_residual": self.kirchhoff_residual,
            "el_residual": self.el_residual,
            "el_residual_max": self.el_residual_max,
            "mech_variation": self.mech_variation,
            "halfline_constant": self.halfline_constant,
            "mech_energy_constants": [asdict(c) for c in self.mech_energy_constants],
        }


def kirchhoff_residuals(u: GraphFunction, lam: float, p: float) -> np.ndarray:
    """Outgoing derivative sums at every vertex.

    Each edge end uses ``(u_1 - u_0)/h - (h/2) u''(0)`` with ``u''`` taken from
    the equation, which is second-order accurate.
    """
    g = u.graph
    out = np.zeros(len(g.vertices))
    for v in range(len(g.vertices)):
        uv = u.values[v]
        upp = lam * uv - abs(uv) ** (p - 2.0) * uv
        for i, pos in g.incident_ends(v):
            e = g.edges[i]
            y = u.edge_values(i)
            u1 = y[1] if pos == 0 else y[-2]
            out[v] += (u1 - uv) / e.h - 0.5 * e.h * upp
    return out


def mechanical_constants(u: GraphFunction, lam: float, p: float) -> list:
    """Per-edge values of 1/2 u'^2 + 1/p u^p - lam/2 u^2 along the grid.

    The grid solution conserves a perturbation of this quantity; cell-midpoint
    values are corrected to fourth order using the equation
    ``u'' = g(u) = lam u - u^{p-1}``.
    """
    g = u.graph
    out = []
    for i, e in enumerate(g.edges):
        y = u.edge_values(i)
        h = e.h
        if e.is_halfline:
            # skip the clamped last cell
            y = y[:-1]
        if y.size < 2:
            continue
        a, b = y[:-1], y[1:]
        du = (b - a) / h
        avg = 0.5 * (a + b)

        def gfun(z):
            return lam * z - np.abs(z) ** (p - 2.0) * z

        def gprime(z):
            return lam - (p - 1.0) * np.abs(z) ** (p - 2.0)

        um = avg - (h * h / 8.0) * gfun(avg)
        dum = du - (h * h / 24.0) * gprime(um) * du
        gm = gfun(um)
        C = 0.5 * dum**2 + np.abs(um) ** p / p - 0.5 * lam * um**2
        C = C + (h * h / 12.0) * (gprime(um) * dum**2 - 0.5 * gm**2)
        scale = float(np.max(0.5 * dum**2 + np.abs(um) ** p / p + 0.5 * abs(lam) * um**2))
        out.append(EdgeConstant(e.label or str(i), float(np.mean(C)), float(np.ptp(C)), scale, e.is_halfline))
    return out


def diagnostics(u: GraphFunction, lam: float, p: float) -> Diagnostics:
    g = u.graph
    r = tangential_residual(u, p, lam)
    interior = np.ones(g.n_dof, dtype=bool)
    interior[: len(g.vertices)] = False
    w = g.weights
    el_w = float(np.max(np.abs(r[interior]) / np.sqrt(w[interior]))) if interior.any() else 0.0
    el_max = float(np.max(np.abs(r[interior]) / w[interior])) if interior.any() else 0.0
    kr = kirchhoff_residuals(u, lam, p)
    return Diagnostics(float(np.max(np.abs(kr))), el_w, el_max, mechanical_constants(u, lam, p))


# ---------------------------------------------------------------------- results


@dataclass
class GroundStateResult:
    u: GraphFunction
    mu: float
    p: float
    energy: float
    multiplier: float
    kirchhoff_residual: float
    el_residual: float
    mech_energy_constants: list
    iterations: int
    converged: bool
    grad_norm: float
    constraint: dict = field(default_factory=lambda: {"kind": "mass"})
    feasibility_gap: float | None = None
    energy_history: list = field(default_factory=list)
    message: str = ""
    truncation: dict = field(default_factory=dict)
    seed: int | None = None

    @property
    def graph(self) -> MetricGraph:
        return self.u.graph

    @property
    def mass(self) -> float:
        return float(np.dot(self.u.graph.weights, self.u.values**2))

    @property
    def mech_variation(self) -> float:
        return max((c.relative_variation for c in self.mech_energy_constants), default=0.0)

    @property
    def halfline_constant(self) -> float:
        return max((abs(c.value) for c in self.mech_energy_constants if c.is_halfline), default=0.0)

    def to_json_dict(self, include_arrays: bool = True) -> dict:
        d = {
            "graph": self.graph.to_json_dict(),
            "mu": self.mu,
            "p": self.p,
            "mass": self.mass,
            "energy": self.energy,
            "multiplier": self.multiplier,
            "kirchhoff_residual": self.kirchhoff_residual,
            "el_residual": self.el_residual,
            "mech_variation": self.mech_variation,
            "halfline_constant": self.halfline_constant,
            "mech_energy_constants": [asdict(c) for c in self.mech_energy_constants],
            "iterations": self.iterations,
            "converged": self.converged,
            "grad_norm": self.grad_norm,
            "constraint": self.constraint,
            "feasibility_gap": self.feasibility_gap,
            "message": self.message,
            "truncation": self.truncation,
            "seed": self.seed,
        }
        if include_arrays:
            d["edges"] = {
                (e.label or str(i)): {"x": e.coords().tolist(), "u": self.u.edge_values(i).tolist()}
                for i, e in enumerate(self.graph.edges)
            }
        return d


# ---------------------------------------------------------------------- truncation & guesses


def default_truncation(p: float, mu: float) -> float:
    """Half-line length max(40 / sqrt(lambda_R(mu)), 20); a fixed long length at p = 6."""
    if p >= 6.0:
        return P6_TRUNCATION
    return max(40.0 / math.sqrt(analytic.soliton_multiplier(p, mu)), 20.0)


def prepare_graph(g: MetricGraph, p: float, mu: float, config: SolverConfig) -> MetricGraph:
    """Apply the configured half-line truncation."""
    if config.truncation == "keep" or not g.is_noncompact:
        return g
    L = default_truncation(p, mu) if config.truncation is None else float(config.truncation)
    hl = g.halfline_ids()
    if all(abs(g.edges[i].length - L) < 1e-12 for i in hl):
        return g
    return g.with_truncation({i: L for i in hl}, density=config.density)


def _scale_estimate(p, mu):
    if p < 6.0:
        return analytic.soliton_multiplier(p, mu)
    return 0.1


def _vertex_distances(g: MetricGraph, sources: dict) -> np.ndarray:
    """Dijkstra over vertices from ``{vertex: initial distance}``."""
    dist = np.full(len(g.vertices), np.inf)
    heap = [(d, v) for v, d in sources.items()]
    for d, v in heap:
        dist[v] = min(dist[v], d)
    heapq.heapify(heap)
    while heap:
        d, v = heapq.heappop(heap)
        if d > dist[v]:
            continue
        for e in g.edges:
            if e.is_halfline or v not in e.ends:
                continue
            for w in e.ends:
                nd = d + e.length
                if nd < dist[w]:
                    dist[w] = nd
                    heapq.heappush(heap, (nd, w))
    return dist


def _profile(p, mu):
    if p < 6.0:
        return lambda x: analytic.soliton_profile(p, mu, x)
    return lambda x: 1.0 / np.cosh(x)


def soliton_guess(g: MetricGraph, p: float, mu: float, edge, x0: float) -> GraphFunction:
    """Soliton-shaped bump centred at coordinate ``x0`` of edge ``edge``."""
    i = g.edge_id(edge)
    e = g.edges[i]
    x0 = float(np.clip(x0, 0.0, e.length))
    src = {e.ends[0]: x0}
    if len(e.ends) == 2:
        src[e.ends[1]] = min(src.get(e.ends[1], np.inf), e.length - x0)
    dist = _vertex_distances(g, src)
    prof = _profile(p, mu)

    def f(k, x):
        ek = g.edges[k]
        d = dist[ek.ends[0]] + x
        if len(ek.ends) == 2:
            d = np.minimum(d, dist[ek.ends[1]] + (ek.length - x))
        if k == i:
            d = np.minimum(d, np.abs(x - x0))
        return prof(d)

    return project_mass(GraphFunction.from_callable(g, f), mu)


def noise_guess(g: MetricGraph, p: float, mu: float, seed: int) -> GraphFunction:
    """Random smooth positive function, decaying along half-lines."""
    rng = np.random.default_rng(seed)
    decay = math.sqrt(_scale_estimate(p, mu))
    vert = rng.uniform(0.2, 1.0, len(g.vertices))

    def f(k, x):
        e = g.edges[k]
        a = vert[e.ends[0]]
        if e.is_halfline:
            L0 = rng.uniform(0.5, 3.0) / decay
            bumps = sum(rng.uniform(0, 1) * np.exp(-((x - rng.uniform(0, L0)) ** 2) * decay**2) for _ in range(3))
            return (a + bumps) * np.exp(-decay * x)
        b = vert[e.ends[1]]
        base = a + (b - a) * x / e.length
        modes = sum(rng.normal(0, 0.5) / m * np.sin(m * np.pi * x / e.length) for m in range(1, 6))
        return np.abs(base + modes) + 1e-3

    u = GraphFunction.from_callable(g, f)
    u.values[~np.isfinite(u.values)] = 0.0
    return project_mass(u.abs(), mu)


def minneg_guess(g: MetricGraph, p: float, mu: float) -> GraphFunction:
    if p >= 6.0:
        return soliton_guess(g, p, mu, g.halfline_ids()[0], 0.0)
    v, _ = analytic.minneg_candidate(g, p, mu)
    return v


def multistart_guesses(g: MetricGraph, p: float, mu: float, K: int, seed: int = 0) -> list:
    """Deterministic list of ``K`` starts drawn from the three families.

    Soliton bumps at every vertex, bounded-edge midpoint and near the origin of
    each half-line come first, interleaved with the minneg candidate and random
    smooth noise.
    """
    rng = np.random.default_rng(seed)
    width = 1.0 / math.sqrt(_scale_estimate(p, mu))
    bumps = []
    for i, e in enumerate(g.edges):
        if e.is_halfline:
            bumps.append(("soliton", i, 0.0))
        else:
            bumps.append(("soliton", i, e.length))
            bumps.append(("soliton", i, 0.5 * e.length))
    for i in g.halfline_ids():
        bumps.append(("soliton", i, float(rng.uniform(0.0, width))))
    menu = []
    bi = 0
    k = 0
    while len(menu) < K:
        if k == 1:
            menu.append(("minneg",))
        elif k % 3 == 2:
            menu.append(("noise", int(rng.integers(2**31))))
        elif bi < len(bumps):
            menu.append(bumps[bi])
            bi += 1
        else:
            menu.append(("noise", int(rng.integers(2**31))))
        k += 1
    out = []
    for item in menu[:K]:
        if item[0] == "soliton":
            out.append((item, soliton_guess(g, p, mu, item[1], item[2])))
        elif item[0] == "minneg":
            out.append((item, minneg_guess(g, p, mu)))
        else:
            out.append((item, noise_guess(g, p, mu, item[1])))
    return out


# ---------------------------------------------------------------------- core iteration


class _Problem:
    """Discrete operators on a DOF set, with a cached shifted factorization.

    ``ci, cj, inv_h`` describe the cells and ``w`` the lumped weights; a
    reduced problem in which several DOFs are glued together is obtained by
    relabelling cells (see ``glue``).
    """

    def __init__(self, ci, cj, inv_h, w, K, p: float, mu: float):
        self.ci = np.ascontiguousarray(ci, dtype=np.int64)
        self.cj = np.ascontiguousarray(cj, dtype=np.int64)
        self.inv_h = np.ascontiguousarray(inv_h, dtype=float)
        self.w = np.ascontiguousarray(w, dtype=float)
        self.K = K
        self.p = float(p)
        self.mu = float(mu)
        self.sigma = None
        self._lu = None
        self.refactors = 0

    @classmethod
    def from_graph(cls, g: MetricGraph, p, mu):
        ci, cj, _, inv_h = g.cells
        return cls(ci, cj, inv_h, g.weights, g.stiffness, p, mu)

    def glue(self, group: np.ndarray):
        """Reduced problem where the DOFs in ``group`` share one value (the last one).

        Returns ``(problem, newidx)`` with ``full = reduced[newidx]``.
        """
        n = self.w.size
        free = np.ones(n, dtype=bool)
        free[group] = False
        nf = int(free.sum())
        newidx = np.empty(n, dtype=np.int64)
        newidx[free] = np.arange(nf)
        newidx[group] = nf
        B = sp.csr_matrix((np.ones(n), (np.arange(n), newidx)), shape=(n, nf + 1))
        K = (B.T @ self.K @ B).tocsc()
        cj = np.where(self.cj >= 0, newidx[np.maximum(self.cj, 0)], -1)
        w = np.bincount(newidx, weights=self.w, minlength=nf + 1)
        return _Problem(newidx[self.ci], cj, self.inv_h, w, K, self.p, self.mu), newidx

    def parts(self, U):
        return _kernels.energy_parts(U, self.ci, self.cj, self.inv_h, self.w, self.p)

    def energy(self, U):
        kin, pw = self.parts(U)
        return 0.5 * kin - pw / self.p

    def grad(self, U):
        return _kernels.euclidean_gradient(U, self.ci, self.cj, self.inv_h, self.w, self.p)

    def normalize(self, U):
        m = float(np.dot(self.w, U * U))
        if not m > 0:
            raise CannotProjectError("iterate collapsed to zero")
        return U * math.sqrt(self.mu / m)

    def factor(self, sigma):
        sigma = max(float(sigma), 1e-6)
        if self._lu is not None and 0.5 <= sigma / self.sigma <= 2.0:
            return
        A = (self.K + sp.diags(sigma * self.w)).tocsc()
        self._lu = splu(A)
        self.sigma = sigma
        self.refactors += 1

    def precondition(self, r):
        return self._lu.solve(r)

    def curvature(self, U, d, lam):
        Kd = self.K @ d
        return float(d @ Kd - (self.p - 1.0) * np.dot(self.w * np.abs(U) ** (self.p - 2.0), d * d) + lam * np.dot(self.w, d * d))


def _gap(U, inside):
    return float(np.max(U[~inside]) - np.max(U[inside]))


def _clip(U, inside):
    M = np.max(U[inside])
    V = U.copy()
    out = ~inside
    V[out] = np.minimum(V[out], M)
    return V


class _Runner:
    """Preconditioned Riemannian descent/CG with Armijo backtracking.

    Histories of energy and Lambda are shared across successive calls so the
    multiplier drift test and the monotonicity record span the whole solve.
    """

    def __init__(self, config: SolverConfig):
        self.cfg = config
        self.history = []
        self.lams = []
        self.iterations = 0

    def _blowup_check(self, prob, kin):
        if prob.p >= 6.0 and kin > self.cfg.blowup_kinetic:
            raise NumericalFailureError(
                "mass-critical blowup suspected",
                {"kinetic": kin, "iterations": self.iterations, "mu": prob.mu},
            )

    def _drift_ok(self):
        win = self.cfg.drift_window
        if len(self.lams) < win:
            return False
        window = self.lams[-win:]
        return max(window) - min(window) < self.cfg.drift_tol

    def run(self, prob: _Problem, U, max_iter, penalty=None, retract=None):
        """Descend from ``U``; returns ``(U, status, gnorm)``.

        ``penalty(U) -> (value, euclidean gradient)`` is added to the energy;
        ``retract(V) -> (V, changed)`` post-processes each trial point, and a
        ``changed`` step ends the run with status ``"changed"`` so the caller can
        update an active set.
        """
        cfg = self.cfg
        w, p, mu = prob.w, prob.p, prob.mu

        def objective(V):
            kin, pw = prob.parts(V)
            f = 0.5 * kin - pw / p
            if penalty is not None:
                f += penalty(V)[0]
            return f, kin, pw

        def finish(V):
            V = prob.normalize(np.abs(V))
            if retract is None:
                return V, False
            V, changed = retract(V)
            return prob.normalize(V), changed

        U, _ = finish(U)
        f, kin, pw = objective(U)
        prob.factor(max((pw - kin) / mu, 1e-3))
        d_prev = r_prev = None
        z_prev_r = 1.0
        tau_prev = cfg.step_size
        gnorm = np.inf
        stalls = resting = 0
        for _ in range(max_iter):
            self.iterations += 1
            self._blowup_check(prob, kin)
            G = prob.grad(U)
            if penalty is not None:
                G = G + penalty(U)[1]
            lam = -float(np.dot(G, U)) / mu
            r = G + lam * w * U
            gnorm = math.sqrt(float(np.dot(r, r / w)))
            self.lams.append((pw - kin) / mu)
            if cfg.record_history:
                self.history.append(f)
            if gnorm <= cfg.tol_g and self._drift_ok():
                return U, "converged", gnorm
            if lam > 2.0 * prob.sigma or (lam > 1e-3 and lam < 0.5 * prob.sigma):
                prob.factor(lam)
            z = prob.precondition(r)
            z -= (np.dot(w * U, z) / mu) * U
            d = -z
            if cfg.step == "adaptive" and d_prev is not None:
                beta = max(0.0, float(np.dot(z, r - r_prev)) / z_prev_r)
                dp = d_prev - (np.dot(w * U, d_prev) / mu) * U
                d = -z + beta * dp
                if np.dot(r, d) >= 0:
                    d = -z
            slope = float(np.dot(r, d))
            if not slope < 0:
                d_prev = None
                continue
            if cfg.step == "adaptive":
                c = prob.curvature(U, d, lam)
                tau = -slope / c if c > 0 else 2.0 * tau_prev
            else:
                tau = cfg.step_size
            tol_round = 1e-15 * (1.0 + abs(f))
            dnorm = math.sqrt(float(np.dot(w, d * d)))
            accepted = changed = False
            for _ in range(60):
                Un, changed = finish(U + tau * d)
                fn, kinn, pwn = objective(Un)
                if fn <= f + 1e-4 * tau * slope + tol_round or (changed and fn < f):
                    accepted = True
                    break
                if tau * dnorm < 1e-14:
                    # a feasible clipped point at roundoff level still updates the active set
                    accepted = changed and fn <= f + tol_round
                    break
                tau *= 0.5
            if not accepted:
                d_prev = None
                # below tol_g no step can lower f past rounding; stay put while the
                # drift window fills instead of counting a stall
                if gnorm <= cfg.tol_g:
                    resting += 1
                    if resting <= cfg.drift_window:
                        continue
                stalls += 1
                if stalls >= 5:
                    return U, "stalled", gnorm
                continue
            stalls = 0
            U, f, kin, pw = Un, fn, kinn, pwn
            tau_prev = tau
            if changed:
                return U, "changed", gnorm
            d_prev, r_prev, z_prev_r = d, r, float(np.dot(z, r))
        return U, "max_iter", gnorm


CAP_BAND = 1e-6


def _kkt_residual(prob: _Problem, U, inside, band=0.0):
    """Residual of the sup-constrained problem and the set of capped nodes.

    Capped outside nodes that are pushed upwards are held by a nonnegative
    multiplier which is transferred to the inside maximizer.
    """
    w = prob.w
    r = prob.grad(U)
    lam = -float(np.dot(r, U)) / prob.mu
    r = r + lam * w * U
    M = float(np.max(U[inside]))
    capped = (~inside) & (U >= M * (1.0 - max(band, 1e-12)))
    m = int(np.argmax(np.where(inside, U, -np.inf)))
    res = r.copy()
    held = capped & (r < 0)
    res[held] = 0.0
    res[m] = r[m] + float(np.sum(r[held]))
    return res, held, m


def _dilate(mask, within, adjacency, steps):
    """Grow ``mask`` by ``steps`` graph neighbourhoods, staying inside ``within``."""
    m = mask.copy()
    for _ in range(steps):
        grown = (adjacency @ m.astype(float)) > 0
        grown &= within
        if np.array_equal(grown, m):
            break
        m = grown
    return m


def _solve_constrained(prob_full, U, inside, cfg, runner, budget):
    """Active-set solve of the sup constraint: capped nodes are glued to the inside maximizer.

    Released nodes leave the plateau at its edge; consecutive releases widen
    the released band geometrically (1, 2, 4, ... neighbourhoods). Over-released
    nodes that rise above the cap are clipped and recaptured in one step.
    """
    status, gnorm = "max_iter", np.inf
    adjacency = (abs(prob_full.K) > 0).astype(float).tocsr()
    prev_held, grow = None, 1
    outer = 0
    while budget > 0 and outer < 200:
        outer += 1
        U = prob_full.normalize(_clip(np.abs(U), inside))
        res, held, m = _kkt_residual(prob_full, U, inside, CAP_BAND)
        if prev_held is not None and status == "converged":
            released = prev_held & ~held
            if released.any():
                held &= ~_dilate(released, prev_held, adjacency, grow - 1)
                grow *= 2
            else:
                grow = 1
        else:
            grow = 1
        prev_held = held
        group = np.concatenate([[m], np.nonzero(held)[0]])
        red, newidx = prob_full.glue(group)
        rep = np.empty(red.w.size, dtype=np.int64)
        rep[newidx] = np.arange(newidx.size)
        y = U[rep]
        gval = red.w.size - 1
        y[gval] = U[m]

        def retract(V, newidx=newidx):
            full = V[newidx]
            M = float(np.max(full[inside]))
            over = (~inside) & (full > M)
            if not over.any() and full[m] >= M:
                return V, False
            clipped = _clip(full, inside)
            W = V.copy()
            W[newidx] = clipped
            return W, True

        before = runner.iterations
        y, status, gnorm = runner.run(red, y, budget, retract=retract)
        budget -= runner.iterations - before
        U = y[newidx]
        if status == "converged":
            res, held_now, _ = _kkt_residual(prob_full, U, inside, CAP_BAND)
            # released nodes would now want to move down: restart with the new set
            if not (held & ~held_now).any():
                gnorm = math.sqrt(float(np.dot(res, res / prob_full.w)))
                if gnorm <= 10 * cfg.tol_g:
                    return U, "converged", gnorm
        if status == "max_iter":
            break
        if status == "stalled":
            res, held_now, _ = _kkt_residual(prob_full, U, inside, CAP_BAND)
            if np.array_equal(held_now, held):
                break
    res, _, _ = _kkt_residual(prob_full, U, inside, CAP_BAND)
    return U, status, math.sqrt(float(np.dot(res, res / prob_full.w)))


# ---------------------------------------------------------------------- driver


def _check_inputs(p, mu):
    if not 2.0 < p <= 6.0:
        raise InvalidParameterError(f"p must lie in (2, 6], got {p}")
    if not (np.isfinite(mu) and mu > 0):
        raise InvalidParameterError("mass must be positive")
    if p >= 6.0 and mu > analytic.MU_R:
        raise RejectedInputError(
            f"at p = 6 the level is -infinity for mu > mu_R = {analytic.MU_R:.6f}; got mu = {mu}"
        )


def _boundary_ratio(u: GraphFunction) -> float:
    g = u.graph
    sup = u.sup()
    if sup <= 0:
        return 0.0
    vals = [abs(u.edge_values(i)[-2]) for i in g.halfline_ids()]
    return max(vals, default=0.0) / sup


def minimize(
    g: MetricGraph,
    mu: float,
    p: float | None = None,
    constraint=None,
    config: SolverConfig | None = None,
    initial=None,
) -> GroundStateResult:
    """Minimize the energy at mass ``mu``, optionally forcing the sup onto an edge or vertex.

    ``initial`` is a GraphFunction (resampled if needed), an integer seed (a
    start drawn from the multistart menu) or None (the minneg candidate).
    """
    config = config or SolverConfig()
    p = float(config.p if p is None else p)
    constraint = constraint or MassOnly()
    _check_inputs(p, mu)
    graph = prepare_graph(g, p, mu, config)
    seed = None
    if initial is None:
        U0 = minneg_guess(graph, p, mu) if graph.is_noncompact else GraphFunction.constant(graph, 1.0)
    elif isinstance(initial, (int, np.integer)):
        seed = int(initial)
        rng = np.random.default_rng(seed)
        menu = multistart_guesses(graph, p, mu, 6, seed)
        U0 = menu[int(rng.integers(len(menu)))][1]
    else:
        U0 = initial if initial.graph is graph else resample(initial, graph)
    doublings = 0
    while True:
        res = _minimize_fixed(graph, mu, p, constraint, config, U0)
        res.seed = seed
        auto = config.truncation != "keep" and config.adaptive_truncation
        ratio = _boundary_ratio(res.u)
        res.truncation = {
            "halfline_length": max((e.length for e in graph.edges if e.is_halfline), default=None),
            "boundary_ratio": ratio,
            "doublings": doublings,
        }
        if not (auto and graph.is_noncompact and ratio > 1e-8 and doublings < config.max_doublings):
            return res
        L = 2.0 * max(e.length for e in graph.edges if e.is_halfline)
        graph = graph.with_truncation({i: L for i in graph.halfline_ids()})
        U0 = resample(res.u, graph)
        doublings += 1


def _minimize_fixed(g, mu, p, constraint, config, U0) -> GroundStateResult:
    prob = _Problem.from_graph(g, p, mu)
    inside = _inside_dofs(g, constraint)
    runner = _Runner(config)
    U = np.asarray(U0.values, dtype=float).copy()
    if inside is None:
        U, status, gnorm = runner.run(prob, U, config.max_iter)
    else:
        kappa = config.kappa0
        budget = config.max_iter
        for _ in range(config.kappa_stages):
            U, _, _ = runner.run(prob, U, min(config.penalty_iter, budget), penalty=_penalty(inside, kappa))
            budget = max(config.max_iter - runner.iterations, 1)
            kappa *= config.kappa_factor
        U, status, gnorm = _solve_constrained(prob, U, inside, config, runner, budget)
    converged = status == "converged"
    u = GraphFunction(g, U)
    lam = lagrange_multiplier(u, p)
    diag = diagnostics(u, lam, p)
    gap = None if inside is None else max(_gap(U, inside), 0.0)
    return GroundStateResult(
        u=u,
        mu=float(mu),
        p=float(p),
        energy=prob.energy(U),
        multiplier=lam,
        kirchhoff_residual=diag.kirchhoff_residual,
        el_residual=diag.el_residual,
        mech_energy_constants=diag.mech_energy_constants,
        iterations=runner.iterations,
        converged=converged,
        grad_norm=float(gnorm),
        constraint=constraint.describe(),
        feasibility_gap=gap,
        energy_history=runner.history,
        message="converged" if converged else "maximum iterations reached",
    )


def _penalty(inside, kappa):
    """kappa * max(0, max_out - max_in)^2 and its gradient."""

    def pen(U):
        gp = _gap(U, inside)
        grad = np.zeros_like(U)
        if gp <= 0:
            return 0.0, grad
        jo = int(np.argmax(np.where(~inside, U, -np.inf)))
        ji = int(np.argmax(np.where(inside, U, -np.inf)))
        grad[jo] = 2.0 * kappa * gp
        grad[ji] = -2.0 * kappa * gp
        return kappa * gp * gp, grad

    return pen


# ---------------------------------------------------------------------- shape checks


@dataclass
class ShapeReport:
    topology: str
    checks: dict
    violations: list

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"topology": self.topology, "passed": self.passed, "checks": self.checks, "violations": self.violations}


def _monotone(y, increasing, tol):
    d = np.diff(y)
    worst = float(np.max(-d if increasing else d)) if d.size else 0.0
    return worst <= tol, worst


def shape_check(u: GraphFunction, g: MetricGraph | None = None, p: float | None = None, level_R=None, tol=1e-6) -> ShapeReport:
    """Qualitative shape of a converged ground state for the standard topologies.

    star/spider: increasing on the terminal edge, identical decreasing traces on
    the half-lines. tadpole: loop even about its midpoint, decreasing from the
    midpoint to the vertex and along the half-line. gamma: global max on the
    loop or terminal edge whenever the energy lies below ``level_R``.
    ``tol`` is relative to sup u.
    """
    g = g or u.graph
    sup = u.sup()
    atol = tol * max(sup, 1e-300)
    checks, bad = {}, []

    def record(name, ok, value):
        checks[name] = {"ok": bool(ok), "value": float(value)}
        if not ok:
            bad.append(name)

    hl = g.halfline_ids()
    traces = [u.edge_values(i) for i in hl]
    for i, y in zip(hl, traces):
        ok, worst = _monotone(y, False, atol)
        record(f"decreasing_{g.edges[i].label}", ok, worst)
    if g.name in ("star", "spider", "gamma") and len(traces) > 1:
        n = min(len(y) for y in traces)
        dev = max(float(np.max(np.abs(y[:n] - traces[0][:n]))) for y in traces)
        record("identical_halflines", dev <= atol, dev)
    if g.name == "star":
        ok, worst = _monotone(u.edge_values("t"), True, atol)
        record("increasing_terminal", ok, worst)
        record("max_at_tip", u.vertex_value("tip") >= sup - atol, sup - u.vertex_value("tip"))
    elif g.name == "tadpole":
        y = u.edge_values("s")
        dev = float(np.max(np.abs(y - y[::-1])))
        record("loop_symmetry", dev <= atol, dev)
        half = y[: (y.size + 1) // 2]
        ok, worst = _monotone(half, True, atol)
        record("loop_monotone_halves", ok, worst)
    elif g.name == "gamma":
        if p is not None and level_R is not None:
            E = energy(u, p)
            if E < level_R:
                core = max(float(np.max(u.edge_values("s"))), float(np.max(u.edge_values("t"))))
                record("max_on_loop_or_terminal", core >= sup - atol, sup - core)
    return ShapeReport(g.name, checks, bad)
