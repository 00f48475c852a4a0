"""Ground levels against the line level and the threshold searches on star graphs."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .. import analytic
from .. import graph_core as gc
from .. import solver as S
from ..errors import InvalidParameterError, SearchFailureError
from ._common import best_result, far_level, multistart, pmap, quiet, sharp_guess, solve_task


@dataclass
class LevelEstimate:
    """Ground level as the lower of the best multistart energy and the escaping-soliton level."""

    level: float
    best_energy: float
    far_level: float
    attained: bool
    result: object = None

    @property
    def gap(self) -> float:
        return self.best_energy - self.far_level


def ground_level(g, p: float, mu: float, config: S.SolverConfig | None = None, n_starts: int = 6,
                 extra_starts=()) -> LevelEstimate:
    """Estimate the ground level of ``g``.

    On graphs with half-lines a minimizing sequence may escape to infinity as a
    soliton, so the level is ``min(best multistart energy, far level)``; the
    level counts as attained when the best energy lies strictly below.
    """
    config = quiet(config, p=p)
    runs = [r for _, r in multistart(g, p, mu, n_starts, config, seed=config.seed)]
    graph = S.prepare_graph(g, p, mu, config)
    if extra_starts:
        runs += [r for _, r in pmap(solve_task, [(graph, mu, p, S.MassOnly(), config, u0, i) for i, u0 in enumerate(extra_starts)])]
    best = best_result(runs)
    far = far_level(p, mu, config) if g.is_noncompact else math.inf
    e = best.energy if best is not None else math.inf
    return LevelEstimate(min(e, far), e, far, e < far, best)


def star_tip_level(N: int, t: float, p: float, mu: float, config: S.SolverConfig, warm=None):
    """inf of the energy on star(N, t) over functions whose sup lies on the terminal edge.

    Starts: soliton profiles of mass mu and 2 mu centred at the tip, the minneg
    candidate and an optional warm start; the lowest converged value wins.
    """
    g = S.prepare_graph(gc.star(N, t, density=config.density), p, mu, config)
    starts = [
        sharp_guess(g, p, mu, "t", t, 1.0),
        sharp_guess(g, p, mu, "t", t, 2.0),
        S.minneg_guess(g, p, mu),
    ]
    if warm is not None:
        starts.append(gc.resample(warm, g))
    tasks = [(g, mu, p, S.MassAndMaxOn("t"), config, u0, k) for k, u0 in enumerate(starts)]
    return best_result([r for _, r in pmap(solve_task, tasks)])


@dataclass
class ThresholdResult:
    value: float
    gap: float  # level minus the far level at the returned point
    ground_state: object = None
    history: list = field(default_factory=list)
    far_level: float = math.nan


def threshold_length(N_plus_1: int, p: float, mu: float, config: S.SolverConfig | None = None,
                     bracket=(1e-3, 1e2), xtol: float = 1e-6) -> ThresholdResult:
    """Terminal length t* at which the level of star(N+1, t) reaches the line level.

    Root of ``F(t) - far_level`` in log t, where F is ``star_tip_level``: above
    t* its minimizer is the ground state, below it the level equals the line
    level and is not attained. Returns t* and the ground state there.
    """
    N = int(N_plus_1)
    if N < 2:
        raise InvalidParameterError("star graphs need at least two half-lines")
    if not 2.0 < p < 6.0 or not mu > 0:
        raise InvalidParameterError("threshold_length needs p in (2, 6) and mu > 0")
    config = quiet(config, p=p)
    far = far_level(p, mu, config)
    history = []
    cache = {}
    last = [None]

    def gap(logt):
        if logt in cache:
            return cache[logt]
        t = math.exp(logt)
        r = star_tip_level(N, t, p, mu, config, warm=last[0])
        if r is None:
            raise SearchFailureError("all starts failed", {"t": t})
        last[0] = r.u
        val = r.energy - far
        cache[logt] = val
        history.append({"t": t, "energy": r.energy, "gap": val, "converged": r.converged, "multiplier": r.multiplier})
        return val

    a, b = math.log(bracket[0]), math.log(bracket[1])
    ga, gb = gap(a), gap(b)
    if not (ga > 0 > gb):
        raise SearchFailureError(
            f"no sign change of the level gap for t in [{bracket[0]:g}, {bracket[1]:g}]",
            {"gap_low": ga, "gap_high": gb},
        )
    # the tip-concentrated branch is most reliably found by warm-starting from above
    last[0] = None
    root = optimize.brentq(gap, a, b, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200)
    t_star = math.exp(root)
    # ground state at t*: the tip branch, polished without the sup constraint
    lo = min((k for k in cache if cache[k] <= 0), default=b)
    r_tip = star_tip_level(N, math.exp(lo), p, mu, config)
    g = S.prepare_graph(gc.star(N, t_star, density=config.density), p, mu, config)
    w = S.minimize(g, mu, p, config=config, initial=gc.resample(r_tip.u, g))
    return ThresholdResult(t_star, w.energy - far, w, history, far)


def threshold_mass(N: int, t: float, p: float, config: S.SolverConfig | None = None, bracket=(1e-3, 1e3),
                   xtol: float = 1e-6) -> ThresholdResult:
    """Critical mass for existence of ground states on star(N, t).

    The family is scale invariant: u on star(N, t) with mass mu corresponds to
    mu^{-alpha} u(mu^{-beta} x) on star(N, mu^beta t) with unit mass, so
    mu_bar = (t1 / t)^{1 / beta} with t1 the length threshold at unit mass.
    N = 2 gives 0 (ground states exist for every mass).
    """
    if int(N) != N or N < 2:
        raise InvalidParameterError("star graphs need N >= 2")
    if not t > 0:
        raise InvalidParameterError("terminal length must be positive")
    if N == 2:
        return ThresholdResult(0.0, math.nan)
    _, beta = analytic.exponents(p)
    tb = (t * bracket[0] ** beta, t * bracket[1] ** beta)
    try:
        res = threshold_length(N, p, 1.0, config, bracket=tb, xtol=xtol)
    except SearchFailureError as exc:
        raise SearchFailureError(f"no mass threshold in [{bracket[0]:g}, {bracket[1]:g}]", exc.diagnostics) from exc
    mu_bar = (res.value / t) ** (1.0 / beta)
    for h in res.history:
        h["mu"] = (h["t"] / t) ** (1.0 / beta)
    return ThresholdResult(mu_bar, res.gap * mu_bar ** (2.0 * beta + 1.0), res.ground_state, res.history, res.far_level)
