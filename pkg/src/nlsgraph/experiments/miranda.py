"""Doubly-constrained level maps on the gamma graph and the two-ground-state construction.

On gamma(r, s, t, N), F_t and F_s are the infima of the energy over functions
whose sup lies on the terminal edge t, respectively on the loop s. A zero of
F = (F_t - target, F_s - target) is located by Miranda bisection: a rectangle
whose sides carry the sign pattern

    F_1 > 0 on t = t1,  F_1 < 0 on t = t2,  F_2 < 0 on s = s1,  F_2 > 0 on s = s2

contains a zero, and the pattern is propagated to one of its four quadrants at
every depth.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import analytic
from .. import graph_core as gc
from .. import solver as S
from ..errors import NLSGraphError, NoRectangleError
from ._common import best_result, pmap, quiet, sharp_guess, solve_task
from .thresholds import threshold_length

R_SCHEDULE = (10.0, 15.0, 25.0, 40.0)
EPS_SCHEDULE = (0.1, 0.05, 0.02)  # fractions of |line level|
TOL_LAMBDA = 1e-6

log = logging.getLogger(__name__)


@dataclass
class FMaps:
    F_t: float
    F_s: float
    u_t: object
    u_s: object

    @property
    def gap_t(self):
        return self.u_t.feasibility_gap if self.u_t is not None else math.nan

    @property
    def gap_s(self):
        return self.u_s.feasibility_gap if self.u_s is not None else math.nan


def _gamma(r, s, t, N, config, p, mu):
    return S.prepare_graph(gc.gamma(r, s, t, N, density=config.density), p, mu, config)


def _starts(g, which, p, mu, s, t):
    if which == "t":
        return [sharp_guess(g, p, mu, "t", t, 1.0), sharp_guess(g, p, mu, "t", t, 2.0), S.minneg_guess(g, p, mu)]
    return [
        sharp_guess(g, p, mu, "s", 0.5 * s, 1.0),
        sharp_guess(g, p, mu, "s", 0.5 * s, 2.0),
        sharp_guess(g, p, mu, "r", g.edges[g.edge_id("r")].length, 1.0),
    ]


def f_map(which: str, r, s, t, N, p, mu, config, warm=None):
    """Minimizer of the energy over V_t (``which="t"``) or V_s (``which="s"``)."""
    g = _gamma(r, s, t, N, config, p, mu)
    starts = _starts(g, which, p, mu, s, t)
    if warm is not None:
        starts.append(gc.resample(warm, g))
    tasks = [(g, mu, p, S.MassAndMaxOn(which), config, u0, k) for k, u0 in enumerate(starts)]
    return best_result([res for _, res in pmap(solve_task, tasks)])


def f_maps(r: float, s: float, t: float, N: int, p: float, mu: float, config: S.SolverConfig | None = None) -> FMaps:
    """(F_t, F_s) at gamma(r, s, t, N) with their minimizers."""
    config = quiet(config, p=p)
    ut = f_map("t", r, s, t, N, p, mu, config)
    us = f_map("s", r, s, t, N, p, mu, config)
    return FMaps(ut.energy if ut else math.nan, us.energy if us else math.nan, ut, us)


# ---------------------------------------------------------------------- Miranda rectangles


@dataclass
class MirandaRectangle:
    s_range: tuple
    t_range: tuple
    signs: dict  # side -> list of sampled values (F_1 on t-sides, F_2 on s-sides)
    depth: int

    @property
    def valid(self) -> bool:
        sg = self.signs
        return (
            all(v > 0 for v in sg["t1"]) and all(v < 0 for v in sg["t2"])
            and all(v < 0 for v in sg["s1"]) and all(v > 0 for v in sg["s2"])
        )

    @property
    def diameter(self) -> float:
        return math.hypot(self.s_range[1] - self.s_range[0], self.t_range[1] - self.t_range[0])

    @property
    def center(self) -> tuple:
        return 0.5 * (self.s_range[0] + self.s_range[1]), 0.5 * (self.t_range[0] + self.t_range[1])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["valid"] = self.valid
        return d


class _Evaluator:
    """Cached F_1, F_2 evaluations with warm starts from the nearest cached point."""

    def __init__(self, r, N, p, mu, target, config):
        self.r, self.N, self.p, self.mu = r, N, p, mu
        self.target = target
        self.config = config
        self.cache = {}
        self.count = 0

    def _key(self, which, s, t):
        return which, round(s, 12), round(t, 12)

    def _warm(self, which, s, t):
        best, dist = None, math.inf
        for (w, s0, t0), res in self.cache.items():
            if w == which and res is not None:
                d = abs(math.log(s0 / s)) + abs(math.log(t0 / t))
                if d < dist:
                    best, dist = res, d
        return None if best is None else best.u

    def result(self, which, s, t):
        key = self._key(which, s, t)
        if key not in self.cache:
            self.count += 1
            t0 = time.perf_counter()
            res = f_map(which, self.r, s, t, self.N, self.p, self.mu, self.config, self._warm(which, s, t))
            self.cache[key] = res
            log.info("F_%s(s=%.6g, t=%.6g) = %s  [%.1fs]", which, s, t,
                     "failed" if res is None else f"{res.energy:.10f}", time.perf_counter() - t0)
        return self.cache[key]

    def value(self, which, s, t):
        res = self.result(which, s, t)
        return math.nan if res is None else res.energy - self.target

    def side(self, which, fixed, lo, hi, n, along_s):
        xs = np.linspace(lo, hi, n)
        if along_s:
            return [self.value(which, float(x), fixed) for x in xs]
        return [self.value(which, fixed, float(x)) for x in xs]

    def rectangle(self, s1, s2, t1, t2, n, depth):
        signs = {
            "t1": self.side("t", t1, s1, s2, n, True),
            "t2": self.side("t", t2, s1, s2, n, True),
            "s1": self.side("s", s1, t1, t2, n, False),
            "s2": self.side("s", s2, t1, t2, n, False),
        }
        return MirandaRectangle((s1, s2), (t1, t2), signs, depth)


def default_rectangle(p: float, mu: float) -> tuple:
    """Heuristic starting rectangle (s1, s2, t1, t2) in units of the soliton width."""
    w = 1.0 / math.sqrt(analytic.soliton_multiplier(p, mu))
    return 1.0 * w, 16.0 * w, 0.25 * w, 2.0 * w


def _fails(rect):
    sg = rect.signs
    return {
        "t1": not all(v > 0 for v in sg["t1"]),
        "t2": not all(v < 0 for v in sg["t2"]),
        "s1": not all(v < 0 for v in sg["s1"]),
        "s2": not all(v > 0 for v in sg["s2"]),
    }


def miranda_find(r: float, N: int, p: float, mu: float, eps: float, rect=None,
                 config: S.SolverConfig | None = None, tol_F: float = 1e-4, tol_rect: float = 1e-4,
                 side_samples: int = 3, max_expand: int = 4, max_depth: int = 40):
    """Locate (s, t) with F_t = F_s = line level - eps by Miranda quadtree refinement.

    Sign conditions are checked at ``side_samples`` equispaced points per side.
    A rectangle violating them is expanded on the failing sides (lower ends
    halved, upper ends doubled) at most ``max_expand`` times. Refinement stops
    when the centre satisfies |F_1|, |F_2| <= tol_F / 2 or the diameter drops
    below ``tol_rect``. Returns ``(s_bar, t_bar, certificate)``.
    """
    config = quiet(config, p=p)
    level = analytic.level_R(p, mu)
    target = level - eps
    ev = _Evaluator(r, N, p, mu, target, config)
    s1, s2, t1, t2 = rect if rect is not None else default_rectangle(p, mu)
    if not (0 < s1 < s2 and 0 < t1 < t2):
        raise NoRectangleError("rectangle must satisfy 0 < s1 < s2 and 0 < t1 < t2", {"rect": [s1, s2, t1, t2]})
    chain = []
    R = ev.rectangle(s1, s2, t1, t2, side_samples, 0)
    tries = 0
    while not R.valid:
        chain.append(R.to_dict())
        fails = _fails(R)
        if tries >= max_expand or (rect is not None and max_expand == 0):
            raise NoRectangleError(
                "no rectangle with the Miranda sign pattern; try a larger r or a smaller eps",
                {"r": r, "eps": eps, "target": target, "failing_sides": [k for k, v in fails.items() if v], "chain": chain},
            )
        tries += 1
        s1 = s1 / 2 if fails["s1"] else s1
        s2 = s2 * 2 if fails["s2"] else s2
        t1 = t1 / 2 if fails["t1"] else t1
        t2 = t2 * 2 if fails["t2"] else t2
        R = ev.rectangle(s1, s2, t1, t2, side_samples, 0)
    chain.append(R.to_dict())
    status = "diameter"
    for depth in range(1, max_depth + 1):
        sc, tc = R.center
        f1, f2 = ev.value("t", sc, tc), ev.value("s", sc, tc)
        if abs(f1) <= 0.5 * tol_F and abs(f2) <= 0.5 * tol_F:
            status = "tolerance"
            break
        if R.diameter < tol_rect:
            break
        (a, b), (c, d) = R.s_range, R.t_range
        # try the quadrant predicted by the centre signs first
        s_order = [(a, sc), (sc, b)] if f2 > 0 else [(sc, b), (a, sc)]
        t_order = [(c, tc), (tc, d)] if f1 < 0 else [(tc, d), (c, tc)]
        child = None
        for sr in s_order:
            for tr in t_order:
                cand = ev.rectangle(sr[0], sr[1], tr[0], tr[1], side_samples, depth)
                if cand.valid:
                    child = cand
                    break
            if child is not None:
                break
        if child is None:
            status = "no_valid_quadrant"
            break
        R = child
        chain.append(R.to_dict())
        log.info("depth %d: s in [%.6g, %.6g], t in [%.6g, %.6g]", depth, *R.s_range, *R.t_range)
    sc, tc = R.center
    ut, us = ev.result("t", sc, tc), ev.result("s", sc, tc)
    cert = {
        "r": r, "N": N, "p": p, "mu": mu, "eps": eps, "target": target,
        "status": status,
        "F_t": ut.energy, "F_s": us.energy,
        "residual": max(abs(ut.energy - target), abs(us.energy - target)),
        "evaluations": ev.count,
        "chain": chain,
        "u_t": ut, "u_s": us,
    }
    return sc, tc, cert


# ---------------------------------------------------------------------- full pipeline


@dataclass
class NonuniquenessReport:
    success: bool
    r: float | None = None
    eps: float | None = None
    s_bar: float | None = None
    t_bar: float | None = None
    F_t: float | None = None
    F_s: float | None = None
    energy_u: float | None = None
    energy_v: float | None = None
    lambda_u: float | None = None
    lambda_v: float | None = None
    lambda_w: float | None = None
    t_star: float | None = None
    lambda_soliton: float | None = None
    checks: dict = field(default_factory=dict)
    attempts: list = field(default_factory=list)
    certificate: dict = field(default_factory=dict)
    u: object = None
    v: object = None

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k not in ("u", "v", "certificate")}
        d["certificate"] = {k: v for k, v in self.certificate.items() if k not in ("u_t", "u_s")}
        return d


def _polish(res, p, mu, config):
    """Unconstrained minimization started at a constrained minimizer."""
    return S.minimize(res.graph, mu, p, config=config, initial=res.u)


def _max_on(res, label):
    on = float(np.max(np.abs(res.u.edge_values(label))))
    return on >= res.u.sup() * (1.0 - 1e-9)


def nonuniqueness_run(p: float, mu: float, N: int, config: S.SolverConfig | None = None,
                      r_schedule=R_SCHEDULE, eps_schedule=EPS_SCHEDULE, tol_F: float = 1e-4,
                      tol_lambda: float = TOL_LAMBDA, target_rel: float = 0.05) -> NonuniquenessReport:
    """Construct two ground states with different multipliers on a gamma graph.

    For r increasing and eps decreasing along the schedules, find (s, t) with
    F_t = F_s = line level - eps, polish the two constrained minimizers without
    the sup constraint and accept when both stay in their classes, their
    energies agree within ``tol_F``, their multipliers differ by more than
    ``20 tol_lambda``, and the multipliers are within ``target_rel`` of the
    limits Lambda(w) (w the ground state of star(N+1, t*)) and the soliton's.
    """
    if not 2.0 < p < 6.0:
        raise NLSGraphError("the construction needs p in (2, 6)")
    config = quiet(config, p=p)
    level = analytic.level_R(p, mu)
    lam_sol = analytic.soliton_multiplier(p, mu)
    thr = threshold_length(N + 1, p, mu, config)
    lam_w = thr.ground_state.multiplier
    report = NonuniquenessReport(False, t_star=thr.value, lambda_w=lam_w, lambda_soliton=lam_sol)
    best = None
    for r in r_schedule:
        for frac in eps_schedule:
            eps = frac * abs(level)
            attempt = {"r": r, "eps": eps}
            try:
                s_bar, t_bar, cert = miranda_find(r, N, p, mu, eps, config=config, tol_F=tol_F)
            except NLSGraphError as exc:
                attempt["error"] = str(exc)
                report.attempts.append(attempt)
                continue
            u = _polish(cert["u_t"], p, mu, config)
            v = _polish(cert["u_s"], p, mu, config)
            shape_u = S.shape_check(u.u, p=p, level_R=level)
            shape_v = S.shape_check(v.u, p=p, level_R=level)
            checks = {
                "miranda_residual": cert["residual"],
                "F_gap": abs(cert["F_t"] - cert["F_s"]),
                "energy_gap": abs(u.energy - v.energy),
                "lambda_gap": abs(u.multiplier - v.multiplier),
                "u_converged": u.converged,
                "v_converged": v.converged,
                "u_max_on_t": _max_on(u, "t"),
                "v_max_on_s": _max_on(v, "s"),
                "u_moved": abs(u.energy - cert["F_t"]),
                "v_moved": abs(v.energy - cert["F_s"]),
                "rel_err_lambda_u": abs(u.multiplier - lam_w) / abs(lam_w),
                "rel_err_lambda_v": abs(v.multiplier - lam_sol) / abs(lam_sol),
                "shape_u": shape_u.to_dict(),
                "shape_v": shape_v.to_dict(),
                "kirchhoff": max(u.kirchhoff_residual, v.kirchhoff_residual),
                "lambda_u_ne_soliton": abs(u.multiplier - lam_sol) > 20 * tol_lambda,
            }
            ok = (
                checks["F_gap"] <= tol_F
                and checks["energy_gap"] <= tol_F
                and checks["lambda_gap"] > 20 * tol_lambda
                and u.converged and v.converged
                and checks["u_max_on_t"] and checks["v_max_on_s"]
                and checks["rel_err_lambda_u"] <= target_rel
                and checks["rel_err_lambda_v"] <= target_rel
                and checks["lambda_u_ne_soliton"]
            )
            attempt.update({k: checks[k] for k in ("F_gap", "energy_gap", "lambda_gap", "rel_err_lambda_u", "rel_err_lambda_v")})
            attempt["s_bar"], attempt["t_bar"], attempt["success"] = s_bar, t_bar, bool(ok)
            report.attempts.append(attempt)
            score = checks["rel_err_lambda_u"] + checks["rel_err_lambda_v"]
            if ok or best is None or score < best[0]:
                best = (score, r, eps, s_bar, t_bar, cert, u, v, checks, ok)
            if ok:
                break
        if best is not None and best[-1]:
            break
    if best is not None:
        _, r, eps, s_bar, t_bar, cert, u, v, checks, ok = best
        report.success = bool(ok)
        report.r, report.eps, report.s_bar, report.t_bar = r, eps, s_bar, t_bar
        report.F_t, report.F_s = cert["F_t"], cert["F_s"]
        report.energy_u, report.energy_v = u.energy, v.energy
        report.lambda_u, report.lambda_v = u.multiplier, v.multiplier
        report.checks = checks
        report.certificate = cert
        report.u, report.v = u, v
    return report
