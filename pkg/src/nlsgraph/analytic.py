"""Closed-form reference quantities on the line and the half-line.

For p in (2, 6) the positive solution of ``u'' + u^{p-1} = lam u`` on R with
unit mass is ``phi_1(x) = c sech(C x)^{2/(p-2)}``; all other solitons follow by
the scaling ``phi_mu(x) = mu^alpha phi_1(mu^beta x)``. The constants ``c``,
``C`` and the unit-mass multiplier come from the ODE identity and a Beta
function mass integral; ``theta_p = -E(phi_1)`` and ``Lambda(phi_1)`` are then
obtained by quadrature of the explicit profile.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, special

from .errors import InvalidParameterError, NumericalFailureError, UndefinedRatioError, UnsupportedError
from .graph_core import GraphFunction, MetricGraph, kinetic, lp_norm_p, mass, total_compact_length

MU_R = math.sqrt(3.0) * math.pi / 2.0
MU_R_PLUS = MU_R / 2.0


class _Unbounded:
    """Sentinel for a ground-state level equal to minus infinity.

    Deliberately supports no arithmetic: any attempt to compute with it fails.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "MINUS_INFINITY"

    def __reduce__(self):
        return (_Unbounded, ())


MINUS_INFINITY = _Unbounded()


def is_unbounded(x) -> bool:
    return x is MINUS_INFINITY


@dataclass(frozen=True)
class CriticalMasses:
    mu_R: float = MU_R
    mu_R_plus: float = MU_R_PLUS


@dataclass(frozen=True)
class SolitonParams:
    p: float
    mu: float
    alpha: float
    beta: float
    lam: float
    amplitude: float  # c, peak of the unit-mass soliton
    width: float  # C


def exponents(p: float) -> tuple:
    _check_subcritical(p)
    return 2.0 / (6.0 - p), (p - 2.0) / (6.0 - p)


def _check_subcritical(p):
    if not 2.0 < p < 6.0:
        raise UnsupportedError(f"solitons are tabulated only for p in (2, 6), got p={p}")


def _check_p(p):
    if not 2.0 < p <= 6.0:
        raise InvalidParameterError(f"p must lie in (2, 6], got {p}")


def _sech_power_integral(k: float) -> float:
    """Integral over R of sech(x)^k."""
    return float(special.beta(0.5 * k, 0.5))


@lru_cache(maxsize=64)
def _unit_constants(p: float):
    """(c, C, lam1_closed) for the unit-mass soliton."""
    k = 2.0 / (p - 2.0)

    def amp(lam):
        return (0.5 * p * lam) ** (1.0 / (p - 2.0))

    def wid(lam):
        return 0.5 * (p - 2.0) * math.sqrt(lam)

    # mass(lam) = amp^2 / wid * I(2k) is a pure power of lam: solve in closed form
    mass_at_1 = amp(1.0) ** 2 / wid(1.0) * _sech_power_integral(2.0 * k)
    expo = 2.0 / (p - 2.0) - 0.5
    lam1 = (1.0 / mass_at_1) ** (1.0 / expo)
    return amp(lam1), wid(lam1), lam1


def _sech(y):
    e = np.exp(-np.abs(y))
    return 2.0 * e / (1.0 + e * e)


def _phi1_and_derivative(p):
    c, C, _ = _unit_constants(p)
    k = 2.0 / (p - 2.0)

    def phi(x):
        return c * _sech(C * x) ** k

    def dphi(x):
        return -c * k * C * np.tanh(C * x) * _sech(C * x) ** k

    return phi, dphi


def _quad_R(f):
    # even integrands: twice the half-line integral
    val, _ = integrate.quad(f, 0.0, np.inf, epsabs=1e-15, epsrel=1e-13, limit=400)
    return 2.0 * val


@lru_cache(maxsize=64)
def _quadrature_constants(p: float):
    """(mass, kinetic, p-norm) of phi_1 by adaptive quadrature."""
    phi, dphi = _phi1_and_derivative(p)
    m = _quad_R(lambda x: phi(x) ** 2)
    kin = _quad_R(lambda x: dphi(x) ** 2)
    pn = _quad_R(lambda x: phi(x) ** p)
    return m, kin, pn


def theta(p: float) -> float:
    """theta_p = -E(phi_1, R) > 0."""
    _check_subcritical(p)
    _, kin, pn = _quadrature_constants(float(p))
    return -(0.5 * kin - pn / p)


def soliton_params(p: float, mu: float) -> SolitonParams:
    a, b = exponents(p)
    if not mu > 0:
        raise InvalidParameterError("mass must be positive")
    c, C, _ = _unit_constants(float(p))
    return SolitonParams(p, mu, a, b, soliton_multiplier(p, mu), c, C)


def soliton_profile(p: float, mu: float, x):
    """phi_mu(x), the soliton of mass ``mu`` centred at 0."""
    a, b = exponents(p)
    if not mu > 0:
        raise InvalidParameterError("mass must be positive")
    phi, _ = _phi1_and_derivative(float(p))
    return mu**a * phi(mu**b * np.asarray(x, dtype=float))


def soliton_derivative(p: float, mu: float, x):
    a, b = exponents(p)
    _, dphi = _phi1_and_derivative(float(p))
    return mu ** (a + b) * dphi(mu**b * np.asarray(x, dtype=float))


def soliton_multiplier(p: float, mu: float) -> float:
    """Multiplier of phi_mu, computed as Lambda(phi_1) mu^{2 beta}."""
    _, b = exponents(p)
    if not mu > 0:
        raise InvalidParameterError("mass must be positive")
    m, kin, pn = _quadrature_constants(float(p))
    return (pn - kin) / m * mu ** (2.0 * b)


def soliton_multiplier_closed(p: float, mu: float) -> float:
    _, b = exponents(p)
    return _unit_constants(float(p))[2] * mu ** (2.0 * b)


def level_R(p: float, mu: float):
    """Ground-state level on R; MINUS_INFINITY when p = 6 and mu > mu_R."""
    _check_p(p)
    if not mu > 0:
        raise InvalidParameterError("mass must be positive")
    if p == 6.0:
        return 0.0 if mu <= MU_R else MINUS_INFINITY
    _, b = exponents(p)
    return -theta(p) * mu ** (2.0 * b + 1.0)


def level_Rplus(p: float, mu: float):
    """Ground-state level on the half-line (the half soliton of mass ``mu``)."""
    _check_p(p)
    if not mu > 0:
        raise InvalidParameterError("mass must be positive")
    if p == 6.0:
        return 0.0 if mu <= MU_R_PLUS else MINUS_INFINITY
    _, b = exponents(p)
    return -(2.0 ** (2.0 * b)) * theta(p) * mu ** (2.0 * b + 1.0)


def ncontr_bound(p: float, mu: float, N: int):
    """Lower energy bound for functions with at least N preimages of a.e. level."""
    if int(N) != N or N < 2:
        raise InvalidParameterError("the preimage bound needs N >= 2")
    _check_p(p)
    if p == 6.0:
        return 0.0 if mu <= MU_R else MINUS_INFINITY
    _, b = exponents(p)
    return -theta(p) * (2.0 / N) ** (2.0 * b) * mu ** (2.0 * b + 1.0)


def gn_ratio(u: GraphFunction, p: float) -> float:
    """||u||_p^p / (||u||_2^{p/2+1} ||u'||_2^{p/2-1})."""
    m = mass(u)
    kin = kinetic(u)
    if m <= 0.0 or kin <= 0.0:
        raise UndefinedRatioError("Gagliardo-Nirenberg ratio needs nonzero u and u'")
    return lp_norm_p(u, p) / (m ** ((p + 2.0) / 4.0) * kin ** ((p - 2.0) / 4.0))


def halfsoliton_peak_constant(p: float) -> float:
    """Constant k with peak(half soliton of mass m) = k m^alpha."""
    a, _ = exponents(p)
    return _unit_constants(float(p))[0] * 2.0**a


def minneg_mass_split(L: float, N: int, p: float, mu: float) -> float:
    """Mass m per half-line solving k^2 m^{2 alpha} L + N m = mu."""
    a, _ = exponents(p)
    k = halfsoliton_peak_constant(p)
    if L == 0:
        return mu / N

    def f(m):
        return k * k * m ** (2.0 * a) * L + N * m - mu

    try:
        return float(optimize.brentq(f, 0.0, mu / N, xtol=1e-15, rtol=1e-15, maxiter=500))
    except (ValueError, RuntimeError) as exc:
        raise NumericalFailureError("could not solve the mass split equation", {"L": L, "N": N}) from exc


def minneg_delta(L: float, N: int, p: float, mu: float) -> float:
    a, b = exponents(p)
    k = halfsoliton_peak_constant(p)
    return N * theta(p) * 2.0 ** (2.0 * b) * mu ** (2.0 * b + 1.0) / (k * k * mu ** (2.0 * a - 1.0) * L + N) ** (2.0 * b + 1.0)


def minneg_candidate(g: MetricGraph, p: float, mu: float):
    """Half solitons of mass m on each half-line, their common peak value on the core.

    Returns the candidate renormalized to mass ``mu`` and the bound ``delta`` with
    ``E(candidate) <= -delta`` up to quadrature error.
    """
    _check_subcritical(p)
    N = len(g.halfline_ids())
    if N < 1:
        raise InvalidParameterError("candidate needs at least one half-line")
    L = total_compact_length(g)
    m = minneg_mass_split(L, N, p, mu)
    peak = float(soliton_profile(p, 2.0 * m, 0.0))

    def f(i, x):
        if g.edges[i].is_halfline:
            return soliton_profile(p, 2.0 * m, x)
        return np.full_like(x, peak)

    v = GraphFunction.from_callable(g, f)
    v = v * math.sqrt(mu / mass(v))
    return v, minneg_delta(L, N, p, mu)


def constants_table(ps=(3.0, 4.0, 5.0)) -> dict:
    rows = {}
    for p in ps:
        c, C, lam1 = _unit_constants(float(p))
        a, b = exponents(p)
        rows[f"{p:g}"] = {"alpha": a, "beta": b, "c": c, "C": C, "lambda_1": lam1, "theta": theta(p)}
    return {"mu_R": MU_R, "mu_R_plus": MU_R_PLUS, "p": rows}


def export_constants(path, ps=(3.0, 4.0, 5.0)):
    with open(path, "w") as fh:
        json.dump(constants_table(ps), fh, indent=2, sort_keys=True)
