"""Hot numerical kernels on the flattened graph discretization.

Every kernel exists twice: a loop version compiled with ``numba.njit`` and a
vectorized numpy version. The loop version is used unless numba is missing or
``NLSGRAPH_DISABLE_NUMBA`` is set to a truthy value before import.

Layout: the global DOF vector ``u`` holds one value per vertex and per interior
grid node. A cell is a pair of node indices ``(ci, cj)`` with inverse spacing
``inv_h``; ``cj == -1`` marks the clamped far end of a truncated half-line,
whose value is identically zero.
"""
import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("NLSGRAPH_DISABLE_NUMBA", "").lower() not in (
    "1",
    "true",
    "yes",
)

SMALL_JUMP = 1e-3


# --------------------------------------------------------------------------
# numpy reference path


def _np_cell_values(u, ci, cj):
    ui = u[ci]
    uj = np.where(cj >= 0, u[np.maximum(cj, 0)], 0.0)
    return ui, uj


def np_kinetic(u, ci, cj, inv_h):
    ui, uj = _np_cell_values(u, ci, cj)
    d = ui - uj
    return float(np.dot(d * d, inv_h))


def np_stiffness_apply(u, ci, cj, inv_h):
    ui, uj = _np_cell_values(u, ci, cj)
    flux = (ui - uj) * inv_h
    out = np.bincount(ci, weights=flux, minlength=u.size)
    inner = cj >= 0
    out -= np.bincount(cj[inner], weights=flux[inner], minlength=u.size)
    return out


def np_power_sum(u, w, p):
    return float(np.dot(w, np.abs(u) ** p))


def np_energy_parts(u, ci, cj, inv_h, w, p):
    return np_kinetic(u, ci, cj, inv_h), np_power_sum(u, w, p)


def np_euclidean_gradient(u, ci, cj, inv_h, w, p):
    """Return ``K u - W |u|^{p-2} u`` (gradient of the discrete energy)."""
    return np_stiffness_apply(u, ci, cj, inv_h) - w * np.abs(u) ** (p - 2.0) * u


def np_pl_power_integrals(a, b, h, q):
    """Exact integrals of ``|v|^q`` over cells where ``v`` is linear from ``a`` to ``b``.

    Values are assumed nonnegative.
    """
    a = np.abs(np.asarray(a, dtype=float))
    b = np.abs(np.asarray(b, dtype=float))
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    jump = hi - lo
    out = np.empty_like(hi)
    small = jump <= SMALL_JUMP * np.maximum(hi, 1e-300)
    big = ~small
    out[big] = (hi[big] ** (q + 1) - lo[big] ** (q + 1)) / ((q + 1.0) * jump[big])
    # Taylor expansion about the cell midpoint for nearly flat cells
    m = 0.5 * (hi[small] + lo[small])
    d = jump[small]
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = np.where(m > 0, (d / m) ** 2, 0.0)
    c2 = q * (q - 1.0) / 24.0
    c4 = q * (q - 1.0) * (q - 2.0) * (q - 3.0) / 1920.0
    out[small] = m**q * (1.0 + r2 * (c2 + c4 * r2))
    return out * h


# --------------------------------------------------------------------------
# numba path

if HAVE_NUMBA:

    @njit(cache=True, inline="always")
    def _pow(x, q):
        # libm pow is slow; small integer exponents (the common case) multiply out
        k = int(q)
        if k == q and 0 <= k <= 8:
            r = 1.0
            for _ in range(k):
                r *= x
            return r
        return x**q

    @njit(cache=True)
    def nb_kinetic(u, ci, cj, inv_h):
        s = 0.0
        for k in range(ci.size):
            j = cj[k]
            uj = u[j] if j >= 0 else 0.0
            d = u[ci[k]] - uj
            s += d * d * inv_h[k]
        return s

    @njit(cache=True)
    def nb_stiffness_apply(u, ci, cj, inv_h):
        out = np.zeros(u.size)
        for k in range(ci.size):
            i = ci[k]
            j = cj[k]
            uj = u[j] if j >= 0 else 0.0
            flux = (u[i] - uj) * inv_h[k]
            out[i] += flux
            if j >= 0:
                out[j] -= flux
        return out

    @njit(cache=True)
    def nb_power_sum(u, w, p):
        s = 0.0
        for i in range(u.size):
            s += w[i] * _pow(abs(u[i]), p)
        return s

    @njit(cache=True)
    def nb_energy_parts(u, ci, cj, inv_h, w, p):
        return nb_kinetic(u, ci, cj, inv_h), nb_power_sum(u, w, p)

    @njit(cache=True)
    def nb_euclidean_gradient(u, ci, cj, inv_h, w, p):
        out = nb_stiffness_apply(u, ci, cj, inv_h)
        for i in range(u.size):
            out[i] -= w[i] * _pow(abs(u[i]), p - 2.0) * u[i]
        return out

    @njit(cache=True)
    def nb_pl_power_integrals(a, b, h, q):
        out = np.empty(a.size)
        for k in range(a.size):
            x = abs(a[k])
            y = abs(b[k])
            lo = min(x, y)
            hi = max(x, y)
            d = hi - lo
            if d > SMALL_JUMP * max(hi, 1e-300):
                out[k] = h[k] * (_pow(hi, q + 1.0) - _pow(lo, q + 1.0)) / ((q + 1.0) * d)
            else:
                m = 0.5 * (hi + lo)
                r2 = (d / m) ** 2 if m > 0.0 else 0.0
                c2 = q * (q - 1.0) / 24.0
                c4 = q * (q - 1.0) * (q - 2.0) * (q - 3.0) / 1920.0
                out[k] = h[k] * _pow(m, q) * (1.0 + r2 * (c2 + c4 * r2))
        return out


if USE_NUMBA:
    kinetic = nb_kinetic
    stiffness_apply = nb_stiffness_apply
    power_sum = nb_power_sum
    energy_parts = nb_energy_parts
    euclidean_gradient = nb_euclidean_gradient

    def pl_power_integrals(a, b, h, q):
        return nb_pl_power_integrals(
            np.ascontiguousarray(a, dtype=np.float64),
            np.ascontiguousarray(b, dtype=np.float64),
            np.ascontiguousarray(np.broadcast_to(h, np.shape(a)), dtype=np.float64),
            float(q),
        )

else:
    kinetic = np_kinetic
    stiffness_apply = np_stiffness_apply
    power_sum = np_power_sum
    energy_parts = np_energy_parts
    euclidean_gradient = np_euclidean_gradient
    pl_power_integrals = np_pl_power_integrals


def backend():
    return "numba" if USE_NUMBA else "numpy"
