"""Compiled inner loop: circuit unitary, dephased-purity cost, Nelder-Mead.

The gate codes follow ``ansatz.KINDS``: 0 RX, 1 RY, 2 RZ, 3 CX, 4 H, 5 CRX.
Qubit 0 is the most significant bit. Results are cross-checked against the
``numpy`` reference path in the test suite.
"""

import math

import numpy as np
from numba import njit

_INV_SQRT2 = 1.0 / math.sqrt(2.0)


@njit(cache=True)
def _apply_1q(u, n, q, g00, g01, g10, g11, ctrl_mask):
    d = u.shape[0]
    mask = 1 << (n - 1 - q)
    for r in range(d):
        if r & mask or (r & ctrl_mask) != ctrl_mask:
            continue
        r1 = r | mask
        for col in range(d):
            a = u[r, col]
            b = u[r1, col]
            u[r, col] = g00 * a + g01 * b
            u[r1, col] = g10 * a + g11 * b


@njit(cache=True)
def build_unitary(kind, qa, qb, slot, params, n):
    d = 1 << n
    u = np.eye(d, dtype=np.complex128)
    for g in range(kind.shape[0]):
        k = kind[g]
        if k == 3:
            cmask = 1 << (n - 1 - qa[g])
            tmask = 1 << (n - 1 - qb[g])
            for r in range(d):
                if (r & cmask) and not (r & tmask):
                    r1 = r | tmask
                    for col in range(d):
                        tmp = u[r, col]
                        u[r, col] = u[r1, col]
                        u[r1, col] = tmp
            continue
        if k == 4:
            h = _INV_SQRT2 + 0j
            _apply_1q(u, n, qa[g], h, h, h, -h, 0)
            continue
        half = 0.5 * params[slot[g]]
        c = math.cos(half)
        s = math.sin(half)
        if k == 0 or k == 5:
            g00 = c + 0j
            g01 = -1j * s
            g10 = -1j * s
            g11 = c + 0j
        elif k == 1:
            g00 = c + 0j
            g01 = -s + 0j
            g10 = s + 0j
            g11 = c + 0j
        else:
            g00 = complex(c, -s)
            g01 = 0j
            g10 = 0j
            g11 = complex(c, s)
        if k == 5:
            _apply_1q(u, n, qb[g], g00, g01, g10, g11, 1 << (n - 1 - qa[g]))
        else:
            _apply_1q(u, n, qa[g], g00, g01, g10, g11, 0)
    return u


@njit(cache=True)
def circuit_cost(kind, qa, qb, slot, params, n, rho, rho_purity):
    """``Tr(rho^2) - sum_b <b|U rho U^dag|b>^2``."""
    u = build_unitary(kind, qa, qb, slot, params, n)
    d = u.shape[0]
    total = 0.0
    for b in range(d):
        acc = 0j
        for j in range(d):
            ubj = u[b, j]
            if ubj == 0:
                continue
            row = 0j
            for k in range(d):
                row += rho[j, k] * np.conj(u[b, k])
            acc += ubj * row
        total += acc.real * acc.real
    return rho_purity - total


@njit(cache=True)
def nelder_mead(x0, step, budget, fatol, restarts, kind, qa, qb, slot, n, rho, rho_purity):
    """Adaptive Nelder-Mead with a hard evaluation budget.

    Returns ``(best_x, best_f, evals)``. The best point seen at any
    evaluation is returned, so the result is never worse than ``x0``.
    """
    dim = x0.shape[0]
    best_x = x0.copy()
    best_f = circuit_cost(kind, qa, qb, slot, x0, n, rho, rho_purity)
    evals = 1
    if dim == 0 or budget <= 1:
        return best_x, best_f, evals

    alpha = 1.0
    beta = 1.0 + 2.0 / dim
    gamma = 0.75 - 0.5 / dim
    delta = 1.0 - 1.0 / dim

    sim = np.empty((dim + 1, dim))
    fs = np.empty(dim + 1)
    centroid = np.empty(dim)
    xr = np.empty(dim)
    xe = np.empty(dim)
    xc = np.empty(dim)

    for run in range(restarts + 1):
        sim[0] = best_x
        fs[0] = best_f
        for i in range(dim):
            if evals >= budget:
                return best_x, best_f, evals
            sim[i + 1] = best_x
            sim[i + 1, i] += step
            fs[i + 1] = circuit_cost(kind, qa, qb, slot, sim[i + 1], n, rho, rho_purity)
            evals += 1
            if fs[i + 1] < best_f:
                best_f = fs[i + 1]
                best_x = sim[i + 1].copy()

        while True:
            order = np.argsort(fs, kind="mergesort")
            sim = sim[order]
            fs = fs[order]
            if fs[dim] - fs[0] <= fatol:
                break
            if evals >= budget:
                return best_x, best_f, evals
            for j in range(dim):
                centroid[j] = 0.0
                for i in range(dim):
                    centroid[j] += sim[i, j]
                centroid[j] /= dim
            for j in range(dim):
                xr[j] = centroid[j] + alpha * (centroid[j] - sim[dim, j])
            fr = circuit_cost(kind, qa, qb, slot, xr, n, rho, rho_purity)
            evals += 1
            if fr < best_f:
                best_f = fr
                best_x = xr.copy()

            shrink = False
            if fr < fs[0]:
                if evals >= budget:
                    sim[dim] = xr
                    fs[dim] = fr
                    return best_x, best_f, evals
                for j in range(dim):
                    xe[j] = centroid[j] + beta * (xr[j] - centroid[j])
                fe = circuit_cost(kind, qa, qb, slot, xe, n, rho, rho_purity)
                evals += 1
                if fe < best_f:
                    best_f = fe
                    best_x = xe.copy()
                if fe < fr:
                    sim[dim] = xe
                    fs[dim] = fe
                else:
                    sim[dim] = xr
                    fs[dim] = fr
            elif fr < fs[dim - 1]:
                sim[dim] = xr
                fs[dim] = fr
            else:
                if evals >= budget:
                    return best_x, best_f, evals
                if fr < fs[dim]:
                    for j in range(dim):
                        xc[j] = centroid[j] + gamma * (xr[j] - centroid[j])
                    fc = circuit_cost(kind, qa, qb, slot, xc, n, rho, rho_purity)
                    evals += 1
                    if fc < best_f:
                        best_f = fc
                        best_x = xc.copy()
                    if fc <= fr:
                        sim[dim] = xc
                        fs[dim] = fc
                    else:
                        shrink = True
                else:
                    for j in range(dim):
                        xc[j] = centroid[j] - gamma * (centroid[j] - sim[dim, j])
                    fc = circuit_cost(kind, qa, qb, slot, xc, n, rho, rho_purity)
                    evals += 1
                    if fc < best_f:
                        best_f = fc
                        best_x = xc.copy()
                    if fc < fs[dim]:
                        sim[dim] = xc
                        fs[dim] = fc
                    else:
                        shrink = True
            if shrink:
                for i in range(1, dim + 1):
                    if evals >= budget:
                        return best_x, best_f, evals
                    for j in range(dim):
                        sim[i, j] = sim[0, j] + delta * (sim[i, j] - sim[0, j])
                    fs[i] = circuit_cost(kind, qa, qb, slot, sim[i], n, rho, rho_purity)
                    evals += 1
                    if fs[i] < best_f:
                        best_f = fs[i]
                        best_x = sim[i].copy()
        if evals >= budget:
            break
    return best_x, best_f, evals
