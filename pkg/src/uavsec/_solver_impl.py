"""Augmented-Lagrangian kernel shared by the numba and numpy backends.

One flat-array convex program:

    minimize   c0 + lin.x + sum qv*x[qi]*x[qj] - sum lgw*log2(lgb + lgs*x[lgi])
    subject to g_k(x) <= 0,  k = 0..K-1

with g_k built from affine, convex-quadratic and convex negative-power terms
(pointer arrays slice the term lists per constraint). The same source runs
either interpreted or through numba.njit (the jitted variant is produced by
rebinding the helper globals to their compiled versions), so both paths
execute identical floating-point operations and agree bit-for-bit.
"""

from __future__ import annotations

import math
import types

import numpy as np

from ._accel import jit_compile

LN2 = math.log(2.0)

# status codes returned by al_solve
OK = 0
MAX_ITERS = 1


def _eval_objective(x, obj_w, c0, lin, qi, qj, qv, lgi, lgw, lgb, lgs, grad):
    """Objective value and gradient (overwrites grad). inf marks a domain hit."""
    n = x.size
    for i in range(n):
        grad[i] = 0.0
    if obj_w == 0.0:
        return 0.0
    f = c0
    for i in range(n):
        f += lin[i] * x[i]
        grad[i] = lin[i]
    for k in range(qi.size):
        i = qi[k]
        j = qj[k]
        v = qv[k]
        f += v * x[i] * x[j]
        grad[i] += v * x[j]
        grad[j] += v * x[i]
    for t in range(lgi.size):
        z = lgb[t] + lgs[t] * x[lgi[t]]
        if z <= 0.0:
            return np.inf
        f -= lgw[t] * np.log2(z)
        grad[lgi[t]] -= lgw[t] * lgs[t] / (z * LN2)
    if obj_w != 1.0:
        f *= obj_w
        for i in range(n):
            grad[i] *= obj_w
    return f


def _eval_constraint(x, k, cq_ptr, cqi, cqj, cqv, cl_ptr, cli, clv, cc,
                     cp_ptr, cpi, cpc, cpe):
    g = cc[k]
    for t in range(cl_ptr[k], cl_ptr[k + 1]):
        g += clv[t] * x[cli[t]]
    for t in range(cq_ptr[k], cq_ptr[k + 1]):
        g += cqv[t] * x[cqi[t]] * x[cqj[t]]
    for t in range(cp_ptr[k], cp_ptr[k + 1]):
        xv = x[cpi[t]]
        if xv <= 0.0:
            return np.inf
        g += cpc[t] * xv ** cpe[t]
    return g


def _accum_constraint_grad(x, k, coef, cq_ptr, cqi, cqj, cqv, cl_ptr, cli, clv,
                           cp_ptr, cpi, cpc, cpe, grad):
    for t in range(cl_ptr[k], cl_ptr[k + 1]):
        grad[cli[t]] += coef * clv[t]
    for t in range(cq_ptr[k], cq_ptr[k + 1]):
        grad[cqi[t]] += coef * cqv[t] * x[cqj[t]]
        grad[cqj[t]] += coef * cqv[t] * x[cqi[t]]
    for t in range(cp_ptr[k], cp_ptr[k + 1]):
        grad[cpi[t]] += coef * cpc[t] * cpe[t] * x[cpi[t]] ** (cpe[t] - 1.0)


def _al_value_grad(x, obj_w, c0, lin, qi, qj, qv, lgi, lgw, lgb, lgs,
                   cq_ptr, cqi, cqj, cqv, cl_ptr, cli, clv, cc,
                   cp_ptr, cpi, cpc, cpe, mu, rho, grad):
    """PHR augmented Lagrangian value and gradient."""
    phi = _eval_objective(x, obj_w, c0, lin, qi, qj, qv, lgi, lgw, lgb, lgs, grad)
    if not np.isfinite(phi):
        return np.inf
    for k in range(cc.size):
        g = _eval_constraint(x, k, cq_ptr, cqi, cqj, cqv, cl_ptr, cli, clv, cc,
                             cp_ptr, cpi, cpc, cpe)
        if not np.isfinite(g):
            return np.inf
        lam = mu[k] + rho * g
        if lam > 0.0:
            phi += (lam * lam - mu[k] * mu[k]) / (2.0 * rho)
            _accum_constraint_grad(x, k, lam, cq_ptr, cqi, cqj, cqv,
                                   cl_ptr, cli, clv, cp_ptr, cpi, cpc, cpe, grad)
        else:
            phi -= mu[k] * mu[k] / (2.0 * rho)
    return phi


def _lbfgs_inner(x, obj_w, c0, lin, qi, qj, qv, lgi, lgw, lgb, lgs,
                 cq_ptr, cqi, cqj, cqv, cl_ptr, cli, clv, cc,
                 cp_ptr, cpi, cpc, cpe, mu, rho, gtol, max_inner, mmem):
    """L-BFGS with Armijo backtracking on the augmented Lagrangian.

    Mutates x in place; returns the number of iterations spent.
    """
    n = x.size
    grad = np.empty(n)
    grad_new = np.empty(n)
    xnew = np.empty(n)
    d = np.empty(n)
    smem = np.zeros((mmem, n))
    ymem = np.zeros((mmem, n))
    rmem = np.zeros(mmem)
    alpha = np.zeros(mmem)

    f = _al_value_grad(x, obj_w, c0, lin, qi, qj, qv, lgi, lgw, lgb, lgs,
                       cq_ptr, cqi, cqj, cqv, cl_ptr, cli, clv, cc,
                       cp_ptr, cpi, cpc, cpe, mu, rho, grad)
    if not np.isfinite(f):
        # start outside the domain; caller guards against this
        return 0
    nstored = 0
    head = 0  # next write slot in the circular pair memory
    it = 0
    while it < max_inner:
        gnorm = 0.0
        for i in range(n):
            a = abs(grad[i])
            if a > gnorm:
                gnorm = a
        if gnorm <= gtol:
            break

        # two-loop recursion
        for i in range(n):
            d[i] = -grad[i]
        if nstored > 0:
            for c in range(nstored):
                idx = (head - 1 - c) % mmem
                s_dot_d = 0.0
                for i in range(n):
                    s_dot_d += smem[idx, i] * d[i]
                alpha[idx] = rmem[idx] * s_dot_d
                for i in range(n):
                    d[i] -= alpha[idx] * ymem[idx, i]
            last = (head - 1) % mmem
            sy = 0.0
            yy = 0.0
            for i in range(n):
                sy += smem[last, i] * ymem[last, i]
                yy += ymem[last, i] * ymem[last, i]
            gamma = sy / yy if yy > 0.0 else 1.0
            for i in range(n):
                d[i] *= gamma
            for c in range(nstored - 1, -1, -1):
                idx = (head - 1 - c) % mmem
                y_dot_d = 0.0
                for i in range(n):
                    y_dot_d += ymem[idx, i] * d[i]
                beta = rmem[idx] * y_dot_d
                for i in range(n):
                    d[i] += smem[idx, i] * (alpha[idx] - beta)

        gd = 0.0
        for i in range(n):
            gd += grad[i] * d[i]
        if gd >= 0.0:
            # not a descent direction; fall back to steepest descent
            nstored = 0
            gd = 0.0
            for i in range(n):
                d[i] = -grad[i]
                gd -= grad[i] * grad[i]

        step = 1.0 if nstored > 0 else min(1.0, 1.0 / max(1e-12, gnorm))
        accepted = False
        f_new = f
        for _bt in range(60):
            for i in range(n):
                xnew[i] = x[i] + step * d[i]
            f_new = _al_value_grad(xnew, obj_w, c0, lin, qi, qj, qv,
                                   lgi, lgw, lgb, lgs,
                                   cq_ptr, cqi, cqj, cqv, cl_ptr, cli, clv, cc,
                                   cp_ptr, cpi, cpc, cpe, mu, rho, grad_new)
            if np.isfinite(f_new) and f_new <= f + 1e-4 * step * gd:
                accepted = True
                break
            step *= 0.5
        it += 1
        if not accepted:
            if nstored == 0:
                break  # stalled on steepest descent at line-search resolution
            nstored = 0
            continue

        sy = 0.0
        ss = 0.0
        yy = 0.0
        for i in range(n):
            s_i = xnew[i] - x[i]
            y_i = grad_new[i] - grad[i]
            smem[head, i] = s_i
            ymem[head, i] = y_i
            sy += s_i * y_i
            ss += s_i * s_i
            yy += y_i * y_i
        if sy > 1e-12 * math.sqrt(ss * yy) and sy > 0.0:
            rmem[head] = 1.0 / sy
            head = (head + 1) % mmem
            if nstored < mmem:
                nstored += 1
        for i in range(n):
            x[i] = xnew[i]
            grad[i] = grad_new[i]
        f = f_new
    return it


def al_solve(x0, obj_w, c0, lin, qi, qj, qv, lgi, lgw, lgb, lgs,
             cq_ptr, cqi, cqj, cqv, cl_ptr, cli, clv, cc,
             cp_ptr, cpi, cpc, cpe,
             feas_tol, opt_tol, max_al, max_inner, rho0):
    """Outer augmented-Lagrangian loop.

    Returns (x, max_violation, kkt_rel, objective, status, inner_iters).
    kkt_rel is the infinity-norm of the Lagrangian gradient relative to the
    objective gradient scale, in the caller's (pre-scaled) coordinates.
    """
    n = x0.size
    K = cc.size
    x = x0.copy()
    mu = np.zeros(K)
    rho = rho0
    grad = np.empty(n)
    total_inner = 0
    viol_prev = np.inf
    fobj_prev = np.inf
    stalled = 0

    for t in range(max_al):
        # objective gradient scale at the current point sets the inner tolerance
        fobj = _eval_objective(x, obj_w, c0, lin, qi, qj, qv, lgi, lgw, lgb, lgs, grad)
        gref = 1.0
        if np.isfinite(fobj):
            for i in range(n):
                a = abs(grad[i])
                if a > gref:
                    gref = a
        loose = 1e-2 * 0.3 ** t
        gtol = max(opt_tol, loose) * gref
        total_inner += _lbfgs_inner(
            x, obj_w, c0, lin, qi, qj, qv, lgi, lgw, lgb, lgs,
            cq_ptr, cqi, cqj, cqv, cl_ptr, cli, clv, cc,
            cp_ptr, cpi, cpc, cpe, mu, rho, gtol, max_inner, 10)

        viol = 0.0
        for k in range(K):
            g = _eval_constraint(x, k, cq_ptr, cqi, cqj, cqv, cl_ptr, cli, clv,
                                 cc, cp_ptr, cpi, cpc, cpe)
            if g > viol:
                viol = g
        if viol <= feas_tol:
            phi = _al_value_grad(x, obj_w, c0, lin, qi, qj, qv, lgi, lgw, lgb, lgs,
                                 cq_ptr, cqi, cqj, cqv, cl_ptr, cli, clv, cc,
                                 cp_ptr, cpi, cpc, cpe, mu, rho, grad)
            kkt = np.inf
            if np.isfinite(phi):
                kkt = 0.0
                for i in range(n):
                    a = abs(grad[i])
                    if a > kkt:
                        kkt = a
            if kkt <= opt_tol * gref:
                break
            # feasible, inner tolerance at its floor, objective not moving:
            # further multiplier polishing cannot improve the iterate
            fnow = _eval_objective(x, obj_w, c0, lin, qi, qj, qv, lgi, lgw,
                                   lgb, lgs, grad)
            if loose <= opt_tol and abs(fnow - fobj_prev) <= 1e-11 * (1.0 + abs(fnow)):
                stalled += 1
                if stalled >= 2:
                    break
            else:
                stalled = 0
            fobj_prev = fnow
        # multiplier update
        for k in range(K):
            g = _eval_constraint(x, k, cq_ptr, cqi, cqj, cqv, cl_ptr, cli, clv,
                                 cc, cp_ptr, cpi, cpc, cpe)
            lam = mu[k] + rho * g
            mu[k] = lam if lam > 0.0 else 0.0
        if viol > 0.25 * viol_prev and rho < 1e12:
            rho *= 6.0
        viol_prev = viol

    # final diagnostics
    viol = 0.0
    for k in range(K):
        g = _eval_constraint(x, k, cq_ptr, cqi, cqj, cqv, cl_ptr, cli, clv,
                             cc, cp_ptr, cpi, cpc, cpe)
        if g > viol:
            viol = g
    fobj = _eval_objective(x, obj_w, c0, lin, qi, qj, qv, lgi, lgw, lgb, lgs, grad)
    gref = 1.0
    if np.isfinite(fobj):
        for i in range(n):
            a = abs(grad[i])
            if a > gref:
                gref = a
    phi = _al_value_grad(x, obj_w, c0, lin, qi, qj, qv, lgi, lgw, lgb, lgs,
                         cq_ptr, cqi, cqj, cqv, cl_ptr, cli, clv, cc,
                         cp_ptr, cpi, cpc, cpe, mu, rho, grad)
    kkt_rel = np.inf
    if np.isfinite(phi):
        kkt_rel = 0.0
        for i in range(n):
            a = abs(grad[i])
            if a > kkt_rel:
                kkt_rel = a
        kkt_rel /= gref
    status = OK if (viol <= feas_tol and kkt_rel <= opt_tol) else MAX_ITERS
    return x, viol, kkt_rel, fobj, status, total_inner


def _rebind(func, replacements: dict):
    """A copy of func whose module globals are overridden by replacements."""
    g = dict(func.__globals__)
    g.update(replacements)
    clone = types.FunctionType(func.__code__, g, func.__name__,
                               func.__defaults__, func.__closure__)
    clone.__qualname__ = func.__qualname__
    clone.__module__ = func.__module__
    return clone


_JITTED: dict = {}


def get_kernel(backend: str):
    """The al_solve entry point for the requested backend."""
    if backend == "numpy":
        return al_solve
    if backend != "numba":
        raise ValueError(f"unknown backend {backend!r}")
    if "al_solve" not in _JITTED:
        eval_obj = jit_compile(_eval_objective)
        eval_con = jit_compile(_eval_constraint)
        accum = jit_compile(_accum_constraint_grad)
        al_vg = jit_compile(_rebind(_al_value_grad, {
            "_eval_objective": eval_obj,
            "_eval_constraint": eval_con,
            "_accum_constraint_grad": accum,
        }))
        lbfgs = jit_compile(_rebind(_lbfgs_inner, {"_al_value_grad": al_vg}))
        _JITTED["al_solve"] = jit_compile(_rebind(al_solve, {
            "_eval_objective": eval_obj,
            "_eval_constraint": eval_con,
            "_al_value_grad": al_vg,
            "_lbfgs_inner": lbfgs,
        }))
    return _JITTED["al_solve"]
