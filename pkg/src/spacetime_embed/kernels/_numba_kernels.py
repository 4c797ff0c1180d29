"""Scalar-loop training kernels compiled with numba.

Mirrors the vectorised NumPy path in ``_numpy_kernels``; both are checked
against each other in the test-suite.  Manifold and likelihood kinds arrive
as integer codes (see ``Kind.code`` and ``Likelihood.code``).
"""
import math

import numpy as np
from numba import njit

EUCLIDEAN = 0
CYL_EUCLIDEAN = 1
HYPERBOLOID = 2
MINKOWSKI = 3
CYL_MINKOWSKI = 4
ADS = 5

FD = 0
TFD = 1

EPS_LC = 1e-6
PROB_CLAMP = 1e-12
MAX_COORD = 1e6
MAX_REPAIR = 0.1

OK = 0
NONFINITE_LOSS = 1
COORD_BLOWUP = 2
REPAIR_FAILED = 3

TWO_PI = 2.0 * math.pi


@njit(cache=True)
def _sq_from_inner(z, timelike):
    u = 1.0 + z
    if abs(u) < EPS_LC:
        return -2.0 * u - u * u / 3.0, -2.0 - 2.0 * u / 3.0
    if z < -1.0:
        a = math.acosh(-z)
        return a * a, -2.0 * a / math.sqrt(z * z - 1.0)
    if not timelike:
        return -2.0 * u - u * u / 3.0, -2.0 - 2.0 * u / 3.0
    if z <= 1.0:
        c = math.acos(-z)
        zc = min(z, 1.0 - EPS_LC)
        return -c * c, -2.0 * math.acos(-zc) / math.sqrt(1.0 - zc * zc)
    return -math.pi * math.pi, 0.0


@njit(cache=True)
def _lorentz(kind, x, y):
    acc = 0.0
    start = 2 if kind == ADS else 1
    for i in range(start, x.shape[0]):
        acc += x[i] * y[i]
    if kind == ADS:
        acc -= x[0] * y[0] + x[1] * y[1]
    else:
        acc -= x[0] * y[0]
    return acc


@njit(cache=True)
def pair_base(kind, circ, anchored, p, q, gA_p, gA_q, gT_p, gT_q, gL_q):
    """Fill the gradient buffers and return ``(A, dt, L, rule)``.

    Image n has squared interval ``A + rule * (dt + n L)^2`` and time
    difference ``dt + n L``.
    """
    D = p.shape[0]
    for i in range(D):
        gA_p[i] = 0.0
        gA_q[i] = 0.0
        gT_p[i] = 0.0
        gT_q[i] = 0.0
        gL_q[i] = 0.0
    L = 0.0
    rule = 0.0
    if kind == EUCLIDEAN or kind == MINKOWSKI or kind == CYL_EUCLIDEAN or kind == CYL_MINKOWSKI:
        A = 0.0
        for i in range(1, D):
            d = q[i] - p[i]
            A += d * d
            gA_q[i] = 2.0 * d
            gA_p[i] = -2.0 * d
        d0 = q[0] - p[0]
        if kind == EUCLIDEAN or kind == MINKOWSKI:
            sg = 1.0 if kind == EUCLIDEAN else -1.0
            A += sg * d0 * d0
            gA_q[0] = 2.0 * sg * d0
            gA_p[0] = -2.0 * sg * d0
            dt = d0
        else:
            if anchored:
                dt = d0 % circ
            else:
                dt = (d0 + 0.5 * circ) % circ - 0.5 * circ
            L = circ
            rule = -1.0 if kind == CYL_MINKOWSKI else 1.0
        gT_q[0] = 1.0
        gT_p[0] = -1.0
        return A, dt, L, rule
    if kind == HYPERBOLOID:
        z = _lorentz(kind, p, q)
        A, dz = _sq_from_inner(z, False)
        gA_p[0] = -dz * q[0]
        gA_q[0] = -dz * p[0]
        for i in range(1, D):
            gA_p[i] = dz * q[i]
            gA_q[i] = dz * p[i]
        gT_q[0] = 1.0
        gT_p[0] = -1.0
        return A, q[0] - p[0], L, rule
    # anti-de Sitter
    z = _lorentz(kind, p, q)
    A, dz = _sq_from_inner(z, True)
    for i in range(D):
        sg = -1.0 if i < 2 else 1.0
        gA_p[i] = dz * sg * q[i]
        gA_q[i] = dz * sg * p[i]
    raw = math.atan2(q[0], q[1]) - math.atan2(p[0], p[1])
    if anchored:
        dth = raw % TWO_PI
    else:
        dth = math.pi - (math.pi - raw) % TWO_PI
    rq2 = 1.0
    for i in range(2, D):
        rq2 += q[i] * q[i]
    rq = math.sqrt(rq2)
    rho_p = p[0] * p[0] + p[1] * p[1]
    rho_q = q[0] * q[0] + q[1] * q[1]
    gT_q[0] = rq * q[1] / rho_q
    gT_q[1] = -rq * q[0] / rho_q
    gT_p[0] = -rq * p[1] / rho_p
    gT_p[1] = rq * p[0] / rho_p
    for i in range(2, D):
        gT_q[i] = dth * q[i] / rq
        gL_q[i] = TWO_PI * q[i] / rq
    return A, rq * dth, TWO_PI * rq, rule


@njit(cache=True)
def _log_fd(x, tau, r, alpha):
    """``log F`` and ``1 - F`` of the Fermi-Dirac function."""
    y = (alpha * x - r) / tau
    if y >= 0.0:
        e = math.exp(-y)
        return -y - math.log1p(e), 1.0 / (1.0 + e)
    e = math.exp(y)
    return -math.log1p(e), e / (1.0 + e)


@njit(cache=True)
def _term(lik, params, s, dt):
    """One image's probability and its partials in (s, dt), before k."""
    tau1 = params[0]
    r = params[3]
    if lik == FD:
        alpha = params[2]
        lf, om = _log_fd(s, tau1, r, alpha)
        f = math.exp(lf)
        return f, -f * om * alpha / tau1, 0.0
    tau2 = params[1]
    alpha = params[2]
    l1, om1 = _log_fd(s, tau1, r, 1.0)
    l2, om2 = _log_fd(-dt, tau2, 0.0, 1.0)
    l3, om3 = _log_fd(dt, tau2, 0.0, alpha)
    t = math.exp((l1 + l2 + l3) / 3.0)
    return t, -t * om1 / (3.0 * tau1), t * (om2 - alpha * om3) / (3.0 * tau2)


@njit(cache=True)
def pair_probability(kind, circ, lik, params, m, p, q, gA_p, gA_q, gT_p, gT_q, gL_q):
    """Edge probability p -> q and its partials ``(P, dP/dA, dP/ddt, dP/dL)``."""
    wrapped = lik == TFD and m > 0 and (kind == CYL_EUCLIDEAN or kind == CYL_MINKOWSKI or kind == ADS)
    A, dt, L, rule = pair_base(kind, circ, wrapped, p, q, gA_p, gA_q, gT_p, gT_q, gL_q)
    lo = -m if wrapped else 0
    hi = m if wrapped else 0
    P = 0.0
    dA = 0.0
    dT = 0.0
    dL = 0.0
    for n in range(lo, hi + 1):
        dtn = dt + n * L
        sn = A + rule * dtn * dtn
        t, ts, tt = _term(lik, params, sn, dtn)
        tot = tt + ts * 2.0 * rule * dtn
        P += t
        dA += ts
        dT += tot
        dL += n * tot
    k = params[4]
    return k * P, k * dA, k * dT, k * dL


@njit(cache=True)
def pair_loss_grad(kind, circ, lik, params, m, p, q, label, weight, gp, gq,
                   gA_p, gA_q, gT_p, gT_q, gL_q):
    """NLL of one labelled pair; adds ``weight * dNLL/dp`` into gp (and q)."""
    P, dA, dT, dL = pair_probability(kind, circ, lik, params, m, p, q, gA_p, gA_q, gT_p, gT_q, gL_q)
    Pc = min(max(P, PROB_CLAMP), 1.0 - PROB_CLAMP)
    if label:
        loss = -math.log(Pc)
        g = -1.0 / Pc
    else:
        loss = -math.log1p(-Pc)
        g = 1.0 / (1.0 - Pc)
    g *= weight
    for i in range(p.shape[0]):
        gp[i] += g * (dA * gA_p[i] + dT * gT_p[i])
        gq[i] += g * (dA * gA_q[i] + dT * gT_q[i] + dL * gL_q[i])
    return loss


@njit(cache=True)
def update_point(kind, circ, x, df, lr, v, w):
    """In-place Riemannian SGD step ``x <- exp_x(-lr * descent(df))``."""
    D = x.shape[0]
    if kind == EUCLIDEAN or kind == MINKOWSKI or kind == CYL_EUCLIDEAN or kind == CYL_MINKOWSKI:
        for i in range(D):
            x[i] -= lr * df[i]
        if kind == CYL_EUCLIDEAN or kind == CYL_MINKOWSKI:
            t = x[0] % circ
            x[0] = 0.0 if t >= circ else t
        return OK
    ntime = 2 if kind == ADS else 1
    # v = Pi(g^-1 df)
    for i in range(D):
        v[i] = -df[i] if i < ntime else df[i]
    c = _lorentz(kind, v, x)
    for i in range(D):
        v[i] += c * x[i]
    if kind == ADS:
        for i in range(D):
            w[i] = -v[i] if i < ntime else v[i]
        c = _lorentz(kind, w, x)
        for i in range(D):
            v[i] = w[i] + c * x[i]
    for i in range(D):
        v[i] *= -lr
    n2 = _lorentz(kind, v, v)
    a = math.sqrt(abs(n2))
    if a > 0.0:
        if n2 < 0.0:
            ca = math.cos(a)
            sa = math.sin(a) / a
        else:
            ca = math.cosh(a)
            sa = math.sinh(a) / a
    else:
        ca = 1.0
        sa = 1.0
    for i in range(D):
        x[i] = ca * x[i] + sa * v[i]
    resid = abs(_lorentz(kind, x, x) + 1.0)
    if not resid <= MAX_REPAIR:
        return REPAIR_FAILED
    sp = 1.0
    for i in range(ntime, D):
        sp += x[i] * x[i]
    if kind == HYPERBOLOID:
        x[0] = math.sqrt(sp)
    else:
        s = math.sqrt(sp / (x[0] * x[0] + x[1] * x[1]))
        x[0] *= s
        x[1] *= s
    return OK


@njit(cache=True)
def run_epoch(kind, circ, lik, params, m, X, us, vs, labels, batch_ptr, batch_weight, lr):
    """One pass over pre-batched examples; returns ``(loss_sum, status, batch)``.

    Per-example gradients of batch b, scaled by ``batch_weight[b]``, are
    summed per node; then each touched node takes one step, in order of
    first appearance.
    """
    n_nodes, D = X.shape
    G = np.zeros((n_nodes, D))
    touched = np.zeros(n_nodes, dtype=np.bool_)
    order = np.empty(n_nodes, dtype=np.int64)
    gA_p = np.empty(D)
    gA_q = np.empty(D)
    gT_p = np.empty(D)
    gT_q = np.empty(D)
    gL_q = np.empty(D)
    v = np.empty(D)
    w = np.empty(D)
    total = 0.0
    for b in range(batch_ptr.shape[0] - 1):
        start = batch_ptr[b]
        stop = batch_ptr[b + 1]
        weight = batch_weight[b]
        nt = 0
        for j in range(start, stop):
            a = us[j]
            c = vs[j]
            if not touched[a]:
                touched[a] = True
                order[nt] = a
                nt += 1
            if not touched[c]:
                touched[c] = True
                order[nt] = c
                nt += 1
            loss = pair_loss_grad(kind, circ, lik, params, m, X[a], X[c], labels[j], weight,
                                  G[a], G[c], gA_p, gA_q, gT_p, gT_q, gL_q)
            if not math.isfinite(loss):
                return total, NONFINITE_LOSS, b
            total += loss
        for t in range(nt):
            node = order[t]
            status = update_point(kind, circ, X[node], G[node], lr, v, w)
            if status != OK:
                return total, status, b
            for i in range(D):
                G[node, i] = 0.0
                if not abs(X[node, i]) <= MAX_COORD:
                    return total, COORD_BLOWUP, b
            touched[node] = False
    return total, OK, -1


@njit(cache=True)
def pair_gradients(kind, circ, lik, params, m, X, us, vs, labels):
    """Per-example NLL and ambient differentials (no update)."""
    n, D = us.shape[0], X.shape[1]
    losses = np.empty(n)
    gp = np.zeros((n, D))
    gq = np.zeros((n, D))
    gA_p = np.empty(D)
    gA_q = np.empty(D)
    gT_p = np.empty(D)
    gT_q = np.empty(D)
    gL_q = np.empty(D)
    for j in range(n):
        losses[j] = pair_loss_grad(kind, circ, lik, params, m, X[us[j]], X[vs[j]], labels[j], 1.0,
                                   gp[j], gq[j], gA_p, gA_q, gT_p, gT_q, gL_q)
    return losses, gp, gq


@njit(cache=True)
def probabilities(kind, circ, lik, params, m, X, us, vs):
    n, D = us.shape[0], X.shape[1]
    out = np.empty(n)
    gA_p = np.empty(D)
    gA_q = np.empty(D)
    gT_p = np.empty(D)
    gT_q = np.empty(D)
    gL_q = np.empty(D)
    for j in range(n):
        out[j] = pair_probability(kind, circ, lik, params, m, X[us[j]], X[vs[j]],
                                  gA_p, gA_q, gT_p, gT_q, gL_q)[0]
    return out
