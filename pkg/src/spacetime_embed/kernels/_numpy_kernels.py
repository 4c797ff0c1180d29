"""Vectorised NumPy implementation of the training kernels.

Same signatures and semantics as ``_numba_kernels``; each batch is processed
with array operations instead of scalar loops.  Selected with
``SPACETIME_EMBED_BACKEND=numpy``.
"""
import numpy as np

from ..likelihood import PROB_CLAMP, log_fd
from ..manifolds import (
    Kind,
    ManifoldSpec,
    MAX_REPAIR_RESIDUAL,
    _pair_base,
    descent_tangent,
    exp_map,
    lorentz_inner,
    winding_range,
)

OK = 0
NONFINITE_LOSS = 1
COORD_BLOWUP = 2
REPAIR_FAILED = 3
MAX_COORD = 1e6

_KINDS = {k.code: k for k in Kind}


def _spec(kind, circ, D):
    kind = _KINDS[int(kind)]
    extra = {Kind.ANTI_DE_SITTER: 2, Kind.HYPERBOLOID: 1, Kind.MINKOWSKI: 1,
             Kind.CYLINDRICAL_MINKOWSKI: 1}.get(kind, 0)
    return ManifoldSpec(kind, D - extra, circ if kind in (Kind.CYLINDRICAL_EUCLIDEAN,
                                                         Kind.CYLINDRICAL_MINKOWSKI) else None)


def _terms(lik, params, s, dt):
    tau1, tau2, alpha, r, _ = params
    if lik == 0:
        lf, om = log_fd(s, tau1, r, alpha)
        f = np.exp(lf)
        return f, -f * om * alpha / tau1, np.zeros_like(f)
    l1, om1 = log_fd(s, tau1, r, 1.0)
    l2, om2 = log_fd(-dt, tau2, 0.0, 1.0)
    l3, om3 = log_fd(dt, tau2, 0.0, alpha)
    t = np.exp((l1 + l2 + l3) / 3.0)
    return t, -t * om1 / (3.0 * tau1), t * (om2 - alpha * om3) / (3.0 * tau2)


def _pair_probability(spec, lik, params, m, p, q):
    wrapped = lik == 1 and m > 0 and spec.has_circle_time
    A, dt, L, rule, grads = _pair_base(spec, p, q, anchored=wrapped)
    n = winding_range(spec, m if wrapped else 0)
    dtn = dt[..., None] + n * np.asarray(L)[..., None]
    sn = A[..., None] + rule * dtn * dtn
    t, ts, tt = _terms(lik, params, sn, dtn)
    tot = tt + ts * 2.0 * rule * dtn
    k = params[4]
    return (k * t.sum(-1), k * ts.sum(-1), k * tot.sum(-1), k * (n * tot).sum(-1)), grads


def _loss_grad(spec, lik, params, m, p, q, labels):
    (P, dA, dT, dL), (gA_p, gA_q, gT_p, gT_q, gL_q) = _pair_probability(spec, lik, params, m, p, q)
    Pc = np.clip(P, PROB_CLAMP, 1.0 - PROB_CLAMP)
    pos = labels.astype(bool)
    loss = np.where(pos, -np.log(Pc), -np.log1p(-Pc))
    g = np.where(pos, -1.0 / Pc, 1.0 / (1.0 - Pc))
    gp = g[:, None] * (dA[:, None] * gA_p + dT[:, None] * gT_p)
    gq = g[:, None] * (dA[:, None] * gA_q + dT[:, None] * gT_q + dL[:, None] * gL_q)
    return loss, gp, gq


def pair_gradients(kind, circ, lik, params, m, X, us, vs, labels):
    spec = _spec(kind, circ, X.shape[1])
    return _loss_grad(spec, lik, params, m, X[us], X[vs], np.asarray(labels))


def probabilities(kind, circ, lik, params, m, X, us, vs):
    spec = _spec(kind, circ, X.shape[1])
    return _pair_probability(spec, lik, params, m, X[us], X[vs])[0][0]


def run_epoch(kind, circ, lik, params, m, X, us, vs, labels, batch_ptr, batch_weight, lr):
    spec = _spec(kind, circ, X.shape[1])
    D = X.shape[1]
    total = 0.0
    for b in range(len(batch_ptr) - 1):
        sl = slice(batch_ptr[b], batch_ptr[b + 1])
        u, v = us[sl], vs[sl]
        loss, gp, gq = _loss_grad(spec, lik, params, m, X[u], X[v], labels[sl])
        if not np.all(np.isfinite(loss)):
            return total + float(np.sum(loss[np.isfinite(loss)])), NONFINITE_LOSS, b
        total += float(loss.sum())
        weight = batch_weight[b]
        # first-appearance order, as in the compiled loop
        nodes = np.empty(2 * len(u), dtype=np.int64)
        nodes[0::2] = u
        nodes[1::2] = v
        uniq, first, inv = np.unique(nodes, return_index=True, return_inverse=True)
        order = np.argsort(first)
        touched = uniq[order]
        # interleave p/q contributions in example order to match summation order
        contrib = np.empty((2 * len(u), D))
        contrib[0::2] = gp * weight
        contrib[1::2] = gq * weight
        G = np.zeros((len(uniq), D))
        np.add.at(G, inv.ravel(), contrib)
        df = G[order]
        pts = X[touched]
        if spec.is_flat:
            new = pts - lr * df
            if spec.is_cylindrical:
                t = np.mod(new[:, 0], spec.circumference)
                new[:, 0] = np.where(t >= spec.circumference, 0.0, t)
        else:
            step = -lr * descent_tangent(spec, pts, df)
            new = exp_map(spec, pts, step, project=False)
            resid = np.abs(lorentz_inner(spec, new, new) + 1.0)
            if not np.all(resid <= MAX_REPAIR_RESIDUAL):
                return total, REPAIR_FAILED, b
            new = _repair(spec, new)
        X[touched] = new
        if not np.all(np.abs(new) <= MAX_COORD):
            return total, COORD_BLOWUP, b
    return total, OK, -1


def _repair(spec, x):
    if spec.kind is Kind.HYPERBOLOID:
        x[:, 0] = np.sqrt(1.0 + np.sum(x[:, 1:] ** 2, axis=1))
    else:
        s = np.sqrt((1.0 + np.sum(x[:, 2:] ** 2, axis=1)) / (x[:, 0] ** 2 + x[:, 1] ** 2))
        x[:, 0] *= s
        x[:, 1] *= s
    return x
