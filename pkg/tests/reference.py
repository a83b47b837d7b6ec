"""Naive dense reference implementations used as test oracles.

Everything here is written straight from the defining formulas with dense
arrays and explicit loops; nothing is imported from the package.
"""

import numpy as np
from scipy.spatial.distance import cdist


def unit_rows(X):
    X = np.asarray(X, dtype=float)
    out = np.zeros_like(X)
    for i, row in enumerate(X):
        n = np.sqrt(np.sum(row**2))
        if n > 0:
            out[i] = row / n
    return out


def initial_distances(P, G):
    P, G = unit_rows(P), unit_rows(G)
    qg = cdist(P, G) / 2.0
    gg = cdist(G, G) / 2.0
    np.fill_diagonal(gg, 0.0)
    return qg, gg


def ranks_of(row, self_index=None):
    """1-based ranks by (distance, own-column-first, column index)."""
    n = len(row)
    keys = sorted(range(n), key=lambda j: (row[j], j != self_index, j))
    r = np.empty(n, dtype=int)
    for pos, j in enumerate(keys):
        r[j] = pos + 1
    return r


def similarity(Re, Rg, j, k1):
    s = 1.0 / Re[j]
    for m in range(len(Re)):
        if Re[m] <= k1:
            s += 1.0 / (Rg[m][j] * (1.0 + Re[m]))
    return s


def encode(Re, Rg, k1):
    V = np.zeros(len(Re))
    for j in range(len(Re)):
        if Re[j] <= k1:
            V[j] = similarity(Re, Rg, j, k1)
    return V


def enhance(V, Re, Vg, k2):
    acc = V.copy()
    for i in range(len(Re)):
        if Re[i] <= k2:
            acc = acc + Vg[i]
    return acc / (1.0 + k2)


def jaccard(a, b):
    mx = np.maximum(a, b).sum()
    if mx == 0:
        return 1.0
    return 1.0 - np.minimum(a, b).sum() / mx


def iterate(qg, gg, k1, k2, lam, T):
    """Per-sub-feature encodings (probes, galleries) after T passes."""
    qg, gg = qg.copy(), gg.copy()
    n_p, n_g = qg.shape
    for t in range(T):
        Rg = [ranks_of(gg[i], self_index=i) for i in range(n_g)]
        Rp = [ranks_of(qg[p]) for p in range(n_p)]
        Vg0 = [encode(Rg[i], Rg, k1) for i in range(n_g)]
        Vp0 = [encode(Rp[p], Rg, k1) for p in range(n_p)]
        Vg = [enhance(Vg0[i], Rg[i], Vg0, k2) for i in range(n_g)]
        Vp = [enhance(Vp0[p], Rp[p], Vg0, k2) for p in range(n_p)]
        if t < T - 1:
            dq = np.array([[jaccard(Vp[p], Vg[i]) for i in range(n_g)] for p in range(n_p)])
            dg = np.array([[jaccard(Vg[i], Vg[j]) for j in range(n_g)] for i in range(n_g)])
            qg = (1 - lam) * qg + lam * dq
            gg = (1 - lam) * gg + lam * dg
            gg = (gg + gg.T) / 2.0
            np.fill_diagonal(gg, 0.0)
    return np.array(Vp), np.array(Vg), qg, gg


def fuse(parts, alpha):
    parts = np.asarray(parts, dtype=float)
    powered = np.where(parts > 0, np.abs(parts) ** alpha, 0.0)
    return np.mean(powered, axis=0) ** (1.0 / alpha)


def contiguous_parts(M, L):
    base, extra = divmod(M, L)
    sizes = [base + 1 if l < extra else base for l in range(L)]
    edges = np.concatenate([[0], np.cumsum(sizes)])
    return [np.arange(edges[l], edges[l + 1]) for l in range(L)]


def daf_distances(P, G, L, k1, k2, alpha, lam, T):
    """Full dense Divide-and-Fuse final distances (contiguous split)."""
    vps, vgs = [], []
    for cols in contiguous_parts(P.shape[1], L):
        qg, gg = initial_distances(P[:, cols], G[:, cols])
        vp, vg, _, _ = iterate(qg, gg, k1, k2, lam, T)
        vps.append(vp)
        vgs.append(vg)
    fp, fg = fuse(vps, alpha), fuse(vgs, alpha)
    return np.array([[jaccard(fp[p], fg[i]) for i in range(len(fg))] for p in range(len(fp))])


def score_quadratic(order, qp, qc, gp, gc, ranks=(1, 5, 10, 20)):
    """Per-probe AP and CMC by walking every ranked list element by element."""
    aps, firsts = [], []
    for p in range(len(order)):
        eff, hits, total, first = 0, 0, 0.0, None
        n_rel = sum(1 for g in range(len(gp)) if gp[g] == qp[p] and gc[g] != qc[p])
        if n_rel == 0:
            aps.append(np.nan)
            firsts.append(None)
            continue
        for g in order[p]:
            if gp[g] == qp[p] and gc[g] == qc[p]:
                continue
            eff += 1
            if gp[g] == qp[p]:
                hits += 1
                total += hits / eff
                if first is None:
                    first = eff
        aps.append(total / n_rel)
        firsts.append(first)
    valid = [f for f in firsts if f is not None]
    cmc = {k: sum(f <= k for f in valid) / len(valid) for k in ranks}
    return np.array(aps), cmc
