"""Slow, independent reference implementations used as test oracles.

Nothing here imports the package's numerical kernels: every formula is
re-derived with plain loops in float64.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


# -- transformer forward ------------------------------------------------------


def ref_rms(x, w, eps):
    x = np.asarray(x, dtype=np.float64)
    return x / math.sqrt(float(np.mean(x * x)) + eps) * (1.0 if w is None else np.asarray(w, np.float64))


def ref_rope(vec, pos, base):
    d = len(vec)
    half = d // 2
    out = np.empty(d)
    for j in range(half):
        theta = pos * base ** (-j / half)
        a, b = vec[j], vec[j + half]
        out[j] = a * math.cos(theta) - b * math.sin(theta)
        out[j + half] = a * math.sin(theta) + b * math.cos(theta)
    return out


def ref_attention(q, k, v, q_pos, k_pos, window=None):
    """q (H, n_q, d), k/v (KV, n_k, d); loops over every head and query."""
    H, n_q, d = q.shape
    KV = k.shape[0]
    g = H // KV
    out = np.zeros((H, n_q, d))
    for h in range(H):
        kh = h // g
        for i in range(n_q):
            logits, vals = [], []
            for j in range(k.shape[1]):
                if k_pos[j] < 0 or k_pos[j] > q_pos[i]:
                    continue
                if window is not None and q_pos[i] - k_pos[j] >= window:
                    continue
                logits.append(float(np.dot(q[h, i], k[kh, j])) / math.sqrt(d))
                vals.append(v[kh, j])
            m = max(logits)
            e = [math.exp(s - m) for s in logits]
            z = sum(e)
            out[h, i] = sum(w / z * np.asarray(vv, np.float64) for w, vv in zip(e, vals))
    return out


def ref_forward(weights, cfg, tokens):
    """Full-sequence float64 forward, one position at a time. Returns all logits."""
    W = {k: np.asarray(v, np.float64) for k, v in weights.items()}
    n = len(tokens)
    x = np.stack([W["tok_embeddings"][t] for t in tokens])
    eps = cfg.norm_eps
    for i, kind in enumerate(cfg.attn_pattern):
        p = f"layer.{i}."
        if kind.tag != "skip":
            h = np.stack([ref_rms(r, W[p + "attn_norm"], eps) for r in x])
            q = (h @ W[p + "attn.wq"]).reshape(n, cfg.n_heads, cfg.head_dim)
            k = (h @ W[p + "attn.wk"]).reshape(n, cfg.n_kv_heads, cfg.head_dim)
            v = (h @ W[p + "attn.wv"]).reshape(n, cfg.n_kv_heads, cfg.head_dim)
            qn = np.zeros_like(q)
            kn = np.zeros_like(k)
            for t in range(n):
                for hh in range(cfg.n_heads):
                    qn[t, hh] = ref_rope(ref_rms(q[t, hh], W[p + "attn.q_norm"], eps), t, cfg.rope_base)
                for hh in range(cfg.n_kv_heads):
                    kn[t, hh] = ref_rope(ref_rms(k[t, hh], W[p + "attn.k_norm"], eps), t, cfg.rope_base)
            win = kind.window if kind.tag == "swa" else None
            o = ref_attention(qn.transpose(1, 0, 2), kn.transpose(1, 0, 2), v.transpose(1, 0, 2),
                              np.arange(n), np.arange(n), win)
            x = x + o.transpose(1, 0, 2).reshape(n, -1) @ W[p + "attn.wo"]
        h = np.stack([ref_rms(r, W[p + "ffn_norm"], eps) for r in x])
        a = h @ W[p + "ffn.w_gate"]
        hidden = a / (1.0 + np.exp(-a)) * (h @ W[p + "ffn.w_up"])
        x = x + hidden @ W[p + "ffn.w_down"]
    head = W["tok_embeddings"].T if cfg.tied_embeddings else W["lm_head"]
    return np.stack([ref_rms(r, W["final_norm"], eps) for r in x]) @ head


# -- activation metrics ---------------------------------------------------------


def ref_metrics(layer_records):
    """layer_records[l] = list of (x_in, hidden, x_out) row arrays, materialized.

    Returns (ffn per-channel, resid per-channel summed over layers, layer metric).
    """
    ffn, resid, layer = [], None, []
    for recs in layer_records:
        X_in = np.concatenate([r[0] for r in recs]).astype(np.float64)
        Hd = np.concatenate([r[1] for r in recs]).astype(np.float64)
        X_out = np.concatenate([r[2] for r in recs]).astype(np.float64)
        N = len(X_in)
        ffn.append([math.sqrt(sum(Hd[i, j] ** 2 for i in range(N)) / N) for j in range(Hd.shape[1])])
        normed = []
        for row in X_in:
            ms = float(np.mean(row ** 2))
            normed.append(row / math.sqrt(ms) if ms > 0 else np.zeros_like(row))
        normed = np.array(normed)
        e = np.array([math.sqrt(sum(normed[i, j] ** 2 for i in range(N)) / N) for j in range(normed.shape[1])])
        resid = e if resid is None else resid + e
        cs = 0.0
        for a, b in zip(X_in, X_out):
            na, nb = math.sqrt(float(a @ a)), math.sqrt(float(b @ b))
            cs += 0.0 if na == 0 or nb == 0 else float(a @ b) / (na * nb)
        layer.append(1.0 - cs / N)
    return np.array(ffn), resid, np.array(layer)


# -- multi-objective primitives -------------------------------------------------


def dominates(a, b):
    return a[0] <= b[0] and a[1] <= b[1] and (a[0] < b[0] or a[1] < b[1])


def brute_front(points):
    return sorted(i for i, p in enumerate(points) if not any(dominates(q, p) for q in points))


def mc_hypervolume(points, ref, n=1_000_000, seed=0, lo=None):
    rng = np.random.default_rng(seed)
    P = np.asarray(points, dtype=float)
    lo = np.minimum(P.min(axis=0), ref) if lo is None else np.asarray(lo)
    u = lo + rng.random((n, 2)) * (np.asarray(ref) - lo)
    hit = np.zeros(n, dtype=bool)
    for p in P:
        hit |= (u[:, 0] >= p[0]) & (u[:, 1] >= p[1])
    return float(hit.mean() * np.prod(np.asarray(ref) - lo))


def inclusion_exclusion_hv(points, ref):
    """Exact union area of the boxes [p, ref] by inclusion-exclusion (small sets only)."""
    P = [p for p in points if p[0] < ref[0] and p[1] < ref[1]]
    total = 0.0
    for r in range(1, len(P) + 1):
        for sub in itertools.combinations(P, r):
            x = max(s[0] for s in sub)
            y = max(s[1] for s in sub)
            total += (-1) ** (r + 1) * (ref[0] - x) * (ref[1] - y)
    return total


def brute_kendall_tau_b(a, b):
    n = len(a)
    conc = disc = ties_a = ties_b = 0
    for i in range(n):
        for j in range(i + 1, n):
            da = (a[i] > a[j]) - (a[i] < a[j])
            db = (b[i] > b[j]) - (b[i] < b[j])
            if da == 0 and db == 0:
                continue
            if da == 0:
                ties_a += 1
            elif db == 0:
                ties_b += 1
            elif da == db:
                conc += 1
            else:
                disc += 1
    return (conc - disc) / math.sqrt((conc + disc + ties_a) * (conc + disc + ties_b))


# -- GP -------------------------------------------------------------------------


def two_point_gp(x1, x2, y1, y2, xs, ls, sf2, sn2):
    """Closed-form posterior at scalar ``xs`` for a 1-D SE kernel on two points."""
    def k(a, b):
        return sf2 * math.exp(-0.5 * (a - b) ** 2 / ls ** 2)
    a, b, c = k(x1, x1) + sn2, k(x1, x2), k(x2, x2) + sn2
    det = a * c - b * b
    inv = [[c / det, -b / det], [-b / det, a / det]]
    ks = [k(xs, x1), k(xs, x2)]
    alpha = [inv[0][0] * y1 + inv[0][1] * y2, inv[1][0] * y1 + inv[1][1] * y2]
    mean = ks[0] * alpha[0] + ks[1] * alpha[1]
    quad = sum(ks[i] * inv[i][j] * ks[j] for i in range(2) for j in range(2))
    return mean, k(xs, xs) - quad


def hv_batch(P, ref):
    """Hypervolume of each point set in ``P`` (S, n, 2), vectorized over S.

    Integrates ``ref_y - min{y_j : x_j <= x}`` over x: sort by x, take the
    running minimum of y, and sum slab areas up to ``ref_x``.
    """
    P = np.minimum(np.asarray(P, dtype=float), np.asarray(ref, dtype=float))
    order = np.argsort(P[..., 0], axis=1, kind="stable")
    x = np.take_along_axis(P[..., 0], order, axis=1)
    y = np.minimum.accumulate(np.take_along_axis(P[..., 1], order, axis=1), axis=1)
    right = np.concatenate([x[:, 1:], np.full((len(x), 1), float(ref[0]))], axis=1)
    return np.sum((right - x) * (ref[1] - y), axis=1)
