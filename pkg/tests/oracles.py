"""Standalone brute-force reference implementations used by the tests.

Everything here is written with plain Python lists and the ``math`` module so
that it shares no code with the package under test.
"""
import math

EPS = 1e-8


def to_lists(a):
    return [list(map(float, row)) for row in a]


def softmax(v):
    mx = max(v)
    e = [math.exp(x - mx) for x in v]
    s = sum(e)
    return [x / s for x in e]


def softmax_rows(X):
    return [softmax(row) for row in X]


def transpose(X):
    return [list(col) for col in zip(*X)]


def softmax_cols(X):
    return transpose(softmax_rows(transpose(X)))


def pearson(u, v):
    n = len(u)
    mu, mv = sum(u) / n, sum(v) / n
    if max(u) == min(u) or max(v) == min(v):
        return 0.0
    num = sum((a - mu) * (b - mv) for a, b in zip(u, v))
    den = math.sqrt(sum((a - mu) ** 2 for a in u)) * math.sqrt(sum((b - mv) ** 2 for b in v))
    return num / max(den, EPS)


def cosine(u, v):
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    if nu == 0 or nv == 0:
        return 0.0
    return sum(a * b for a, b in zip(u, v)) / max(nu * nv, EPS)


def matmul(A, B):
    Bt = transpose(B)
    return [[sum(a * b for a, b in zip(row, col)) for col in Bt] for row in A]


def lincomb(*pairs):
    """sum_k c_k * M_k for matrices given as (c, M) pairs."""
    rows, cols = len(pairs[0][1]), len(pairs[0][1][0])
    return [[sum(c * M[i][j] for c, M in pairs) for j in range(cols)] for i in range(rows)]


def relation(X, sim=pearson):
    """(X_row, X_col, R, R X) with R scaled by 1/m."""
    m = len(X)
    Xr, Xc = softmax_rows(X), softmax_cols(X)
    R = [[sim(Xr[i], Xc[j]) / m for j in range(m)] for i in range(m)]
    return Xr, Xc, R, matmul(R, X)


def pipeline(X, mix, head_w, head_b, sim=pearson):
    """Relational extraction + fusion + linear head on a fixed feature matrix."""
    Xr, Xc, R1, F1 = relation(X, sim)
    X_hid = lincomb((1.0, X), (-mix["a"], Xr), (-mix["b"], Xc))
    _, _, R2, F2 = relation(X_hid, sim)
    F_last = lincomb((mix["c"], X), (mix["d"], F1), (mix["e"], X_hid), (mix["f"], F2))
    preds = [sum(f * w for f, w in zip(row, head_w)) + head_b for row in F_last]
    return {"X_row": Xr, "X_col": Xc, "R1": R1, "F1": F1, "X_hid": X_hid, "R2": R2, "F2": F2,
            "F_last": F_last, "preds": preds}


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def gru(seq, W, U, b):
    """Scalar-loop GRU; ``seq`` is [T][C]; W/U/b are dicts over gates z, r, n.

    h' = (1 - z) * n + z * h with z = σ(x Wz + h Uz + bz), r = σ(x Wr + h Ur + br),
    n = tanh(x Wn + (r ⊙ h) Un + bn).
    """
    H = len(b["z"])
    h = [0.0] * H

    def affine(x, Wg, vec, Ug, bg):
        return [
            sum(x[c] * Wg[c][k] for c in range(len(x))) + sum(vec[j] * Ug[j][k] for j in range(H)) + bg[k]
            for k in range(H)
        ]

    for x in seq:
        z = [sigmoid(v) for v in affine(x, W["z"], h, U["z"], b["z"])]
        r = [sigmoid(v) for v in affine(x, W["r"], h, U["r"], b["r"])]
        rh = [ri * hi for ri, hi in zip(r, h)]
        n = [math.tanh(v) for v in affine(x, W["n"], rh, U["n"], b["n"])]
        h = [(1 - zk) * nk + zk * hk for zk, nk, hk in zip(z, n, h)]
    return h


def mean(v):
    return sum(v) / len(v)


def ranks(v):
    """Average (fractional) ranks, 1-based, by enumeration."""
    out = []
    for x in v:
        less = sum(1 for y in v if y < x)
        equal = sum(1 for y in v if y == x)
        out.append(less + (equal + 1) / 2.0)
    return out


def precision(preds, labels, n, ids):
    order = sorted(range(len(preds)), key=lambda i: (-preds[i], ids[i]))
    return 100.0 * sum(1 for i in order[:n] if labels[i] > 0) / n
