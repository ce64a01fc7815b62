"""Hot inner loops, each with a numba and a pure-numpy implementation.

The numba path is used when numba imports and ``FAPL_NO_NUMBA`` is unset
(or ``0``). Both implementations are always importable under explicit names
so they can be compared directly::

    cosine_matrix_numpy, cosine_matrix_numba
    center_delta_numpy, center_delta_numba
    ranked_hits_numpy, ranked_hits_numba
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None


def _env_disabled() -> bool:
    return os.environ.get("FAPL_NO_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")


HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not _env_disabled()
BACKEND = "numba" if USE_NUMBA else "numpy"


def _njit(func):
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


# ---------------------------------------------------------------------------
# cosine affinity
# ---------------------------------------------------------------------------

def cosine_matrix_numpy(a, b):
    """Pairwise cosine similarity between rows of ``a`` (n, d) and ``b`` (m, d).

    A pair involving a zero-norm row has similarity exactly 0.
    """
    na = np.sqrt(np.einsum("ij,ij->i", a, a))
    nb = np.sqrt(np.einsum("ij,ij->i", b, b))
    dots = a @ b.T
    denom = np.outer(na, nb)
    out = np.zeros_like(dots)
    np.divide(dots, denom, out=out, where=denom > 0)
    return np.clip(out, -1.0, 1.0)


def _cosine_matrix_loop(a, b):
    n, d = a.shape
    m = b.shape[0]
    na = np.empty(n)
    nb = np.empty(m)
    for i in range(n):
        s = 0.0
        for k in range(d):
            s += a[i, k] * a[i, k]
        na[i] = np.sqrt(s)
    for j in range(m):
        s = 0.0
        for k in range(d):
            s += b[j, k] * b[j, k]
        nb[j] = np.sqrt(s)
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            denom = na[i] * nb[j]
            if denom > 0.0:
                s = 0.0
                for k in range(d):
                    s += a[i, k] * b[j, k]
                v = s / denom
                if v > 1.0:
                    v = 1.0
                elif v < -1.0:
                    v = -1.0
                out[i, j] = v
    return out


cosine_matrix_numba = _njit(_cosine_matrix_loop)


# ---------------------------------------------------------------------------
# center accumulation
# ---------------------------------------------------------------------------

def center_delta_numpy(features, labels, centers):
    """Per-class ``sum_i [l_i = k] (c_k - x_i) / (1 + n_k)``.

    Accumulates in batch order so the sum matches a sequential loop bit for bit.
    """
    k, d = centers.shape
    acc = np.zeros((k, d))
    counts = np.zeros(k)
    np.add.at(acc, labels, centers[labels] - features)
    np.add.at(counts, labels, 1.0)
    return acc / (1.0 + counts)[:, None]


def _center_delta_loop(features, labels, centers):
    k, d = centers.shape
    acc = np.zeros((k, d))
    counts = np.zeros(k)
    for i in range(features.shape[0]):
        c = labels[i]
        counts[c] += 1.0
        for j in range(d):
            acc[c, j] += centers[c, j] - features[i, j]
    for c in range(k):
        for j in range(d):
            acc[c, j] = acc[c, j] / (1.0 + counts[c])
    return acc


center_delta_numba = _njit(_center_delta_loop)


# ---------------------------------------------------------------------------
# ranked relevance -> first hit rank and average precision
# ---------------------------------------------------------------------------

def ranked_hits_numpy(relevance):
    """For a boolean (q, g) matrix in rank order, return the 1-based rank of the
    first relevant item and the average precision of each row.

    Rows without any relevant item get first-hit 0 and AP 0.
    """
    rel = np.asarray(relevance, dtype=bool)
    q, g = rel.shape
    first = np.zeros(q, dtype=np.int64)
    ap = np.zeros(q)
    ranks = np.arange(1, g + 1, dtype=np.float64)
    for i in range(q):
        hit_pos = np.flatnonzero(rel[i])
        if hit_pos.size == 0:
            continue
        first[i] = hit_pos[0] + 1
        precisions = np.arange(1, hit_pos.size + 1, dtype=np.float64) / ranks[hit_pos]
        s = 0.0
        for p in precisions:
            s += p
        ap[i] = s / hit_pos.size
    return first, ap


def _ranked_hits_loop(relevance):
    q, g = relevance.shape
    first = np.zeros(q, dtype=np.int64)
    ap = np.zeros(q)
    for i in range(q):
        hits = 0
        s = 0.0
        for r in range(g):
            if relevance[i, r]:
                hits += 1
                if hits == 1:
                    first[i] = r + 1
                s += hits / (r + 1.0)
        if hits > 0:
            ap[i] = s / hits
    return first, ap


ranked_hits_numba = _njit(_ranked_hits_loop)


if USE_NUMBA:
    cosine_matrix = cosine_matrix_numba
    center_delta = center_delta_numba
    ranked_hits = ranked_hits_numba
else:
    cosine_matrix = cosine_matrix_numpy
    center_delta = center_delta_numpy
    ranked_hits = ranked_hits_numpy
