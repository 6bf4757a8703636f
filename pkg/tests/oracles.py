"""Deliberately naive reference computations used to check the library."""

import numpy as np


def brute_ngram_overlap(cand, ref, n):
    """Multiset n-gram overlap by repeated list removal."""
    c = [tuple(cand[i:i + n]) for i in range(len(cand) - n + 1)]
    r = [tuple(ref[i:i + n]) for i in range(len(ref) - n + 1)]
    pool = list(r)
    hits = 0
    for g in c:
        if g in pool:
            pool.remove(g)
            hits += 1
    return hits, len(c), len(r)


def brute_rouge_n(cand, ref, n):
    hits, nc, nr = brute_ngram_overlap(cand, ref, n)
    if nc == 0 or nr == 0:
        return 0.0, 0.0, 0.0
    p, r = hits / nc, hits / nr
    return p, r, (0.0 if p + r == 0 else 2 * p * r / (p + r))


def textbook_lcs(a, b):
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table[len(a)][len(b)]


def brute_rouge_l(cand, ref):
    if not cand or not ref:
        return 0.0, 0.0, 0.0
    lcs = textbook_lcs(cand, ref)
    p, r = lcs / len(cand), lcs / len(ref)
    return p, r, (0.0 if p + r == 0 else 2 * p * r / (p + r))


def central_difference(f, theta, step=1e-5):
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[i] += step
        down[i] -= step
        grad[i] = (f(up) - f(down)) / (2 * step)
    return grad


def relative_error(a, b):
    a, b = np.asarray(a), np.asarray(b)
    denom = max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def count_confusion(preds, labels):
    """Confusion counts by direct enumeration of the four cells."""
    cells = {(1, 1): 0, (1, 0): 0, (0, 0): 0, (0, 1): 0}
    for p, y in zip(preds, labels):
        cells[(p, y)] += 1
    return cells[(1, 1)], cells[(1, 0)], cells[(0, 0)], cells[(0, 1)]
