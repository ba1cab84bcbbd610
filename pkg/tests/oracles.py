"""Exact lattice oracles for configuration search.

Points sit at cell centres (c + 1/2)/N and y is stored in units of 1/N, so every
comparison is integer arithmetic.
"""

import math

import numpy as np

from configcount.configsearch import PointSet


def lattice(cells, N, n):
    pts = (np.array(cells, dtype=float).reshape(-1, n) + 0.5) / N
    return PointSet.from_points(pts, tol=0.25 / N, N=N)


def hit_keys(hits, N):
    return {(tuple(np.rint(h.x * N - 0.5).astype(int)), tuple(np.rint(h.y * N).astype(int))) for h in hits}


def on_grid(s, N, Y):
    step = N // Y
    return s % step == 0 and abs(s) <= N


def oracle_pairs(cells, N, Y, third):
    """x, x + y, x + R y with R an integer matrix: solve y from the first two points."""
    cells = [tuple(c) for c in cells]
    pool = set(cells)
    out = set()
    for p in cells:
        for q in cells:
            y = tuple(b - a for a, b in zip(p, q))
            if not all(on_grid(s, N, Y) for s in y):
                continue
            if math.hypot(*y) <= N / Y * (1 + 1e-9):
                continue
            r = tuple(a + b for a, b in zip(p, third(y)))
            if r in pool:
                out.add((p, y))
    return out


def oracle_parallelogram(cells, N, Y, n):
    """Quadruple x, x + y', x + y'', x + y' + y'': y solved from every triple of points."""
    C = np.asarray(cells, dtype=np.int64).reshape(-1, n)
    occ = np.zeros((N,) * n, dtype=bool)
    occ[tuple(C.T)] = True
    P = C.shape[0]
    p = np.broadcast_to(C[:, None, None, :], (P, P, P, n)).reshape(-1, n)
    y1 = (C[None, :, None, :] - C[:, None, None, :]) + np.zeros((1, 1, P, 1), dtype=np.int64)
    y2 = (C[None, None, :, :] - C[:, None, None, :]) + np.zeros((1, P, 1, 1), dtype=np.int64)
    y1, y2 = y1.reshape(-1, n), y2.reshape(-1, n)
    step = N // Y
    ok = np.all((y1 % step == 0) & (y2 % step == 0), axis=1)
    s4 = p + y1 + y2
    inside = np.all((s4 >= 0) & (s4 < N), axis=1)
    ok &= inside
    ok[ok] = occ[tuple(s4[ok].T)]
    norm = lambda v: np.sqrt(np.sum(v.astype(float) ** 2, axis=1))
    margins = np.stack([norm(np.hstack([y1, y2])), norm(y1), norm(y2),
                        norm(y1 + y2) / math.sqrt(2), norm(y1 - y2) / math.sqrt(2)], axis=1)
    ok &= np.all(margins > step * (1 + 1e-9), axis=1)
    return {(tuple(int(t) for t in a), tuple(int(t) for t in np.concatenate([b, c])))
            for a, b, c in zip(p[ok], y1[ok], y2[ok])}


def random_cells(rng, N, n, count):
    flat = rng.choice(N ** n, size=count, replace=False)
    return np.array(np.unravel_index(flat, (N,) * n)).T
