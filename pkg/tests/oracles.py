"""Brute-force reference implementations used by the tests."""
import itertools

import numpy as np


def brute_canonical(n, edges, root, oriented):
    """Lexicographically smallest adjacency string over root-fixing permutations."""
    A = np.zeros((n, n), dtype=bool)
    for u, v in edges:
        A[u, v] = True
        if not oriented:
            A[v, u] = True
    others = [v for v in range(n) if v != root]
    perms = np.array([[root, *p] for p in itertools.permutations(others)])
    M = A[perms[:, :, None], perms[:, None, :]]
    if oriented:
        flat = M[:, ~np.eye(n, dtype=bool)]
    else:
        iu = np.triu_indices(n, 1)
        flat = M[:, iu[0], iu[1]]
    return min(bytes(r) for r in np.packbits(flat, axis=1))


def brute_canonical_all(n, oriented):
    """Brute canonical keys for every labelled graph on n vertices and every root.

    Returns (graphs, keys) with graphs a list of (edges, root).
    """
    if oriented:
        slots = [(i, j) for i in range(n) for j in range(i + 1, n)]
        choices = list(itertools.product(range(3), repeat=len(slots)))
    else:
        slots = [(i, j) for i in range(n) for j in range(i + 1, n)]
        choices = list(itertools.product(range(2), repeat=len(slots)))
    cm = np.array(choices, dtype=np.int8).reshape(len(choices), len(slots))
    A = np.zeros((len(choices), n, n), dtype=bool)
    for k, (i, j) in enumerate(slots):
        A[:, i, j] = cm[:, k] == 1
        A[:, j, i] = (cm[:, k] == 2) if oriented else (cm[:, k] == 1)
    graphs, keys = [], []
    mask = ~np.eye(n, dtype=bool) if oriented else None
    iu = np.triu_indices(n, 1)
    for root in range(n):
        others = [v for v in range(n) if v != root]
        perms = np.array([[root, *p] for p in itertools.permutations(others)])
        M = A[:, perms[:, :, None], perms[:, None, :]]
        flat = M[:, :, mask] if oriented else M[:, :, iu[0], iu[1]]
        packed = np.packbits(flat, axis=2)
        # lexicographic min over permutations: compare as big integers via bytes
        for g in range(len(choices)):
            keys.append(min(bytes(r) for r in packed[g]))
            ii, jj = np.nonzero(A[g])
            graphs.append((tuple(zip(ii.tolist(), jj.tolist())), root))
    return graphs, keys


def modulus_oracle(times, steps, eta, eps=1e-7):
    """Modulus by dynamic programming over every partition on a fine candidate grid.

    Boundaries of an optimal partition can be taken at a jump time, at 0, or at
    multiples of eta (plus small offsets) past those points, so the grid below
    contains an optimal partition.
    """
    tau = np.asarray(times, dtype=float)
    K = int(np.ceil(1 / eta)) + 1
    pts = {0.0, 1.0}
    for base in list(tau) + [0.0]:
        for k in range(K + 1):
            for j in range(K + 2):
                p = base + k * eta + j * eps
                if 0 < p < 1:
                    pts.add(p)
    pts = np.array(sorted(pts))
    starts = np.searchsorted(tau, pts, side="right")
    ends = np.searchsorted(tau, pts, side="left")
    best = np.full(pts.size, np.inf)
    best[0] = 0.0
    for i in range(1, pts.size):
        prev = np.flatnonzero(pts[i] - pts[:i] > eta)
        if prev.size == 0:
            continue
        b = ends[i]
        osc = np.array([np.max(steps[a:b + 1].max(0) - steps[a:b + 1].min(0)) if b >= a else 0.0
                        for a in starts[prev]])
        best[i] = np.min(np.maximum(best[prev], osc))
    return float(best[-1])
