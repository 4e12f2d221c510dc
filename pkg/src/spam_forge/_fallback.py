"""Pure numpy versions of the compiled kernels, used when the extension is missing.

Same signatures and bit-identical results as ``spam_forge._kernels``.
"""
import math

import numpy as np
from scipy.spatial import cKDTree

from .points import marks_from_keys, younger_keys

BORDERLINE = 1e-12


def marks(seed_key, older, younger):
    return marks_from_keys(younger_keys(seed_key, younger), older)


def accept_power(mark, dist, t, z, gamma, gamma_prime, delta, kappa, d):
    """mark <= min(1, kappa ((t dist^d) / f(z))^-delta), evaluated like the C kernel.

    numpy's vectorized pow may differ from libm in the last bit, so decisions
    within a relative 1e-12 band are redone with ``math.pow``.
    """
    rd = dist.copy()
    for _ in range(1, d):
        rd = rd * dist
    fz = gamma * z.astype(np.float64) + gamma_prime
    with np.errstate(divide="ignore", over="ignore"):
        p = kappa * np.power((t * rd) / fz, -delta)
    p = np.minimum(p, 1.0)
    ok = mark <= p
    close = np.flatnonzero(np.abs(mark - p) <= BORDERLINE * p)
    for i in close:
        x = (t * float(rd[i])) / float(fz[i])
        pi = kappa * math.pow(x, -delta) if x > 0.0 else math.inf
        ok[i] = mark[i] <= min(pi, 1.0)
    return ok


def _wrapped(pts, origin, side):
    s2 = None
    for a in range(pts.shape[1]):
        dx = np.abs(pts[:, a] - origin[a])
        dx = np.where(side - dx < dx, side - dx, dx)
        s2 = dx * dx if s2 is None else s2 + dx * dx
    return np.sqrt(s2)


def build_power_affine(pos, birth, gid, side, gamma, gamma_prime, delta, kappa, cutoff,
                       seed_key, occupancy=16.0, band=1.25):
    pos = np.asarray(pos, dtype=np.float64)
    m, d = pos.shape
    gid = np.asarray(gid, dtype=np.uint64)
    keys = younger_keys(seed_key, gid)
    zdeg = np.zeros(m, dtype=np.int64)
    truncated = math.isfinite(cutoff)
    if truncated and m > 1:
        shifted = np.mod(pos + 0.5 * side, side)
        shifted[shifted >= side] = 0.0
        tree = cKDTree(shifted, boxsize=side)
        pairs = tree.query_pairs(cutoff * (1 + 1e-9) + 1e-12, output_type="ndarray")
        pairs = np.sort(pairs, axis=1)
        order = np.lexsort((pairs[:, 0], pairs[:, 1]))
        pairs = pairs[order]
        starts = np.searchsorted(pairs[:, 1], np.arange(m + 1))
    ys, xs = [], []
    scanned = passes = 0
    for j in range(1, m):
        if truncated:
            cand = pairs[starts[j]:starts[j + 1], 0]
        else:
            cand = np.arange(j)
        scanned += cand.size
        if cand.size == 0:
            continue
        dist = _wrapped(pos[cand], pos[j], side)
        keep = dist <= cutoff
        cand, dist = cand[keep], dist[keep]
        passes += cand.size
        mk = marks_from_keys(np.full(cand.size, keys[j]), gid[cand])
        ok = accept_power(mk, dist, birth[j], zdeg[cand], gamma, gamma_prime, delta, kappa, d)
        acc = cand[ok]
        if acc.size:
            zdeg[acc] += 1
            ys.append(np.full(acc.size, j, dtype=np.int64))
            xs.append(acc.astype(np.int64))
    young = np.concatenate(ys) if ys else np.zeros(0, dtype=np.int64)
    old = np.concatenate(xs) if xs else np.zeros(0, dtype=np.int64)
    return young, old, int(scanned), int(passes)


def bfs_distances(indptr, indices, source, max_depth=-1):
    n = indptr.shape[0] - 1
    dist = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return dist
    dist[source] = 0
    frontier = np.array([source], dtype=np.int64)
    depth = 0
    while frontier.size and (max_depth < 0 or depth < max_depth):
        lo, hi = indptr[frontier], indptr[frontier + 1]
        lens = hi - lo
        if lens.sum() == 0:
            break
        offs = np.repeat(lo - np.cumsum(lens) + lens, lens) + np.arange(lens.sum())
        nb = np.unique(indices[offs])
        nb = nb[dist[nb] < 0]
        depth += 1
        dist[nb] = depth
        frontier = nb
    return dist
