# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: the cell-list S-PAM builder and breadth-first search.

Both functions mirror ``spam_forge._fallback`` exactly; the builder returns
bit-identical edge lists.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, pow, floor, ceil, isinf, INFINITY
from libc.stdint cimport uint8_t, uint32_t, uint64_t, int32_t, int64_t
from libc.stdlib cimport malloc, realloc, free, qsort
from libc.string cimport memset

cnp.import_array()

cdef extern from *:
    """
    static int cmp_int64(const void *a, const void *b) {
        long long x = *(const long long *)a, y = *(const long long *)b;
        return (x > y) - (x < y);
    }
    """
    int cmp_int64(const void *a, const void *b) nogil

cdef extern from *:
    """
    #include <stdint.h>
    #include <string.h>
    /* fl[s] = 0 guarantees mark > probability for candidate s */
    __attribute__((noinline)) static void envelope_pass(
            const uint32_t *restrict gm, const float *restrict w, uint8_t *restrict fl,
            Py_ssize_t cnt, uint32_t kb1, float thr) {
        for (Py_ssize_t s = 0; s < cnt; s++) {
            uint32_t h = gm[s] ^ kb1;
            h ^= h >> 16; h *= 0x85EBCA6BU; h ^= h >> 13; h *= 0xC2B2AE35U; h ^= h >> 16;
            fl[s] = (float)(int32_t)(h >> 8) <= w[s] * thr;
        }
    }
    /* indices of candidates surviving the envelope test, written to out */
    static Py_ssize_t envelope_survivors(
            const uint32_t *gm, const float *w, uint8_t *fl, Py_ssize_t *out,
            Py_ssize_t cnt, uint32_t kb1, float thr) {
        Py_ssize_t s = 0, k = 0;
        envelope_pass(gm, w, fl, cnt, kb1, thr);
        for (; s + 8 <= cnt; s += 8) {
            uint64_t word;
            memcpy(&word, fl + s, 8);
            if (!word) continue;
            for (int j = 0; j < 8; j++) if (fl[s + j]) out[k++] = s + j;
        }
        for (; s < cnt; s++) if (fl[s]) out[k++] = s;
        return k;
    }
    """
    Py_ssize_t envelope_survivors(const uint32_t *gm, const float *w, uint8_t *fl,
                                  Py_ssize_t *out, Py_ssize_t cnt, uint32_t kb1, float thr) nogil

DEF ENVELOPE_SLACK = 1.00001
DEF TWO24 = 16777216.0
DEF CHUNK = 4096
DEF EPOCH_GROWTH = 1.125
DEF TWO_M53 = 1.1102230246251565e-16


cdef inline uint64_t splitmix64(uint64_t z) noexcept nogil:
    z += <uint64_t>0x9E3779B97F4A7C15ULL
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint32_t fmix32(uint32_t h) noexcept nogil:
    h ^= h >> 16
    h *= <uint32_t>0x85EBCA6BU
    h ^= h >> 13
    h *= <uint32_t>0xC2B2AE35U
    h ^= h >> 16
    return h


cpdef uint64_t younger_key(uint64_t seed_key, uint64_t younger) noexcept nogil:
    return splitmix64(seed_key ^ (younger * <uint64_t>0xD1B54A32D192ED03ULL))


cdef inline double mark_value(uint64_t key_b, uint32_t older) noexcept nogil:
    cdef uint32_t h1 = fmix32((older * <uint32_t>0x9E3779B1U) ^ <uint32_t>(key_b & 0xFFFFFFFFU))
    cdef uint32_t h2 = fmix32((older * <uint32_t>0x7FEB352DU) ^ <uint32_t>(key_b >> 32))
    return <double>((<uint64_t>h1 << 21) | (h2 >> 11)) * TWO_M53


def marks(uint64_t seed_key, cnp.uint64_t[::1] older, cnp.uint64_t[::1] younger):
    cdef Py_ssize_t i, n = older.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = mark_value(younger_key(seed_key, younger[i]), <uint32_t>older[i])
    return out


cdef struct Grid:
    int d
    int ncell
    int kmax
    double cs
    double side


cdef inline int axis_cell(double x, Grid *g) noexcept nogil:
    cdef int c = <int>floor((x + 0.5 * g.side) / g.cs)
    if c < 0:
        c = 0
    elif c >= g.ncell:
        c = g.ncell - 1
    return c


cdef inline double wrapped_distance(const double *a, const double *b, int d, double side) noexcept nogil:
    cdef double s2 = 0.0, dx
    cdef int k
    for k in range(d):
        dx = a[k] - b[k]
        if dx < 0:
            dx = -dx
        if side - dx < dx:
            dx = side - dx
        s2 = s2 + dx * dx
    return sqrt(s2)


cdef inline double dpow(double r, int d) noexcept nogil:
    cdef double rd = r
    cdef int k
    for k in range(1, d):
        rd = rd * r
    return rd


def _cell_runs(int d, int ncell, double cs, double kappa, double delta, double cutoff,
               double band):
    """Scan plan: runs of consecutive axis-0 cells sharing one envelope bound.

    Row ``r`` of the first array holds the axis-0 start offset, the run
    length and the offsets of the remaining axes.  The second array holds
    ``kappa * (rho^d)^-delta`` for the smallest distance ``rho`` any point of
    the run can have from the arriving cell (``inf`` when ``rho`` is 0).
    """
    lo, hi = -((ncell - 1) // 2), ncell // 2
    ring = np.arange(lo, hi + 1)
    gap = np.maximum(np.abs(ring) - 1, 0) * cs
    segs = [(max(lo, -1), min(hi, 1))]
    for sign in (1, -1):
        k = 2
        lim = hi if sign > 0 else -lo
        while k <= lim:
            e = min(lim, max(k, int(k * band)))
            segs.append((k, e) if sign > 0 else (-e, -k))
            k = e + 1
    perp = [np.zeros((1, 0), dtype=np.int64)]
    for _ in range(d - 1):
        perp = [np.array([list(p) + [k] for p in perp[0] for k in ring], dtype=np.int64)]
    perp = perp[0] if d > 1 else np.zeros((1, 0), dtype=np.int64)
    rows, env = [], []
    for p in perp:
        r2 = float(np.sum((np.maximum(np.abs(p) - 1, 0) * cs) ** 2))
        for s0, s1 in segs:
            k0 = min(abs(s0), abs(s1)) if s0 * s1 > 0 else 0
            rho = np.sqrt(r2 + (max(k0 - 1, 0) * cs) ** 2)
            if rho > cutoff:
                continue
            rows.append([s0, s1 - s0 + 1] + list(p))
            env.append(np.inf if rho <= 0 else kappa * rho ** (-d * delta))
    return (np.ascontiguousarray(np.array(rows, dtype=np.int32).reshape(-1, d + 1)),
            np.array(env, dtype=np.float64))


def build_power_affine(double[:, ::1] pos, double[::1] birth, cnp.uint64_t[::1] gid,
                       double side, double gamma, double gamma_prime, double delta,
                       double kappa, double cutoff, uint64_t seed_key,
                       double occupancy=16.0, double band=1.25):
    """Sequential S-PAM construction for the power profile and affine attachment.

    Returns ``(younger, older, scanned, envelope_passes)`` with edges in
    local (row) indices, younger ascending and older ascending within a
    younger vertex.
    """
    cdef Py_ssize_t m = pos.shape[0]
    cdef int d = pos.shape[1]
    cdef bint truncated = not isinf(cutoff)
    cdef Grid g
    g.d = d
    g.side = side
    cdef double vol_per_point = (pow(side, d) / m) if m > 0 else 1.0
    cdef double cs_target
    if truncated:
        cs_target = max(cutoff, pow(0.25 * vol_per_point, 1.0 / d))
    else:
        cs_target = pow(occupancy * vol_per_point, 1.0 / d)
    cdef double ncell_f = floor(side / cs_target) if cs_target > 0 else 1.0
    cdef double cap_axis = floor(pow(4.0 * m + 1.0, 1.0 / d))
    if ncell_f > cap_axis:
        ncell_f = cap_axis
    if ncell_f < 1:
        ncell_f = 1
    g.ncell = <int>ncell_f
    g.cs = side / g.ncell
    g.kmax = g.ncell // 2

    cdef Py_ssize_t ncells = 1
    cdef int a
    for a in range(d):
        ncells *= g.ncell
    runs_np, run_env_np = _cell_runs(d, g.ncell, g.cs, kappa, delta, cutoff, band)
    cdef int[:, ::1] runs = runs_np
    cdef double[::1] run_env = run_env_np
    cdef Py_ssize_t nrun = runs_np.shape[0]

    # Cell assignment and slot layout (cells hold contiguous birth-ordered slots).
    cell_of_np = np.zeros(m, dtype=np.int64)
    cellc_np = np.zeros((m, d), dtype=np.int32)
    cdef cnp.int64_t[::1] cell_of = cell_of_np
    cdef int[:, ::1] cellc = cellc_np
    cdef Py_ssize_t i, j, flat, mlt
    cdef int c
    for i in range(m):
        flat = 0
        mlt = 1
        for a in range(d):
            c = axis_cell(pos[i, a], &g)
            cellc[i, a] = c
            flat += c * mlt
            mlt *= g.ncell
        cell_of[i] = flat
    start_np = np.zeros(ncells + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] cstart = start_np
    fill_np = np.zeros(ncells, dtype=np.int64)
    cdef cnp.int64_t[::1] fill = fill_np

    slot_local_np = np.zeros(m, dtype=np.int64)
    slot_gm_np = np.zeros(m, dtype=np.uint32)
    slot_w_np = np.zeros(m, dtype=np.float32)
    slot_of_np = np.zeros(m, dtype=np.int64)
    zdeg_np = np.zeros(m, dtype=np.int64)
    cdef cnp.int64_t[::1] slot_local = slot_local_np
    cdef cnp.uint32_t[::1] slot_gm = slot_gm_np
    cdef float[::1] slot_w = slot_w_np
    cdef cnp.int64_t[::1] slot_of = slot_of_np
    cdef cnp.int64_t[::1] zdeg = zdeg_np
    slot_w_np[:] = -1.0
    flags_np = np.zeros(CHUNK, dtype=np.uint8)
    cdef uint8_t[::1] flags = flags_np
    surv_np = np.zeros(CHUNK, dtype=np.intp)
    cdef Py_ssize_t[::1] surv = surv_np

    cdef Py_ssize_t cap = 1024, nedge = 0, acc, acc_cap = 256
    cdef int64_t *ey = <int64_t *>malloc(cap * sizeof(int64_t))
    cdef int64_t *ex = <int64_t *>malloc(cap * sizeof(int64_t))
    cdef int64_t *accbuf = <int64_t *>malloc(acc_cap * sizeof(int64_t))
    if ey == NULL or ex == NULL or accbuf == NULL:
        raise MemoryError()

    cdef long long scanned = 0, passes = 0
    cdef double t, tpow, env, dist, rd, fz, p, mark
    cdef float thr
    cdef uint64_t key_b
    cdef uint32_t kb1
    cdef Py_ssize_t epoch_end = 0
    cdef Py_ssize_t o, s, s0, s1, cnt, x, k, nsurv, seg, seg_end
    cdef int cn
    cdef double w0 = pow(gamma_prime, delta)
    cdef const double *py

    with nogil:
        for j in range(m):
            if j == epoch_end:
                # Re-layout slots for the next block of arrivals so scans skip
                # few reserved-but-empty slots.
                epoch_end = <Py_ssize_t>ceil(epoch_end * EPOCH_GROWTH)
                if epoch_end < j + 1024:
                    epoch_end = j + 1024
                if epoch_end > m:
                    epoch_end = m
                memset(&fill[0], 0, ncells * sizeof(cnp.int64_t))
                for i in range(epoch_end):
                    fill[cell_of[i]] += 1
                cstart[0] = 0
                for i in range(ncells):
                    cstart[i + 1] = cstart[i] + fill[i]
                    fill[i] = 0
                for i in range(epoch_end):
                    slot_w[i] = -1.0
                for i in range(j):
                    flat = cell_of[i]
                    s = cstart[flat] + fill[flat]
                    fill[flat] += 1
                    slot_local[s] = i
                    slot_gm[s] = <uint32_t>gid[i] * <uint32_t>0x9E3779B1U
                    slot_w[s] = <float>pow(gamma * <double>zdeg[i] + gamma_prime, delta)
                    slot_of[i] = s
            t = birth[j]
            tpow = pow(t, -delta)
            key_b = younger_key(seed_key, gid[j])
            kb1 = <uint32_t>(key_b & 0xFFFFFFFFU)
            py = &pos[j, 0]
            acc = 0
            for o in range(nrun):
                flat = 0
                mlt = g.ncell
                for a in range(1, d):
                    cn = (cellc[j, a] + runs[o, a + 1]) % g.ncell
                    if cn < 0:
                        cn += g.ncell
                    flat += cn * mlt
                    mlt *= g.ncell
                cn = (cellc[j, 0] + runs[o, 0]) % g.ncell
                if cn < 0:
                    cn += g.ncell
                env = tpow * run_env[o]
                if env * TWO24 < 3.0e38:
                    thr = <float>(env * TWO24 * ENVELOPE_SLACK)
                else:
                    thr = INFINITY
                seg_end = cn + runs[o, 1]
                for seg in range(2):
                    if seg == 0:
                        s0 = cstart[flat + cn]
                        s1 = cstart[flat + (seg_end if seg_end < g.ncell else g.ncell)]
                    else:
                        if seg_end <= g.ncell:
                            break
                        s0 = cstart[flat]
                        s1 = cstart[flat + seg_end - g.ncell]
                    while s0 < s1:
                        cnt = s1 - s0
                        if cnt > CHUNK:
                            cnt = CHUNK
                        nsurv = envelope_survivors(&slot_gm[s0], &slot_w[s0], &flags[0],
                                                   &surv[0], cnt, kb1, thr)
                        scanned += cnt
                        passes += nsurv
                        for k in range(nsurv):
                            x = slot_local[s0 + surv[k]]
                            dist = wrapped_distance(&pos[x, 0], py, d, side)
                            if dist > cutoff:
                                continue
                            rd = dpow(dist, d)
                            fz = gamma * <double>zdeg[x] + gamma_prime
                            p = kappa * pow((t * rd) / fz, -delta)
                            if p > 1.0:
                                p = 1.0
                            mark = mark_value(key_b, <uint32_t>gid[x])
                            if mark <= p:
                                if acc == acc_cap:
                                    acc_cap *= 2
                                    accbuf = <int64_t *>realloc(accbuf, acc_cap * sizeof(int64_t))
                                accbuf[acc] = x
                                acc += 1
                        s0 += cnt
            if acc > 1:
                qsort(accbuf, acc, sizeof(int64_t), cmp_int64)
            for i in range(acc):
                x = accbuf[i]
                if nedge == cap:
                    cap *= 2
                    ey = <int64_t *>realloc(ey, cap * sizeof(int64_t))
                    ex = <int64_t *>realloc(ex, cap * sizeof(int64_t))
                ey[nedge] = j
                ex[nedge] = x
                nedge += 1
                zdeg[x] += 1
                slot_w[slot_of[x]] = <float>pow(gamma * <double>zdeg[x] + gamma_prime, delta)
            flat = cell_of[j]
            s = cstart[flat] + fill[flat]
            fill[flat] += 1
            slot_local[s] = j
            slot_gm[s] = <uint32_t>gid[j] * <uint32_t>0x9E3779B1U
            slot_w[s] = <float>w0
            slot_of[j] = s

    younger = np.empty(nedge, dtype=np.int64)
    older = np.empty(nedge, dtype=np.int64)
    cdef cnp.int64_t[::1] yv = younger
    cdef cnp.int64_t[::1] xv = older
    for i in range(nedge):
        yv[i] = ey[i]
        xv[i] = ex[i]
    free(ey)
    free(ex)
    free(accbuf)
    return younger, older, int(scanned), int(passes)


def bfs_distances(cnp.int64_t[::1] indptr, cnp.int64_t[::1] indices, Py_ssize_t source,
                  Py_ssize_t max_depth=-1):
    """Hop distances from ``source`` on a CSR graph; -1 marks unreached vertices."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    dist_np = np.full(n, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] dist = dist_np
    queue_np = np.empty(max(n, 1), dtype=np.int64)
    cdef cnp.int64_t[::1] queue = queue_np
    cdef Py_ssize_t head = 0, tail = 0, v, w, k, dv
    if n == 0:
        return dist_np
    dist[source] = 0
    queue[tail] = source
    tail += 1
    with nogil:
        while head < tail:
            v = queue[head]
            head += 1
            dv = dist[v]
            if max_depth >= 0 and dv >= max_depth:
                continue
            for k in range(indptr[v], indptr[v + 1]):
                w = indices[k]
                if dist[w] < 0:
                    dist[w] = dv + 1
                    queue[tail] = w
                    tail += 1
    return dist_np
