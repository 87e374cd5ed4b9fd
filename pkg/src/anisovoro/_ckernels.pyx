# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: nearest-site labeling and face-connected components.

The quadratic form is accumulated as ``sum_i sum_j (d_i * Q_ij) * d_j`` in
exactly the order used by ``_pykernels`` so both backends agree bitwise.
"""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange

cnp.import_array()


cdef inline double _qform(const double[:, ::1] pts, Py_ssize_t c,
                          const double[::1] site, const double[:, :, ::1] q,
                          Py_ssize_t qi, Py_ssize_t n) noexcept nogil:
    cdef double acc = 0.0
    cdef double di, dj
    cdef Py_ssize_t i, j
    for i in range(n):
        di = site[i] - pts[c, i]
        for j in range(n):
            dj = site[j] - pts[c, j]
            acc = acc + (di * q[qi, i, j]) * dj
    return acc


def update_nearest(const double[:, ::1] points, const double[:, :, ::1] qcells,
                   const double[::1] site, const double[:, :, ::1] qsite,
                   long long site_index, double[::1] best, long long[::1] labels,
                   bint ls, int threads=1):
    """Fold one new site into the running per-cell minimum (strict <)."""
    cdef Py_ssize_t ncell = points.shape[0]
    cdef Py_ssize_t n = points.shape[1]
    cdef Py_ssize_t c
    cdef double d2
    if ls:
        for c in prange(ncell, nogil=True, num_threads=threads, schedule="static"):
            d2 = _qform(points, c, site, qsite, 0, n)
            if d2 < best[c]:
                best[c] = d2
                labels[c] = site_index
    else:
        for c in prange(ncell, nogil=True, num_threads=threads, schedule="static"):
            d2 = _qform(points, c, site, qcells, c, n)
            if d2 < best[c]:
                best[c] = d2
                labels[c] = site_index


def label_sites(const double[:, ::1] points, const double[:, :, ::1] qcells,
                const double[:, ::1] sites, const double[:, :, ::1] qsites,
                bint ls, int threads=1):
    """Per-cell argmin of the squared site-first distance; ties -> lowest site."""
    cdef Py_ssize_t ncell = points.shape[0]
    cdef Py_ssize_t n = points.shape[1]
    cdef Py_ssize_t nsite = sites.shape[0]
    best_arr = np.full(ncell, np.inf)
    labels_arr = np.full(ncell, -1, dtype=np.int64)
    cdef double[::1] best = best_arr
    cdef long long[::1] labels = labels_arr
    cdef Py_ssize_t c, s, i, j
    cdef double d2, di, dj, b
    cdef long long lab
    for c in prange(ncell, nogil=True, num_threads=threads, schedule="static"):
        b = best[c]
        lab = -1
        for s in range(nsite):
            d2 = 0.0
            for i in range(n):
                di = sites[s, i] - points[c, i]
                for j in range(n):
                    dj = sites[s, j] - points[c, j]
                    if ls:
                        d2 = d2 + (di * qsites[s, i, j]) * dj
                    else:
                        d2 = d2 + (di * qcells[c, i, j]) * dj
            if d2 < b:
                b = d2
                lab = s
        best[c] = b
        labels[c] = lab
    return labels_arr, best_arr


def label_components(long long[::1] labels, shape):
    """Face-connected components of equal labels.

    Components are numbered in order of their lowest linear cell index.
    """
    cdef Py_ssize_t ndim = len(shape)
    cdef Py_ssize_t ncell = labels.shape[0]
    shape_arr = np.asarray(shape, dtype=np.int64)
    strides_arr = np.ones(ndim, dtype=np.int64)
    cdef Py_ssize_t a
    for a in range(ndim - 2, -1, -1):
        strides_arr[a] = strides_arr[a + 1] * shape_arr[a + 1]
    cdef long long[::1] shp = shape_arr
    cdef long long[::1] strd = strides_arr
    comp_arr = np.full(ncell, -1, dtype=np.int64)
    queue_arr = np.empty(ncell, dtype=np.int64)
    cdef long long[::1] comp = comp_arr
    cdef long long[::1] queue = queue_arr
    cdef long long ncomp = 0
    cdef Py_ssize_t start, head, tail, cur, nb
    cdef long long coord, lab
    with nogil:
        for start in range(ncell):
            if comp[start] >= 0:
                continue
            lab = labels[start]
            comp[start] = ncomp
            head = 0
            tail = 1
            queue[0] = start
            while head < tail:
                cur = queue[head]
                head += 1
                for a in range(ndim):
                    coord = (cur // strd[a]) % shp[a]
                    if coord > 0:
                        nb = cur - strd[a]
                        if comp[nb] < 0 and labels[nb] == lab:
                            comp[nb] = ncomp
                            queue[tail] = nb
                            tail += 1
                    if coord < shp[a] - 1:
                        nb = cur + strd[a]
                        if comp[nb] < 0 and labels[nb] == lab:
                            comp[nb] = ncomp
                            queue[tail] = nb
                            tail += 1
            ncomp += 1
    return comp_arr, int(ncomp)
