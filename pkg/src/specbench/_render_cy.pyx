# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled rendering kernel: float64 Gaussian accumulation per spectrum,
OpenMP-parallel across spectra.

Mirrors _render_numpy row for row: same accumulation order (peaks in
fingerprint order), same underflow window, same normalize-then-cast. Rows
are independent, so results do not depend on the thread count. The libm
exp may differ from numpy's vectorized exp in the last ulp, which is why
backend equality tests use a small tolerance instead of bit equality.
"""

from cython.parallel cimport prange
from libc.math cimport ceil, exp, floor, sqrt
from libc.stdlib cimport free, malloc

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND_NAME = "compiled"

cdef double UNDERFLOW_RADIUS = sqrt(2.0 * 746.0)


cdef inline int _render_one(const double* positions, const double* intensities,
                            long long first, long long last, double sigma,
                            Py_ssize_t n, bint normalize, float* out) nogil:
    cdef double* acc = <double*> malloc(n * sizeof(double))
    if acc == NULL:
        return -1
    cdef Py_ssize_t x, lo, hi
    cdef long long j
    cdef double inv = 1.0 / (2.0 * sigma * sigma)
    cdef double radius = sigma * UNDERFLOW_RADIUS
    cdef double p, inten, d, peak
    for x in range(n):
        acc[x] = 0.0
    for j in range(first, last):
        p = positions[j]
        inten = intensities[j]
        lo = <Py_ssize_t> ceil(p - radius)
        hi = <Py_ssize_t> floor(p + radius)
        if lo < 0:
            lo = 0
        if hi > n - 1:
            hi = n - 1
        for x in range(lo, hi + 1):
            d = (<double> x) - p
            acc[x] = acc[x] + inten * exp(-(d * d) * inv)
    peak = 0.0
    for x in range(n):
        if acc[x] > peak:
            peak = acc[x]
    if normalize and peak > 0.0:
        for x in range(n):
            out[x] = <float> (acc[x] / peak)
    else:
        for x in range(n):
            out[x] = <float> acc[x]
    free(acc)
    return 0


def render_batch(const double[::1] positions, const double[::1] intensities,
                 const long long[::1] offsets, const double[::1] widths,
                 int n_datapoints, bint normalize, int threads,
                 float[:, ::1] out):
    """Render one float32 row per (offsets[i], offsets[i+1]) peak slice."""
    cdef Py_ssize_t n_spectra = widths.shape[0]
    cdef Py_ssize_t i
    cdef int status = 0
    cdef const double* pos0 = NULL
    cdef const double* int0 = NULL
    if threads < 1:
        threads = 1
    if n_spectra == 0:
        return
    if positions.shape[0] > 0:
        pos0 = &positions[0]
        int0 = &intensities[0]
    with nogil:
        for i in prange(n_spectra, num_threads=threads, schedule='static'):
            status |= _render_one(pos0, int0, offsets[i], offsets[i + 1],
                                  widths[i], n_datapoints, normalize, &out[i, 0])
    if status != 0:
        raise MemoryError("render scratch allocation failed")
