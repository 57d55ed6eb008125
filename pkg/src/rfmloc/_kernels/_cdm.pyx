# cython: language_level=3
"""Compiled batch kernel for the weighted compound dissimilarity.

Same contract as rfmloc._kernels.numpy_backend.cdm_batch: NaN marks an
absent feature on either side, `weights` is aligned to the reference
feature universe, `base` is a constant row offset.
"""

from libc.math cimport fabs, isnan, pow

import numpy as np


def cdm_batch(const double[:, ::1] ref, const double[::1] obs,
              const double[::1] weights, double alpha1, double alpha2,
              double missing_value, double p, double base):
    cdef Py_ssize_t n = ref.shape[0]
    cdef Py_ssize_t nf = ref.shape[1]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] out_view = out
    cdef Py_ssize_t j, f
    cdef double acc, r, o, diff, scale
    cdef bint square = p == 2.0
    cdef bint absolute = p == 1.0
    with nogil:
        for j in range(n):
            acc = base
            for f in range(nf):
                r = ref[j, f]
                o = obs[f]
                if isnan(o):
                    if isnan(r):
                        continue
                    diff = missing_value - r
                    scale = alpha2
                elif isnan(r):
                    diff = o - missing_value
                    scale = alpha1
                else:
                    diff = o - r
                    scale = 1.0
                if square:
                    acc += scale * weights[f] * diff * diff
                elif absolute:
                    acc += scale * weights[f] * fabs(diff)
                else:
                    acc += scale * weights[f] * pow(fabs(diff), p)
            out_view[j] = acc
    return out
