# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel implementations; semantics mirror ``pure`` exactly.

Arithmetic is kept in the same order as the pure backend so both produce
bit-identical IEEE-754 doubles (the build uses -O2, no fast-math).
"""

from array import array

from cpython cimport array as carray

BACKEND = "cython"


def iou_matrix(a, b):
    """Pairwise IoU of flat corner-form boxes; see the pure backend."""
    cdef carray.array a_arr = a if isinstance(a, array) else array("d", a)
    cdef carray.array b_arr = b if isinstance(b, array) else array("d", b)
    cdef Py_ssize_t n = len(a_arr) // 4
    cdef Py_ssize_t m = len(b_arr) // 4
    cdef carray.array out = array("d", bytes(8 * n * m))
    if n == 0 or m == 0:
        return out
    cdef double[::1] av = a_arr
    cdef double[::1] bv = b_arr
    cdef double[::1] ov = out
    cdef Py_ssize_t i, j, row
    cdef double ax0, ay0, ax1, ay1, bx0, by0, bx1, by1
    cdef double area_a, iw, ih, inter, union
    for i in range(n):
        ax0 = av[4 * i]
        ay0 = av[4 * i + 1]
        ax1 = av[4 * i + 2]
        ay1 = av[4 * i + 3]
        area_a = (ax1 - ax0) * (ay1 - ay0)
        row = i * m
        for j in range(m):
            bx0 = bv[4 * j]
            by0 = bv[4 * j + 1]
            bx1 = bv[4 * j + 2]
            by1 = bv[4 * j + 3]
            iw = min(ax1, bx1) - max(ax0, bx0)
            if iw <= 0.0:
                continue
            ih = min(ay1, by1) - max(ay0, by0)
            if ih <= 0.0:
                continue
            inter = iw * ih
            union = area_a + (bx1 - bx0) * (by1 - by0) - inter
            if union > 0.0:
                ov[row + j] = inter / union
    return out


def greedy_match(ious, Py_ssize_t n_det, Py_ssize_t n_gt, order, double tau):
    """Greedy one-to-one matching; see the pure backend for the contract."""
    matched = [-1] * n_det
    if n_det == 0 or n_gt == 0:
        return matched
    cdef carray.array iou_arr = ious if isinstance(ious, array) else array("d", ious)
    cdef carray.array ord_arr = order if isinstance(order, array) else array("q", order)
    cdef double[::1] iv = iou_arr
    cdef long long[::1] orderv = ord_arr
    cdef bytearray taken = bytearray(n_gt)
    cdef unsigned char[::1] tv = taken
    cdef Py_ssize_t k, di, gi, row, best
    cdef double best_iou, v
    for k in range(orderv.shape[0]):
        di = <Py_ssize_t> orderv[k]
        row = di * n_gt
        best = -1
        best_iou = 0.0
        for gi in range(n_gt):
            if tv[gi]:
                continue
            v = iv[row + gi]
            if v >= tau and v > best_iou:
                best = gi
                best_iou = v
        if best >= 0:
            matched[di] = best
            tv[best] = 1
    return matched
