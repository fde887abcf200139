# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled forward-pass kernels; same contract as ``_pykernel``.

Arguments are C-contiguous int64 / float64 arrays (not checked; the
forward pass only passes arrays it allocated itself). ``scratch`` is an
int64 array covering every registered state index, filled with -1 on
entry and restored to -1 on exit.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY
from libc.stdint cimport int64_t

cnp.import_array()

NAME = "compiled"

# above this many entries the exp/log passes go through numpy's SIMD ufuncs
DEF BULK = 48


cdef inline double* _d(cnp.ndarray a):
    return <double*> cnp.PyArray_DATA(a)


cdef inline int64_t* _i(cnp.ndarray a):
    return <int64_t*> cnp.PyArray_DATA(a)


cdef inline cnp.ndarray _new_d(Py_ssize_t n):
    return cnp.PyArray_EMPTY(1, [n], cnp.NPY_FLOAT64, 0)


cdef inline cnp.ndarray _new_i(Py_ssize_t n):
    return cnp.PyArray_EMPTY(1, [n], cnp.NPY_INT64, 0)


cdef double _lse(const double* v, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    cdef double m = -INFINITY, s = 0.0
    for i in range(n):
        if v[i] > m or v[i] != v[i]:
            m = v[i]
            if m != m:
                return m
    if n == 0 or m == -INFINITY or m == INFINITY:
        return m
    for i in range(n):
        s += exp(v[i] - m)
    return m + log(s)


def logsumexp(cnp.ndarray v):
    return _lse(_d(v), v.shape[0])


def normalize(cnp.ndarray lw):
    cdef Py_ssize_t i, n = lw.shape[0]
    if n > BULK:
        return _bulk_normalize(lw)
    cdef double* a = _d(lw)
    cdef double z = _lse(a, n)
    cdef cnp.ndarray out = _new_d(n)
    cdef double* o = _d(out)
    for i in range(n):
        o[i] = a[i] - z
    return out, z


def _bulk_normalize(cnp.ndarray lw):
    m = lw.max()
    if not -INFINITY < m < INFINITY:
        with np.errstate(invalid="ignore"):
            return lw - m, float(m)
    z = m + np.log(np.exp(lw - m).sum())
    return lw - z, float(z)


def loss_update(cnp.ndarray lw, cnp.ndarray le):
    """``normalize(lw + le)`` in one pass."""
    cdef Py_ssize_t i, n = lw.shape[0]
    if n > BULK:
        return _bulk_normalize(lw + le)
    cdef double* a = _d(lw)
    cdef double* b = _d(le)
    cdef cnp.ndarray out = _new_d(n)
    cdef double* o = _d(out)
    for i in range(n):
        o[i] = a[i] + b[i]
    cdef double z = _lse(o, n)
    for i in range(n):
        o[i] -= z
    return out, z


def gather(cnp.ndarray act, cnp.ndarray start, cnp.ndarray length):
    cdef Py_ssize_t i, j, n = act.shape[0], m = 0, k = 0
    cdef int64_t* ac = _i(act)
    cdef int64_t* st = _i(start)
    cdef int64_t* ln = _i(length)
    cdef cnp.ndarray offsets = _new_i(n + 1)
    cdef int64_t* off = _i(offsets)
    off[0] = 0
    for i in range(n):
        m += ln[ac[i]]
        off[i + 1] = m
    cdef cnp.ndarray ent = _new_i(m)
    cdef int64_t* e = _i(ent)
    for i in range(n):
        for j in range(st[ac[i]], st[ac[i]] + ln[ac[i]]):
            e[k] = j
            k += 1
    return ent, offsets


def segment_lse(cnp.ndarray values, cnp.ndarray offsets):
    cdef Py_ssize_t i, n = offsets.shape[0] - 1
    cdef double* v = _d(values)
    cdef int64_t* off = _i(offsets)
    cdef cnp.ndarray out = _new_d(n)
    cdef double* o = _d(out)
    for i in range(n):
        o[i] = _lse(v + off[i], off[i + 1] - off[i])
    return out


cdef tuple _scatter(const int64_t* dst, double* v, Py_ssize_t m, int64_t* scratch,
                    cnp.ndarray v_arr):
    """Group ``v`` by ``dst`` and log-sum-exp each group. Clobbers ``v``."""
    cdef Py_ssize_t i, k = 0
    cdef int64_t d, pos
    cdef cnp.ndarray idx = _new_i(m)
    cdef cnp.ndarray mx = _new_d(m)
    cdef cnp.ndarray acc = cnp.PyArray_ZEROS(1, [m], cnp.NPY_FLOAT64, 0)
    cdef cnp.ndarray where = _new_i(m)
    cdef int64_t* ix = _i(idx)
    cdef int64_t* wh = _i(where)
    cdef double* mxv = _d(mx)
    cdef double* ac = _d(acc)
    with nogil:
        for i in range(m):
            d = dst[i]
            pos = scratch[d]
            if pos < 0:
                pos = scratch[d] = k
                ix[k] = d
                mxv[k] = v[i]
                k += 1
            elif v[i] > mxv[pos]:
                mxv[pos] = v[i]
            wh[i] = pos
        for i in range(k):
            scratch[ix[i]] = -1
        for i in range(m):
            v[i] -= mxv[wh[i]]
    if m > BULK:
        np.exp(v_arr, out=v_arr)
    else:
        for i in range(m):
            v[i] = exp(v[i])
    with nogil:
        for i in range(m):
            ac[wh[i]] += v[i]
    acc = acc[:k]
    mx = mx[:k]
    if k > BULK:
        np.log(acc, out=acc)
        np.add(mx, acc, out=mx)
    else:
        for i in range(k):
            mxv[i] += log(ac[i])
    return idx[:k], mx


def propagate(cnp.ndarray act, cnp.ndarray lw, cnp.ndarray start, cnp.ndarray length,
              cnp.ndarray col, cnp.ndarray logp, cnp.ndarray scratch):
    cdef Py_ssize_t i, j, n = act.shape[0], m = 0, k = 0
    cdef int64_t* ac = _i(act)
    cdef double* w = _d(lw)
    cdef int64_t* st = _i(start)
    cdef int64_t* ln = _i(length)
    cdef int64_t* cl = _i(col)
    cdef double* lp = _d(logp)
    for i in range(n):
        m += ln[ac[i]]
    cdef cnp.ndarray dst_arr = _new_i(m)
    cdef cnp.ndarray v_arr = _new_d(m)
    cdef int64_t* dst = _i(dst_arr)
    cdef double* v = _d(v_arr)
    with nogil:
        for i in range(n):
            for j in range(st[ac[i]], st[ac[i]] + ln[ac[i]]):
                dst[k] = cl[j]
                v[k] = w[i] + lp[j]
                k += 1
    return _scatter(dst, v, m, _i(scratch), v_arr)


def mix(cnp.ndarray act_a, cnp.ndarray lw_a, double ca,
        cnp.ndarray act_b, cnp.ndarray lw_b, double cb, cnp.ndarray scratch):
    cdef Py_ssize_t i, na = act_a.shape[0], nb = act_b.shape[0]
    cdef int64_t* ia = _i(act_a)
    cdef int64_t* ib = _i(act_b)
    cdef double* wa = _d(lw_a)
    cdef double* wb = _d(lw_b)
    cdef cnp.ndarray dst_arr = _new_i(na + nb)
    cdef cnp.ndarray v_arr = _new_d(na + nb)
    cdef int64_t* dst = _i(dst_arr)
    cdef double* v = _d(v_arr)
    for i in range(na):
        dst[i] = ia[i]
        v[i] = wa[i] + ca
    for i in range(nb):
        dst[na + i] = ib[i]
        v[na + i] = wb[i] + cb
    return _scatter(dst, v, na + nb, _i(scratch), v_arr)
