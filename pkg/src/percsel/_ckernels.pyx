# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_pykernels.py``.

Same signatures, same semantics; see that module for the argument layout.
The exhaustive search here walks the sequence tree depth first, carrying
``psi @ v`` for the current prefix so each node costs O(p * pH).
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, INFINITY
from scipy.linalg.cython_blas cimport dsymv

cnp.import_array()


def sequence_value(const double[:, ::1] psi, const double[:, :, ::1] vecs, const double[:, ::1] lin,
                   double alpha, seq):
    cdef Py_ssize_t H = vecs.shape[0], p = vecs.shape[2], n = H * p
    cdef long[::1] s = np.ascontiguousarray(seq, dtype=np.int64)
    cdef double[::1] v = np.empty(n)
    cdef Py_ssize_t t, r, i, j
    cdef double quad = 0.0, acc, lsum = 0.0
    for t in range(H):
        lsum += lin[t, s[t]]
        for r in range(p):
            v[t * p + r] = vecs[t, s[t], r]
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += psi[i, j] * v[j]
        quad += v[i] * acc
    return alpha * quad + lsum


cdef double _walk(const double[:, ::1] psi, const double[:, :, ::1] vecs, const double[:, ::1] lin,
                  double alpha, double threshold, bint find_first, long[::1] out):
    """Depth-first enumeration in lexicographic order.

    With ``find_first`` false, returns the minimum value.  Otherwise stops at
    the first leaf with value <= threshold, writes it to ``out`` and returns
    its value (INFINITY when none exists).
    """
    cdef Py_ssize_t H = vecs.shape[0], W = vecs.shape[1], p = vecs.shape[2]
    cdef Py_ssize_t n = H * p
    cdef double[:, ::1] g = np.zeros((H + 1, n))
    cdef double[::1] q = np.zeros(H + 1)
    cdef double[::1] ls = np.zeros(H + 1)
    cdef long[::1] choice = np.full(H, -1, dtype=np.int64)
    cdef double[:, ::1] selfterm = np.empty((H, W))
    cdef Py_ssize_t t, w, r, r2, i, lo
    cdef double acc, cross, val, best = INFINITY
    for t in range(H):
        for w in range(W):
            acc = 0.0
            for r in range(p):
                for r2 in range(p):
                    acc += vecs[t, w, r] * psi[t * p + r, t * p + r2] * vecs[t, w, r2]
            selfterm[t, w] = acc
    t = 0
    while t >= 0:
        choice[t] += 1
        if choice[t] >= W:
            choice[t] = -1
            t -= 1
            continue
        w = choice[t]
        cross = 0.0
        for r in range(p):
            cross += vecs[t, w, r] * g[t, t * p + r]
        q[t + 1] = q[t] + 2.0 * cross + selfterm[t, w]
        ls[t + 1] = ls[t] + lin[t, w]
        if t + 1 == H:
            val = alpha * q[H] + ls[H]
            if find_first:
                if val <= threshold:
                    for i in range(H):
                        out[i] = choice[i]
                    return val
            elif val < best:
                best = val
            continue
        lo = (t + 1) * p
        for i in range(lo, n):
            acc = g[t, i]
            for r in range(p):
                acc += psi[i, t * p + r] * vecs[t, w, r]
            g[t + 1, i] = acc
        t += 1
    return best


def exhaustive_min(const double[:, ::1] psi, const double[:, :, ::1] vecs, const double[:, ::1] lin, double alpha):
    cdef long[::1] out = np.zeros(vecs.shape[0], dtype=np.int64)
    return _walk(psi, vecs, lin, alpha, 0.0, False, out)


def exhaustive_first_below(const double[:, ::1] psi, const double[:, :, ::1] vecs, const double[:, ::1] lin,
                           double alpha, double threshold):
    out = np.zeros(vecs.shape[0], dtype=np.int64)
    cdef long[::1] o = out
    cdef double val = _walk(psi, vecs, lin, alpha, threshold, True, o)
    if val == INFINITY:
        return None
    return out


cdef void _project_row(double* y, double* x, Py_ssize_t W, double* work) nogil:
    cdef Py_ssize_t i, j
    cdef double key, css, theta, tmp
    for i in range(W):
        work[i] = y[i]
    # insertion sort, descending
    for i in range(1, W):
        key = work[i]
        j = i - 1
        while j >= 0 and work[j] < key:
            work[j + 1] = work[j]
            j -= 1
        work[j + 1] = key
    css = 0.0
    theta = 0.0
    for i in range(W):
        css += work[i]
        tmp = (css - 1.0) / (i + 1)
        if work[i] - tmp > 0:
            theta = tmp
    for i in range(W):
        tmp = y[i] - theta
        x[i] = tmp if tmp > 0 else 0.0


cdef void _stack(double[:, ::1] b, const double[:, :, ::1] vecs, double[::1] v) nogil:
    cdef Py_ssize_t H = vecs.shape[0], W = vecs.shape[1], p = vecs.shape[2]
    cdef Py_ssize_t t, w, r
    cdef double acc
    for t in range(H):
        for r in range(p):
            acc = 0.0
            for w in range(W):
                acc += b[t, w] * vecs[t, w, r]
            v[t * p + r] = acc


cdef void _matvec(const double[:, ::1] psi, double[::1] v, double[::1] g) nogil:
    # psi is symmetric, so its row-major buffer is also a valid column-major one
    cdef int n = <int>v.shape[0], one = 1
    cdef double a = 1.0, zero = 0.0
    if n == 0:
        return
    dsymv(b"U", &n, &a, <double*>&psi[0, 0], &n, &v[0], &one, &zero, &g[0], &one)


cdef double _fgrad(double[:, ::1] b, double[::1] v, double[::1] g, const double[:, :, ::1] vecs,
                   const double[:, ::1] lin, double alpha, const long[::1] fixed, double[:, ::1] grad,
                   double* gap) nogil:
    """Objective at b (given v, g = psi v), fills grad and the Frank-Wolfe gap
    over the free rows."""
    cdef Py_ssize_t H = vecs.shape[0], W = vecs.shape[1], p = vecs.shape[2]
    cdef Py_ssize_t t, w, r, n = H * p, i
    cdef double f = 0.0, acc, mn, dot = 0.0, mins = 0.0
    for i in range(n):
        f += v[i] * g[i]
    f *= alpha
    for t in range(H):
        mn = INFINITY
        for w in range(W):
            acc = 0.0
            for r in range(p):
                acc += vecs[t, w, r] * g[t * p + r]
            acc = 2.0 * alpha * acc + lin[t, w]
            grad[t, w] = acc
            f += lin[t, w] * b[t, w]
            if fixed[t] < 0:
                dot += acc * b[t, w]
                if acc < mn:
                    mn = acc
        if fixed[t] < 0:
            mins += mn
    gap[0] = dot - mins
    return f


def relax(const double[:, ::1] psi, const double[:, :, ::1] vecs, const double[:, ::1] lin, double alpha,
          fixed, b0, double lip, double tol, long max_iter, double cutoff=INFINITY):
    cdef Py_ssize_t H = vecs.shape[0], W = vecs.shape[1], p = vecs.shape[2], n = H * p
    cdef const long[::1] fx_ = np.ascontiguousarray(fixed, dtype=np.int64)
    x_arr = np.array(b0, dtype=float, order="C")
    cdef double[:, ::1] x = x_arr
    cdef double[:, ::1] y = np.empty((H, W))
    cdef double[:, ::1] xn = np.empty((H, W))
    cdef double[:, ::1] grad = np.empty((H, W))
    cdef double[::1] gx = np.empty(n), gy = np.empty(n), gn = np.empty(n), vn = np.empty(n)
    cdef double[::1] work = np.empty(W), row = np.empty(W)
    cdef double step = 1.0 / lip, fx, fn, gap = INFINITY, bound = -INFINITY
    cdef double t_k = 1.0, t_next, mom
    cdef Py_ssize_t t, w, i
    cdef long it = 0
    with nogil:
        for t in range(H):
            if fx_[t] >= 0:
                for w in range(W):
                    x[t, w] = 1.0 if w == fx_[t] else 0.0
            else:
                for w in range(W):
                    row[w] = x[t, w]
                _project_row(&row[0], &x[t, 0], W, &work[0])
        _stack(x, vecs, vn)
        _matvec(psi, vn, gx)
        fx = _fgrad(x, vn, gx, vecs, lin, alpha, fx_, grad, &gap)
        for t in range(H):
            for w in range(W):
                y[t, w] = x[t, w]
        for i in range(n):
            gy[i] = gx[i]
        it = 0
        while it < max_iter:
            it += 1
            # gradient at y from gy
            for t in range(H):
                if fx_[t] >= 0:
                    for w in range(W):
                        xn[t, w] = x[t, w]
                    continue
                for w in range(W):
                    mom = 0.0
                    for i in range(p):
                        mom += vecs[t, w, i] * gy[t * p + i]
                    row[w] = y[t, w] - step * (2.0 * alpha * mom + lin[t, w])
                _project_row(&row[0], &xn[t, 0], W, &work[0])
            _stack(xn, vecs, vn)
            _matvec(psi, vn, gn)
            fn = _fgrad(xn, vn, gn, vecs, lin, alpha, fx_, grad, &gap)
            if fn - gap > bound:
                bound = fn - gap
            if fn > fx:
                t_k = 1.0
                for t in range(H):
                    for w in range(W):
                        y[t, w] = xn[t, w]
                for i in range(n):
                    gy[i] = gn[i]
            else:
                t_next = 0.5 * (1.0 + sqrt(1.0 + 4.0 * t_k * t_k))
                mom = (t_k - 1.0) / t_next
                for t in range(H):
                    for w in range(W):
                        y[t, w] = xn[t, w] + mom * (xn[t, w] - x[t, w])
                for i in range(n):
                    gy[i] = gn[i] + mom * (gn[i] - gx[i])
                t_k = t_next
            for t in range(H):
                for w in range(W):
                    x[t, w] = xn[t, w]
            for i in range(n):
                gx[i] = gn[i]
            fx = fn
            if gap <= tol * (fabs(fx) if fabs(fx) > 1.0 else 1.0) or bound >= cutoff:
                break
    return x_arr, fx, gap, bound, it


def local_search(const double[:, ::1] psi, const double[:, :, ::1] vecs, const double[:, ::1] lin,
                 double alpha, seq):
    cdef Py_ssize_t H = vecs.shape[0], W = vecs.shape[1], p = vecs.shape[2], n = H * p
    out = np.array(seq, dtype=np.int64)
    cdef long[::1] s = out
    cdef double[::1] v = np.empty(n), g = np.empty(n), d = np.empty(p), dbest = np.empty(p)
    cdef Py_ssize_t t, w, r, r2, i, cur, wbest
    cdef double val, delta, best, cross, selfv, lsum = 0.0
    cdef int passes
    cdef bint improved
    for t in range(H):
        lsum += lin[t, s[t]]
        for r in range(p):
            v[t * p + r] = vecs[t, s[t], r]
    _matvec(psi, v, g)
    val = lsum
    for i in range(n):
        val += alpha * v[i] * g[i]
    for passes in range(1000):
        improved = False
        for t in range(H):
            cur = s[t]
            best = 0.0
            wbest = -1
            for w in range(W):
                if w == cur:
                    continue
                cross = 0.0
                selfv = 0.0
                for r in range(p):
                    d[r] = vecs[t, w, r] - vecs[t, cur, r]
                    cross += d[r] * g[t * p + r]
                for r in range(p):
                    for r2 in range(p):
                        selfv += d[r] * psi[t * p + r, t * p + r2] * d[r2]
                delta = alpha * (2.0 * cross + selfv) + lin[t, w] - lin[t, cur]
                if delta < best:
                    best = delta
                    wbest = w
            if wbest >= 0 and best < -1e-14 * (1.0 + fabs(val)):
                for r in range(p):
                    dbest[r] = vecs[t, wbest, r] - vecs[t, cur, r]
                for i in range(n):
                    for r in range(p):
                        g[i] += psi[i, t * p + r] * dbest[r]
                val += best
                s[t] = wbest
                improved = True
        if not improved:
            break
    return out, val
