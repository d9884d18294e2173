# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled closest-point search (Schnorr-Euchner enumeration).

Mirrors ``_sphere_py`` statement for statement; selected at import time by
``latfun.kernels`` when the extension has been built.
"""

from libc.math cimport floor, INFINITY

BACKEND = "cython"

MAXDIM = 16


def nearest_point_batch(double[:, ::1] r_mat, double[:, ::1] targets,
                        long long[:, ::1] out):
    """Fill ``out`` with integer coordinates of the closest lattice points.

    Same contract as the pure-Python kernel: ``r_mat`` is the upper-triangular
    generator factor with positive diagonal, ``targets`` holds rotated query
    points row-wise, and ties resolve to the lexicographically smallest
    integer coordinate vector.
    """
    cdef Py_ssize_t m = targets.shape[0]
    cdef Py_ssize_t n = targets.shape[1]
    cdef Py_ssize_t row
    if n > 16:
        raise ValueError("compiled kernel supports dimension <= 16")
    for row in range(m):
        _closest(r_mat, targets, out, row, n)


cdef void _closest(double[:, ::1] R, double[:, ::1] ys,
                   long long[:, ::1] outs, Py_ssize_t row, Py_ssize_t n) noexcept:
    cdef long long u[16]
    cdef long long step[16]
    cdef double b[16]
    cdef double dist[16]
    cdef long long best_u[16]

    cdef double best = INFINITY
    cdef bint have_best = 0
    cdef double ynorm = 0.0
    cdef Py_ssize_t i, j, k
    cdef double tol, e, d, acc, c
    cdef long long s
    cdef bint take

    for i in range(n):
        ynorm += ys[row, i] * ys[row, i]
    tol = 1e-12 * (1.0 if ynorm < 1.0 else ynorm)

    i = n - 1
    b[i] = ys[row, i]
    dist[i] = 0.0
    c = b[i] / R[i, i]
    u[i] = <long long>floor(c + 0.5)
    step[i] = 1 if c - u[i] >= 0 else -1

    while True:
        e = b[i] - R[i, i] * u[i]
        d = dist[i] + e * e
        if d <= best + tol:
            if i == 0:
                take = 0
                if not have_best or d < best - tol:
                    take = 1
                else:
                    for k in range(n):
                        if u[k] != best_u[k]:
                            take = u[k] < best_u[k]
                            break
                if take:
                    best = d if not have_best else (best if best < d else d)
                    for k in range(n):
                        best_u[k] = u[k]
                    have_best = 1
                u[i] += step[i]
                s = step[i]
                step[i] = -s - (1 if s > 0 else -1)
            else:
                i -= 1
                dist[i] = d
                acc = ys[row, i]
                for j in range(i + 1, n):
                    acc -= R[i, j] * u[j]
                b[i] = acc
                c = b[i] / R[i, i]
                u[i] = <long long>floor(c + 0.5)
                step[i] = 1 if c - u[i] >= 0 else -1
        else:
            i += 1
            if i == n:
                break
            u[i] += step[i]
            s = step[i]
            step[i] = -s - (1 if s > 0 else -1)

    for k in range(n):
        outs[row, k] = best_u[k]
