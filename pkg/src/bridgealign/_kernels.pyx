# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled linear assignment kernels. Same algorithm as ``_assign_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def solve_potentials(double[:, ::1] cost):
    cdef Py_ssize_t n = cost.shape[0]
    cdef double[::1] u = np.zeros(n + 1)
    cdef double[::1] v = np.zeros(n + 1)
    cdef double[::1] minv = np.empty(n + 1)
    cdef Py_ssize_t[::1] p = np.zeros(n + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] way = np.zeros(n + 1, dtype=np.intp)
    cdef unsigned char[::1] used = np.zeros(n + 1, dtype=np.uint8)
    cdef Py_ssize_t i, j, j0, j1, i0
    cdef double delta, cur, ui0
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        for j in range(n + 1):
            minv[j] = INFINITY
            used[j] = 0
        while True:
            used[j0] = 1
            i0 = p[j0]
            ui0 = u[i0]
            delta = INFINITY
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    row_to_col = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] rc = row_to_col
    for j in range(1, n + 1):
        rc[p[j] - 1] = j - 1
    return row_to_col, np.asarray(u[1:]).copy(), np.asarray(v[1:]).copy()


cdef bint _augment(Py_ssize_t start_row, Py_ssize_t target_col,
                   Py_ssize_t[::1] indptr, Py_ssize_t[::1] indices,
                   Py_ssize_t[::1] row_to_col, Py_ssize_t[::1] col_to_row,
                   unsigned char[::1] fixed_row, unsigned char[::1] fixed_col,
                   unsigned char[::1] seen, Py_ssize_t[::1] parent,
                   Py_ssize_t[::1] stack_row, Py_ssize_t[::1] stack_pos) noexcept:
    # iterative DFS over tight edges; on success rewrites the matching in place
    cdef Py_ssize_t top = 0, r, k, c, nr, pr, prev_col
    stack_row[0] = start_row
    stack_pos[0] = indptr[start_row]
    parent[start_row] = -1
    while top >= 0:
        r = stack_row[top]
        k = stack_pos[top]
        while k < indptr[r + 1]:
            c = indices[k]
            k += 1
            if fixed_col[c] or seen[c]:
                continue
            if c == target_col:
                # shift columns back along the path
                while r != -1:
                    prev_col = row_to_col[r]
                    row_to_col[r] = c
                    col_to_row[c] = r
                    c = prev_col
                    r = parent[r]
                return True
            nr = col_to_row[c]
            if fixed_row[nr]:
                continue
            seen[c] = 1
            stack_pos[top] = k
            parent[nr] = r
            top += 1
            stack_row[top] = nr
            stack_pos[top] = indptr[nr]
            break
        else:
            top -= 1
    return False


def lexmin_assignment(double[:, ::1] cost, double tol):
    cdef Py_ssize_t n = cost.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.intp)
    row_to_col_arr, u_arr, v_arr = solve_potentials(cost)
    reduced = np.asarray(cost) - u_arr[:, None] - v_arr[None, :]
    tight = reduced <= tol
    cdef Py_ssize_t[::1] indptr = np.concatenate(([0], np.cumsum(tight.sum(axis=1)))).astype(np.intp)
    cdef Py_ssize_t[::1] indices = np.nonzero(tight)[1].astype(np.intp)
    cdef Py_ssize_t[::1] row_to_col = row_to_col_arr
    cdef Py_ssize_t[::1] col_to_row = np.empty(n, dtype=np.intp)
    cdef unsigned char[::1] fixed_row = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] fixed_col = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] seen = np.zeros(n, dtype=np.uint8)
    cdef Py_ssize_t[::1] parent = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] stack_row = np.empty(n + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] stack_pos = np.empty(n + 1, dtype=np.intp)
    cdef Py_ssize_t i, j, k, r, ci, q
    for i in range(n):
        col_to_row[row_to_col[i]] = i
    for i in range(n):
        fixed_row[i] = 1
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if fixed_col[j]:
                continue
            ci = row_to_col[i]
            if ci == j:
                break
            r = col_to_row[j]
            for q in range(n):
                seen[q] = 0
            seen[j] = 1
            if _augment(r, ci, indptr, indices, row_to_col, col_to_row,
                        fixed_row, fixed_col, seen, parent, stack_row, stack_pos):
                row_to_col[i] = j
                col_to_row[j] = i
                break
        fixed_col[row_to_col[i]] = 1
    return np.asarray(row_to_col)
