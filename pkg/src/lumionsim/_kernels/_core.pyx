# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Mirrors ``_pure`` exactly: same recurrence evaluation order and the same
lexicographic neighbor order, so both backends return identical results.
"""

import numpy as np


def fill_dp(double[:, ::1] rows, double[::1] p):
    """Fill the failure-count distribution grid in place."""
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t i, k
    cdef double pi, qi
    for i in range(1, n + 1):
        pi = p[i - 1]
        qi = 1.0 - pi
        rows[i, 0] = rows[i - 1, 0] * qi
        for k in range(1, i + 1):
            rows[i, k] = rows[i - 1, k - 1] * pi + rows[i - 1, k] * qi


def grid_bfs(Py_ssize_t nrows, Py_ssize_t ncols,
             const unsigned char[:, ::1] hblock,
             const unsigned char[:, ::1] vblock,
             Py_ssize_t src, Py_ssize_t dst):
    """Shortest path between two nodes of a rectangular grid graph.

    Semantics identical to the pure-Python version: node index r*ncols+c,
    neighbors visited in lexicographic coordinate order, returns the node
    path as a Python list or None when unreachable.
    """
    if src == dst:
        return [src]
    cdef Py_ssize_t total = nrows * ncols
    parent_arr = np.full(total, -1, dtype=np.intp)
    queue_arr = np.empty(total, dtype=np.intp)
    cdef Py_ssize_t[::1] parent = parent_arr
    cdef Py_ssize_t[::1] queue = queue_arr
    cdef Py_ssize_t head = 0, tail = 0
    cdef Py_ssize_t node, nxt, r, c
    cdef bint found = False
    parent[src] = src
    queue[tail] = src
    tail += 1
    while head < tail and not found:
        node = queue[head]
        head += 1
        r = node // ncols
        c = node - r * ncols
        if r > 0 and not vblock[r - 1, c]:
            nxt = node - ncols
            if parent[nxt] < 0:
                parent[nxt] = node
                if nxt == dst:
                    found = True
                else:
                    queue[tail] = nxt
                    tail += 1
        if not found and c > 0 and not hblock[r, c - 1]:
            nxt = node - 1
            if parent[nxt] < 0:
                parent[nxt] = node
                if nxt == dst:
                    found = True
                else:
                    queue[tail] = nxt
                    tail += 1
        if not found and c + 1 < ncols and not hblock[r, c]:
            nxt = node + 1
            if parent[nxt] < 0:
                parent[nxt] = node
                if nxt == dst:
                    found = True
                else:
                    queue[tail] = nxt
                    tail += 1
        if not found and r + 1 < nrows and not vblock[r, c]:
            nxt = node + ncols
            if parent[nxt] < 0:
                parent[nxt] = node
                if nxt == dst:
                    found = True
                else:
                    queue[tail] = nxt
                    tail += 1
    if parent[dst] < 0:
        return None
    path = [dst]
    node = dst
    while node != src:
        node = parent[node]
        path.append(node)
    path.reverse()
    return path
