"""Pure-Python implementations of the hot kernels.

Used when the compiled extension is unavailable. Both backends implement
identical arithmetic and traversal order, so results match bit for bit.
"""

from __future__ import annotations

import numpy as np


def fill_dp(rows: np.ndarray, p: np.ndarray) -> None:
    """Fill the failure-count distribution grid in place.

    ``rows`` is an (n+1, n+1) float64 array with rows[0, 0] == 1 and zeros
    elsewhere. After the call, rows[i, k] is the probability that exactly k
    of the first i groups fail.
    """
    n = p.shape[0]
    for i in range(1, n + 1):
        pi = p[i - 1]
        qi = 1.0 - pi
        # rows[i-1, i] is zero, so the slice update matches the scalar
        # recurrence rows[i,k] = rows[i-1,k-1]*p + rows[i-1,k]*(1-p).
        rows[i, 1 : i + 1] = rows[i - 1, 0:i] * pi
        rows[i, 0 : i + 1] += rows[i - 1, 0 : i + 1] * qi


def grid_bfs(
    nrows: int,
    ncols: int,
    hblock: np.ndarray,
    vblock: np.ndarray,
    src: int,
    dst: int,
) -> list[int] | None:
    """Shortest path between two nodes of a rectangular grid graph.

    Nodes are indexed r * ncols + c. ``hblock[r, c]`` nonzero blocks the
    edge (r,c)-(r,c+1); ``vblock[r, c]`` blocks (r,c)-(r+1,c). Neighbors
    are visited in lexicographic coordinate order, which fixes the path
    deterministically. Returns the node-index path src..dst, or None if
    dst is unreachable.
    """
    if src == dst:
        return [src]
    total = nrows * ncols
    # flat list views are markedly faster than per-element ndarray access
    hb = hblock.reshape(-1).tolist()
    vb = vblock.reshape(-1).tolist()
    hcols = ncols - 1
    parent = [-1] * total
    parent[src] = src
    queue = [src]
    head = 0
    found = False
    while head < len(queue) and not found:
        node = queue[head]
        head += 1
        r, c = divmod(node, ncols)
        # up, left, right, down: lexicographic order of neighbor coords
        if r > 0 and not vb[(r - 1) * ncols + c]:
            nxt = node - ncols
            if parent[nxt] < 0:
                parent[nxt] = node
                if nxt == dst:
                    found = True
                else:
                    queue.append(nxt)
        if not found and c > 0 and not hb[r * hcols + c - 1]:
            nxt = node - 1
            if parent[nxt] < 0:
                parent[nxt] = node
                if nxt == dst:
                    found = True
                else:
                    queue.append(nxt)
        if not found and c + 1 < ncols and not hb[r * hcols + c]:
            nxt = node + 1
            if parent[nxt] < 0:
                parent[nxt] = node
                if nxt == dst:
                    found = True
                else:
                    queue.append(nxt)
        if not found and r + 1 < nrows and not vb[r * ncols + c]:
            nxt = node + ncols
            if parent[nxt] < 0:
                parent[nxt] = node
                if nxt == dst:
                    found = True
                else:
                    queue.append(nxt)
    if parent[dst] < 0:
        return None
    path = [dst]
    node = dst
    while node != src:
        node = parent[node]
        path.append(node)
    path.reverse()
    return path
