"""Pure-Python linear assignment: shortest augmenting path + lexicographic refinement.

Mirrors ``_kernels.pyx`` statement for statement; used when the compiled
extension is unavailable or disabled via ``BRIDGEALIGN_PURE=1``.
"""

import numpy as np


def solve_potentials(cost):
    """Return ``(row_to_col, u, v)`` for a square cost matrix.

    ``u`` and ``v`` are optimal duals: ``cost[i, j] - u[i] - v[j] >= 0`` with
    equality on the returned assignment.
    """
    n = cost.shape[0]
    c = cost.tolist()
    inf = float("inf")
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = c[i0 - 1]
            ui0 = u[i0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
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
    row_to_col = [0] * n
    for j in range(1, n + 1):
        row_to_col[p[j] - 1] = j - 1
    return row_to_col, u[1:], v[1:]


def _find_path(start_row, target_col, tight, row_to_col, col_to_row, fixed_row, fixed_col, seen):
    # DFS for an alternating path start_row -> ... -> target_col over tight edges;
    # returns the list of (row, new_col) reassignments or None.
    stack = [(start_row, 0)]
    parent = {start_row: None}
    while stack:
        r, k = stack.pop()
        cols = tight[r]
        while k < len(cols):
            c = cols[k]
            k += 1
            if fixed_col[c] or seen[c]:
                continue
            if c == target_col:
                moves = [(r, c)]
                while parent[r] is not None:
                    pr = parent[r]
                    moves.append((pr, row_to_col[r]))
                    r = pr
                return moves
            nr = col_to_row[c]
            if fixed_row[nr]:
                continue
            seen[c] = True
            stack.append((r, k))
            parent[nr] = r
            stack.append((nr, 0))
            break
    return None


def lexmin_assignment(cost, tol):
    """Lexicographically smallest optimal permutation (row -> column)."""
    n = cost.shape[0]
    if n == 0:
        return []
    row_to_col, u, v = solve_potentials(cost)
    reduced = cost - np.asarray(u)[:, None] - np.asarray(v)[None, :]
    tight = [np.flatnonzero(reduced[i] <= tol).tolist() for i in range(n)]
    col_to_row = [0] * n
    for i, j in enumerate(row_to_col):
        col_to_row[j] = i
    fixed_row = [False] * n
    fixed_col = [False] * n
    for i in range(n):
        fixed_row[i] = True
        for j in tight[i]:
            if fixed_col[j]:
                continue
            if row_to_col[i] == j:
                break
            r = col_to_row[j]
            seen = [False] * n
            seen[j] = True
            moves = _find_path(r, row_to_col[i], tight, row_to_col, col_to_row,
                               fixed_row, fixed_col, seen)
            if moves is None:
                continue
            for rr, cc in moves:
                row_to_col[rr] = cc
                col_to_row[cc] = rr
            row_to_col[i] = j
            col_to_row[j] = i
            break
        fixed_col[row_to_col[i]] = True
    return row_to_col
