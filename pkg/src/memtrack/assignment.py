"""Maximum-weight bipartite assignment (Kuhn-Munkres).

The solver works on a square minimisation problem internally: rectangular
weight matrices are zero-padded, negated, and solved with the
shortest-augmenting-path form of the Hungarian method (row potentials ``u``,
column potentials ``v``).  Among all optimal assignments the one whose column
sequence, read in row order, is lexicographically smallest is returned, so
ties resolve to the lowest row index and then the lowest column index.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np

from .exceptions import InvalidMatrixError


def _as_weight_matrix(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2:
        if w.size == 0:
            return np.zeros((0, 0))
        raise InvalidMatrixError(f"weight matrix must be 2-D, got shape {w.shape}")
    if w.size and not np.isfinite(w).all():
        raise InvalidMatrixError("weight matrix contains NaN or infinite entries")
    return w


def _shortest_augmenting_path(cost: np.ndarray):
    """Solve the square minimisation problem; returns (col4row, u, v)."""
    n = cost.shape[0]
    u = cost.min(axis=1)
    v = np.zeros(n)
    col4row = np.full(n, -1, dtype=np.int64)
    row4col = np.full(n, -1, dtype=np.int64)

    # rows whose cheapest column is still free are matched on tight edges up front
    for i, j in enumerate(np.argmin(cost, axis=1)):
        if row4col[j] == -1:
            row4col[j] = i
            col4row[i] = j

    for cur_row in np.flatnonzero(col4row == -1):
        shortest = np.full(n, np.inf)
        path = np.full(n, -1, dtype=np.int64)
        scanned_cols = np.zeros(n, dtype=bool)
        scanned_rows = []
        i = cur_row
        min_val = 0.0
        sink = -1
        while sink == -1:
            scanned_rows.append(i)
            reduced = min_val + cost[i] - u[i] - v
            better = ~scanned_cols & (reduced < shortest)
            path[better] = i
            shortest[better] = reduced[better]

            remaining = np.flatnonzero(~scanned_cols)
            vals = shortest[remaining]
            min_val = vals.min()
            ties = remaining[vals == min_val]
            free = ties[row4col[ties] == -1]
            j = free[0] if free.size else ties[0]

            scanned_cols[j] = True
            if row4col[j] == -1:
                sink = j
            else:
                i = row4col[j]

        u[cur_row] += min_val
        for r in scanned_rows[1:]:
            u[r] += min_val - shortest[col4row[r]]
        v[scanned_cols] -= min_val - shortest[scanned_cols]

        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            col4row[i], j = j, col4row[i]
            if i == cur_row:
                break
    return col4row, u, v


def _lexicographic_tiebreak(cost, col4row, u, v):
    """Move to the lexicographically smallest optimum inside the equality graph."""
    n = cost.shape[0]
    scale = max(1.0, float(np.abs(cost).max()))
    tol = 1e-12 * scale * n
    tight = (cost - u[:, None] - v[None, :]) <= tol
    col4row = col4row.copy()
    row4col = np.empty(n, dtype=np.int64)
    row4col[col4row] = np.arange(n)

    for i in range(n):
        c0 = col4row[i]
        for c in np.flatnonzero(tight[i, :c0]):
            # rows before i are already fixed
            start = row4col[c]
            if start < i:
                continue
            prev_col = {}
            seen_cols = {c}
            queue = deque([start])
            found = False
            while queue and not found:
                x = queue.popleft()
                for y in np.flatnonzero(tight[x]):
                    y = int(y)
                    if y in seen_cols:
                        continue
                    owner = row4col[y]
                    if owner < i:
                        continue
                    seen_cols.add(y)
                    prev_col[y] = x
                    if y == c0:
                        found = True
                        break
                    queue.append(owner)
            if not found:
                continue
            # unwind: each row on the path takes the column discovered from it
            y = c0
            while True:
                x = prev_col[y]
                old = col4row[x]
                col4row[x] = y
                row4col[y] = x
                if x == start:
                    break
                y = old
            col4row[i] = c
            row4col[c] = i
            break
    return col4row


def solve_assignment(weights) -> list[tuple[int, int]]:
    """Maximum total-weight partial bijection between rows and columns.

    Returns ``min(rows, cols)`` ``(row, col)`` pairs sorted by row.  An empty
    matrix gives an empty assignment.
    """
    w = _as_weight_matrix(weights)
    rows, cols = w.shape
    if rows == 0 or cols == 0:
        return []
    n = max(rows, cols)
    padded = np.zeros((n, n))
    padded[:rows, :cols] = w
    cost = -padded
    col4row, u, v = _shortest_augmenting_path(cost)
    col4row = _lexicographic_tiebreak(cost, col4row, u, v)
    return [(i, int(col4row[i])) for i in range(rows) if col4row[i] < cols]


def assignment_weight(weights, pairs) -> float:
    """Exactly rounded total weight of an assignment."""
    w = np.asarray(weights, dtype=np.float64)
    return math.fsum(float(w[r, c]) for r, c in pairs)
