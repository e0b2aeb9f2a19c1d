"""Compiled shortest-path kernels on lattice graphs.

Grids are padded to three axes; ``offsets`` is ``(K, 3)`` and ``weights`` is
``(K, N)`` with ``inf`` for edges leaving the grid. Heap entries are
``(distance, node)`` tuples, so ties pop in node order.
"""

import heapq

import numpy as np
from numba import njit

INF = np.inf


@njit(cache=True)
def _neighbor(node, k, offsets, shape):
    n1 = shape[1]
    n2 = shape[2]
    i = node // (n1 * n2)
    rem = node - i * n1 * n2
    j = rem // n2
    l = rem - j * n2
    a = i + offsets[k, 0]
    b = j + offsets[k, 1]
    c = l + offsets[k, 2]
    if a < 0 or a >= shape[0] or b < 0 or b >= n1 or c < 0 or c >= n2:
        return -1
    return (a * n1 + b) * n2 + c


@njit(cache=True)
def dijkstra(sources, init, weights, offsets, shape, max_dist):
    """Multi-source label-setting solve; nodes beyond ``max_dist`` stay ``inf``."""
    n = weights.shape[1]
    dist = np.full(n, INF)
    pred = np.full(n, -1, dtype=np.int64)
    done = np.zeros(n, dtype=np.bool_)
    heap = [(0.0, np.int64(0))]
    heap.pop()
    for s in range(sources.shape[0]):
        node = sources[s]
        if init[s] < dist[node]:
            dist[node] = init[s]
            heapq.heappush(heap, (init[s], np.int64(node)))
    K = offsets.shape[0]
    while len(heap) > 0:
        d, node = heapq.heappop(heap)
        if done[node] or d > dist[node]:
            continue
        if d > max_dist:
            break
        done[node] = True
        for k in range(K):
            w = weights[k, node]
            if w == INF:
                continue
            nb = _neighbor(node, k, offsets, shape)
            if nb < 0 or done[nb]:
                continue
            nd = d + w
            if nd < dist[nb]:
                dist[nb] = nd
                pred[nb] = node
                heapq.heappush(heap, (nd, nb))
            elif nd == dist[nb] and node < pred[nb]:
                pred[nb] = node
    for i in range(n):
        if not done[i]:
            dist[i] = INF
            pred[i] = -1
    return dist, pred


@njit(cache=True)
def _ball_into(center, radius, weights, offsets, shape, dist, touched, out_nodes, out_d):
    """Closed ball around ``center``; returns the count written to ``out_*``.

    ``dist`` must be all-``inf`` on entry and is restored before returning.
    """
    heap = [(0.0, np.int64(center))]
    dist[center] = 0.0
    ntouched = 1
    touched[0] = center
    count = 0
    K = offsets.shape[0]
    while len(heap) > 0:
        d, node = heapq.heappop(heap)
        if d > dist[node]:
            continue
        if d > radius:
            break
        out_nodes[count] = node
        out_d[count] = d
        count += 1
        dist[node] = -d - 1.0  # settled marker
        for k in range(K):
            w = weights[k, node]
            if w == INF:
                continue
            nb = _neighbor(node, k, offsets, shape)
            if nb < 0:
                continue
            cur = dist[nb]
            if cur < 0.0:
                continue
            nd = d + w
            if nd <= radius and nd < cur:
                if cur == INF:
                    touched[ntouched] = nb
                    ntouched += 1
                dist[nb] = nd
                heapq.heappush(heap, (nd, nb))
    for t in range(ntouched):
        dist[touched[t]] = INF
    return count


@njit(cache=True)
def balls_csr(centers, radii, weights, offsets, shape):
    """Closed metric balls for many centers packed as CSR ``(indptr, nodes, dists)``."""
    n = weights.shape[1]
    dist = np.full(n, INF)
    touched = np.empty(n, dtype=np.int64)
    buf_nodes = np.empty(n, dtype=np.int64)
    buf_d = np.empty(n)
    m = centers.shape[0]
    indptr = np.zeros(m + 1, dtype=np.int64)
    cap = max(16, 8 * m)
    nodes = np.empty(cap, dtype=np.int64)
    dists = np.empty(cap)
    pos = 0
    for c in range(m):
        cnt = _ball_into(centers[c], radii[c], weights, offsets, shape,
                         dist, touched, buf_nodes, buf_d)
        while pos + cnt > cap:
            cap *= 2
            nn = np.empty(cap, dtype=np.int64)
            nd = np.empty(cap)
            nn[:pos] = nodes[:pos]
            nd[:pos] = dists[:pos]
            nodes = nn
            dists = nd
        nodes[pos:pos + cnt] = buf_nodes[:cnt]
        dists[pos:pos + cnt] = buf_d[:cnt]
        pos += cnt
        indptr[c + 1] = pos
    return indptr, nodes[:pos].copy(), dists[:pos].copy()


@njit(cache=True)
def cable_balls(centers, radii, weights, offsets, shape, keep):
    """Balls on the metric graph where ``u`` is linear along each edge.

    Besides the nodes of each closed ball, every edge leaving a ball node
    toward a ``keep`` node contributes the point at exactly distance ``r``.
    Returns CSR ``(indptr, a, b, t)``: candidate value ``u[a] + t (u[b] - u[a])``.
    """
    n = weights.shape[1]
    K = offsets.shape[0]
    dist = np.full(n, INF)
    touched = np.empty(n, dtype=np.int64)
    buf_nodes = np.empty(n, dtype=np.int64)
    buf_d = np.empty(n)
    m = centers.shape[0]
    indptr = np.zeros(m + 1, dtype=np.int64)
    cap = max(16, 32 * m)
    A = np.empty(cap, dtype=np.int64)
    B = np.empty(cap, dtype=np.int64)
    T = np.empty(cap)
    pos = 0
    for c in range(m):
        r = radii[c]
        cnt = _ball_into(centers[c], r, weights, offsets, shape,
                         dist, touched, buf_nodes, buf_d)
        need = pos + cnt * (K + 1)
        while need > cap:
            cap *= 2
            nA = np.empty(cap, dtype=np.int64)
            nB = np.empty(cap, dtype=np.int64)
            nT = np.empty(cap)
            nA[:pos] = A[:pos]
            nB[:pos] = B[:pos]
            nT[:pos] = T[:pos]
            A, B, T = nA, nB, nT
        for q in range(cnt):
            y = buf_nodes[q]
            if not keep[y]:
                continue
            A[pos] = y
            B[pos] = y
            T[pos] = 0.0
            pos += 1
            slack = r - buf_d[q]
            if slack <= 0.0:
                continue
            for k in range(K):
                w = weights[k, y]
                if w == INF or slack >= w:
                    continue
                z = _neighbor(y, k, offsets, shape)
                if z < 0 or not keep[z]:
                    continue
                A[pos] = y
                B[pos] = z
                T[pos] = slack / w
                pos += 1
        indptr[c + 1] = pos
    return indptr, A[:pos].copy(), B[:pos].copy(), T[:pos].copy()


@njit(cache=True)
def cable_reduce(u, indptr, a, b, t):
    """Per-ball maximum and minimum of the edgewise-linear extension of ``u``."""
    m = indptr.shape[0] - 1
    hi = np.empty(m)
    lo = np.empty(m)
    for c in range(m):
        mx = -INF
        mn = INF
        for p in range(indptr[c], indptr[c + 1]):
            v = u[a[p]] + t[p] * (u[b[p]] - u[a[p]])
            if v > mx:
                mx = v
            if v < mn:
                mn = v
        hi[c] = mx
        lo[c] = mn
    return hi, lo


@njit(cache=True)
def cable_iterate(u, interior, indptr, a, b, t, tol, max_iter, every):
    """Jacobi midrange sweeps over cable balls until the sup-norm update is at most ``tol``.

    Returns ``(u, sweeps, last_update, history)`` with the update sampled every
    ``every`` sweeps and once more at exit.
    """
    hist = np.empty(max_iter // every + 2)
    nh = 0
    change = INF
    it = 0
    while it < max_iter:
        hi, lo = cable_reduce(u, indptr, a, b, t)
        out = u.copy()
        change = 0.0
        for c in range(interior.shape[0]):
            x = interior[c]
            new = 0.5 * (hi[c] + lo[c])
            diff = abs(new - u[x])
            if diff > change:
                change = diff
            out[x] = new
        u = out
        it += 1
        if it % every == 0:
            hist[nh] = change
            nh += 1
        if change <= tol:
            break
    if it % every != 0:
        hist[nh] = change
        nh += 1
    return u, it, change, hist[:nh].copy()
