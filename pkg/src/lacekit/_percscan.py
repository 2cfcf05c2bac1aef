"""numba kernels for exhaustive sweeps over bond configurations.

Configurations are integers whose bit i is the state of bond i. Cluster
tables store, for each configuration and site, the bitmask of the site's
cluster; removing a set of bonds is then a table lookup at ``c & ~mask``.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


@njit(cache=True)
def cluster_table(nb, ns, ea, eb, cl):
    """Fill cl[c, s] with the bitmask of the cluster of site s in configuration c."""
    ncfg = 1 << nb
    parent = np.empty(ns, dtype=np.int64)
    rootmask = np.empty(ns, dtype=np.uint32)
    for c in range(ncfg):
        for s in range(ns):
            parent[s] = s
            rootmask[s] = 0
        for i in range(nb):
            if (c >> i) & 1:
                a = _find(parent, ea[i])
                b = _find(parent, eb[i])
                if a != b:
                    parent[a] = b
        for s in range(ns):
            r = _find(parent, s)
            rootmask[r] |= np.uint32(1) << np.uint32(s)
        for s in range(ns):
            cl[c, s] = rootmask[_find(parent, s)]
    return cl


@njit(cache=True)
def pivot_table(cl, nb, ns, ea, eb, v, piv):
    """Fill piv[c, y] with the first endpoints (v side) of pivotal bonds for v <-> y."""
    ncfg = cl.shape[0]
    for c in range(ncfg):
        full = cl[c, v]
        for i in range(nb):
            if (c >> i) & 1:
                r = cl[c & ~(1 << i), v]
                sep = full & ~r
                if sep != 0:
                    if (r >> ea[i]) & 1:
                        first = ea[i]
                    else:
                        first = eb[i]
                    bit = np.uint32(1) << np.uint32(first)
                    for y in range(ns):
                        if (sep >> y) & 1:
                            piv[c, y] |= bit
    return piv


@njit(cache=True)
def occupation_keys(nb, classmasks, radices, kidx_of_code):
    """Encoded class-occupation counts for every configuration."""
    ncfg = 1 << nb
    keys = np.zeros(ncfg, dtype=np.int64)
    for c in range(ncfg):
        code = 0
        for j in range(classmasks.shape[0]):
            x = c & classmasks[j]
            cnt = 0
            while x:
                x &= x - 1
                cnt += 1
            code += cnt * radices[j]
        keys[c] = kidx_of_code[code]
    return keys


@njit(cache=True)
def scan_connect(cl, keys, nkeys, v):
    """counts[x, key] of configurations with v <-> x."""
    ns = cl.shape[1]
    out = np.zeros((ns, nkeys), dtype=np.int64)
    for c in range(cl.shape[0]):
        m = cl[c, v]
        k = keys[c]
        for x in range(ns):
            if (m >> x) & 1:
                out[x, k] += 1
    return out


@njit(cache=True)
def scan_restricted(cl, keys, nkeys, v, tmask, amask):
    """counts[x, key] of configurations with v <-> x avoiding the sites in amask.

    ``tmask`` is the set of bonds touching amask.
    """
    ns = cl.shape[1]
    out = np.zeros((ns, nkeys), dtype=np.int64)
    if (amask >> v) & 1:
        return out
    for c in range(cl.shape[0]):
        m = cl[c & ~tmask, v] & ~amask
        k = keys[c]
        for x in range(ns):
            if (m >> x) & 1:
                out[x, k] += 1
    return out


@njit(cache=True)
def scan_through(cl, keys, nkeys, v, tmask, amask):
    """counts[x, key] of configurations where v is connected to x through A."""
    ns = cl.shape[1]
    out = np.zeros((ns, nkeys), dtype=np.int64)
    vin = (amask >> v) & 1
    for c in range(cl.shape[0]):
        m = cl[c, v] & ~cl[c & ~tmask, v]
        if vin:
            m |= np.uint32(1) << np.uint32(v)
        else:
            m &= ~(np.uint32(1) << np.uint32(v))
        k = keys[c]
        for x in range(ns):
            if (m >> x) & 1:
                out[x, k] += 1
    return out


@njit(cache=True)
def _event_mask(full, r, pivrow, v, vin, ns):
    """Bitmask of y with E(v, y; A) given full cluster, restricted cluster r
    (cluster of v with bonds touching A removed) and pivotal first endpoints."""
    vbit = np.uint32(1) << np.uint32(v)
    out = np.uint32(0)
    if vin:
        out |= vbit
    cand = full & ~r
    for y in range(ns):
        if y == v or not ((cand >> y) & 1):
            continue
        pm = pivrow[y]
        if (pm & ~r & ~vbit) != 0:
            continue
        if (pm & vbit) and vin:
            continue
        out |= np.uint32(1) << np.uint32(y)
    return out


@njit(cache=True)
def scan_event(cl, piv, keys, nkeys, v, tmask, amask):
    """counts[y, key] of configurations with E(v, y; A)."""
    ns = cl.shape[1]
    out = np.zeros((ns, nkeys), dtype=np.int64)
    vin = (amask >> v) & 1
    for c in range(cl.shape[0]):
        em = _event_mask(cl[c, v], cl[c & ~tmask, v], piv[c], v, vin, ns)
        k = keys[c]
        for y in range(ns):
            if (em >> y) & 1:
                out[y, k] += 1
    return out


@njit(cache=True)
def scan_stage(cl, piv, keys, nkeys, v, tmask, amask, dtail, dbond):
    """counts[db, key, mask]: E(v, y_db; A) holds and the cluster of v with
    bond db vacant equals ``mask``."""
    ns = cl.shape[1]
    nd = dtail.shape[0]
    out = np.zeros((nd, nkeys, 1 << ns), dtype=np.int64)
    vin = (amask >> v) & 1
    for c in range(cl.shape[0]):
        em = _event_mask(cl[c, v], cl[c & ~tmask, v], piv[c], v, vin, ns)
        if em == 0:
            continue
        k = keys[c]
        for db in range(nd):
            if (em >> dtail[db]) & 1:
                out[db, k, cl[c & ~(1 << dbond[db]), v]] += 1
    return out


@njit(cache=True)
def scan_start(cl, piv0, keys, nkeys, origin, dtail, dbond):
    """counts[db, key, mask]: y_db doubly connected to the origin and the
    origin's cluster with bond db vacant equals ``mask``."""
    ns = cl.shape[1]
    nd = dtail.shape[0]
    out = np.zeros((nd, nkeys, 1 << ns), dtype=np.int64)
    for c in range(cl.shape[0]):
        full = cl[c, origin]
        dc = np.uint32(0)
        for y in range(ns):
            if (full >> y) & 1 and piv0[c, y] == 0:
                dc |= np.uint32(1) << np.uint32(y)
        k = keys[c]
        for db in range(nd):
            if (dc >> dtail[db]) & 1:
                out[db, k, cl[c & ~(1 << dbond[db]), origin]] += 1
    return out


@njit(cache=True)
def scan_double(cl, piv0, keys, nkeys, origin):
    """counts[x, key] of configurations with x doubly connected to the origin."""
    ns = cl.shape[1]
    out = np.zeros((ns, nkeys), dtype=np.int64)
    for c in range(cl.shape[0]):
        full = cl[c, origin]
        k = keys[c]
        for y in range(ns):
            if (full >> y) & 1 and piv0[c, y] == 0:
                out[y, k] += 1
    return out
