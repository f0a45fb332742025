"""Hot numeric kernels over integer-encoded rationals.

Every kernel exists twice: a numba ``@njit`` version and a pure-numpy one.
The numba path is used when numba imports and ``OMEGASTAR_NO_NUMBA`` is
unset (or "0").  Object-dtype inputs (big-integer encodings that overflow
int64) always take the numpy path, which is exact for Python ints.

All inputs are exact: coordinates are integers over one common denominator,
so every comparison below is a plain integer comparison.
"""
import os

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False


def _env_disabled():
    return os.environ.get("OMEGASTAR_NO_NUMBA", "0") not in ("", "0", "false", "False")


_CHUNK = 2048


# ---------------------------------------------------------------------------
# numpy reference path

def _membership_np(pts, lo, hi):
    n, k = pts.shape[0], lo.shape[0]
    out = np.zeros((n, k), dtype=np.bool_)
    if n == 0 or k == 0:
        return out
    if pts.shape[1] == 0:
        out[:] = True
        return out
    for s in range(0, n, _CHUNK):
        p = pts[s:s + _CHUNK, None, :]
        out[s:s + _CHUNK] = ((p > lo[None]) & (p < hi[None])).all(axis=2)
    return out


def _cover_edges_np(member, images):
    m = member.astype(np.float32)
    return (m[images] @ m.T) > 0


def _metric_edges_np(pts, images, eps):
    n = pts.shape[0]
    out = np.zeros((n, n), dtype=np.bool_)
    if pts.shape[1] == 0:
        out[:] = eps > 0
        return out
    img = pts[images]
    for s in range(0, n, _CHUNK):
        d = np.abs(img[s:s + _CHUNK, None, :] - pts[None]).max(axis=2)
        out[s:s + _CHUNK] = d < eps
    return out


def _within_np(pts, radius):
    n = pts.shape[0]
    out = np.zeros((n, n), dtype=np.bool_)
    if pts.shape[1] == 0:
        out[:] = True
        return out
    for s in range(0, n, _CHUNK):
        d = np.abs(pts[s:s + _CHUNK, None, :] - pts[None]).max(axis=2)
        out[s:s + _CHUNK] = d <= radius
    return out


def _trapping_scan_np(ms, mf, close):
    """First bitmask (binary counting order) whose box union traps, else -1."""
    n, k = ms.shape
    total = 1 << k
    msf = ms.astype(np.float32)
    mff = mf.astype(np.float32)
    closef = close.astype(np.float32)
    bits = (1 << np.arange(k, dtype=np.int64))
    for start in range(1, total, 4096):
        masks = np.arange(start, min(total, start + 4096), dtype=np.int64)
        sel = ((masks[:, None] & bits[None]) != 0).astype(np.float32)
        inside = (sel @ msf.T) > 0
        count = inside.sum(axis=1)
        proper = (count > 0) & (count < n)
        cl = (inside.astype(np.float32) @ closef) > 0
        ok = (sel @ mff.T) > 0
        trap = proper & ~(cl & ~ok).any(axis=1)
        hit = np.flatnonzero(trap)
        if hit.size:
            return int(masks[hit[0]])
    return -1


def _step_checks_np(p, g):
    if p.shape[0] < 2:
        return np.zeros(0, dtype=np.bool_)
    pf = p.astype(np.float32)
    reach = (pf[:-1] @ g.astype(np.float32).T) > 0
    return (reach & p[1:]).any(axis=1)


# ---------------------------------------------------------------------------
# numba path

if HAVE_NUMBA:

    @njit(cache=True)
    def _membership_nb(pts, lo, hi):
        n, c = pts.shape
        k = lo.shape[0]
        out = np.zeros((n, k), dtype=np.bool_)
        for i in range(n):
            for j in range(k):
                inside = True
                for a in range(c):
                    v = pts[i, a]
                    if v <= lo[j, a] or v >= hi[j, a]:
                        inside = False
                        break
                out[i, j] = inside
        return out

    @njit(cache=True)
    def _cover_edges_nb(member, images):
        n, k = member.shape
        out = np.zeros((n, n), dtype=np.bool_)
        for x in range(n):
            fx = images[x]
            for j in range(k):
                if member[fx, j]:
                    for y in range(n):
                        if member[y, j]:
                            out[x, y] = True
        return out

    @njit(cache=True)
    def _metric_edges_nb(pts, images, eps):
        n, c = pts.shape
        out = np.zeros((n, n), dtype=np.bool_)
        for x in range(n):
            fx = images[x]
            for y in range(n):
                ok = True
                for a in range(c):
                    if abs(pts[fx, a] - pts[y, a]) >= eps:
                        ok = False
                        break
                out[x, y] = ok
        return out

    @njit(cache=True)
    def _within_nb(pts, radius):
        n, c = pts.shape
        out = np.zeros((n, n), dtype=np.bool_)
        for x in range(n):
            for y in range(n):
                ok = True
                for a in range(c):
                    if abs(pts[x, a] - pts[y, a]) > radius:
                        ok = False
                        break
                out[x, y] = ok
        return out

    @njit(cache=True)
    def _box_bits(m):
        n, k = m.shape
        out = np.zeros(n, dtype=np.int64)
        for s in range(n):
            for j in range(k):
                if m[s, j]:
                    out[s] |= np.int64(1) << j
        return out

    @njit(cache=True)
    def _trapping_scan_nb(ms, mf, close):
        n, k = ms.shape
        own = _box_bits(ms)
        img = _box_bits(mf)
        # neighbour lists of the closure relation, CSR style
        start = np.zeros(n + 1, dtype=np.int64)
        for x in range(n):
            start[x + 1] = start[x] + close[x].sum()
        nbr = np.empty(start[n], dtype=np.int64)
        for x in range(n):
            t = start[x]
            for y in range(n):
                if close[x, y]:
                    nbr[t] = y
                    t += 1
        inside = np.zeros(n, dtype=np.bool_)
        for mask in range(1, np.int64(1) << k):
            count = 0
            for s in range(n):
                inside[s] = (own[s] & mask) != 0
                count += inside[s]
            if count == 0 or count == n:
                continue
            trap = True
            for x in range(n):
                if (img[x] & mask) != 0:
                    continue
                for t in range(start[x], start[x + 1]):
                    if inside[nbr[t]]:
                        trap = False
                        break
                if not trap:
                    break
            if trap:
                return mask
        return -1

    @njit(cache=True)
    def _step_checks_nb(p, g):
        length, k = p.shape
        if length < 2:
            return np.zeros(0, dtype=np.bool_)
        out = np.zeros(length - 1, dtype=np.bool_)
        for i in range(length - 1):
            found = False
            for a in range(k):
                if not p[i, a]:
                    continue
                for b in range(k):
                    if p[i + 1, b] and g[b, a]:
                        found = True
                        break
                if found:
                    break
            out[i] = found
        return out


NUMPY = {
    "membership": _membership_np,
    "cover_edges": _cover_edges_np,
    "metric_edges": _metric_edges_np,
    "within": _within_np,
    "trapping_scan": _trapping_scan_np,
    "step_checks": _step_checks_np,
}

NUMBA = {
    "membership": _membership_nb,
    "cover_edges": _cover_edges_nb,
    "metric_edges": _metric_edges_nb,
    "within": _within_nb,
    "trapping_scan": _trapping_scan_nb,
    "step_checks": _step_checks_nb,
} if HAVE_NUMBA else {}


def backend():
    """Name of the backend integer kernels currently dispatch to."""
    return "numba" if HAVE_NUMBA and not _env_disabled() else "numpy"


def _pick(name, *arrays):
    if backend() == "numba" and all(a.dtype != object for a in arrays):
        return NUMBA[name]
    return NUMPY[name]


def membership(pts, lo, hi):
    return _pick("membership", pts, lo, hi)(pts, lo, hi)


def cover_edges(member, images):
    return _pick("cover_edges", member)(member, np.ascontiguousarray(images, dtype=np.int64))


def metric_edges(pts, images, eps):
    images = np.ascontiguousarray(images, dtype=np.int64)
    if pts.dtype == object or backend() == "numpy" or abs(eps) >= 2**62:
        return _metric_edges_np(pts, images, eps)
    return _metric_edges_nb(pts, images, int(eps))


def within(pts, radius):
    if pts.dtype == object or backend() == "numpy" or abs(radius) >= 2**62:
        return _within_np(pts, radius)
    return _within_nb(pts, int(radius))


def trapping_scan(ms, mf, close):
    return int(_pick("trapping_scan", ms)(ms, mf, close))


def step_checks(p, g):
    return _pick("step_checks", p)(p, g)
