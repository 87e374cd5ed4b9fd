"""Independent reference implementations used by the tests.

Each oracle is deliberately naive (explicit loops, full SVDs, a plain BFS)
and shares no code path with the package beyond evaluating the metric field.
"""
from collections import deque

import numpy as np


def random_spd(rng, n, cond_max=1e3):
    """Random SPD matrix with eigenvalues log-uniform in [1, cond_max]."""
    a = rng.standard_normal((n, n))
    r, _ = np.linalg.qr(a)
    lam = np.exp(rng.uniform(0.0, np.log(cond_max), n)) * rng.uniform(0.1, 10.0)
    return (r * lam) @ r.T


def sigma_all_pairs(field, pts):
    """max over ordered pairs of rho(M_b M_a^-1 - I) / |M_a (a - b)| with full SVDs."""
    n = pts.shape[1]
    best = 0.0
    roots = [field.root(p) for p in pts]
    for i, a in enumerate(pts):
        ma = roots[i]
        ma_inv = np.linalg.inv(ma)
        for j, b in enumerate(pts):
            if i == j:
                continue
            num = np.linalg.svd(roots[j] @ ma_inv - np.eye(n), compute_uv=False)[0]
            den = np.linalg.norm(ma @ (a - b))
            best = max(best, num / den)
    return best


def nearest_label(sites, field, kind, p):
    """Exhaustive argmin with lowest-index tie breaking, one point at a time."""
    best, arg = np.inf, -1
    for i, s in enumerate(sites):
        at = s if kind == "LS" else p
        q = field.tensor(at)
        d = np.sqrt((s - p) @ q @ (s - p))
        if d < best:
            best, arg = d, i
    return arg, best


def flood_components(labels2d):
    """4-connected components by BFS; returns (component id array, count)."""
    h, w = labels2d.shape
    comp = -np.ones((h, w), dtype=int)
    count = 0
    for i in range(h):
        for j in range(w):
            if comp[i, j] >= 0:
                continue
            lab = labels2d[i, j]
            comp[i, j] = count
            queue = deque([(i, j)])
            while queue:
                a, b = queue.popleft()
                for da, db in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    x, y = a + da, b + db
                    if 0 <= x < h and 0 <= y < w and comp[x, y] < 0 and labels2d[x, y] == lab:
                        comp[x, y] = count
                        queue.append((x, y))
            count += 1
    return comp, count


def components_per_site(labels2d):
    """Number of 4-connected pieces of each label value."""
    comp, _ = flood_components(labels2d)
    out = {}
    for lab in np.unique(labels2d):
        out[int(lab)] = len(np.unique(comp[labels2d == lab]))
    return out


def greedy_farthest(points, field, kind, first, count):
    """Exhaustive farthest-point insertion over a point set (site-first distances)."""
    chosen = [first]
    for _ in range(count - 1):
        best, arg = -1.0, -1
        for j, p in enumerate(points):
            d = min(_dist(points[i], p, field, kind) for i in chosen)
            if d > best:
                best, arg = d, j
        chosen.append(arg)
    return chosen


def _dist(site, p, field, kind):
    q = field.tensor(site if kind == "LS" else p)
    return float(np.sqrt((site - p) @ q @ (site - p)))


def star_dense(diagram, samples_per_cell=16):
    """Star-shape check with every site as a candidate; returns max violation gap."""
    grid = diagram.grid
    sites = diagram.sites
    kind = diagram.kind.value
    labels = diagram.labels.reshape(grid.res)
    centers = grid.centers().reshape(*grid.res, grid.dim)
    h = float(np.min(grid.spacing))
    worst = 0.0
    mask = np.zeros(grid.res, dtype=bool)
    for ax in range(grid.dim):
        a = np.swapaxes(labels, 0, ax)
        m = np.swapaxes(mask, 0, ax)
        diff = a[1:] != a[:-1]
        m[1:] |= diff
        m[:-1] |= diff
    for idx in zip(*np.nonzero(mask)):
        v = labels[idx]
        q = centers[idx]
        k = max(1, int(np.ceil(np.linalg.norm(sites[v] - q) / h * samples_per_cell)))
        t = np.arange(1, k + 1) / k
        pts = q + t[:, None] * (sites[v] - q)
        d = _all_distances(sites, field=diagram.field, kind=kind, pts=pts)
        gap = d[:, v] - d.min(axis=1)
        worst = max(worst, float(gap.max()))
    return worst


def _all_distances(sites, field, kind, pts):
    if kind == "LS":
        m = field.root(sites)
        return np.linalg.norm(np.einsum("sij,psj->psi", m, sites[None] - pts[:, None]), axis=-1)
    m = field.root(pts)
    return np.linalg.norm(np.einsum("pij,psj->psi", m, sites[None] - pts[:, None]), axis=-1)
