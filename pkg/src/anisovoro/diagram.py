"""Rasterized DW/LS Voronoi diagrams, their regions, and orphan detection."""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import kernels
from .distance import DistanceKind
from .errors import InvalidArgument
from .grid import Grid
from .metric import MetricField, batch_singular_extremes


@dataclass
class CellTensors:
    """Cell centers and metric tensors of a grid, computed once per (field, grid)."""

    grid: Grid
    centers: np.ndarray
    q: np.ndarray
    rho_max: float

    @classmethod
    def build(cls, field: MetricField, grid: Grid) -> "CellTensors":
        if field.dim != grid.dim:
            raise InvalidArgument("metric and grid dimensions differ")
        centers = grid.centers()
        m = field.root(centers)
        q = m @ m
        q = 0.5 * (q + np.swapaxes(q, -1, -2))
        rho_max = float(batch_singular_extremes(m)[0].max())
        return cls(grid, centers, np.ascontiguousarray(q), rho_max)


def site_tensors(field: MetricField, sites) -> np.ndarray:
    m = field.root(np.atleast_2d(sites))
    q = m @ m
    return np.ascontiguousarray(0.5 * (q + np.swapaxes(q, -1, -2)))


def squared_distances(kind, sites, qsites, points, qpoints) -> np.ndarray:
    """Squared site-first distances for matching rows of ``sites`` and ``points``.

    Uses the same accumulation order as the kernels.
    """
    d = sites - points
    q = qsites if DistanceKind.parse(kind) is DistanceKind.LS else qpoints
    n = d.shape[-1]
    acc = np.zeros(d.shape[:-1])
    for i in range(n):
        for j in range(n):
            acc = acc + (d[..., i] * q[..., i, j]) * d[..., j]
    return acc


@dataclass
class Component:
    site: int
    cells: np.ndarray = dc_field(repr=False)
    is_main: bool = False

    @property
    def size(self) -> int:
        return len(self.cells)

    def bbox(self, grid: Grid) -> tuple[list[int], list[int]]:
        idx = np.stack(np.unravel_index(self.cells, grid.res), axis=1)
        return idx.min(axis=0).tolist(), idx.max(axis=0).tolist()


@dataclass
class LabeledDiagram:
    grid: Grid
    kind: DistanceKind
    sites: np.ndarray
    field: MetricField = dc_field(repr=False)
    labels: np.ndarray = dc_field(repr=False)
    best_d2: np.ndarray = dc_field(repr=False)
    comp_ids: np.ndarray = dc_field(default=None, repr=False)
    components: list = dc_field(default_factory=list, repr=False)
    candidates: list = dc_field(default_factory=list, repr=False)
    orphans: list = dc_field(default_factory=list)
    suspects: list = dc_field(default_factory=list)
    resolution_suspect: bool = False
    cells: CellTensors | None = dc_field(default=None, repr=False)

    @property
    def orphan_count(self) -> int:
        return len(self.orphans)

    @property
    def orphan_free(self) -> bool:
        return not self.orphans

    def main_component(self, site: int) -> Component | None:
        for c in self.components:
            if c.site == site and c.is_main:
                return c
        return None

    def components_report(self) -> list[dict]:
        out = []
        for c in self.components:
            lo, hi = c.bbox(self.grid)
            out.append({"site": c.site, "component_size": c.size, "is_main": c.is_main,
                        "bbox": {"min": lo, "max": hi}})
        return out

    def boundary_mask(self) -> np.ndarray:
        return label_boundary_mask(self.labels)


def label_boundary_mask(labels: np.ndarray) -> np.ndarray:
    """Cells with a face neighbour carrying a different label."""
    mask = np.zeros(labels.shape, dtype=bool)
    for a in range(labels.ndim):
        lo = [slice(None)] * labels.ndim
        hi = [slice(None)] * labels.ndim
        lo[a] = slice(0, -1)
        hi[a] = slice(1, None)
        diff = labels[tuple(lo)] != labels[tuple(hi)]
        mask[tuple(lo)] |= diff
        mask[tuple(hi)] |= diff
    return mask


def _split_components(labels_flat, comp_ids, ncomp):
    order = np.argsort(comp_ids, kind="stable")
    counts = np.bincount(comp_ids, minlength=ncomp)
    groups = np.split(order, np.cumsum(counts)[:-1])
    comp_label = labels_flat[order[np.cumsum(counts) - counts]]
    return groups, comp_label


def _build_components(diagram: LabeledDiagram):
    grid = diagram.grid
    flat = diagram.labels.ravel()
    comp_ids, ncomp = kernels.label_components(flat, grid.res)
    diagram.comp_ids = comp_ids
    groups, comp_label = _split_components(flat, comp_ids, ncomp)
    comps = [Component(int(l), g) for l, g in zip(comp_label, groups)]
    by_site: dict[int, list[int]] = {}
    for i, c in enumerate(comps):
        by_site.setdefault(c.site, []).append(i)
    site_cells = grid.cell_index(diagram.sites)
    suspect = False
    for v, cell in enumerate(site_cells):
        mine = by_site.get(v, [])
        if not mine:
            continue
        if flat[cell] == v:
            comps[comp_ids[cell]].is_main = True
            continue
        # the site's own cell went to a neighbour: take the nearest piece
        suspect = True
        best, best_d = None, np.inf
        for i in mine:
            d = _min_center_distance(grid, comps[i].cells, diagram.sites[v])
            if d < best_d:
                best, best_d = i, d
        comps[best].is_main = True
    diagram.components = comps
    diagram.candidates = [c for c in comps if not c.is_main]
    diagram.resolution_suspect = suspect


def _min_center_distance(grid: Grid, cells, point) -> float:
    idx = np.stack(np.unravel_index(cells, grid.res), axis=1)
    centers = np.asarray(grid.box_min) + (idx + 0.5) * grid.spacing
    return float(np.min(np.linalg.norm(centers - point, axis=1)))


def label_grid(sites, field: MetricField, kind, grid: Grid, cells: CellTensors | None = None,
               confirm: bool = True) -> LabeledDiagram:
    """Label every cell center with its nearest site (site-first distance)."""
    kind = DistanceKind.parse(kind)
    sites = np.ascontiguousarray(np.atleast_2d(np.asarray(sites, dtype=float)))
    if len(sites) == 0:
        raise InvalidArgument("need at least one site")
    if sites.shape[1] != grid.dim:
        raise InvalidArgument("site dimension does not match the grid")
    if not np.all(grid.contains(sites)):
        raise InvalidArgument("site outside the grid box")
    if cells is None:
        cells = CellTensors.build(field, grid)
    ls = kind is DistanceKind.LS
    qsites = site_tensors(field, sites) if ls else None
    labels, best = kernels.label_sites(cells.centers, None if ls else cells.q, sites, qsites, ls)
    diagram = LabeledDiagram(grid, kind, sites, field, labels.reshape(grid.res), best, cells=cells)
    _build_components(diagram)
    if confirm:
        find_orphans(diagram)
    else:
        diagram.orphans = list(diagram.candidates)
    return diagram


def diagram_from_labels(labels, best_d2, sites, field, kind, grid, cells=None, confirm=True):
    """Wrap an existing labeling (e.g. the greedy builder's) as a diagram."""
    diagram = LabeledDiagram(grid, DistanceKind.parse(kind), np.asarray(sites, dtype=float), field,
                             np.asarray(labels).reshape(grid.res), best_d2, cells=cells)
    _build_components(diagram)
    if confirm:
        find_orphans(diagram)
    else:
        diagram.orphans = list(diagram.candidates)
    return diagram


def _refined_window_confirms(diagram: LabeledDiagram, comp: Component, pad: int = 2,
                             max_level: int = 3) -> bool:
    """Relabel a padded window around ``comp`` at 2x, 4x, ... resolution.

    The candidate is confirmed once some refined piece of the same site inside
    its footprint is enclosed (touches no window face interior to the domain,
    does not hold the site) and has a cell off the label boundary.  A level
    with no enclosed piece means the candidate reconnected.
    """
    grid = diagram.grid
    idx = np.stack(np.unravel_index(comp.cells, grid.res), axis=1)
    res = np.asarray(grid.res)
    lo = np.maximum(idx.min(axis=0) - pad, 0)
    hi = np.minimum(idx.max(axis=0) + pad + 1, res)
    h = grid.spacing
    wmin = np.asarray(grid.box_min) + lo * h
    wmax = np.asarray(grid.box_min) + hi * h
    ls = diagram.kind is DistanceKind.LS
    qsites = site_tensors(diagram.field, diagram.sites) if ls else None
    v = comp.site
    site = diagram.sites[v]
    local = idx - lo
    for level in range(1, max_level + 1):
        f = 2**level
        sub = Grid(tuple(wmin), tuple(wmax), tuple(int(x) for x in f * (hi - lo)))
        pts = sub.centers()
        q = None
        if not ls:
            m = diagram.field.root(pts)
            q = m @ m
            q = 0.5 * (q + np.swapaxes(q, -1, -2))
        lab, _ = kernels.label_sites(pts, q, diagram.sites, qsites, ls)
        lab = lab.reshape(sub.res)
        comp_ids, _ = kernels.label_components(lab.ravel(), sub.res)
        comp_ids = comp_ids.reshape(sub.res)
        # subcells covered by the coarse candidate
        foot = np.zeros(sub.res, dtype=bool)
        for offset in np.ndindex(*([f] * grid.dim)):
            foot[tuple((f * local + np.asarray(offset)).T)] = True
        hits = np.unique(comp_ids[foot & (lab == v)])
        # ids touching a window face that is interior to the domain
        open_ids = set()
        for a in range(grid.dim):
            if lo[a] > 0:
                open_ids.update(np.take(comp_ids, 0, axis=a).ravel().tolist())
            if hi[a] < res[a]:
                open_ids.update(np.take(comp_ids, -1, axis=a).ravel().tolist())
        if np.all((site >= wmin) & (site <= wmax)):
            open_ids.add(int(comp_ids.ravel()[sub.cell_index(site)[0]]))
        enclosed = [int(x) for x in hits if int(x) not in open_ids]
        if not enclosed:
            return False
        interior = ~label_boundary_mask(lab)
        if np.any(np.isin(comp_ids[interior], enclosed)):
            return True
    return False


def find_orphans(diagram: LabeledDiagram, pad: int = 2, max_level: int = 3) -> list[Component]:
    """Confirm orphan candidates on locally refined windows.

    Every candidate is re-labelled at up to ``2**max_level`` times the
    resolution; those that reconnect or stay a thin sliver at every level are
    kept as resolution suspects instead of orphans.
    """
    confirmed, suspects = [], []
    for comp in diagram.candidates:
        if _refined_window_confirms(diagram, comp, pad, max_level):
            confirmed.append(comp)
        else:
            suspects.append(comp)
    diagram.orphans = confirmed
    diagram.suspects = suspects
    if suspects:
        diagram.resolution_suspect = True
    return confirmed


def nearest_sites(diagram: LabeledDiagram, points, candidates=None) -> tuple[np.ndarray, np.ndarray]:
    """Exact nearest site for arbitrary points among per-point candidate lists.

    ``candidates`` is an ``(k, c)`` integer array (``-1`` = unused slot); by
    default every site is a candidate.  Returns ``(site index, squared distance)``.
    """
    points = np.atleast_2d(points)
    k = len(points)
    sites = diagram.sites
    if candidates is None:
        candidates = np.broadcast_to(np.arange(len(sites)), (k, len(sites)))
    candidates = np.asarray(candidates)
    valid = candidates >= 0
    cand = np.where(valid, candidates, 0)
    if diagram.kind is DistanceKind.LS:
        qsite = site_tensors(diagram.field, sites)
        d2 = squared_distances("LS", sites[cand], qsite[cand], points[:, None, :], None)
    else:
        m = diagram.field.root(points)
        qp = m @ m
        qp = 0.5 * (qp + np.swapaxes(qp, -1, -2))
        d2 = squared_distances("DW", sites[cand], None, points[:, None, :], qp[:, None])
    d2 = np.where(valid, d2, np.inf)
    # ties go to the lowest site index
    best = np.full(k, np.inf)
    arg = np.full(k, -1, dtype=np.int64)
    for j in range(cand.shape[1]):
        dj, sj = d2[:, j], cand[:, j]
        better = valid[:, j] & ((dj < best) | ((dj == best) & (sj < arg)))
        best[better] = dj[better]
        arg[better] = sj[better]
    return arg, best


def _stencil_candidates(diagram: LabeledDiagram, points, extra) -> np.ndarray:
    grid = diagram.grid
    base = np.stack(np.unravel_index(grid.cell_index(points), grid.res), axis=1)
    offs = np.stack([g.ravel() for g in np.meshgrid(*([np.array([-1, 0, 1])] * grid.dim),
                                                   indexing="ij")], axis=1)
    nb = base[:, None, :] + offs[None]
    nb = np.clip(nb, 0, np.asarray(grid.res) - 1)
    labs = diagram.labels[tuple(np.moveaxis(nb, -1, 0))]
    return np.concatenate([labs, np.asarray(extra).reshape(-1, 1)], axis=1)


@dataclass
class StarViolation:
    site: int
    boundary_cell: int
    point: np.ndarray
    nearest: int
    gap: float


def check_star_shaped(diagram: LabeledDiagram, samples_per_cell: int = 4,
                      tolerance: float | None = None, report_shallow: bool = False) -> list[StarViolation]:
    """Sample segments from each region-boundary cell back to its site.

    A sample whose nearest site is not the owner is a violation only when the
    owner's distance exceeds the winner's by more than ``tolerance`` (default:
    twice the largest root norm times one cell diagonal, i.e. the distance gap
    that a one-diagonal displacement from the boundary can produce).
    """
    grid = diagram.grid
    if tolerance is None:
        rho = diagram.cells.rho_max if diagram.cells is not None \
            else CellTensors.build(diagram.field, grid).rho_max
        tolerance = 2.0 * rho * grid.cell_diagonal
    h = float(np.min(grid.spacing))
    flat = diagram.labels.ravel()
    boundary = np.flatnonzero(diagram.boundary_mask().ravel())
    if len(boundary) == 0:
        return []
    centers = grid.centers()
    out: list[StarViolation] = []
    by_site = np.argsort(flat[boundary], kind="stable")
    bsorted = boundary[by_site]
    lab_sorted = flat[bsorted]
    splits = np.flatnonzero(np.diff(lab_sorted)) + 1
    for cells in np.split(bsorted, splits):
        v = int(flat[cells[0]])
        site = diagram.sites[v]
        q = centers[cells]
        length = np.linalg.norm(site - q, axis=1)
        nsamp = np.maximum(1, np.ceil(length / h * samples_per_cell).astype(int))
        owner = np.repeat(np.arange(len(cells)), nsamp)
        t = np.concatenate([np.arange(1, k + 1) / k for k in nsamp])
        pts = q[owner] + t[:, None] * (site - q[owner])
        cand = _stencil_candidates(diagram, pts, np.full(len(pts), v))
        nearest, d2 = nearest_sites(diagram, pts, cand)
        bad = np.flatnonzero(nearest != v)
        if len(bad) == 0:
            continue
        _, d2v = nearest_sites(diagram, pts[bad], np.full((len(bad), 1), v))
        gap = np.sqrt(d2v) - np.sqrt(d2[bad])
        for j, g in zip(bad, gap):
            if g > tolerance or report_shallow:
                out.append(StarViolation(v, int(cells[owner[j]]), pts[j], int(nearest[j]), float(g)))
    return out


@dataclass
class NeighborWitness:
    v: int
    w: int
    c: np.ndarray
    m: np.ndarray
    residual: float
    c_prime: np.ndarray | None = None
    face: tuple = ()


def neighbor_faces(labels: np.ndarray):
    """Face-adjacent cell pairs with different labels: ``(cell_a, cell_b)`` arrays."""
    idx = np.arange(labels.size).reshape(labels.shape)
    fa, fb = [], []
    for a in range(labels.ndim):
        lo = [slice(None)] * labels.ndim
        hi = [slice(None)] * labels.ndim
        lo[a] = slice(0, -1)
        hi[a] = slice(1, None)
        diff = labels[tuple(lo)] != labels[tuple(hi)]
        fa.append(idx[tuple(lo)][diff])
        fb.append(idx[tuple(hi)][diff])
    return np.concatenate(fa), np.concatenate(fb)


def neighbor_pairs(diagram: LabeledDiagram) -> np.ndarray:
    """Unordered site pairs ``(v < w)`` whose regions share a grid face."""
    fa, fb = neighbor_faces(diagram.labels)
    flat = diagram.labels.ravel()
    pairs = np.sort(np.stack([flat[fa], flat[fb]], axis=1), axis=1)
    return np.unique(pairs, axis=0) if len(pairs) else pairs.reshape(0, 2)


def _distance_gap(diagram, v, w, x):
    """``D(v, x) - D(w, x)`` and ``max(D)`` for rows of ``x``."""
    sites = diagram.sites
    if diagram.kind is DistanceKind.LS:
        mv = diagram.field.root(sites[v])
        mw = diagram.field.root(sites[w])
        dv = np.linalg.norm(np.einsum("kij,kj->ki", mv, sites[v] - x), axis=1)
        dw = np.linalg.norm(np.einsum("kij,kj->ki", mw, sites[w] - x), axis=1)
    else:
        mx = diagram.field.root(x)
        dv = np.linalg.norm(np.einsum("kij,kj->ki", mx, sites[v] - x), axis=1)
        dw = np.linalg.norm(np.einsum("kij,kj->ki", mx, sites[w] - x), axis=1)
    return dv - dw, np.maximum(dv, dw)


def find_neighbor_witnesses(diagram: LabeledDiagram, per_pair: int = 3, max_iter: int = 200,
                            rel_tol: float = 1e-9):
    """Equidistant points on region boundaries by bisection across label faces.

    Returns ``(witnesses, dropped)`` where ``dropped`` lists ``(v, w)`` pairs
    whose bisection did not reach the residual tolerance.
    """
    fa, fb = neighbor_faces(diagram.labels)
    if len(fa) == 0:
        return [], []
    flat = diagram.labels.ravel()
    la, lb = flat[fa], flat[fb]
    key = np.minimum(la, lb) * (len(diagram.sites) + 1) + np.maximum(la, lb)
    order = np.lexsort((fa, key))
    key_sorted = key[order]
    splits = np.flatnonzero(np.diff(key_sorted)) + 1
    chosen = []
    for group in np.split(order, splits):
        k = min(per_pair, len(group))
        pick = np.unique(np.linspace(0, len(group) - 1, k + 2)[1:-1].round().astype(int)) \
            if len(group) > 2 else np.arange(len(group))
        chosen.extend(group[pick[:per_pair]].tolist())
    chosen = np.asarray(chosen)
    grid = diagram.grid
    centers = grid.centers()
    p0, p1 = centers[fa[chosen]], centers[fb[chosen]]
    v, w = la[chosen], lb[chosen]
    lo = np.zeros(len(chosen))
    hi = np.ones(len(chosen))
    c = np.full((len(chosen), grid.dim), np.nan)
    resid = np.full(len(chosen), np.inf)
    active = np.arange(len(chosen))
    for _ in range(max_iter):
        if len(active) == 0:
            break
        mid = 0.5 * (lo[active] + hi[active])
        x = p0[active] + mid[:, None] * (p1[active] - p0[active])
        f, scale = _distance_gap(diagram, v[active], w[active], x)
        done = np.abs(f) < rel_tol * scale
        c[active[done]] = x[done]
        resid[active[done]] = np.abs(f[done]) / scale[done]
        left = f <= 0
        lo[active[left]] = mid[left]
        hi[active[~left]] = mid[~left]
        active = active[~done]
    sites = diagram.sites
    out = [
        NeighborWitness(int(v[i]), int(w[i]), c[i], 0.5 * (sites[v[i]] + sites[w[i]]),
                        float(resid[i]), None, (int(fa[chosen[i]]), int(fb[chosen[i]])))
        for i in range(len(chosen)) if np.isfinite(resid[i])
    ]
    dropped = [(int(v[i]), int(w[i])) for i in active]
    return out, dropped


@dataclass
class PhiProfile:
    lambdas: np.ndarray
    values: np.ndarray
    crossings: list
    c_primes: list


def segment_points(kind, v, c, lambdas):
    """Points ``p(lambda)``: from ``c`` toward ``v`` for DW, from ``v`` toward ``c`` for LS."""
    lam = np.asarray(lambdas)[:, None]
    if DistanceKind.parse(kind) is DistanceKind.DW:
        return c * (1.0 - lam) + v * lam
    return v * (1.0 - lam) + c * lam


def phi_values(kind, v, w, field: MetricField, epsilon, pts) -> np.ndarray:
    kind = DistanceKind.parse(kind)
    if kind is DistanceKind.DW:
        m = 0.5 * (v + w)
        mp = field.root(pts)
        qp = mp @ mp
        return np.einsum("i,kij,kj->k", w - v, qp, m - pts) / epsilon**2
    mv, mw = field.root(v), field.root(w)
    dw = np.linalg.norm((w - pts) @ mw.T, axis=1)
    dv = np.linalg.norm((v - pts) @ mv.T, axis=1)
    return (dw - dv) / epsilon**2


def phi_profile(v, w, c, field: MetricField, kind, epsilon: float, samples: int = 1024) -> PhiProfile:
    """Sample phi along the witness segment and locate its extra zeros.

    The known zero at ``c`` (lambda = 0 for DW, 1 for LS) is excluded; other
    sign changes are bisected to give candidate ``c'`` points.
    """
    if not epsilon > 0:
        raise InvalidArgument("epsilon must be positive")
    kind = DistanceKind.parse(kind)
    v, w, c = (np.asarray(x, dtype=float) for x in (v, w, c))
    lam = np.linspace(0.0, 1.0, samples)
    vals = phi_values(kind, v, w, field, epsilon, segment_points(kind, v, c, lam))
    inner = slice(1, samples) if kind is DistanceKind.DW else slice(0, samples - 1)
    idx = np.arange(samples)[inner]
    s = np.sign(vals[inner])
    crossings, cps = [], []
    for j in np.flatnonzero(s[:-1] * s[1:] < 0):
        a, b = lam[idx[j]], lam[idx[j + 1]]
        fa = vals[idx[j]]
        for _ in range(60):
            mid = 0.5 * (a + b)
            fm = phi_values(kind, v, w, field, epsilon, segment_points(kind, v, c, [mid]))[0]
            if (fm < 0) == (fa < 0):
                a, fa = mid, fm
            else:
                b = mid
        root = 0.5 * (a + b)
        crossings.append(root)
        cps.append(segment_points(kind, v, c, [root])[0])
    return PhiProfile(lam, vals, crossings, cps)
