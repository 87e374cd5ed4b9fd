"""Asymmetric epsilon-nets: cover/packing checks and greedy farthest-point
construction on grid cell centers."""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import kernels
from .diagram import CellTensors, LabeledDiagram, diagram_from_labels, site_tensors
from .distance import DistanceKind
from .errors import BudgetExhausted, InvalidArgument, MetricError
from .grid import Grid
from .metric import MetricField


@dataclass
class Insertion:
    point: np.ndarray
    distance: float  # farthest distance at the time of insertion (inf for the first site)


@dataclass
class AsymmetricNet:
    sites: np.ndarray
    epsilon: float
    kind: DistanceKind
    history: list = dc_field(default_factory=list)
    grid: Grid | None = None
    seed: int = 0
    diagram: LabeledDiagram | None = dc_field(default=None, repr=False, compare=False)

    @property
    def packing_radius(self) -> float:
        """Distance at which the last site went in; pairwise separation is at least this."""
        finite = [h.distance for h in self.history if math.isfinite(h.distance)]
        return finite[-1] if finite else math.inf

    def __len__(self):
        return len(self.sites)

    def sidecar(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "kind": self.kind.value,
            "grid": self.grid.to_dict() if self.grid is not None else None,
            "seed": self.seed,
            "n_sites": len(self.sites),
            "insertion_distances": [h.distance if math.isfinite(h.distance) else None
                                    for h in self.history],
        }

    def save(self, directory, stem="net"):
        from .report import canonical_json

        os.makedirs(directory, exist_ok=True)
        write_sites_csv(os.path.join(directory, f"{stem}_sites.csv"), self.sites)
        with open(os.path.join(directory, f"{stem}.json"), "w") as fh:
            fh.write(canonical_json(self.sidecar()))

    @classmethod
    def load(cls, directory, stem="net") -> "AsymmetricNet":
        sites = read_sites_csv(os.path.join(directory, f"{stem}_sites.csv"))
        with open(os.path.join(directory, f"{stem}.json")) as fh:
            meta = json.load(fh)
        dists = meta.get("insertion_distances") or [None] * len(sites)
        history = [Insertion(p, math.inf if d is None else float(d)) for p, d in zip(sites, dists)]
        grid = Grid.from_dict(meta["grid"]) if meta.get("grid") else None
        return cls(sites, float(meta["epsilon"]), DistanceKind.parse(meta["kind"]), history,
                   grid, int(meta.get("seed", 0)))


def write_sites_csv(path, sites):
    sites = np.atleast_2d(sites)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(sites.shape[1])])
        for row in sites:
            w.writerow([format(float(x), ".17g") for x in row])


def read_sites_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.asarray([[float(x) for x in r] for r in rows[1:]], dtype=float)


@dataclass
class CoverResult:
    holds: bool
    worst_point: np.ndarray
    worst_distance: float


@dataclass
class PackingResult:
    holds: bool
    violating_pair: tuple | None
    strong_rate: float  # fraction of pairs with BOTH directed distances > epsilon


def check_cover(sites, epsilon, field: MetricField, kind, grid: Grid,
                cells: CellTensors | None = None) -> CoverResult:
    """Max over cell centers of the distance to the nearest site, against ``epsilon``."""
    kind = DistanceKind.parse(kind)
    sites = np.ascontiguousarray(np.atleast_2d(np.asarray(sites, dtype=float)))
    if len(sites) == 0:
        raise InvalidArgument("need at least one site")
    if cells is None:
        cells = CellTensors.build(field, grid)
    ls = kind is DistanceKind.LS
    _, best = kernels.label_sites(cells.centers, None if ls else cells.q, sites,
                                  site_tensors(field, sites) if ls else None, ls)
    j = int(np.argmax(best))
    worst = math.sqrt(best[j])
    return CoverResult(worst <= epsilon, cells.centers[j].copy(), worst)


def directed_distances(sites, field: MetricField, kind, rows=None) -> np.ndarray:
    """``D[i, j] = D(site_i, site_j)`` (site i first) for ``i`` in ``rows``."""
    kind = DistanceKind.parse(kind)
    sites = np.atleast_2d(sites)
    rows = np.arange(len(sites)) if rows is None else np.asarray(rows)
    m = field.root(sites)
    diff = sites[rows][:, None, :] - sites[None, :, :]
    if kind is DistanceKind.LS:
        vec = np.einsum("aij,abj->abi", m[rows], diff)
    else:
        vec = np.einsum("bij,abj->abi", m, diff)
    return np.linalg.norm(vec, axis=-1)


def check_packing(sites, epsilon, field: MetricField, kind, block: int = 256) -> PackingResult:
    """OR-form packing: every pair has at least one directed distance > epsilon."""
    sites = np.atleast_2d(np.asarray(sites, dtype=float))
    k = len(sites)
    if k < 2:
        return PackingResult(True, None, 1.0)
    first = None
    strong = 0
    total = k * (k - 1) // 2
    dist = np.empty((k, k))
    for start in range(0, k, block):
        rows = np.arange(start, min(k, start + block))
        dist[rows] = directed_distances(sites, field, kind, rows)
    far = dist > epsilon
    iu = np.triu_indices(k, 1)
    ok = far[iu] | far.T[iu]
    strong = int(np.count_nonzero(far[iu] & far.T[iu]))
    if not np.all(ok):
        j = int(np.argmin(ok))
        first = (int(iu[0][j]), int(iu[1][j]))
    return PackingResult(first is None, first, strong / total)


@dataclass
class StopRule:
    """When the greedy builder stops.

    The primary criterion is met once the cover radius is at most
    ``target_epsilon`` and at least ``min_sites`` sites exist (either may be
    unset).  With ``orphan_free`` the builder then keeps inserting, checking
    the diagram every ``check_every`` insertions, until it has no orphans.
    ``max_sites`` is a hard budget.
    """

    target_epsilon: float | None = None
    max_sites: int | None = None
    orphan_free: bool = False
    min_sites: int | None = None
    check_every: int = 8

    def __post_init__(self):
        if self.target_epsilon is None and self.max_sites is None and not self.orphan_free \
                and self.min_sites is None:
            raise InvalidArgument("stop rule needs at least one criterion")
        if self.check_every < 1:
            raise InvalidArgument("check_every must be >= 1")

    def primary_met(self, n_sites: int, radius: float) -> bool:
        if self.target_epsilon is not None and radius > self.target_epsilon:
            return False
        if self.min_sites is not None and n_sites < self.min_sites:
            return False
        if self.target_epsilon is None and self.min_sites is None and not self.orphan_free:
            return False  # only a site budget: run until it is spent
        return True

    def to_dict(self) -> dict:
        return {"target_epsilon": self.target_epsilon, "max_sites": self.max_sites,
                "orphan_free": self.orphan_free, "min_sites": self.min_sites,
                "check_every": self.check_every}


def greedy_build(field: MetricField, kind, grid: Grid, stop: StopRule, seed_site=None,
                 cells: CellTensors | None = None, seed: int = 0) -> AsymmetricNet:
    """Farthest-point insertion over cell centers (site-first distances).

    Ties for the farthest cell go to the lowest linear index.  The reported
    ``epsilon`` is the cover radius of the final site set.
    """
    kind = DistanceKind.parse(kind)
    ls = kind is DistanceKind.LS
    if cells is None:
        cells = CellTensors.build(field, grid)
    n = grid.dim
    best = np.full(grid.ncells, np.inf)
    labels = np.full(grid.ncells, -1, dtype=np.int64)
    sites: list[np.ndarray] = []
    history: list[Insertion] = []

    def insert(point, dist):
        point = np.asarray(point, dtype=float)
        qsite = site_tensors(field, point)[0] if ls else np.zeros((n, n))
        kernels.update_nearest(cells.centers, None if ls else cells.q, point, qsite,
                               len(sites), best, labels, ls)
        sites.append(point)
        history.append(Insertion(point, dist))

    if seed_site is None:
        centre = np.ravel_multi_index(tuple((r - 1) // 2 for r in grid.res), grid.res)
        insert(cells.centers[centre].copy(), math.inf)
    else:
        seed_site = np.asarray(seed_site, dtype=float)
        grid.require_inside(seed_site, "seed site")
        insert(seed_site, math.inf)

    diagram = None
    primary_at = None
    prev = math.inf
    while True:
        far = int(np.argmax(best))
        radius = math.sqrt(best[far])
        if not math.isfinite(radius):
            raise MetricError("non-finite distance during greedy insertion")
        count = len(sites)
        if primary_at is None and stop.primary_met(count, radius):
            primary_at = count
        if primary_at is not None:
            if not stop.orphan_free:
                break
            if (count - primary_at) % stop.check_every == 0:
                diagram = diagram_from_labels(labels.copy(), best.copy(), np.array(sites), field,
                                              kind, grid, cells)
                if diagram.orphan_free:
                    break
        if stop.max_sites is not None and count >= stop.max_sites:
            if stop.orphan_free or stop.target_epsilon is not None or stop.min_sites is not None:
                net = AsymmetricNet(np.array(sites), radius, kind, history, grid, seed)
                if diagram is None or len(diagram.sites) != count:
                    diagram = diagram_from_labels(labels.copy(), best.copy(), np.array(sites),
                                                  field, kind, grid, cells)
                net.diagram = diagram
                raise BudgetExhausted(
                    f"site budget {stop.max_sites} spent before the stop criterion was met",
                    net, diagram)
            break
        if radius == 0.0:
            break
        assert radius <= prev, "greedy farthest distances must be nonincreasing"
        prev = radius
        insert(cells.centers[far].copy(), radius)

    sites_arr = np.array(sites)
    net = AsymmetricNet(sites_arr, radius, kind, history, grid, seed)
    if diagram is None or len(diagram.sites) != len(sites_arr):
        diagram = diagram_from_labels(labels, best, sites_arr, field, kind, grid, cells)
    net.diagram = diagram
    return net
