"""SPD metric fields, their symmetric square roots, and the maximum-variation
constant sigma.

A metric field maps each domain point ``p`` to an SPD tensor ``Q_p``.  Every
distance in the package is measured through the unique symmetric positive
definite root ``M_p`` (``M_p @ M_p == Q_p``).  Analytic presets return ``M``
in closed form; piecewise-linear grid fields interpolate ``Q`` and take the
root per query point.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import (
    ConvergenceFailure,
    DomainError,
    InvalidArgument,
    MetricError,
    NotPositiveDefinite,
)

PD_TOL = 1e-12
DEFAULT_CONDITION_CAP = 1e4
DEFAULT_PAIR_BUDGET = 2_000_000

PRESETS = ("identity", "constant", "axis-scaling", "swirl", "radial-bump", "shear-bump")


# ---------------------------------------------------------------------------
# dense linear algebra


def _as_square(a, name="matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgument(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidArgument(f"{name} has non-finite entries")
    return a


def _as_symmetric(q) -> np.ndarray:
    q = _as_square(q)
    scale = max(np.abs(q).max(), 1.0)
    if np.abs(q - q.T).max() > 1e-14 * scale:
        raise InvalidArgument("matrix is not symmetric")
    return 0.5 * (q + q.T)


def spd_sqrt(q) -> np.ndarray:
    """Symmetric PD square root ``R diag(sqrt(lam)) R^T`` via eigendecomposition."""
    q = _as_symmetric(q)
    lam, r = np.linalg.eigh(q)
    if lam[0] <= PD_TOL * max(np.trace(q), PD_TOL):
        raise NotPositiveDefinite(f"smallest eigenvalue {lam[0]:.3g} is not positive")
    m = (r * np.sqrt(lam)) @ r.T
    return 0.5 * (m + m.T)


def series_coefficient(i: int) -> float:
    """Coefficient of ``(x - 1)**i`` in the Taylor series of ``sqrt(x)`` about 1."""
    return ((-1) ** i * math.factorial(2 * i)) / (
        (1 - 2 * i) * math.factorial(i) ** 2 * 4**i
    )


def spd_sqrt_series(q, max_terms: int = 100_000, tol: float = 1e-12) -> np.ndarray:
    """Square root of an SPD matrix from the binomial power series.

    ``Q`` is first divided by its spectral radius so the series in ``Q - I``
    converges, and the sum is multiplied back by ``sqrt(rho(Q))``.  Stops when
    the Frobenius norm of a term falls below ``tol``.  After scaling the term
    ratio tends to ``1 - 1/cond(Q)``, so well-conditioned input needs a few
    dozen terms and condition numbers near 1e3 need about 1e4.
    """
    q = _as_symmetric(q)
    lam = np.linalg.eigvalsh(q)
    if lam[0] <= PD_TOL * max(np.trace(q), PD_TOL):
        raise NotPositiveDefinite(f"smallest eigenvalue {lam[0]:.3g} is not positive")
    rho = lam[-1]
    n = q.shape[0]
    x = q / rho - np.eye(n)
    total = np.eye(n)
    power = np.eye(n)
    coef = 1.0
    residual = np.inf
    for i in range(1, max_terms + 1):
        # c_i / c_{i-1} = (3 - 2i) / (2i)
        coef *= (3.0 - 2.0 * i) / (2.0 * i)
        power = power @ x
        term = coef * power
        total = total + term
        residual = float(np.linalg.norm(term))
        if residual < tol:
            total = 0.5 * (total + total.T)
            return total * math.sqrt(rho)
    raise ConvergenceFailure(
        f"series did not converge in {max_terms} terms (last term {residual:.3g})",
        residual,
    )


def spectral_norm(a) -> float:
    """Largest singular value, ``sup |A r| / |r|``."""
    a = _as_square(a)
    return float(np.linalg.svd(a, compute_uv=False)[0])


def spectral_min(a) -> float:
    """Smallest singular value, ``inf |A r| / |r|``."""
    a = _as_square(a)
    return float(np.linalg.svd(a, compute_uv=False)[-1])


def batch_singular_extremes(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Largest and smallest singular values of a stack of square matrices."""
    a = np.asarray(a, dtype=float)
    if a.shape[-1] == 1:
        s = np.abs(a[..., 0, 0])
        return s, s.copy()
    if a.shape[-1] == 2:
        p, q = a[..., 0, 0], a[..., 0, 1]
        r, s = a[..., 1, 0], a[..., 1, 1]
        big = np.hypot(p + s, r - q)
        small = np.hypot(p - s, q + r)
        smax = 0.5 * (big + small)
        det = np.abs(p * s - q * r)
        with np.errstate(invalid="ignore", divide="ignore"):
            smin = np.where(smax > 0, det / smax, 0.0)
        return smax, smin
    sv = np.linalg.svd(a, compute_uv=False)
    return sv[..., 0], sv[..., -1]


def batch_spectral_norm(a: np.ndarray) -> np.ndarray:
    return batch_singular_extremes(a)[0]


def batch_spd_sqrt(q: np.ndarray) -> np.ndarray:
    """Symmetric roots of a stack of SPD matrices; raises on a non-PD member."""
    lam, r = np.linalg.eigh(q)
    tr = np.trace(q, axis1=-2, axis2=-1)
    bad = lam[..., 0] <= PD_TOL * np.maximum(tr, PD_TOL)
    if np.any(bad):
        raise NotPositiveDefinite("interpolated metric is not positive definite")
    m = (r * np.sqrt(lam)[..., None, :]) @ np.swapaxes(r, -1, -2)
    return 0.5 * (m + np.swapaxes(m, -1, -2))


@dataclass
class SpdMatrix:
    """A small dense SPD matrix with a lazily computed symmetric root."""

    entries: np.ndarray
    sqrt_cache: np.ndarray | None = dc_field(default=None, repr=False)

    def __post_init__(self):
        q = _as_symmetric(self.entries)
        lam = np.linalg.eigvalsh(q)
        if lam[0] <= PD_TOL * np.trace(q):
            raise NotPositiveDefinite(f"smallest eigenvalue {lam[0]:.3g} is not positive")
        self.entries = q

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def sqrt(self) -> np.ndarray:
        if self.sqrt_cache is None:
            self.sqrt_cache = spd_sqrt(self.entries)
        return self.sqrt_cache

    def condition_number(self) -> float:
        lam = np.linalg.eigvalsh(self.entries)
        return float(lam[-1] / lam[0])


# ---------------------------------------------------------------------------
# metric fields


def _rank_one_root(u: np.ndarray, c: np.ndarray, n: int) -> np.ndarray:
    """Root of ``I + c u u^T`` (batched): ``I + c / (1 + sqrt(1 + c|u|^2)) u u^T``."""
    s = np.einsum("ki,ki->k", u, u)
    coef = c / (1.0 + np.sqrt(1.0 + c * s))
    return np.eye(n)[None] + coef[:, None, None] * (u[:, :, None] * u[:, None, :])


@dataclass
class MetricField:
    """Spatially varying SPD metric over a box.

    ``preset`` is one of :data:`PRESETS` (``params`` holds its parameters), or
    ``"pl-grid"`` in which case ``values`` holds one SPD matrix per node of a
    ``res``-node lattice spanning ``box_min``..``box_max``.
    """

    dim: int
    preset: str = "identity"
    params: dict = dc_field(default_factory=dict)
    box_min: tuple | None = None
    box_max: tuple | None = None
    res: tuple | None = None
    values: np.ndarray | None = dc_field(default=None, repr=False)
    condition_cap: float = DEFAULT_CONDITION_CAP
    _const_root: np.ndarray | None = dc_field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidArgument("dim must be positive")
        if self.condition_cap < 1:
            raise InvalidArgument("condition_cap must be >= 1")
        if self.preset == "pl-grid":
            self.values = np.asarray(self.values, dtype=float)
            self.res = tuple(int(r) for r in self.res)
            self.box_min = tuple(float(x) for x in self.box_min)
            self.box_max = tuple(float(x) for x in self.box_max)
            if len(self.res) != self.dim or any(r < 2 for r in self.res):
                raise InvalidArgument("pl-grid needs >= 2 nodes per axis")
            expected = (int(np.prod(self.res)), self.dim, self.dim)
            if self.values.shape != expected:
                raise InvalidArgument(f"pl-grid values must have shape {expected}")
            for q in self.values:
                m = SpdMatrix(q)
                if m.condition_number() > self.condition_cap:
                    raise MetricError("pl-grid vertex exceeds condition cap")
        elif self.preset not in PRESETS:
            raise InvalidArgument(f"unknown metric preset {self.preset!r}")
        elif self.preset == "constant":
            mat = SpdMatrix(np.asarray(self.params["matrix"], dtype=float))
            if mat.dim != self.dim:
                raise InvalidArgument("constant matrix has the wrong size")
            if mat.condition_number() > self.condition_cap:
                raise MetricError("constant metric exceeds condition cap")
            self._const_root = mat.sqrt
        elif self.preset in ("swirl", "shear-bump") and self.dim < 2:
            raise InvalidArgument(f"{self.preset} needs dim >= 2")
        elif self.preset == "shear-bump" and abs(self.params.get("amplitude", 0.0)) >= 1:
            raise InvalidArgument("shear-bump amplitude must lie in (-1, 1)")

    # -- constructors -------------------------------------------------------

    @classmethod
    def identity(cls, dim=2, **kw):
        return cls(dim, "identity", {}, **kw)

    @classmethod
    def constant(cls, matrix, **kw):
        matrix = np.asarray(matrix, dtype=float)
        return cls(matrix.shape[0], "constant", {"matrix": matrix.tolist()}, **kw)

    @classmethod
    def axis_scaling(cls, s=0.5, dim=2, axis=0, **kw):
        """``M = diag(..)`` with entry 1 on ``axis`` and ``1 + s * x_axis`` elsewhere."""
        return cls(dim, "axis-scaling", {"s": float(s), "axis": int(axis)}, **kw)

    @classmethod
    def swirl(cls, anisotropy=1.5, twist=2.0, center=None, dim=2, **kw):
        """Stretch by ``anisotropy`` along a direction in the (x0, x1) plane that
        rotates by ``twist * r**2`` radians, ``r`` the in-plane distance to ``center``."""
        center = [0.5] * dim if center is None else [float(c) for c in center]
        return cls(
            dim,
            "swirl",
            {"anisotropy": float(anisotropy), "twist": float(twist), "center": center},
            **kw,
        )

    @classmethod
    def radial_bump(cls, amplitude=2.0, radius=0.25, center=None, dim=2, **kw):
        """``Q = I + A exp(-|u|^2) u u^T`` with ``u = (p - center) / radius``."""
        center = [0.5] * dim if center is None else [float(c) for c in center]
        return cls(
            dim,
            "radial-bump",
            {"amplitude": float(amplitude), "radius": float(radius), "center": center},
            **kw,
        )

    @classmethod
    def shear_bump(cls, amplitude=-0.3, radius=0.02, center=None, dim=2, **kw):
        """``Q = I + q(p) (e0 e1^T + e1 e0^T)``, ``q = A exp(-|p - center|^2 / radius^2)``."""
        center = [0.5] * dim if center is None else [float(c) for c in center]
        return cls(
            dim,
            "shear-bump",
            {"amplitude": float(amplitude), "radius": float(radius), "center": center},
            **kw,
        )

    @classmethod
    def pl_grid(cls, box_min, box_max, res, values, **kw):
        values = np.asarray(values, dtype=float)
        dim = len(res)
        values = values.reshape(int(np.prod(res)), dim, dim)
        return cls(dim, "pl-grid", {}, tuple(box_min), tuple(box_max), tuple(res), values, **kw)

    @classmethod
    def load_pl_grid(cls, path, **kw):
        with open(path) as fh:
            d = json.load(fh)
        n = int(d["dim"])
        vals = np.asarray(d["values"], dtype=float).reshape(-1, n, n)
        return cls.pl_grid(d["box"]["min"], d["box"]["max"], d["res"], vals, **kw)

    def save_pl_grid(self, path):
        if self.preset != "pl-grid":
            raise InvalidArgument("only pl-grid fields are stored as files")
        d = {
            "dim": self.dim,
            "box": {"min": list(self.box_min), "max": list(self.box_max)},
            "res": list(self.res),
            "values": [v.ravel().tolist() for v in self.values],
        }
        with open(path, "w") as fh:
            json.dump(d, fh)

    @property
    def kind(self) -> str:
        return "pl-grid" if self.preset == "pl-grid" else "analytic-preset"

    @property
    def is_constant(self) -> bool:
        if self.preset in ("identity", "constant"):
            return True
        p = self.params
        return (
            (self.preset == "axis-scaling" and p["s"] == 0)
            or (self.preset == "swirl" and (p["anisotropy"] == 1 or p["twist"] == 0))
            or (self.preset in ("radial-bump", "shear-bump") and p["amplitude"] == 0)
        )

    # -- evaluation ---------------------------------------------------------

    def _points(self, points) -> tuple[np.ndarray, bool]:
        p = np.asarray(points, dtype=float)
        single = p.ndim == 1
        p = np.atleast_2d(p)
        if p.shape[1] != self.dim:
            raise InvalidArgument(f"points must have {self.dim} coordinates")
        if not np.all(np.isfinite(p)):
            raise InvalidArgument("non-finite point")
        return p, single

    def _root(self, p: np.ndarray) -> np.ndarray:
        n, k = self.dim, len(p)
        kind = self.preset
        if kind == "identity":
            return np.broadcast_to(np.eye(n), (k, n, n)).copy()
        if kind == "constant":
            return np.broadcast_to(self._const_root, (k, n, n)).copy()
        if kind == "axis-scaling":
            s, axis = self.params["s"], self.params["axis"]
            scale = 1.0 + s * p[:, axis]
            if np.any(scale <= 0):
                raise MetricError("axis-scaling factor 1 + s*x is not positive here")
            m = np.zeros((k, n, n))
            for i in range(n):
                m[:, i, i] = 1.0 if i == axis else scale
            return m
        if kind == "swirl":
            a, t = self.params["anisotropy"], self.params["twist"]
            c = np.asarray(self.params["center"])
            d = p[:, :2] - c[:2]
            theta = t * np.einsum("ki,ki->k", d, d)
            u = np.zeros((k, n))
            u[:, 0] = np.cos(theta)
            u[:, 1] = np.sin(theta)
            return np.eye(n)[None] + (a - 1.0) * (u[:, :, None] * u[:, None, :])
        if kind == "radial-bump":
            amp, r = self.params["amplitude"], self.params["radius"]
            u = (p - np.asarray(self.params["center"])) / r
            g = amp * np.exp(-np.einsum("ki,ki->k", u, u))
            return _rank_one_root(u, g, n)
        if kind == "shear-bump":
            amp, r = self.params["amplitude"], self.params["radius"]
            d = p - np.asarray(self.params["center"])
            q = amp * np.exp(-np.einsum("ki,ki->k", d, d) / (r * r))
            sp, sm = np.sqrt(1.0 + q), np.sqrt(1.0 - q)
            m = np.broadcast_to(np.eye(n), (k, n, n)).copy()
            m[:, 0, 0] = m[:, 1, 1] = 0.5 * (sp + sm)
            m[:, 0, 1] = m[:, 1, 0] = 0.5 * (sp - sm)
            return m
        return batch_spd_sqrt(self._interpolate(p))

    def _interpolate(self, p: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.box_min)
        hi = np.asarray(self.box_max)
        if np.any(p < lo - 1e-12) or np.any(p > hi + 1e-12):
            raise DomainError("point outside the pl-grid box")
        res = np.asarray(self.res)
        t = (p - lo) / (hi - lo) * (res - 1)
        base = np.clip(np.floor(t).astype(np.int64), 0, res - 2)
        frac = np.clip(t - base, 0.0, 1.0)
        out = np.zeros((len(p), self.dim, self.dim))
        for corner in range(2**self.dim):
            bits = [(corner >> a) & 1 for a in range(self.dim)]
            w = np.ones(len(p))
            idx = []
            for a, b in enumerate(bits):
                w = w * (frac[:, a] if b else 1.0 - frac[:, a])
                idx.append(base[:, a] + b)
            flat = np.ravel_multi_index(tuple(idx), self.res)
            out += w[:, None, None] * self.values[flat]
        return out

    def root(self, points, check: bool = True) -> np.ndarray:
        """Symmetric root ``M`` at each point; shape ``(k, n, n)`` (or ``(n, n)``)."""
        p, single = self._points(points)
        m = self._root(p)
        if check:
            self._check(m)
        return m[0] if single else m

    def tensor(self, points, check: bool = True) -> np.ndarray:
        """Metric tensor ``Q = M @ M`` at each point."""
        p, single = self._points(points)
        m = self._root(p)
        if check:
            self._check(m)
        q = m @ m
        q = 0.5 * (q + np.swapaxes(q, -1, -2))
        return q[0] if single else q

    def at(self, point) -> SpdMatrix:
        p, _ = self._points(point)
        m = self._root(p)
        self._check(m)
        q = m[0] @ m[0]
        return SpdMatrix(0.5 * (q + q.T), sqrt_cache=m[0])

    def _check(self, m: np.ndarray):
        if not np.all(np.isfinite(m)):
            raise MetricError("metric evaluated to non-finite values")
        smax, smin = batch_singular_extremes(m)
        if np.any(smin <= 0):
            raise MetricError("metric root is singular")
        cond = (smax / smin) ** 2
        if np.any(cond > self.condition_cap * (1 + 1e-12)):
            raise MetricError(
                f"metric condition number {cond.max():.3g} exceeds cap {self.condition_cap:g}"
            )

    def to_dict(self) -> dict:
        if self.preset == "pl-grid":
            return {"pl_grid_inline": {
                "dim": self.dim,
                "box": {"min": list(self.box_min), "max": list(self.box_max)},
                "res": list(self.res),
                "values": [v.ravel().tolist() for v in self.values],
            }, "condition_cap": self.condition_cap}
        return {"preset": self.preset, "dim": self.dim, "params": self.params,
                "condition_cap": self.condition_cap}


def metric_from_spec(spec: dict, dim: int, base_dir: str | None = None) -> MetricField:
    """Build a field from a config entry ``{"preset": ..., "params": {...}}`` or
    ``{"pl_grid": "path.json"}``."""
    import os

    cap = float(spec.get("condition_cap", DEFAULT_CONDITION_CAP))
    if "pl_grid" in spec:
        path = spec["pl_grid"]
        if base_dir and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        f = MetricField.load_pl_grid(path, condition_cap=cap)
        if f.dim != dim:
            raise InvalidArgument("pl-grid dimension does not match the domain")
        return f
    if "pl_grid_inline" in spec:
        d = spec["pl_grid_inline"]
        vals = np.asarray(d["values"], dtype=float).reshape(-1, d["dim"], d["dim"])
        return MetricField.pl_grid(d["box"]["min"], d["box"]["max"], d["res"], vals,
                                   condition_cap=cap)
    preset = spec.get("preset")
    params = dict(spec.get("params", {}))
    builders = {
        "identity": lambda: MetricField.identity(dim, condition_cap=cap),
        "constant": lambda: MetricField.constant(params["matrix"], condition_cap=cap),
        "axis-scaling": lambda: MetricField.axis_scaling(dim=dim, condition_cap=cap, **params),
        "swirl": lambda: MetricField.swirl(dim=dim, condition_cap=cap, **params),
        "radial-bump": lambda: MetricField.radial_bump(dim=dim, condition_cap=cap, **params),
        "shear-bump": lambda: MetricField.shear_bump(dim=dim, condition_cap=cap, **params),
    }
    if preset not in builders:
        raise InvalidArgument(f"unknown metric preset {preset!r}")
    return builders[preset]()


# ---------------------------------------------------------------------------
# maximum variation


@dataclass
class SigmaEstimate:
    """Sampled maximum variation; always a lower bound on the true constant."""

    sigma_hat: float
    pairs_sampled: int
    refinement_rounds: int
    attaining_pair: tuple | None
    budget_exhausted: bool = False
    coarse: bool = False

    def to_dict(self) -> dict:
        pair = None
        if self.attaining_pair is not None:
            pair = [list(map(float, self.attaining_pair[0])), list(map(float, self.attaining_pair[1]))]
        return {
            "sigma_hat": self.sigma_hat,
            "pairs_sampled": self.pairs_sampled,
            "refinement_rounds": self.refinement_rounds,
            "attaining_pair": pair,
            "budget_exhausted": self.budget_exhausted,
            "coarse": self.coarse,
        }


def variation_ratio_block(pa, ma, ma_inv, pb, mb) -> np.ndarray:
    """``rho(M_b M_a^-1 - I) / |M_a (a - b)|`` for every pair in ``pa x pb``.

    Coincident pairs come back as ``-inf`` so a max-reduction skips them.
    """
    n = pa.shape[1]
    prod = mb[None, :, :, :] @ ma_inv[:, None, :, :]
    prod -= np.eye(n)
    num = batch_spectral_norm(prod)
    diff = pa[:, None, :] - pb[None, :, :]
    den = np.linalg.norm(np.einsum("aij,abj->abi", ma, diff), axis=-1)
    out = np.full(num.shape, -np.inf)
    ok = np.linalg.norm(diff, axis=-1) > 1e-12 * (1.0 + np.abs(pa).max())
    out[ok] = num[ok] / den[ok]
    return out


def _node_lattice(box_min, box_max, res) -> np.ndarray:
    axes = [np.linspace(lo, hi, int(r)) for lo, hi, r in zip(box_min, box_max, res)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _all_pairs_max(field, pts, order, budget, block, threads):
    """Max ratio over ordered pairs (a in ``order``, any b), budget-capped."""
    m = field.root(pts)
    minv = np.linalg.inv(m)
    k = len(pts)
    per_a = k - 1
    n_a = len(order)
    if budget is not None and n_a * per_a > budget:
        n_a = max(1, budget // per_a)
    exhausted = n_a < len(order)
    chunks = [order[i:i + block] for i in range(0, n_a, block)]

    def run(ch):
        r = variation_ratio_block(pts[ch], m[ch], minv[ch], pts, m)
        j = int(np.argmax(r))
        ia, ib = divmod(j, k)
        return float(r.flat[j]), int(ch[ia]), ib

    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(run, chunks))
    else:
        results = [run(ch) for ch in chunks]
    best, pair = 0.0, None
    for val, ia, ib in results:  # fixed chunk order keeps the argmax deterministic
        if val > best:
            best, pair = val, (pts[ia].copy(), pts[ib].copy())
    return best, pair, n_a * per_a, exhausted


def brute_force_sigma(field: MetricField, box_min, box_max, res, threads=1) -> SigmaEstimate:
    """Exhaustive max over all ordered pairs of a node lattice (no budget)."""
    res = tuple(int(r) for r in np.broadcast_to(res, (field.dim,)))
    pts = _node_lattice(box_min, box_max, res)
    block = max(1, 400_000 // len(pts))
    best, pair, used, _ = _all_pairs_max(field, pts, np.arange(len(pts)), None, block, threads)
    return SigmaEstimate(best, used, 0, pair)


def estimate_sigma(
    field: MetricField,
    box_min,
    box_max,
    coarse_res,
    refine_rounds: int = 4,
    pair_budget: int = DEFAULT_PAIR_BUDGET,
    seed: int = 0,
    threads: int = 1,
) -> SigmaEstimate:
    """Lower bound on sigma from a coarse node lattice plus local refinement.

    All ordered pairs of lattice nodes are scored (``a`` visited in a seeded
    order when the pair budget forces a cut), then each refinement round
    evaluates every pair among the 3^n windows around the current attaining
    pair at half the previous spacing.
    """
    dim = field.dim
    coarse_res = tuple(int(r) for r in np.broadcast_to(coarse_res, (dim,)))
    if any(r < 2 for r in coarse_res):
        raise InvalidArgument("coarse_res must be >= 2 on every axis")
    lo, hi = np.asarray(box_min, float), np.asarray(box_max, float)
    pts = _node_lattice(lo, hi, coarse_res)
    k = len(pts)
    if k * (k - 1) > pair_budget:
        order = np.random.default_rng(seed).permutation(k)
    else:
        order = np.arange(k)
    block = max(1, 400_000 // k)
    best, pair, used, exhausted = _all_pairs_max(field, pts, order, pair_budget, block, threads)

    spacing = (hi - lo) / (np.asarray(coarse_res) - 1)
    offsets = np.stack(
        [g.ravel() for g in np.meshgrid(*([np.array([-1.0, 0.0, 1.0])] * dim), indexing="ij")],
        axis=1,
    )
    rounds = 0
    for r in range(1, refine_rounds + 1):
        if pair is None:
            break
        h = spacing / 2.0**r
        # integer coordinates on the refined lattice so shared nodes dedupe exactly
        base = [np.rint((p - lo) / h).astype(np.int64) for p in pair]
        idx = np.concatenate([base[0] + offsets.astype(np.int64), base[1] + offsets.astype(np.int64)])
        top = np.rint((hi - lo) / h).astype(np.int64)
        idx = np.unique(idx[np.all((idx >= 0) & (idx <= top), axis=1)], axis=0)
        win = lo + idx * h
        val, cand, n_pairs, _ = _all_pairs_max(field, win, np.arange(len(win)), None, len(win), 1)
        used += n_pairs
        rounds += 1
        if val > best:
            best, pair = val, cand
    return SigmaEstimate(
        float(best), int(used), rounds, pair,
        budget_exhausted=exhausted, coarse=exhausted and rounds == 0,
    )
