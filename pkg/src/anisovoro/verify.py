"""Numerical checks of the orphan-freeness bounds on concrete diagrams.

Every bound is evaluated only where its hypotheses hold and carries three
slack terms: a relative ``1e-9``, one cell diagonal in metric units added to
the cover radius (cell centers only sample the continuum), and the sampled
sigma inflated by ``safety_factor`` (the estimate is a lower bound).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .diagram import CellTensors, LabeledDiagram, find_neighbor_witnesses, label_grid, phi_profile
from .distance import DistanceKind
from .errors import DemoConstructionFailure, InvalidArgument
from .grid import Grid
from .metric import MetricField, SigmaEstimate, batch_singular_extremes, estimate_sigma
from .net import AsymmetricNet, check_cover, check_packing

DW_THRESHOLD = 0.09868
LS_THRESHOLD = 0.0584
REL_TOL = 1e-9


def threshold_for(kind) -> float:
    return DW_THRESHOLD if DistanceKind.parse(kind) is DistanceKind.DW else LS_THRESHOLD


def k_factor(es):
    """``(1 + es) / (1 - es)``; needs ``es < 1``."""
    return (1.0 + es) / (1.0 - es)


def gamma_factor(es):
    return es * (1.0 + k_factor(es))


def dw_alpha_bound(es):
    return 2.0 * es**2 + 4.0 * es


def dw_beta_bound(es):
    return 1.0 / (2.0 * (1.0 + es) ** 2)


def ls_alpha_bound(es):
    g = gamma_factor(es)
    return g * g + 2.0 * g


def ls_beta_bound(es, printed: bool = False):
    """Lower bound on the LS beta.

    The derivation gives ``(1/k^2 - g^2 - 2g) / 2``; ``printed=True`` returns
    the variant with ``k^2`` in place of ``1/k^2`` (weaker support, larger value).
    """
    k = k_factor(es)
    g = gamma_factor(es)
    lead = k * k if printed else 1.0 / (k * k)
    return (lead - g * g - 2.0 * g) / 2.0


def dw_margin(es):
    return dw_beta_bound(es) - dw_alpha_bound(es)


def ls_margin(es, printed: bool = False):
    return ls_beta_bound(es, printed) - ls_alpha_bound(es)


def scalar_scan(kind, n: int = 100_000, printed: bool = False) -> tuple[float, float]:
    """Minimum of the beta-minus-alpha lower bound on ``(0, threshold]``."""
    thr = threshold_for(kind)
    es = np.linspace(thr / n, thr, n)
    if DistanceKind.parse(kind) is DistanceKind.DW:
        vals = dw_margin(es)
    else:
        vals = ls_margin(es, printed)
    j = int(np.argmin(vals))
    return float(vals[j]), float(es[j])


def dw_beta_value(v, w, c, field: MetricField, epsilon):
    """``|(c - v)^T Q_c (w - v)| / eps^2``."""
    v, w, c = (np.asarray(x, dtype=float) for x in (v, w, c))
    qc = field.tensor(c)
    return float(abs((c - v) @ qc @ (w - v)) / epsilon**2)


def dw_alpha_value(v, w, c, cp, field: MetricField, epsilon):
    """``|(|v - c| / |c - c'|) (w - v)^T (Q_c' - Q_c)(m - c')| / eps^2``."""
    v, w, c, cp = (np.asarray(x, dtype=float) for x in (v, w, c, cp))
    m = 0.5 * (v + w)
    scale = np.linalg.norm(v - c) / np.linalg.norm(c - cp)
    return float(abs(scale * (w - v) @ (field.tensor(cp) - field.tensor(c)) @ (m - cp)) / epsilon**2)


def ls_beta_value(v, w, c, field: MetricField, epsilon):
    """``|(c - v)^T Q_w (v - w)| / eps^2``."""
    v, w, c = (np.asarray(x, dtype=float) for x in (v, w, c))
    return float(abs((c - v) @ field.tensor(w) @ (v - w)) / epsilon**2)


def ls_alpha_value(v, w, c, cp, field: MetricField, epsilon):
    """``|(c - v)^T (Q_w - Q_v)(c' - v)| / eps^2``."""
    v, w, c, cp = (np.asarray(x, dtype=float) for x in (v, w, c, cp))
    return float(abs((c - v) @ (field.tensor(w) - field.tensor(v)) @ (cp - v)) / epsilon**2)


# ---------------------------------------------------------------------------
# results


@dataclass
class LemmaResult:
    lemma: str
    pairs_checked: int = 0
    violations: int = 0
    worst_margin: float = math.inf
    raw_violations: int = 0  # with the un-inflated sigma estimate
    skipped: int = 0
    asserted: bool = True
    note: str = ""

    def record(self, margin, raw_margin=None):
        margin = np.atleast_1d(np.asarray(margin, dtype=float))
        self.pairs_checked += margin.size
        self.violations += int(np.count_nonzero(margin < 0))
        if margin.size:
            self.worst_margin = min(self.worst_margin, float(margin.min()))
        if raw_margin is not None:
            self.raw_violations += int(np.count_nonzero(np.atleast_1d(raw_margin) < 0))

    def merge(self, other: "LemmaResult"):
        self.pairs_checked += other.pairs_checked
        self.violations += other.violations
        self.raw_violations += other.raw_violations
        self.skipped += other.skipped
        self.worst_margin = min(self.worst_margin, other.worst_margin)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {
            "lemma": self.lemma,
            "pairs_checked": self.pairs_checked,
            "violations": self.violations,
            "raw_violations": self.raw_violations,
            "worst_margin": self.worst_margin if self.pairs_checked else None,
            "skipped": self.skipped,
            "asserted": self.asserted,
            "note": self.note,
        }


@dataclass
class Slack:
    """Tolerances shared by every lemma check.

    ``eps`` is the grid cover radius (also the packing radius of a greedy net),
    ``eps_cover`` adds one cell diagonal in metric units, ``sigma`` is the
    inflated estimate and ``sigma_raw`` the sampled one.
    """

    eps: float
    eps_cover: float
    sigma: float
    sigma_raw: float
    rel: float = REL_TOL
    cell: float = 0.0  # Euclidean cell diagonal

    @classmethod
    def build(cls, epsilon, sigma_hat, cells: CellTensors | None, safety_factor=1.10, rel=REL_TOL):
        diag = 0.0 if cells is None else cells.grid.cell_diagonal
        cell = 0.0 if cells is None else cells.rho_max * diag
        return cls(float(epsilon), float(epsilon) + cell, safety_factor * float(sigma_hat),
                   float(sigma_hat), rel, diag)

    def es(self, raw=False):
        return self.eps_cover * (self.sigma_raw if raw else self.sigma)

    def usable(self, raw=False) -> bool:
        return self.es(raw) < 1.0


@dataclass
class ThresholdCheck:
    eps_sigma: float
    threshold: float
    below_threshold: bool
    orphan_count: int
    implication_holds: bool

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class VerificationReport:
    scenario: str
    kind: DistanceKind
    epsilon_hat: float
    sigma_hat: float
    eps_sigma: float
    threshold: float
    k: float | None
    gamma: float | None
    orphan_count: int
    implication_holds: bool
    cover_holds: bool = True
    packing_holds: bool = True
    packing_strong_rate: float = 1.0
    n_sites: int = 0
    n_witnesses: int = 0
    dropped_witnesses: int = 0
    star_violations: int | None = None
    safety_factor: float = 1.10
    lemmas: list = dc_field(default_factory=list)
    notes: list = dc_field(default_factory=list)

    @property
    def hard_violations(self) -> int:
        return sum(l.violations for l in self.lemmas if l.asserted)

    @property
    def passed(self) -> bool:
        return self.implication_holds and self.hard_violations == 0

    def lemma(self, name) -> LemmaResult | None:
        for l in self.lemmas:
            if l.lemma == name:
                return l
        return None

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "kind": self.kind.value,
            "epsilon_hat": self.epsilon_hat,
            "sigma_hat": self.sigma_hat,
            "eps_sigma": self.eps_sigma,
            "threshold": self.threshold,
            "below_threshold": self.eps_sigma <= self.threshold,
            "k": self.k,
            "gamma": self.gamma,
            "orphan_count": self.orphan_count,
            "implication_holds": self.implication_holds,
            "cover_holds": self.cover_holds,
            "packing_holds": self.packing_holds,
            "packing_strong_rate": self.packing_strong_rate,
            "n_sites": self.n_sites,
            "n_witnesses": self.n_witnesses,
            "dropped_witnesses": self.dropped_witnesses,
            "star_violations": self.star_violations,
            "safety_factor": self.safety_factor,
            "hard_violations": self.hard_violations,
            "passed": self.passed,
            "lemmas": [l.to_dict() for l in self.lemmas],
            "notes": list(self.notes),
        }


# ---------------------------------------------------------------------------
# threshold implication


def verify_threshold(net: AsymmetricNet, sigma: SigmaEstimate | float,
                     diagram: LabeledDiagram) -> ThresholdCheck:
    """Below the kind's threshold the diagram must be orphan-free (the converse
    is not claimed)."""
    if DistanceKind.parse(net.kind) is not diagram.kind:
        raise InvalidArgument("net and diagram use different distance kinds")
    s = sigma.sigma_hat if isinstance(sigma, SigmaEstimate) else float(sigma)
    es = net.epsilon * s
    thr = threshold_for(net.kind)
    below = es <= thr
    return ThresholdCheck(es, thr, below, diagram.orphan_count,
                          (not below) or diagram.orphan_count == 0)


# ---------------------------------------------------------------------------
# pair quantities


def _roots(field, pts):
    m = field.root(pts)
    return m, np.linalg.inv(m)


def _qf(q, a, b):
    """Batched ``a^T q b``."""
    return np.einsum("ki,kij,kj->k", a, q, b)


def _mv(m, x):
    return np.einsum("kij,kj->ki", m, x)


def filter_close_pairs(field: MetricField, a, b, epsilon):
    """Keep pairs with ``0 < |M_a (a - b)| <= epsilon``; returns ``(a, b, |M_a(a-b)|)``."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    dist = np.linalg.norm(_mv(field.root(a), a - b), axis=1)
    keep = (dist > 0) & (dist <= epsilon)
    return a[keep], b[keep], dist[keep]


def verify_asymmetry_lemma(field: MetricField, sigma_hat: float, epsilon: float, a, b,
                           safety_factor: float = 1.10, rel: float = REL_TOL) -> LemmaResult:
    """``1 - e*s <= rho_m(M_b M_a^-1) <= ratio <= rho(M_b M_a^-1) <= 1 + e*s``
    on the pairs with ``|M_a (a - b)| <= epsilon``."""
    res = LemmaResult("asymmetry")
    total = len(np.atleast_2d(a))
    a, b, _ = filter_close_pairs(field, a, b, epsilon)
    res.skipped = total - len(a)
    if len(a) == 0:
        return res
    ma, ma_inv = _roots(field, a)
    mb = field.root(b)
    smax, smin = batch_singular_extremes(mb @ ma_inv)
    ratio = np.linalg.norm(_mv(mb, a - b), axis=1) / np.linalg.norm(_mv(ma, a - b), axis=1)
    es = epsilon * sigma_hat * safety_factor
    es_raw = epsilon * sigma_hat
    lower = smin - (1 - es) + rel
    upper = (1 + es) - smax + rel
    inner_lo = ratio - smin + rel * smax
    inner_hi = smax - ratio + rel * smax
    raw = np.minimum.reduce([smin - (1 - es_raw) + rel, (1 + es_raw) - smax + rel, inner_lo, inner_hi])
    res.record(np.minimum.reduce([lower, upper, inner_lo, inner_hi]), raw)
    return res


def _orientations(witnesses):
    """Both (v, w) and (w, v) roles for every witness."""
    for wt in witnesses:
        yield wt.v, wt.w, wt.c
        yield wt.w, wt.v, wt.c


def _witness_arrays(net_sites, witnesses):
    ori = list(_orientations(witnesses))
    if not ori:
        return None
    v_idx = np.array([o[0] for o in ori])
    w_idx = np.array([o[1] for o in ori])
    c = np.array([o[2] for o in ori])
    return v_idx, w_idx, net_sites[v_idx], net_sites[w_idx], c


def locate_c_primes(kind, V, W, C, field, epsilon, samples=1024, block=128):
    """For each witness orientation: list of second zeros of phi along its segment."""
    kind = DistanceKind.parse(kind)
    lam = np.linspace(0.0, 1.0, samples)
    out = [[] for _ in range(len(V))]
    inner = slice(1, samples) if kind is DistanceKind.DW else slice(0, samples - 1)
    for start in range(0, len(V), block):
        sl = slice(start, min(len(V), start + block))
        v, w, c = V[sl], W[sl], C[sl]
        pts = _segment_batch(kind, v, c, lam)
        vals = _phi_batch(kind, v, w, pts, field, epsilon)
        s = np.sign(vals[:, inner])
        flips = np.any(s[:, :-1] * s[:, 1:] < 0, axis=1)
        for j in np.flatnonzero(flips):
            prof = phi_profile(v[j], w[j], c[j], field, kind, epsilon, samples)
            out[start + j] = prof.c_primes
    return out


def _segment_batch(kind, v, c, lam):
    lam = lam[None, :, None]
    if kind is DistanceKind.DW:
        return c[:, None, :] * (1.0 - lam) + v[:, None, :] * lam
    return v[:, None, :] * (1.0 - lam) + c[:, None, :] * lam


def _phi_batch(kind, v, w, pts, field, epsilon):
    k, s, n = pts.shape
    flat = pts.reshape(-1, n)
    if kind is DistanceKind.DW:
        m = 0.5 * (v + w)
        mp = field.root(flat)
        qp = (mp @ mp).reshape(k, s, n, n)
        return np.einsum("ki,ksij,ksj->ks", w - v, qp, m[:, None, :] - pts) / epsilon**2
    mv, mw = field.root(v), field.root(w)
    dw = np.linalg.norm(np.einsum("kij,ksj->ksi", mw, w[:, None, :] - pts), axis=-1)
    dv = np.linalg.norm(np.einsum("kij,ksj->ksi", mv, v[:, None, :] - pts), axis=-1)
    return (dw - dv) / epsilon**2


PROBE_LAMBDAS = (0.25, 0.5, 0.75, 1.0)


def _collect_c_primes(c_primes, ok, C, cell):
    """Flatten located c' points; those within one cell of c are counted and dropped."""
    rows, cps, degenerate = [], [], 0
    for i, lst in enumerate(c_primes):
        if not ok[i]:
            continue
        for cp in lst:
            if np.linalg.norm(cp - C[i]) < cell:
                degenerate += 1
                continue
            rows.append(i)
            cps.append(cp)
    return np.asarray(rows, dtype=int), np.asarray(cps), degenerate


def verify_dw_alpha_beta(witnesses, net: AsymmetricNet, field: MetricField, slack: Slack,
                         c_primes=None, phi_samples: int = 1024, net_ok: bool = True,
                         assert_positivity: bool = True):
    """Alpha/beta bounds of the DW argument at every witness orientation.

    Returns a list of LemmaResults: ``dw_orthogonality``, ``dw_cover_at_c``,
    ``dw_beta``, ``dw_alpha`` (at located c'), ``dw_alpha_probe`` (at probe
    points on the segment, where the bound holds equally), ``dw_beta_minus_alpha``.
    """
    eps = slack.eps
    ortho = LemmaResult("dw_orthogonality")
    cover = LemmaResult("dw_cover_at_c")
    beta_r = LemmaResult("dw_beta", note="beta at witnesses with a located c'")
    generic_r = LemmaResult("dw_beta_generic", asserted=False,
                            note="beta at witnesses without a second zero; reported only")
    alpha_r = LemmaResult("dw_alpha")
    probe_r = LemmaResult("dw_alpha_probe")
    pos_r = LemmaResult("dw_beta_minus_alpha", asserted=assert_positivity)
    results = [ortho, cover, beta_r, generic_r, alpha_r, probe_r, pos_r]
    arrs = _witness_arrays(net.sites, witnesses)
    if arrs is None:
        return results
    vi, wi, V, W, C = arrs
    mc = field.root(C)
    qc = mc @ mc
    dv = np.linalg.norm(_mv(mc, V - C), axis=1)
    dwd = np.linalg.norm(_mv(mc, W - C), axis=1)
    dmax = np.maximum(dv, dwd)
    ident = _qf(qc, W - V, V + W - 2 * C)
    ortho.record(4 * slack.rel * dmax**2 + 1e-15 - np.abs(ident))

    cover.record(slack.eps_cover * (1 + slack.rel) - dv)
    ok = (dv <= slack.eps_cover * (1 + slack.rel)) & net_ok & slack.usable()
    skipped = int(np.count_nonzero(~ok))
    for r in (beta_r, generic_r, alpha_r, probe_r, pos_r):
        r.skipped = skipped
    if not np.any(ok):
        return results
    es, es_raw = slack.es(), slack.es(raw=True)
    ratio2 = (slack.eps_cover / eps) ** 2
    beta = np.abs(_qf(qc, C - V, W - V)) / eps**2
    b_lo = dw_beta_bound(es) * (1 - slack.rel)
    b_lo_raw = dw_beta_bound(es_raw) * (1 - slack.rel)
    beta_margin, beta_raw = beta - b_lo, beta - b_lo_raw

    a_hi = ratio2 * dw_alpha_bound(es) * (1 + slack.rel) + slack.rel
    a_hi_raw = ratio2 * dw_alpha_bound(es_raw) * (1 + slack.rel) + slack.rel \
        if slack.usable(raw=True) else math.inf

    def alpha_at(idx, cp):
        v, w, c = V[idx], W[idx], C[idx]
        m = 0.5 * (v + w)
        mcp = field.root(cp)
        qcp = mcp @ mcp
        scale = np.linalg.norm(v - c, axis=-1) / np.linalg.norm(c - cp, axis=-1)
        return np.abs(scale * _qf(qcp - qc[idx], w - v, m - cp)) / eps**2

    if c_primes is None:
        c_primes = locate_c_primes("DW", V, W, C, field, eps, phi_samples)
    rows, cps, degenerate = _collect_c_primes(c_primes, ok, C, slack.cell)
    has_cp = np.zeros(len(C), dtype=bool)
    has_cp[rows] = True
    beta_r.record(beta_margin[ok & has_cp], beta_raw[ok & has_cp])
    generic_r.record(beta_margin[ok & ~has_cp], beta_raw[ok & ~has_cp])
    if degenerate:
        alpha_r.note = f"{degenerate} c' within one cell of c skipped"
    if len(rows):
        rows = np.array(rows)
        al = alpha_at(rows, np.array(cps))
        alpha_r.record(a_hi - al, a_hi_raw - al)
        pos_r.record(beta[rows] - al)
    okr = np.flatnonzero(ok)
    worst_probe = np.zeros(len(okr))
    for lam in PROBE_LAMBDAS:
        cp = C[okr] * (1 - lam) + V[okr] * lam
        good = np.linalg.norm(cp - C[okr], axis=1) > 0
        al = np.zeros(len(okr))
        if np.any(good):
            al[good] = alpha_at(okr[good], cp[good])
        probe_r.record((a_hi - al)[good], (a_hi_raw - al)[good])
        worst_probe = np.maximum(worst_probe, al)
    probe_r.note = "alpha bound at probe points of the segment c->v"
    pos_r.record(beta[okr] - worst_probe)
    pos_r.note = "beta - alpha at located c' and at probe points"
    return results


def verify_ls_alpha_beta(witnesses, net: AsymmetricNet, field: MetricField, slack: Slack,
                         c_primes=None, phi_samples: int = 1024, net_ok: bool = True,
                         assert_positivity: bool = True):
    """Alpha/beta bounds of the LS argument at every witness orientation."""
    eps = slack.eps
    cover = LemmaResult("ls_cover_at_c")
    cross = LemmaResult("ls_cross_term")
    beta_r = LemmaResult("ls_beta", note="beta at witnesses with a located c'")
    generic_r = LemmaResult("ls_beta_generic", asserted=False,
                            note="beta at witnesses without a second zero; reported only")
    printed = LemmaResult("ls_beta_printed", asserted=False,
                          note="bound with k^2 in place of 1/k^2; diagnostic only")
    alpha_r = LemmaResult("ls_alpha")
    probe_r = LemmaResult("ls_alpha_probe", note="alpha bound at probe points of the segment v->c")
    pos_r = LemmaResult("ls_beta_minus_alpha", asserted=assert_positivity,
                        note="beta - alpha at located c' and at probe points")
    results = [cover, cross, beta_r, generic_r, printed, alpha_r, probe_r, pos_r]
    arrs = _witness_arrays(net.sites, witnesses)
    if arrs is None:
        return results
    vi, wi, V, W, C = arrs
    mv = field.root(V)
    mw = field.root(W)
    qv, qw = mv @ mv, mw @ mw
    dv = np.linalg.norm(_mv(mv, V - C), axis=1)
    cover.record(slack.eps_cover * (1 + slack.rel) - dv)
    ok = (dv <= slack.eps_cover * (1 + slack.rel)) & net_ok & slack.usable()
    skipped = int(np.count_nonzero(~ok))
    for r in (cross, beta_r, generic_r, printed, alpha_r, probe_r, pos_r):
        r.skipped = skipped
    if not np.any(ok):
        return results
    es, es_raw = slack.es(), slack.es(raw=True)
    ratio2 = (slack.eps_cover / eps) ** 2
    a_hi = ratio2 * ls_alpha_bound(es) * (1 + slack.rel) + slack.rel
    a_hi_raw = ratio2 * ls_alpha_bound(es_raw) * (1 + slack.rel) + slack.rel \
        if slack.usable(raw=True) else math.inf

    cross_val = np.abs(_qf(qw, W - V, V + W - 2 * C)) / eps**2
    cross.record((a_hi - cross_val)[ok], (a_hi_raw - cross_val)[ok])

    beta = np.abs(_qf(qw, C - V, V - W)) / eps**2
    b_lo = 0.5 * (1.0 / k_factor(es) ** 2 - ratio2 * ls_alpha_bound(es)) * (1 - slack.rel) - slack.rel
    beta_margin = beta - b_lo
    beta_raw = beta - (0.5 * (1.0 / k_factor(es_raw) ** 2 - ratio2 * ls_alpha_bound(es_raw))
                       - slack.rel) if slack.usable(raw=True) else np.full(len(beta), np.inf)
    printed.record((beta - ls_beta_bound(es, printed=True))[ok],
                   (beta - ls_beta_bound(es_raw, printed=True))[ok])

    def alpha_at(idx, cp):
        v, c = V[idx], C[idx]
        return np.abs(_qf(qw[idx] - qv[idx], c - v, cp - v)) / eps**2

    if c_primes is None:
        c_primes = locate_c_primes("LS", V, W, C, field, eps, phi_samples)
    rows, cps, degenerate = _collect_c_primes(c_primes, ok, C, slack.cell)
    has_cp = np.zeros(len(C), dtype=bool)
    has_cp[rows] = True
    beta_r.record(beta_margin[ok & has_cp], beta_raw[ok & has_cp])
    generic_r.record(beta_margin[ok & ~has_cp], beta_raw[ok & ~has_cp])
    if degenerate:
        alpha_r.note = f"{degenerate} c' within one cell of c skipped"
    if len(rows):
        rows = np.array(rows)
        al = alpha_at(rows, np.array(cps))
        alpha_r.record(a_hi - al, a_hi_raw - al)
        pos_r.record(beta[rows] - al)
    okr = np.flatnonzero(ok)
    worst_probe = np.zeros(len(okr))
    for lam in PROBE_LAMBDAS:
        # LS segment runs v -> c; probe the same fractions measured from c
        cp = V[okr] * lam + C[okr] * (1 - lam)
        al = alpha_at(okr, cp)
        probe_r.record(a_hi - al, a_hi_raw - al)
        worst_probe = np.maximum(worst_probe, al)
    pos_r.record(beta[okr] - worst_probe)
    return results


def verify_appendix_lemmas(witnesses, net: AsymmetricNet, field: MetricField, slack: Slack,
                           kind, net_ok: bool = True):
    """Auxiliary matrix bounds (i)-(v) on every witnessed neighbour pair.

    (ii) is checked on DW diagrams, (iv)-(v) on LS diagrams, (i) and (iii) on both.
    """
    kind = DistanceKind.parse(kind)
    r1 = LemmaResult("appendix_i_inverse_gain")
    r2 = LemmaResult("appendix_ii_neighbor_separation")
    r3 = LemmaResult("appendix_iii_metric_comparability")
    r4 = LemmaResult("appendix_iv_ls_separation")
    r5 = LemmaResult("appendix_v_ls_tensor_variation")
    results = [r1, r3] + ([r2] if kind is DistanceKind.DW else [r4, r5])
    arrs = _witness_arrays(net.sites, witnesses)
    if arrs is None:
        return results
    _, _, V, W, C = arrs
    mv, mv_inv = _roots(field, V)
    mw, mw_inv = _roots(field, W)
    a = mw @ mv_inv
    smax, smin = batch_singular_extremes(a)
    inv_max, _ = batch_singular_extremes(np.linalg.inv(a))
    r1.record(slack.rel - np.abs(inv_max * smin - 1.0))

    if kind is DistanceKind.DW:
        mc = field.root(C)
        dv = np.linalg.norm(_mv(mc, V - C), axis=1)
    else:
        dv = np.linalg.norm(_mv(mv, V - C), axis=1)
    ok = (dv <= slack.eps_cover * (1 + slack.rel)) & net_ok & slack.usable()
    for r in results[1:]:
        r.skipped = int(np.count_nonzero(~ok))
    if not np.any(ok):
        return results
    es, es_raw = slack.es(), slack.es(raw=True)
    k, k_raw = k_factor(es), (k_factor(es_raw) if slack.usable(raw=True) else math.inf)
    tol = slack.rel
    m3 = np.minimum(smin - 1.0 / k + tol, k - smax + tol)
    m3_raw = np.minimum(smin - 1.0 / k_raw + tol, k_raw - smax + tol)
    r3.record(m3[ok], m3_raw[ok])
    if kind is DistanceKind.DW:
        sep = np.linalg.norm(_mv(mc, V - W), axis=1)
        lo = slack.eps / (1 + es) * (1 - tol)
        lo_raw = slack.eps / (1 + es_raw) * (1 - tol)
        r2.record((sep - lo)[ok], (sep - lo_raw)[ok])
    else:
        sep = np.linalg.norm(_mv(mv, V - W), axis=1)
        lo = slack.eps / k * (1 - tol)
        hi = slack.eps_cover * (1 + k) * (1 + tol)
        lo_raw = slack.eps / k_raw * (1 - tol)
        hi_raw = slack.eps_cover * (1 + k_raw) * (1 + tol)
        r4.record(np.minimum(sep - lo, hi - sep)[ok], np.minimum(sep - lo_raw, hi_raw - sep)[ok])
        n = V.shape[1]
        b = np.swapaxes(mv_inv, -1, -2) @ (mw @ mw) @ mv_inv - np.eye(n)
        rb, _ = batch_singular_extremes(b)
        g_hi = ls_alpha_bound(es) * (1 + tol) + tol
        g_hi_raw = ls_alpha_bound(es_raw) * (1 + tol) + tol if slack.usable(raw=True) else math.inf
        r5.record((g_hi - rb)[ok], (g_hi_raw - rb)[ok])
    return results


# ---------------------------------------------------------------------------
# end-to-end


def run_verification(net: AsymmetricNet, field: MetricField, sigma: SigmaEstimate | float,
                     diagram: LabeledDiagram | None = None, scenario: str = "scenario",
                     safety_factor: float = 1.10, witnesses_per_pair: int = 3,
                     phi_samples: int = 1024, star_samples: int | None = 4) -> VerificationReport:
    """Threshold implication plus every lemma check on one net."""
    from .diagram import check_star_shaped

    kind = DistanceKind.parse(net.kind)
    grid = net.grid if net.grid is not None else diagram.grid
    if diagram is None:
        diagram = net.diagram if net.diagram is not None else label_grid(net.sites, field, kind, grid)
    cells = diagram.cells if diagram.cells is not None else CellTensors.build(field, grid)
    s_hat = sigma.sigma_hat if isinstance(sigma, SigmaEstimate) else float(sigma)
    thr = verify_threshold(net, s_hat, diagram)
    slack = Slack.build(net.epsilon, s_hat, cells, safety_factor)
    es = net.epsilon * s_hat
    cov = check_cover(net.sites, net.epsilon, field, kind, grid, cells)
    pack = check_packing(net.sites, net.epsilon, field, kind)
    report = VerificationReport(
        scenario, kind, net.epsilon, s_hat, es, thr.threshold,
        k_factor(es) if es < 1 else None,
        gamma_factor(es) if es < 1 and kind is DistanceKind.LS else None,
        diagram.orphan_count, thr.implication_holds, cov.holds, pack.holds,
        pack.strong_rate, len(net.sites), safety_factor=safety_factor,
    )
    if not pack.holds:
        report.notes.append(f"packing fails at epsilon for pair {pack.violating_pair}")
    if not slack.usable():
        report.notes.append("inflated eps*sigma >= 1: lemma bounds undefined, checks skipped")
    net_ok = cov.holds and pack.holds
    witnesses, dropped = find_neighbor_witnesses(diagram, per_pair=witnesses_per_pair)
    report.n_witnesses = len(witnesses)
    report.dropped_witnesses = len(dropped)
    if kind is DistanceKind.DW:
        report.lemmas += verify_dw_alpha_beta(witnesses, net, field, slack,
                                              phi_samples=phi_samples, net_ok=net_ok,
                                              assert_positivity=thr.below_threshold)
    else:
        report.lemmas += verify_ls_alpha_beta(witnesses, net, field, slack,
                                              phi_samples=phi_samples, net_ok=net_ok,
                                              assert_positivity=thr.below_threshold)
    report.lemmas += verify_appendix_lemmas(witnesses, net, field, slack, kind, net_ok=net_ok)
    if star_samples and diagram.orphan_free:
        report.star_violations = len(check_star_shaped(diagram, star_samples))
        star = LemmaResult("star_shaped", asserted=thr.below_threshold,
                           note="sampled segment checks beyond one-cell tolerance")
        star.pairs_checked = len(net.sites)
        star.violations = report.star_violations
        star.worst_margin = 0.0 if report.star_violations else math.inf
        report.lemmas.append(star)
    return report


# ---------------------------------------------------------------------------
# cover-insufficiency demo


@dataclass
class DemoScenario:
    sites: np.ndarray
    field: MetricField
    grid: Grid
    kind: DistanceKind
    epsilon: float
    v: int
    w: int
    separation: float
    perturbation: float
    expected_orphans: int
    island_center: np.ndarray
    sweep_log: list = dc_field(default_factory=list)


DEMO_SWEEP = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


def _demo_layout(separation, lattice):
    spacing = 1.0 / lattice
    axis = (np.arange(lattice) + 0.5) * spacing
    bg = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
    centre = np.array([axis[(lattice - 1) // 2], axis[(lattice - 1) // 2]])
    bg = bg[np.any(bg != centre, axis=1)]
    v = centre - np.array([separation / 2, 0.0])
    w = centre + np.array([separation / 2, 0.0])
    # the pocket sits up the v/w bisector, offset to w's side; its geometry
    # scales with the separation so well-separated pairs cannot host it
    island = centre + np.array([4.0 * separation, 9.0 * separation])
    return np.vstack([bg, v, w]), len(bg), len(bg) + 1, island


def _demo_orphans_at(diagram, v, island, radius):
    hits = []
    for comp in diagram.orphans:
        if comp.site != v:
            continue
        idx = np.stack(np.unravel_index(comp.cells, diagram.grid.res), axis=1)
        centers = np.asarray(diagram.grid.box_min) + (idx + 0.5) * diagram.grid.spacing
        if np.min(np.linalg.norm(centers - island, axis=1)) <= radius:
            hits.append(comp)
    return hits


def cover_insufficiency_demo(separation: float = 0.01, perturbation: float | None = None,
                             res: int = 256, lattice: int = 4) -> DemoScenario:
    """Two nearly coincident sites in a sparse lattice plus a localized shear.

    The shear tilts the DW bisector of the close pair so a pocket on w's side
    is nearer to v: an orphan of v in a site set that is an epsilon-cover but
    not an epsilon-packing.  With ``perturbation=None`` the shear amplitude is
    the first value of :data:`DEMO_SWEEP` that yields a confirmed orphan.
    """
    if separation <= 0:
        raise InvalidArgument("separation must be positive")
    grid = Grid.unit(res)
    sites, v, w, island = _demo_layout(separation, lattice)
    radius = 2.0 * separation
    amps = DEMO_SWEEP if perturbation is None else (perturbation,)
    log = []
    for amp in amps:
        if amp == 0:
            field = MetricField.identity(2)
        else:
            field = MetricField.shear_bump(-amp, radius, island.tolist())
        diagram = label_grid(sites, field, "DW", grid)
        planted = _demo_orphans_at(diagram, v, island, 2 * radius)
        log.append({"perturbation": amp, "orphans": diagram.orphan_count, "planted": len(planted)})
        if planted or perturbation is not None:
            cover = check_cover(sites, np.inf, field, "DW", grid, diagram.cells)
            return DemoScenario(sites, field, grid, DistanceKind.DW, cover.worst_distance, v, w,
                                separation, amp, len(planted), island, log)
    raise DemoConstructionFailure("no perturbation in the sweep produced an orphan", log)


def demo_net(scenario: DemoScenario) -> AsymmetricNet:
    from .net import Insertion

    hist = [Insertion(p, math.inf) for p in scenario.sites]
    return AsymmetricNet(scenario.sites, scenario.epsilon, scenario.kind, hist, scenario.grid)


def sigma_for(field: MetricField, grid: Grid, coarse_res=None, refine_rounds=4, seed=0,
              pair_budget=2_000_000) -> SigmaEstimate:
    if coarse_res is None:
        coarse_res = 33 if grid.dim == 2 else 11
    return estimate_sigma(field, grid.box_min, grid.box_max, coarse_res, refine_rounds,
                          pair_budget, seed)
