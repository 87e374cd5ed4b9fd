"""Command-line front end.

Exit codes: 0 success, 1 an asserted implication failed (verify), 2 bad
configuration or missing input files, 3 site budget spent before the stop
criterion was met.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import kernels
from .config import RunConfig, load_config
from .diagram import label_grid
from .errors import AnisoVoroError, BudgetExhausted, ConfigError, DemoConstructionFailure
from .metric import estimate_sigma
from .net import AsymmetricNet, greedy_build
from .raster import write_pgm, write_ppm
from .report import canonical_json

EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_BUDGET = 3


def _write_json(path, obj):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        fh.write(canonical_json(obj))


def _out_dir(cfg: RunConfig, args) -> str:
    out = args.out or cfg.output
    if not os.path.isabs(out) and cfg.base_dir and not args.out:
        out = os.path.join(cfg.base_dir, out)
    return out


def _sigma(cfg: RunConfig, field):
    s = cfg.sigma
    coarse = s.get("coarse_res")
    if coarse is None:
        coarse = 33 if cfg.dim == 2 else (11 if cfg.dim == 3 else 5)
    return estimate_sigma(field, cfg.box_min, cfg.box_max, coarse, int(s.get("refine_rounds", 4)),
                          int(s.get("pair_budget", 2_000_000)), cfg.seed, kernels.threads())


def _load_net(out: str) -> AsymmetricNet:
    try:
        return AsymmetricNet.load(out)
    except FileNotFoundError as exc:
        raise ConfigError(f"net files not found in {out} ({exc.filename}); run build-net first",
                          "net") from None


def _summary(net, sigma, diagram):
    from .verify import threshold_for

    es = net.epsilon * sigma.sigma_hat if sigma is not None else None
    return {
        "kind": net.kind.value,
        "n_sites": len(net.sites),
        "epsilon_hat": net.epsilon,
        "sigma_hat": sigma.sigma_hat if sigma is not None else None,
        "eps_sigma": es,
        "threshold": threshold_for(net.kind),
        "below_threshold": None if es is None else es <= threshold_for(net.kind),
        "orphan_count": diagram.orphan_count if diagram is not None else None,
        "suspects": len(diagram.suspects) if diagram is not None else None,
    }


def cmd_build_net(args) -> int:
    cfg = load_config(args.config, args.set)
    field = cfg.field()
    sigma = _sigma(cfg, field) if cfg.needs_sigma() else None
    stop = cfg.stop_rule(sigma.sigma_hat if sigma else None)
    out = _out_dir(cfg, args)
    code = 0
    try:
        net = greedy_build(field, cfg.kind, cfg.grid, stop, cfg.seed_site, seed=cfg.seed)
    except BudgetExhausted as exc:
        net = exc.net
        print(f"budget exhausted: {exc}", file=sys.stderr)
        code = EXIT_BUDGET
    net.save(out)
    summary = _summary(net, sigma, net.diagram)
    summary["stop"] = stop.to_dict()
    summary["budget_exhausted"] = code == EXIT_BUDGET
    if sigma is not None:
        _write_json(os.path.join(out, "sigma.json"), sigma.to_dict())
    _write_json(os.path.join(out, "summary.json"), summary)
    print(f"epsilon_hat={net.epsilon:.10g} sites={len(net.sites)}"
          + (f" eps_sigma={summary['eps_sigma']:.6g}" if sigma is not None else ""))
    return code


def _render_plane(labels, dim):
    if dim == 2:
        return labels
    # middle slice through the trailing axes
    idx = tuple([slice(None), slice(None)] + [labels.shape[a] // 2 for a in range(2, dim)])
    return labels[idx]


def _orphan_mask(diagram):
    mask = np.zeros(diagram.grid.ncells, dtype=bool)
    for comp in diagram.orphans:
        mask[comp.cells] = True
    return mask.reshape(diagram.grid.res)


def cmd_render(args) -> int:
    cfg = load_config(args.config, args.set)
    out = _out_dir(cfg, args)
    net = _load_net(out)
    diagram = label_grid(net.sites, cfg.field(), net.kind, cfg.grid)
    labels = diagram.labels.reshape(cfg.grid.res)
    plane = _render_plane(labels, cfg.dim)
    orphans = _render_plane(_orphan_mask(diagram), cfg.dim)
    write_pgm(os.path.join(out, "labels.pgm"), plane)
    write_ppm(os.path.join(out, "labels.ppm"), plane, len(net.sites), orphans)
    _write_json(os.path.join(out, "components.json"), diagram.components_report())
    print(f"rendered {plane.shape[0]}x{plane.shape[1]} orphans={diagram.orphan_count}")
    return 0


def _component_entry(comp, grid):
    lo, hi = comp.bbox(grid)
    return {"site": comp.site, "component_size": comp.size, "is_main": comp.is_main,
            "bbox": {"min": lo, "max": hi}}


def cmd_check_orphans(args) -> int:
    cfg = load_config(args.config, args.set)
    out = _out_dir(cfg, args)
    net = _load_net(out)
    diagram = label_grid(net.sites, cfg.field(), net.kind, cfg.grid)
    report = {
        "orphan_count": diagram.orphan_count,
        "orphans": [_component_entry(c, cfg.grid) for c in diagram.orphans],
        "suspects": len(diagram.suspects),
        "resolution_suspect": diagram.resolution_suspect,
        "components": diagram.components_report(),
    }
    _write_json(os.path.join(out, "orphans.json"), report)
    print(f"orphans={diagram.orphan_count} suspects={len(diagram.suspects)}")
    return 0


def cmd_estimate_sigma(args) -> int:
    cfg = load_config(args.config, args.set)
    sigma = _sigma(cfg, cfg.field())
    out = _out_dir(cfg, args)
    _write_json(os.path.join(out, "sigma.json"), sigma.to_dict())
    print(f"sigma_hat={sigma.sigma_hat:.10g} pairs={sigma.pairs_sampled}")
    return 0


def cmd_verify(args) -> int:
    from .verify import run_verification

    cfg = load_config(args.config, args.set)
    out = _out_dir(cfg, args)
    net = _load_net(out)
    field = cfg.field()
    sigma = _sigma(cfg, field)
    diagram = label_grid(net.sites, field, net.kind, cfg.grid)
    smp = cfg.samples
    report = run_verification(net, field, sigma, diagram, scenario=args.scenario or
                              os.path.splitext(os.path.basename(args.config))[0],
                              safety_factor=cfg.safety_factor,
                              witnesses_per_pair=int(smp.get("witnesses_per_pair", 3)),
                              phi_samples=int(smp.get("phi", 1024)),
                              star_samples=int(smp.get("star_per_cell", 4)))
    _write_json(os.path.join(out, "report.json"), report.to_dict())
    status = "PASS" if report.passed else "FAIL"
    print(f"{status} eps_sigma={report.eps_sigma:.6g} threshold={report.threshold} "
          f"orphans={report.orphan_count} hard_violations={report.hard_violations}")
    return 0 if report.passed else EXIT_FAIL


def cmd_demo_fig1(args) -> int:
    from .verify import cover_insufficiency_demo, demo_net, run_verification, sigma_for

    out = args.out or "demo_fig1"
    try:
        sc = cover_insufficiency_demo(args.separation, args.perturbation, args.res, args.lattice)
    except DemoConstructionFailure as exc:
        _write_json(os.path.join(out, "sweep.json"), exc.sweep_log)
        print(f"demo construction failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    net = demo_net(sc)
    net.save(out)
    diagram = label_grid(sc.sites, sc.field, sc.kind, sc.grid)
    labels = diagram.labels.reshape(sc.grid.res)
    write_pgm(os.path.join(out, "labels.pgm"), labels)
    write_ppm(os.path.join(out, "labels.ppm"), labels, len(sc.sites), _orphan_mask(diagram))
    sigma = sigma_for(sc.field, sc.grid)
    report = run_verification(net, sc.field, sigma, diagram, scenario="fig1-demo",
                              star_samples=None)
    _write_json(os.path.join(out, "report.json"), report.to_dict())
    _write_json(os.path.join(out, "demo.json"), {
        "separation": sc.separation,
        "perturbation": sc.perturbation,
        "v": sc.v,
        "w": sc.w,
        "epsilon": sc.epsilon,
        "island_center": sc.island_center.tolist(),
        "metric": sc.field.to_dict(),
        "orphan_count": diagram.orphan_count,
        "sweep": sc.sweep_log,
    })
    print(f"orphans={diagram.orphan_count} eps_sigma={report.eps_sigma:.6g} "
          f"packing_holds={report.packing_holds}")
    return 0 if report.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="anisovoro",
                                description="Orphan checks for anisotropic Voronoi diagrams.")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: ANISOVORO_THREADS or all cores)")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config", help="JSON run configuration")
        sp.add_argument("--set", action="append", default=[], metavar="PATH=VALUE",
                        help="override a config field, e.g. --set grid=[128,128]")
        sp.add_argument("--out", default=None, help="output directory (overrides config)")
        sp.set_defaults(func=func)
        return sp

    with_config("build-net", cmd_build_net, "greedy farthest-point net")
    with_config("render", cmd_render, "write PGM/PPM label rasters")
    with_config("check-orphans", cmd_check_orphans, "label and report orphan components")
    with_config("estimate-sigma", cmd_estimate_sigma, "sample the maximum variation")
    v = with_config("verify", cmd_verify, "threshold implication and lemma checks")
    v.add_argument("--scenario", default=None, help="scenario id for the report")

    d = sub.add_parser("demo-fig1", help="cover-insufficiency counterexample")
    d.add_argument("--out", default=None)
    d.add_argument("--separation", type=float, default=0.01)
    d.add_argument("--perturbation", type=float, default=None,
                   help="shear amplitude; default runs the tuning sweep")
    d.add_argument("--res", type=int, default=256)
    d.add_argument("--lattice", type=int, default=4)
    d.set_defaults(func=cmd_demo_fig1)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None:
        kernels.set_threads(args.threads)
    try:
        return args.func(args)
    except ConfigError as exc:
        where = f" [{exc.field}]" if exc.field else ""
        print(f"config error{where}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AnisoVoroError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
