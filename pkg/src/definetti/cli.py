"""Command-line entry point: ``definetti <command> [--config FILE] ...``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 acceptance failure.  Output goes to ``--out``, else ``$DEFINETTI_OUT``,
else ``./definetti-out``.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import reproduce
from .dividend import (barrier_curve, certificate_record, certify, optimal_barrier,
                       write_certificate_json, write_value_csv)
from .hjb import (HjbConvergenceError, LadderError, band_report, bands_from_regions,
                  extract_regions, solve_hjb, verify_value, write_band_json, write_solution_csv)
from .levy import GammaShape, Tabulated, phi
from .montecarlo import SimConfig, estimate_dividends, estimate_exit
from .scale import (InversionAccuracyError, SingularParameterError, laplace_identity_residual,
                    scale_brownian, scale_numeric, scale_rational, write_scale_csv)

log = logging.getLogger("definetti")

OK, CONFIG_ERROR, NUMERIC_ERROR, ACCEPTANCE_ERROR = 0, 1, 2, 3
OUT_ENV = "DEFINETTI_OUT"


def _outdir(args, cfg=None) -> Path:
    d = args.out or (cfg.output if cfg is not None else None) or os.environ.get(OUT_ENV) \
        or "definetti-out"
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _load(args) -> cfgmod.RunConfig:
    if not args.config:
        raise cfgmod.ConfigError("--config is required for this command")
    cfg = cfgmod.load(args.config)
    if args.grid is not None:
        if args.grid < 8:
            raise cfgmod.ConfigError("--grid must be >= 8")
        cfg = replace(cfg, grid=replace(cfg.grid, n=args.grid))
    mc = cfg.mc
    if args.seed is not None:
        mc = replace(mc, seed=args.seed)
    if args.paths is not None:
        if args.paths < 1:
            raise cfgmod.ConfigError("--paths must be positive")
        mc = replace(mc, paths=args.paths)
    return replace(cfg, mc=mc)


def _scale_function(cfg, model):
    q = cfg.q
    rep = cfg.representation
    closed = model.jumps is None or isinstance(model.density, GammaShape)
    if rep == "closed" and not closed:
        raise cfgmod.ConfigError("no closed form for a tabulated density")
    if rep == "numeric" or not closed:
        return scale_numeric(model, q, cfg.grid.points)
    if model.jumps is None:
        return scale_brownian(model.sigma, model.drift, q)
    return scale_rational(model, q)


def _echo(cfg, out):
    cfgmod.dump(cfg, out / "config.echo.yaml")


def cmd_scale(args) -> int:
    cfg = _load(args)
    model = cfg.model.build()
    out = _outdir(args, cfg)
    sf = _scale_function(cfg, model)
    write_scale_csv(sf, cfg.grid.points, out / "scale.csv")
    pq = phi(model, cfg.q)
    thetas = [pq + d for d in (0.5, 1.0, 2.0, 3.0, 5.0)]
    res = {f"{t:.6g}": laplace_identity_residual(sf, model, t) for t in thetas}
    report = {"kind": sf.kind, "q": cfg.q, "phi_q": pq, "laplace_residuals": res}
    if sf.is_mixture:
        report["rates"] = [float(r) for r in sf.rates]
        report["coefficients"] = [float(c) for c in sf.coefs]
        print("rates: " + ", ".join(f"{r:.6g}" for r in sf.rates))
    print(f"{sf.kind}: max Laplace identity residual {max(res.values()):.3e}")
    (out / "scale_report.json").write_text(json.dumps(report, indent=2))
    _echo(cfg, out)
    return OK


def cmd_optimize(args) -> int:
    cfg = _load(args)
    model = cfg.model.build()
    out = _outdir(args, cfg)
    sf = _scale_function(cfg, model)
    x_max = min(cfg.grid.x_max, sf.x_max)
    a = optimal_barrier(sf, x_max)
    dgrid = None
    if model.density is not None:
        dens = model.density
        dgrid = dens.grid[dens.values > 0] if isinstance(dens, Tabulated) \
            else np.linspace(x_max / 1000, x_max, 1000)
    cert = certify(model, sf, a, x_max, density_grid=dgrid)
    curve = barrier_curve(sf, a, cfg.grid.points)
    write_value_csv(curve, out / "value.csv")
    write_certificate_json(cert, out / "certificate.json")
    print(f"a* = {a:.10g}")
    print(f"certificate: {cert.kind}")
    if not cert:
        print(f"  W' decreases past a* near x = {cert.witness:.6g}; a band strategy may do "
              f"better: run `definetti hjb --config {args.config}`")
    _echo(cfg, out)
    return OK


def cmd_hjb(args) -> int:
    cfg = _load(args)
    if cfg.q == 0 and not cfg.allow_zero_q:
        print("q = 0: a finite value is not guaranteed without discounting; "
              "set allow_zero_q: true to proceed", file=sys.stderr)
        return CONFIG_ERROR
    model = cfg.model.build()
    out = _outdir(args, cfg)
    sol = extract_regions(solve_hjb(model, cfg.q, cfg.grid.x_max, n=cfg.grid.n))
    pol = bands_from_regions(sol)
    write_solution_csv(sol, out / "hjb.csv")
    write_band_json(sol, pol, out / "bands.json")
    check = verify_value(sol, model, cfg.q)
    (out / "verify.json").write_text(json.dumps(check, indent=2))
    for b, a in pol.bands:
        print(f"band [{b:.6g}, {a:.6g}]")
    print(f"v(0) = {sol.v[0]:.10g}; cross-check generator residual {check['generator_sup']:.2e}")
    _echo(cfg, out)
    return OK


def cmd_simulate(args) -> int:
    cfg = _load(args)
    model = cfg.model.build()
    out = _outdir(args, cfg)
    mc = cfg.mc
    records = []
    if mc.exit is not None:
        for x0 in mc.x0:
            sc = SimConfig(model, x0, None, q=cfg.q, T=mc.T, dt=mc.dt, paths=mc.paths,
                           seed=mc.seed, target_se=mc.target_se)
            est = estimate_exit(sc, mc.exit.a, one_sided=mc.exit.one_sided)
            records.append({"x0": x0, "a": mc.exit.a, "one_sided": mc.exit.one_sided,
                            **est.record()})
    else:
        a_star = None
        if cfg.policy == "optimal":
            sf = _scale_function(cfg, model)
            a_star = optimal_barrier(sf, min(cfg.grid.x_max, sf.x_max))
        policy = cfg.policy_object(a_star)
        if policy is None:
            raise cfgmod.ConfigError("simulate needs a policy or mc.exit")
        for x0 in mc.x0:
            sc = SimConfig(model, x0, policy, q=cfg.q, T=mc.T, dt=mc.dt, paths=mc.paths,
                           seed=mc.seed, target_se=mc.target_se)
            est = estimate_dividends(sc)
            records.append({"x0": x0, "policy": cfgmod._policy_out(
                cfg.policy if a_star is None else a_star), **est.record()})
    for r in records:
        print(f"x0={r['x0']:.6g}: {r['mean']:.8g} ± {r['se']:.3g} "
              f"(paths {r['paths']}, seed {r['seed']}, bias bound {r['bias_bound']:.2g})")
    (out / "estimates.json").write_text(json.dumps(records, indent=2))
    _echo(cfg, out)
    return OK


def cmd_reproduce(args) -> int:
    only = set(args.only) if args.only else None
    results = reproduce.run(only=only, paths=args.paths,
                            progress=lambda r: print(reproduce.format_line(r), flush=True))
    n_ok = sum(r.passed for r in results)
    print(f"{n_ok}/{len(results)} criteria passed")
    out = _outdir(args)
    rows = [r._asdict() for r in results]
    (out / "reproduce.json").write_text(json.dumps(rows, indent=2))
    return OK if n_ok == len(results) else ACCEPTANCE_ERROR


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON run configuration")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./definetti-out)")
    common.add_argument("--seed", type=int, help="override mc.seed")
    common.add_argument("--paths", type=int, help="override Monte Carlo path counts")
    common.add_argument("--grid", type=int, help="override grid.n")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="definetti", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, hlp in (("scale", cmd_scale, "tabulate W, W', W'' and check the transform"),
                          ("optimize", cmd_optimize, "optimal barrier and certificate"),
                          ("hjb", cmd_hjb, "solve the HJB inequality and read off bands"),
                          ("simulate", cmd_simulate, "Monte Carlo estimates"),
                          ("reproduce-paper", cmd_reproduce, "run the acceptance table")):
        sp = sub.add_parser(name, parents=[common], help=hlp)
        sp.set_defaults(func=fn)
        if name == "reproduce-paper":
            sp.add_argument("--only", type=int, nargs="+", metavar="N",
                            help="criterion numbers to run")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore", RuntimeWarning)
    try:
        return args.func(args)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    except (HjbConvergenceError, InversionAccuracyError, SingularParameterError,
            LadderError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERIC_ERROR


if __name__ == "__main__":
    sys.exit(main())
