"""Command-line front end: ``qhedge <mode> --config run.yaml``."""
from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import models, pricing, quantile
from .config import MODES, RunConfig, load_config, with_overrides
from .exceptions import (ArbitrageError, ConfigurationError, DomainError, ResourceLimitError,
                         SolverError, StructuralError)
from .lattice import PathLattice, build_lattice, payoff_vector

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ARBITRAGE = 3
EXIT_RESOURCE = 4
EXIT_SOLVER = 5


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.12g" % float(v)


def _num(v):
    return float(fmt(v))


@dataclass
class Instance:
    lattice: PathLattice
    polytope: models.ModelPolytope
    cone: pricing.MartingaleCone
    claim: np.ndarray


def build_instance(cfg: RunConfig, n: int) -> Instance:
    spec = cfg.market.with_level(n)
    lat = build_lattice(spec)
    if cfg.model_form == "full_simplex":
        poly = models.full_simplex(lat)
    elif cfg.model_form == "constraints":
        poly = models.polytope_from_constraints(lat, cfg.model_data)
    else:
        poly, _ = models.kernel_polytope(lat, cfg.base_models(), spec.lam, cfg.move_c)
    cone = pricing.build_cone(lat, spec.options, spec.prices, poly.support)
    return Instance(lat, poly, cone, payoff_vector(spec.claim, lat))


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def strategy_record(strategy: pricing.Strategy, cone: pricing.MartingaleCone) -> dict:
    lat = strategy.lattice
    scale = lat.scale
    holdings = []
    for j in cone.node_ids:
        t, prefix = lat.nodes[j]
        holdings.append({"t": int(t), "prefix": [_num(v / scale) for v in prefix],
                         "H": _num(strategy.holdings[j])})
    return {"x": _num(strategy.capital), "q": [_num(v) for v in strategy.options],
            "holdings": holdings}


def _dump(doc) -> str:
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)


def _emit(text: str, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _single_level(cfg: RunConfig) -> int:
    if len(cfg.levels) != 1:
        raise ConfigurationError(f"mode {cfg.mode} takes a single level n; use convergence-sweep for several")
    return cfg.levels[0]


def _alpha_grid(cfg: RunConfig) -> tuple:
    if not cfg.alpha_grid:
        raise ConfigurationError(f"run.alpha_grid is required for mode {cfg.mode}")
    return cfg.alpha_grid


def _curve_rows(inst: Instance, alphas, tol):
    results = quantile.price_curve(alphas, inst.claim, inst.cone, inst.polytope, tol)
    return [(r.alpha, r.price, r.achieved_ratio) for r in results]


def run(cfg: RunConfig) -> int:
    mode = cfg.mode
    if mode not in MODES:
        raise ConfigurationError(f"mode: expected one of {', '.join(MODES)}, got {mode!r}")
    if mode == "certify":
        rows, status = [], EXIT_OK
        for n in cfg.levels:
            inst = build_instance(cfg, n)
            cert = inst.cone.certificate
            rows.append((n, cert.certified, cert.epsilon, inst.cone.n_support, inst.lattice.n_paths))
            if not cert.certified:
                status = EXIT_ARBITRAGE
        _emit(_csv(["n", "certified", "epsilon", "support_paths", "paths"], rows), cfg.out)
        return status
    if mode == "convergence-sweep":
        if cfg.out is None:
            raise ConfigurationError("convergence-sweep needs an output directory (--out)")
        outdir = Path(cfg.out)
        outdir.mkdir(parents=True, exist_ok=True)
        alphas = _alpha_grid(cfg)
        prev = None
        for n in cfg.levels:
            rows = _curve_rows(build_instance(cfg, n), alphas, cfg.tol)
            (outdir / f"curve_n{n}.csv").write_text(
                _csv(["alpha", "price", "achieved_ratio"], rows), encoding="utf-8")
            prices = np.array([r[1] for r in rows])
            if prev is not None:
                print(f"n={prev[0]} -> n={n}: sup gap {fmt(np.max(np.abs(prices - prev[1])))}")
            prev = (n, prices)
        return EXIT_OK
    inst = build_instance(cfg, _single_level(cfg))
    if mode == "superhedge":
        price = pricing.superhedge_price(inst.claim, inst.cone)
        strat = pricing.superhedge_strategy(inst.claim, inst.cone)
        _emit(_dump({"price": _num(price), "strategy": strategy_record(strat, inst.cone)}), cfg.out)
    elif mode == "curve-alpha":
        rows = _curve_rows(inst, _alpha_grid(cfg), cfg.tol)
        _emit(_csv(["alpha", "price", "achieved_ratio"], rows), cfg.out)
    elif mode == "curve-x":
        if not cfg.x_grid:
            raise ConfigurationError("run.x_grid is required for mode curve-x")
        pts = quantile.value_curve(cfg.x_grid, inst.claim, inst.cone, inst.polytope)
        _emit(_csv(["x", "V", "a_star"], [(p.x, p.value, p.a) for p in pts]), cfg.out)
    elif mode == "strategy":
        alpha = cfg.alpha if cfg.alpha is not None else (cfg.alpha_grid[0] if cfg.alpha_grid else None)
        if alpha is None:
            raise ConfigurationError("run.alpha is required for mode strategy")
        r = quantile.invert_price(alpha, inst.claim, inst.cone, inst.polytope, cfg.tol)
        _emit(_dump({"alpha": _num(alpha), "price": _num(r.price), "achieved_ratio": _num(r.achieved_ratio),
                     "strategy": strategy_record(r.strategy, inst.cone)}), cfg.out)
    elif mode == "oracle-check":
        solver = quantile.ValueSolver(inst.claim, inst.cone, inst.polytope)
        rows = []
        for a in _alpha_grid(cfg):
            p1 = quantile.invert_price(a, inst.claim, inst.cone, inst.polytope, cfg.tol, solver,
                                       with_strategy=False).price
            p2 = quantile.direct_price_oracle(a, inst.claim, inst.cone, inst.polytope)
            rows.append((a, p1, p2, abs(p1 - p2)))
        _emit(_csv(["alpha", "invert_price", "direct_oracle", "abs_diff"], rows), cfg.out)
        print(f"max deviation {fmt(max(r[3] for r in rows))}", file=sys.stderr)
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qhedge", description="Robust quantile hedging on a dyadic lattice.")
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", required=True, help="YAML run configuration")
    p.add_argument("--out", help="output file (directory for convergence-sweep); stdout by default")
    p.add_argument("--n", help="lattice level(s): 5, 5,7 or 5:9")
    p.add_argument("--alpha-grid", help="target ratios: 0.1:1.0:0.1 or 0.25,0.5")
    p.add_argument("--tol", type=float, help="bracket width for price inversion")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = with_overrides(load_config(args.config), mode=args.mode, out=args.out, n=args.n,
                             alpha_grid=args.alpha_grid, tol=args.tol)
        return run(cfg)
    except ArbitrageError as exc:
        print(f"error: {exc}; the lattice level n may be too small for the market to be arbitrage-free",
              file=sys.stderr)
        return EXIT_ARBITRAGE
    except (ConfigurationError, DomainError, StructuralError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceLimitError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
