"""YAML run configuration.

Schema (all keys lower-case)::

    market:
      horizon: 1
      level: 5                  # lattice level n
      lower: [0.5]              # a_1..a_T (a_0 = 1 may be included)
      upper: [1.5]
      lam: 0.01
      claim: {kind: power, exponent: 2}
      options:                  # optional
        - {kind: put, strike: 0.75, price: 0.075}
    models:                     # exactly one of the three forms
      full_simplex: true
      # constraints: {path_upper: 0.05, regions: [{time: 1, interval: "(1.25, 1.5]", min: 0.25}]}
      # base_models: [{atoms: [[0.6], [1.4]], weights: [0.5, 0.5]}]
      # move_c: 0.5             # optional, with base_models
    run:
      mode: curve-alpha
      alpha_grid: "0.1:1.0:0.1" # or a list
      x_grid: [0, 0.5, 1.0]
      n_sweep: [5, 6, 7, 8, 9]
      alpha: 0.5                # strategy mode
      tol: 1.0e-7
      out: results.csv
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from decimal import Decimal
from pathlib import Path

import yaml

from .exceptions import ConfigurationError
from .lattice import MarketSpec, PayoffSpec
from .models import AtomicBaseModel

MODES = ("certify", "superhedge", "curve-alpha", "curve-x", "strategy", "oracle-check",
         "convergence-sweep")
MODEL_FORMS = ("full_simplex", "constraints", "base_models")


@dataclass(frozen=True)
class RunConfig:
    market: MarketSpec
    model_form: str
    model_data: object
    mode: str
    alpha_grid: tuple = ()
    x_grid: tuple = ()
    n_sweep: tuple = ()
    alpha: float | None = None
    tol: float = 1e-7
    out: str | None = None
    move_c: float | None = None

    @property
    def levels(self) -> tuple:
        return self.n_sweep or (self.market.level,)

    def base_models(self) -> list:
        return [AtomicBaseModel(m["atoms"], m["weights"]) for m in self.model_data]


def parse_grid(spec, name: str) -> tuple:
    """``"start:stop:step"`` (inclusive, decimal-exact), ``"a,b,c"`` or a list of numbers."""
    if spec is None:
        return ()
    if isinstance(spec, (int, float)):
        return (float(spec),)
    if isinstance(spec, str):
        s = spec.strip()
        try:
            if ":" in s:
                start, stop, step = (Decimal(p) for p in s.split(":"))
                if step <= 0:
                    raise ConfigurationError(f"{name}: step must be positive")
                out, v = [], start
                while v <= stop:
                    out.append(float(v))
                    v += step
                return tuple(out)
            return tuple(float(p) for p in s.split(",") if p.strip())
        except (ArithmeticError, ValueError) as exc:
            raise ConfigurationError(f"{name}: cannot parse {spec!r}") from exc
    try:
        return tuple(float(v) for v in spec)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{name}: expected a list of numbers") from exc


def parse_levels(spec) -> tuple:
    """``"5:9"`` (inclusive range), ``"5,7"`` or a list of integers."""
    if spec is None:
        return ()
    if isinstance(spec, int):
        return (spec,)
    if isinstance(spec, str):
        s = spec.strip()
        try:
            if ":" in s:
                lo, hi = (int(p) for p in s.split(":"))
                return tuple(range(lo, hi + 1))
            return tuple(int(p) for p in s.split(",") if p.strip())
        except ValueError as exc:
            raise ConfigurationError(f"n: cannot parse {spec!r}") from exc
    try:
        return tuple(int(v) for v in spec)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError("n_sweep: expected a list of integers") from exc


def _payoff(d: dict, where: str) -> PayoffSpec:
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigurationError(f"{where}: payoff needs a 'kind'")
    kind = d["kind"]
    try:
        if kind == "call":
            return PayoffSpec.call(float(d["strike"]))
        if kind == "put":
            return PayoffSpec.put(float(d["strike"]))
        if kind == "power":
            return PayoffSpec.power(float(d.get("exponent", 2)))
        if kind == "lookback-max":
            return PayoffSpec.lookback_max()
        if kind == "table":
            return PayoffSpec.table(d["values"])
    except KeyError as exc:
        raise ConfigurationError(f"{where}: missing field {exc.args[0]!r}") from exc
    raise ConfigurationError(f"{where}.kind: unknown payoff kind {kind!r}")


def _require(d: dict, key: str, where: str):
    if not isinstance(d, dict) or key not in d:
        raise ConfigurationError(f"missing field {where}.{key}")
    return d[key]


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("configuration must be a mapping")
    m = _require(data, "market", "config")
    options = m.get("options") or []
    opt_specs = [_payoff(o, f"market.options[{i}]") for i, o in enumerate(options)]
    prices = [float(_require(o, "price", f"market.options[{i}]")) for i, o in enumerate(options)]
    try:
        market = MarketSpec(int(_require(m, "horizon", "market")), int(_require(m, "level", "market")),
                            tuple(str(v) for v in _require(m, "lower", "market")),
                            tuple(str(v) for v in _require(m, "upper", "market")),
                            float(m.get("lam", 0.01)), tuple(opt_specs), tuple(prices),
                            _payoff(m.get("claim", {"kind": "power", "exponent": 2}), "market.claim"))
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"market: {exc}") from exc
    models = _require(data, "models", "config")
    forms = [k for k in MODEL_FORMS if isinstance(models, dict) and models.get(k) not in (None, False)]
    if len(forms) != 1:
        raise ConfigurationError(f"models: exactly one of {', '.join(MODEL_FORMS)} is required")
    form = forms[0]
    mdata = models[form]
    if form == "base_models":
        if not isinstance(mdata, list) or not mdata:
            raise ConfigurationError("models.base_models: expected a non-empty list")
        for i, bm in enumerate(mdata):
            _require(bm, "atoms", f"models.base_models[{i}]")
            _require(bm, "weights", f"models.base_models[{i}]")
    run = data.get("run") or {}
    mode = run.get("mode")
    if mode is not None and mode not in MODES:
        raise ConfigurationError(f"run.mode: unknown mode {mode!r}")
    return RunConfig(
        market=market, model_form=form, model_data=mdata, mode=mode,
        alpha_grid=parse_grid(run.get("alpha_grid"), "run.alpha_grid"),
        x_grid=parse_grid(run.get("x_grid"), "run.x_grid"),
        n_sweep=parse_levels(run.get("n_sweep")),
        alpha=None if run.get("alpha") is None else float(run["alpha"]),
        tol=float(run.get("tol", 1e-7)), out=run.get("out"),
        move_c=None if models.get("move_c") is None else float(models["move_c"]))


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config {path} is not valid YAML: {exc}") from exc
    return parse_config(data)


def with_overrides(cfg: RunConfig, mode=None, out=None, n=None, alpha_grid=None, tol=None) -> RunConfig:
    changes = {}
    if mode is not None:
        changes["mode"] = mode
    if out is not None:
        changes["out"] = out
    if n is not None:
        changes["n_sweep"] = parse_levels(n)
    if alpha_grid is not None:
        changes["alpha_grid"] = parse_grid(alpha_grid, "--alpha-grid")
    if tol is not None:
        changes["tol"] = float(tol)
    return replace(cfg, **changes)
