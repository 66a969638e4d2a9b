"""Batch front end: experiment files, pricing runs, oracle checks, scans.

An experiment file is a JSON document describing one pricing table: the
option block (kind, strike, expiry, spots), the simulation block, and one or
more panels, each with a model block and optional benchmark prices aligned
with the spot list.  Bundled experiment files under premex/experiments/
reproduce the benchmark tables shipped with the package.

Output is CSV (fixed column set, byte-deterministic for a given seed), JSON
(floats round-trip exactly), or a pretty text table grouped by panel.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import tempfile
from dataclasses import dataclass

from .mollifier import MollifierConfig, default_scan_grid, select_bandwidth
from .models import BlackScholesParams, HestonParams, OptionSpec
from .oracle import QuadratureConfig, quadrature_v1, quadrature_v2
from .particle import (SimConfig, estimate_order1, estimate_order2,
                       price_american)

_ORDER_COLUMNS = 5  # v0..v4 fixed CSV layout, unused orders left empty


class ConfigError(ValueError):
    """Configuration problem with a field-level message."""


@dataclass(frozen=True)
class Panel:
    label: str
    model: object
    benchmarks: tuple | None


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment: an option over a spot list, simulated per panel."""

    name: str
    kind: str
    strike: float
    expiry: float
    spots: tuple
    sim: SimConfig
    panels: tuple
    output_path: str | None = None
    output_format: str = "pretty"

    @classmethod
    def from_dict(cls, doc: dict, name: str = "experiment") -> "ExperimentSpec":
        try:
            option = doc["option"]
            kind = option["kind"]
            strike = float(option["strike"])
            expiry = float(option["expiry"])
            spots = tuple(float(s) for s in option["spots"])
        except KeyError as exc:
            raise ConfigError(f"option block is missing field {exc}") from exc
        if not spots or any(s <= 0 for s in spots):
            raise ConfigError("option.spots must be a non-empty list of positive spots")

        sim_doc = doc.get("sim", {})
        moll = sim_doc.get("bandwidths")
        mollifier = None
        scan = False
        if moll == "scan":
            scan = True
        elif isinstance(moll, dict):
            try:
                mollifier = MollifierConfig(h0=float(moll["h0"]), h1=float(moll["h1"]),
                                            h2=float(moll["h2"]))
            except KeyError as exc:
                raise ConfigError(f"sim.bandwidths is missing field {exc}") from exc
        elif moll is not None:
            raise ConfigError("sim.bandwidths must be an {h0,h1,h2} object or 'scan'")
        try:
            sim = SimConfig(
                n_paths=int(sim_doc.get("paths", 100_000)),
                n_steps=int(sim_doc.get("steps", 1000)),
                lam=float(sim_doc.get("lambda", 2.0)),
                order=int(sim_doc.get("order", 3)),
                mollifier=mollifier,
                seed=int(sim_doc.get("seed", 0)),
                workers=int(sim_doc.get("workers", 1)),
            )
        except ValueError as exc:
            raise ConfigError(f"sim block invalid: {exc}") from exc

        panel_docs = doc.get("panels")
        if panel_docs is None:
            if "model" not in doc:
                raise ConfigError("either a top-level model or a panels list is required")
            panel_docs = [{"label": "", "model": doc["model"],
                           "benchmarks": doc.get("benchmarks")}]
        panels = []
        for i, pd in enumerate(panel_docs):
            model = _parse_model(pd.get("model"), where=f"panels[{i}].model")
            bench = pd.get("benchmarks")
            if bench is not None:
                bench = tuple(float(b) for b in bench)
                if len(bench) != len(spots):
                    raise ConfigError(
                        f"panels[{i}].benchmarks must align 1:1 with option.spots "
                        f"({len(bench)} benchmarks vs {len(spots)} spots)")
            panels.append(Panel(label=str(pd.get("label", f"panel{i}")),
                                model=model, benchmarks=bench))

        output = doc.get("output", {})
        spec = cls(name=name, kind=kind, strike=strike, expiry=expiry, spots=spots,
                   sim=sim, panels=tuple(panels),
                   output_path=output.get("path"),
                   output_format=output.get("format", "pretty"))
        if scan:
            object.__setattr__(spec, "_needs_scan", True)
        return spec

    def needs_scan(self) -> bool:
        return getattr(self, "_needs_scan", False)


def _parse_model(doc, where="model"):
    if not isinstance(doc, dict) or "type" not in doc:
        raise ConfigError(f"{where} must be an object with a 'type' field")
    kind = doc["type"].replace("_", "-")
    try:
        if kind in ("black-scholes", "bs"):
            return BlackScholesParams(r=float(doc["r"]), y=float(doc["y"]),
                                      sigma=float(doc["sigma"]))
        if kind == "heston":
            return HestonParams(r=float(doc["r"]), y=float(doc["y"]),
                                v0=float(doc["v0"]), xi=float(doc["xi"]),
                                theta=float(doc["theta"]), eta=float(doc["eta"]),
                                rho=float(doc["rho"]))
    except KeyError as exc:
        raise ConfigError(f"{where} is missing field {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"{where} invalid: {exc}") from exc
    raise ConfigError(f"{where}.type must be 'black-scholes' or 'heston'")


@dataclass(frozen=True)
class ResultRow:
    """One pricing row: cumulative prices per order with errors."""

    label: str
    s0: float
    benchmark: float | None
    cumulative: tuple
    stderr: tuple
    error_ratios: tuple | None

    def as_dict(self):
        return dataclasses.asdict(self)


def error_ratio(value: float, benchmark: float) -> float:
    """Accuracy metric 100 * (value - benchmark) / benchmark, in percent."""
    if benchmark == 0:
        raise ValueError("benchmark must be nonzero")
    return 100.0 * (value - benchmark) / benchmark


def run_price(spec: ExperimentSpec, progress=None) -> list:
    """Price every (panel, spot) cell of the experiment."""
    rows = []
    sim = spec.sim
    if spec.needs_scan():
        sim = dataclasses.replace(
            sim, mollifier=auto_bandwidths(spec.panels[0].model, _option(spec, spec.spots[0]), sim))
    for panel in spec.panels:
        for i, s0 in enumerate(spec.spots):
            option = _option(spec, s0)
            result = price_american(panel.model, option, sim)
            bench = panel.benchmarks[i] if panel.benchmarks else None
            ratios = tuple(error_ratio(c, bench) for c in result.cumulative) \
                if bench is not None else None
            rows.append(ResultRow(label=panel.label, s0=s0, benchmark=bench,
                                  cumulative=result.cumulative,
                                  stderr=result.cumulative_stderrs,
                                  error_ratios=ratios))
            if progress:
                progress(rows[-1])
    return rows


def _option(spec: ExperimentSpec, s0: float) -> OptionSpec:
    return OptionSpec(kind=spec.kind, strike=spec.strike, expiry=spec.expiry, spot=s0)


def auto_bandwidths(model, option: OptionSpec, sim: SimConfig) -> MollifierConfig:
    """Dispersion-scan bandwidths, one derivative order at a time.

    Each kernel's grid is scanned with the lowest estimator order that uses
    it, at a reduced path count, holding the other kernels fixed.
    """
    base = MollifierConfig.for_strike(option.strike)
    scan_sim = dataclasses.replace(
        sim, n_paths=max(min(sim.n_paths // 10, 200_000), 20_000))
    grid = default_scan_grid(option.strike)
    values = {"h0": base.h0, "h1": base.h1, "h2": base.h2}
    targets = [("h0", 2), ("h1", 3)] + ([("h2", 4)] if sim.order >= 4 else [])
    for field_name, k in targets:
        if sim.order < k:
            break

        def run(h):
            moll = MollifierConfig(**{**values, field_name: h})
            cfg = dataclasses.replace(scan_sim, order=k, mollifier=moll)
            res = price_american(model, option, cfg)
            return res.order_means[k], res.order_stderrs[k]

        values[field_name] = select_bandwidth(run, grid)
    return MollifierConfig(**values)


def run_oracle_check(model: BlackScholesParams, option: OptionSpec, sim: SimConfig):
    """Cross-validate the order-1/2 estimators against direct quadrature.

    Both sides use the same delta kernel, so they estimate the identical
    object; agreement is judged at three combined standard errors.  When the
    Monte Carlo is too noisy to resolve the reference value the comparison
    is reported as inconclusive rather than as a pass.
    """
    moll = sim.mollifier or MollifierConfig.for_strike(option.strike)
    sim = dataclasses.replace(sim, mollifier=moll)
    q1 = quadrature_v1(model, option)
    q2 = quadrature_v2(model, option, QuadratureConfig(delta_variance=moll.h0))
    m1, se1 = estimate_order1(model, option, sim if sim.order >= 1 else
                              dataclasses.replace(sim, order=1))
    m2, se2 = estimate_order2(model, option, sim if sim.order >= 2 else
                              dataclasses.replace(sim, order=2))
    entries = []
    for k, mc, se, quad in [(1, m1, se1, q1), (2, m2, se2, q2)]:
        diff = mc - quad
        scale = max(abs(quad), 1e-12)
        if 3.0 * se > 0.5 * scale and abs(quad) > 1e-12:
            status = "inconclusive"
        elif abs(diff) <= 3.0 * se + 1e-12:
            status = "pass"
        else:
            status = "fail"
        entries.append({"order": k, "mc_mean": mc, "mc_stderr": se,
                        "quadrature": quad, "diff": diff,
                        "n_stderr": diff / se if se > 0 else 0.0,
                        "status": status})
    return entries


# ---------------------------------------------------------------------------
# output emission


def _csv_cell(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def rows_to_csv(rows) -> str:
    header = (["S0", "benchmark"]
              + [f"v{k}" for k in range(_ORDER_COLUMNS)]
              + [f"se{k}" for k in range(_ORDER_COLUMNS)]
              + [f"er{k}" for k in range(_ORDER_COLUMNS)])
    lines = [",".join(header)]
    for row in rows:
        cum = list(row.cumulative) + [None] * (_ORDER_COLUMNS - len(row.cumulative))
        ses = list(row.stderr) + [None] * (_ORDER_COLUMNS - len(row.stderr))
        if row.error_ratios is not None:
            ers = list(row.error_ratios) + [None] * (_ORDER_COLUMNS - len(row.error_ratios))
        else:
            ers = [None] * _ORDER_COLUMNS
        cells = [_csv_cell(row.s0), _csv_cell(row.benchmark)]
        cells += [_csv_cell(x) for x in cum + ses + ers]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def rows_to_json(rows, spec: ExperimentSpec | None = None) -> str:
    doc = {"rows": [row.as_dict() for row in rows]}
    if spec is not None:
        doc["experiment"] = spec.name
    return json.dumps(doc, indent=2) + "\n"


def rows_to_pretty(rows) -> str:
    out = []
    orders = max(len(r.cumulative) for r in rows)
    head = f"{'panel':<14}{'S0':>8}{'benchmark':>12}" + "".join(
        f"{'order ' + str(k):>12}" for k in range(orders))
    by_label: dict = {}
    for r in rows:
        by_label.setdefault(r.label, []).append(r)
    out.append(head)
    out.append("-" * len(head))
    for label, group in by_label.items():
        for r in group:
            bench = f"{r.benchmark:>12.3f}" if r.benchmark is not None else f"{'-':>12}"
            out.append(f"{label:<14}{r.s0:>8.1f}" + bench
                       + "".join(f"{c:>12.3f}" for c in r.cumulative))
    if any(r.error_ratios for r in rows):
        out.append("")
        out.append("error ratio = 100 * (value - benchmark) / benchmark, percent")
        for label, group in by_label.items():
            for r in group:
                if r.error_ratios is None:
                    continue
                out.append(f"{label:<14}{r.s0:>8.1f}{'':>12}"
                           + "".join(f"{e:>11.3f}%" for e in r.error_ratios))
    return "\n".join(out) + "\n"


def _write_atomic(path: str, content: str):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(rows, fmt: str, path: str | None, spec: ExperimentSpec | None = None) -> str:
    if fmt == "csv":
        content = rows_to_csv(rows)
    elif fmt == "json":
        content = rows_to_json(rows, spec)
    elif fmt == "pretty":
        content = rows_to_pretty(rows)
    else:
        raise ConfigError(f"unknown output format {fmt!r}")
    if path:
        _write_atomic(path, content)
    return content


# ---------------------------------------------------------------------------
# command line


def load_experiment(source: str) -> ExperimentSpec:
    """Load an experiment by bundled name or by file path."""
    if os.path.exists(source):
        with open(source) as fh:
            return ExperimentSpec.from_dict(json.load(fh),
                                            name=os.path.splitext(os.path.basename(source))[0])
    from importlib import resources
    ref = resources.files("premex").joinpath(f"experiments/{source}.json")
    if not ref.is_file():
        raise ConfigError(f"no experiment file or bundled experiment named {source!r}; "
                          f"bundled: {', '.join(bundled_experiments())}")
    return ExperimentSpec.from_dict(json.loads(ref.read_text()), name=source)


def bundled_experiments() -> list:
    from importlib import resources
    root = resources.files("premex").joinpath("experiments")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def _apply_overrides(spec: ExperimentSpec, args) -> ExperimentSpec:
    sim = spec.sim
    updates = {}
    if args.paths is not None:
        updates["n_paths"] = args.paths
    if args.steps is not None:
        updates["n_steps"] = args.steps
    if args.order is not None:
        updates["order"] = args.order
    if getattr(args, "lam", None) is not None:
        updates["lam"] = args.lam
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.workers is not None:
        updates["workers"] = args.workers
    env_workers = os.environ.get("PREMEX_WORKERS")
    if env_workers is not None:
        updates["workers"] = int(env_workers)
    if updates:
        sim = dataclasses.replace(sim, **updates)
    spec = dataclasses.replace(spec, sim=sim)
    if args.output is not None:
        spec = dataclasses.replace(spec, output_path=args.output)
    if args.format is not None:
        spec = dataclasses.replace(spec, output_format=args.format)
    return spec


def _add_common(parser):
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--paths", type=int, default=None)
    parser.add_argument("--steps", type=int, default=None)
    parser.add_argument("--order", type=int, default=None)
    parser.add_argument("--lambda", dest="lam", type=float, default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--output", default=None)
    parser.add_argument("--format", choices=["csv", "json", "pretty"], default=None)
    parser.add_argument("--strict", action="store_true",
                        help="exit nonzero when a check reports fail")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="premex",
        description="American option pricing by premium expansion with a "
                    "branching-particle Monte Carlo engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p_price = sub.add_parser("price", help="run an experiment from a config file")
    p_price.add_argument("--config", required=True)
    _add_common(p_price)

    p_table = sub.add_parser("table", help="run a bundled benchmark experiment")
    p_table.add_argument("name", help="bundled experiment name (see --list)")
    _add_common(p_table)

    p_oracle = sub.add_parser("oracle-check",
                              help="cross-validate estimators against quadrature")
    p_oracle.add_argument("--config", default=None,
                          help="BS experiment config; defaults to a standard instance")
    _add_common(p_oracle)

    p_scan = sub.add_parser("bandwidth-scan", help="dispersion scan of a kernel bandwidth")
    p_scan.add_argument("--config", required=True)
    p_scan.add_argument("--target", choices=["h0", "h1", "h2"], required=True)
    p_scan.add_argument("--h-grid", default=None,
                        help="comma-separated descending bandwidths (variance units)")
    _add_common(p_scan)

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command in ("price", "table"):
        source = args.config if args.command == "price" else args.name
        spec = _apply_overrides(load_experiment(source), args)
        rows = run_price(spec)
        content = emit(rows, spec.output_format, spec.output_path, spec)
        if not spec.output_path:
            sys.stdout.write(content)
        else:
            print(f"wrote {spec.output_path}")
        return 0

    if args.command == "oracle-check":
        if args.config:
            spec = _apply_overrides(load_experiment(args.config), args)
            if not isinstance(spec.panels[0].model, BlackScholesParams):
                raise ConfigError("oracle-check requires a Black-Scholes model")
            model = spec.panels[0].model
            option = _option(spec, spec.spots[0])
            sim = spec.sim
        else:
            model = BlackScholesParams(r=0.05, y=0.0, sigma=0.2)
            option = OptionSpec("put", 100.0, 0.5, 100.0)
            sim = SimConfig(n_paths=args.paths or 1_000_000, n_steps=args.steps or 500,
                            lam=args.lam or 2.0, order=2, seed=args.seed or 0,
                            workers=args.workers or 1)
        entries = run_oracle_check(model, option, sim)
        for e in entries:
            print(f"order {e['order']}: mc {e['mc_mean']:.6f} +- {e['mc_stderr']:.6f}  "
                  f"quadrature {e['quadrature']:.6f}  diff {e['diff']:+.6f} "
                  f"({e['n_stderr']:+.2f} se)  {e['status'].upper()}")
        if args.strict and any(e["status"] == "fail" for e in entries):
            return 1
        return 0

    if args.command == "bandwidth-scan":
        spec = _apply_overrides(load_experiment(args.config), args)
        option = _option(spec, spec.spots[0])
        model = spec.panels[0].model
        moll = spec.sim.mollifier or MollifierConfig.for_strike(option.strike)
        grid = ([float(h) for h in args.h_grid.split(",")] if args.h_grid
                else default_scan_grid(option.strike))
        order_by_target = {"h0": 2, "h1": 3, "h2": 4}
        k = order_by_target[args.target]
        rows = []

        def run(h):
            cfg = dataclasses.replace(
                spec.sim, order=k,
                mollifier=MollifierConfig(**{**dataclasses.asdict(moll), args.target: h}))
            res = price_american(model, option, cfg)
            return res.order_means[k], res.order_stderrs[k]

        chosen = select_bandwidth(run, grid, collect=rows)
        lines = ["h,mean,stderr"]
        lines += [f"{repr(h)},{repr(m)},{repr(s)}" for h, m, s in rows]
        content = "\n".join(lines) + "\n"
        if args.output:
            _write_atomic(args.output, content)
        else:
            sys.stdout.write(content)
        print(f"selected {args.target} = {chosen!r}")
        return 0

    raise ConfigError(f"unknown command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
