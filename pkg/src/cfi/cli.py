"""Command-line front end: ``cfi <verb> [options]``.

Exit codes: 0 success, 2 configuration error, 3 ingestion error,
4 non-convergence (training divergence or an unconverged solve).
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .data import (ContextMode, Dataset, IngestionError, build_contexts, gen_annulus, gen_synthetic_cf,
                   gen_two_moons, load_capacity_factors, split)
from .flow import ConditionalFlow, export_graph
from .nnet import ConfigurationError
from .grid import GridModel, german_3bus
from .train import TrainingDiverged

log = logging.getLogger("cfi")

EXIT_OK, EXIT_CONFIG, EXIT_INGEST, EXIT_NOCONV = 0, 2, 3, 4

CONSTRAINTS = ("himmelblau", "himmelblau-squared", "annulus")


class NotConverged(RuntimeError):
    pass


@dataclass
class RunManifest:
    command: str
    argv: list
    config: str | None
    seed: int
    out: str
    started: str
    finished: str = ""
    version: str = __version__
    inputs: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)

    def add_input(self, path) -> None:
        if path and Path(path).is_file():
            self.inputs[str(path)] = sha256(path)

    def add_artifact(self, path) -> None:
        self.artifacts[Path(path).name] = sha256(path)

    def write(self, out_dir) -> Path:
        self.finished = _now()
        path = Path(out_dir) / f"manifest_{self.command}.json"
        path.write_text(json.dumps(asdict(self), indent=1))
        return path


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _fmt(v) -> str:
    return f"{v:.9g}" if isinstance(v, (float, np.floating)) else str(v)


# -- helpers ---------------------------------------------------------------

def _constraint(name: str):
    from .sip import annulus_g, himmelblau_g, himmelblau_squared_g

    table = {"himmelblau": himmelblau_g, "himmelblau-squared": himmelblau_squared_g, "annulus": annulus_g}
    if name not in table:
        raise ConfigurationError(f"unknown constraint {name!r}")
    return table[name]


def _default_constraint(problem: str) -> str:
    return {"two-moons": "himmelblau-squared", "annulus": "annulus"}.get(problem, "himmelblau-squared")


def _vector(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in str(text).split(",") if v.strip() != ""], float)
    except ValueError:
        raise ConfigurationError(f"cannot parse vector {text!r}") from None


def _load_flow(path) -> ConditionalFlow:
    if not path:
        raise ConfigurationError("a --model path is required")
    if not Path(path).is_file():
        raise ConfigurationError(f"model file {path} does not exist")
    return ConditionalFlow.load(path)


def _load_grid(args) -> GridModel:
    grid = GridModel.load(args.grid) if getattr(args, "grid", None) else german_3bus()
    if getattr(args, "demand", None):
        grid = grid.with_demand(_vector(args.demand))
    scale = getattr(args, "line_scale", 1.0)
    return grid.with_line_scale(scale) if scale != 1.0 else grid


def _load_dataset(path, mode=None) -> Dataset:
    """Dataset CSV (y*/c* columns) or a capacity-factor table turned into contexts."""
    if not Path(path).is_file():
        raise ConfigurationError(f"data file {path} does not exist")
    with open(path) as fh:
        header = fh.readline().strip()
    if header.startswith("timestamp"):
        table = load_capacity_factors(path)
        return build_contexts(table, ContextMode(mode or "PREV_TD"))
    ds = Dataset.from_csv(path)
    if len(ds) == 0:
        raise IngestionError(f"{path}: no rows")
    return ds


# -- verbs -----------------------------------------------------------------

def cmd_gen_data(args, manifest: RunManifest) -> int:
    out = Path(args.out)
    if args.kind in ("two-moons", "annulus"):
        if args.n is None or args.n < (2 if args.kind == "two-moons" else 1):
            raise ConfigurationError("--n must be a positive sample count")
        ds = (gen_two_moons(args.n, noise=args.noise, rng=args.seed) if args.kind == "two-moons"
              else gen_annulus(args.n, noise=args.noise, rng=args.seed))
        path = out / (args.name or f"{args.kind}.csv")
        ds.to_csv(path)
        n = len(ds)
    else:
        if args.days is None or args.days < 1:
            raise ConfigurationError("--days must be >= 1")
        table = gen_synthetic_cf(args.days, args.buses, rng=args.seed, start=args.start)
        path = out / (args.name or "cf.csv")
        table.to_csv(path)
        n = len(table)
    manifest.add_artifact(path)
    print(f"{path}: {n} rows")
    return EXIT_OK


def cmd_train(args, manifest: RunManifest) -> int:
    from .experiments import PRESETS, train_flow
    from .train import write_history

    preset = replace(PRESETS[args.preset])
    ds = _load_dataset(args.data, args.context_mode)
    manifest.add_input(args.data)
    if args.val_data:
        train, val = ds, _load_dataset(args.val_data, args.context_mode)
        manifest.add_input(args.val_data)
    else:
        train, val = split(ds, args.val_frac, rng=args.seed)
    if args.blocks is not None:
        preset.n_blocks = args.blocks
    if args.hidden is not None:
        preset.hidden = args.hidden
    overrides = {k: v for k, v in {"batch_size": args.batch_size, "grad_clip": args.grad_clip,
                                     "max_epochs": args.max_epochs, "lr": args.lr}.items() if v is not None}
    out = Path(args.out)
    try:
        res = train_flow(train, val, preset, args.seed, **overrides)
    except TrainingDiverged as exc:
        if exc.history:
            write_history(exc.history, out / "history.csv")
        if exc.snapshot is not None:
            exc.snapshot.save(out / "model_last_good.json")
        log.error("%s", exc)
        return EXIT_NOCONV
    model = out / (args.name or "model.json")
    res.flow.save(model)
    hist = out / "history.csv"
    write_history(res.history, hist)
    for p in (model, hist):
        manifest.add_artifact(p)
    best = res.history[res.best_epoch]
    print(f"{model}: best epoch {best.epoch}, val nll {best.val_nll:.9g}, {len(res.history)} epochs")
    return EXIT_OK


def _sip_config(args, method):
    from .experiments import sip_config

    over = {}
    for key in ("alpha", "tol_feas", "delta_max", "cert_margin", "max_iter"):
        v = getattr(args, key, None)
        if v is not None:
            over[key] = v
    cfg = sip_config(args.problem, method, **over)
    cfg.seed = args.seed
    cfg.lower.seed = args.seed
    cfg.upper.seed = args.seed
    if args.grid_points is not None:
        cfg.lower.grid_points = args.grid_points
    return cfg


def cmd_solve(args, manifest: RunManifest) -> int:
    from .sip import solve_cfi, solve_hypercube, write_iterations, write_result
    from .usets import cube_center

    out = Path(args.out)
    grid = _load_grid(args) if args.problem == "scuc" else None
    g = None if grid is not None else _constraint(args.constraint or _default_constraint(args.problem))
    cfg = _sip_config(args, args.method)
    contexts = [_vector(c) for c in (args.context or [])]
    results = []
    if args.method == "flow":
        flow = _load_flow(args.model)
        manifest.add_input(args.model)
        if not contexts:
            contexts = [None] if flow.context_dim == 0 else []
        if not contexts:
            raise ConfigurationError("the model is conditional; pass --context")
        for c in contexts:
            results.append(solve_cfi(flow, g, c, cfg, grid=grid))
    else:
        centers = [_vector(c) for c in (args.center or [])]
        if not centers:
            if not args.data:
                raise ConfigurationError("cube solves need --center or --data to take means from")
            ds = _load_dataset(args.data)
            manifest.add_input(args.data)
            centers = [cube_center(ds, c) for c in contexts] if contexts else [cube_center(ds)]
        for center in centers:
            results.append(solve_hypercube(center, g, cfg, grid=grid))
    path = out / (args.name or "result.json")
    write_result(results, path)
    manifest.add_artifact(path)
    for i, r in enumerate(results):
        it = out / f"{path.stem}_iterations_{i}.csv"
        write_iterations(r, it)
        manifest.add_artifact(it)
        cov = "" if r.analytical_coverage is None else f" coverage {r.analytical_coverage:.9g}"
        print(f"[{i}] delta {r.delta:.9g}{cov} iterations {len(r.state.iterations)} converged {r.converged}")
    if not all(r.converged for r in results):
        return EXIT_NOCONV
    return EXIT_OK


def cmd_coverage(args, manifest: RunManifest) -> int:
    from .usets import HypercubeSet, LatentBall, analytical_coverage, empirical_coverage, write_coverage_report

    out = Path(args.out)
    rows = []
    if args.sweep_blocks or args.sweep_hidden:
        rows = _coverage_sweep(args, manifest)
    else:
        src = args.test_data or args.data
        if not src:
            raise ConfigurationError("--test-data or --data is required")
        samples = _load_dataset(src)
        manifest.add_input(src)
        if not args.result:
            raise ConfigurationError("--result is required unless sweeping")
        manifest.add_input(args.result)
        results = json.loads(Path(args.result).read_text())
        flow = _load_flow(args.model) if any(r["kind"] == "ball" for r in results) else None
        for i, r in enumerate(results):
            c = r.get("context")
            sub = samples.where_context(c) if c is not None and samples.m else samples
            if len(sub) == 0:
                raise IngestionError(f"{src}: no samples for context {c}")
            if r["kind"] == "ball":
                uset = LatentBall(r["delta"], flow)
                ana = analytical_coverage(flow.k, r["delta"])
            else:
                uset = HypercubeSet(r["center"], r["delta"])
                ana = float("nan")
            emp = empirical_coverage(uset, sub.samples, c)
            rows.append({"set_id": f"{r['kind']}{i}", "delta": r["delta"], "analytical": ana,
                         "empirical": emp, "n": len(sub)})
    path = out / (args.name or "coverage.csv")
    write_coverage_report(rows, path)
    manifest.add_artifact(path)
    print(f"{path}: {len(rows)} rows")
    return EXIT_OK


def _coverage_sweep(args, manifest):
    """Train one flow per (blocks, hidden, seed), solve each context and score coverage."""
    from .experiments import PRESETS, train_flow
    from .sip import solve_cfi
    from .usets import LatentBall, empirical_coverage

    if not args.data:
        raise ConfigurationError("--data (training samples) is required for a sweep")
    ds = _load_dataset(args.data)
    manifest.add_input(args.data)
    test = _load_dataset(args.test_data) if args.test_data else ds
    g = _constraint(args.constraint or _default_constraint(args.problem))
    blocks = [int(b) for b in (args.sweep_blocks or "5").split(",")]
    hidden = [int(h) for h in (args.sweep_hidden or "12").split(",")]
    contexts = [_vector(c) for c in (args.context or [])]
    if not contexts:
        # every distinct context in the training data, or none for unconditional data
        contexts = [None] if ds.m == 0 else list(np.unique(ds.contexts, axis=0))
    cfg = _sip_config(args, "flow")
    rows = []
    for nb in blocks:
        for nh in hidden:
            for s in range(args.seeds):
                seed = args.seed + s
                preset = replace(PRESETS[args.problem if args.problem in PRESETS else "two-moons"],
                                 n_blocks=nb, hidden=nh)
                tr, va = split(ds, args.val_frac, rng=seed)
                extra = {k: v for k, v in {"max_epochs": args.max_epochs,
                                           "batch_size": args.batch_size}.items() if v is not None}
                flow = train_flow(tr, va, preset, seed, **extra).flow
                for c in contexts:
                    res = solve_cfi(flow, g, c, cfg)
                    sub = test.where_context(c) if c is not None else test
                    emp = empirical_coverage(LatentBall(res.delta, flow), sub.samples, c)
                    rows.append({"set_id": f"b{nb}_h{nh}_s{seed}_c{'' if c is None else _fmt(float(c[0]))}",
                                 "delta": res.delta, "analytical": res.analytical_coverage,
                                 "empirical": emp, "n": len(sub), "blocks": nb, "hidden": nh, "seed": seed})
    return rows


def cmd_eval(args, manifest: RunManifest) -> int:
    from .experiments import fit_context_flows, run_scuc_study
    from .sip import benchmark_schedules, write_benchmark

    out = Path(args.out)
    if args.cf:
        table = load_capacity_factors(args.cf)
        manifest.add_input(args.cf)
    else:
        table = gen_synthetic_cf(args.train_days + args.test_days, rng=args.seed)
    grid = _load_grid(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    known = {"PREV", "PREV_T", "PREV_TD", "CUBE", "CUBE@NF"}
    bad = [m for m in methods if m not in known]
    if bad:
        raise ConfigurationError(f"unknown methods {bad}; choose from {sorted(known)}")
    flow_modes = [m for m in methods if m.startswith("PREV")]
    if "CUBE@NF" in methods and "PREV_TD" not in flow_modes:
        flow_modes.append("PREV_TD")
    flows = {}
    for m in flow_modes:
        path = getattr(args, f"model_{m.lower()}", None)
        if path:
            flows[m] = _load_flow(path)
            manifest.add_input(path)
    missing = [m for m in flow_modes if m not in flows]
    if missing:
        extra = {} if args.max_epochs is None else {"max_epochs": args.max_epochs}
        flows.update(fit_context_flows(table, args.train_days, missing, seed=args.seed, **extra))
        for m in missing:
            p = out / f"model_{m}.json"
            flows[m].save(p)
            manifest.add_artifact(p)
    unique = list(dict.fromkeys(methods))
    res = run_scuc_study(grid, table, flows, args.train_days, args.test_days, unique, tol=args.tol,
                         hours_limit=args.hours_limit)
    # a method listed twice gets a second, identical column
    labels, seen = [], {}
    for m in methods:
        seen[m] = seen.get(m, 0) + 1
        labels.append(m if seen[m] == 1 else f"{m}#{seen[m]}")
    schedules = {lab: res.schedules[m] for lab, m in zip(labels, methods)}
    deltas = {lab: res.deltas[m] for lab, m in zip(labels, methods)}
    report = benchmark_schedules(grid, schedules, res.cf, res.hours, args.tol) if labels != unique else res.report
    path = out / (args.name or "benchmark.csv")
    write_benchmark(report, path)
    manifest.add_artifact(path)
    sched = out / "schedules.csv"
    with open(sched, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "hour"] + [f"{m}_p{n + 1}" for m in labels for n in range(grid.n_buses)]
                   + [f"{m}_delta" for m in labels])
        for j in range(len(res.hours)):
            w.writerow([j, int(res.hours[j])] + [_fmt(v) for m in labels for v in schedules[m][j]]
                       + [_fmt(deltas[m][j]) for m in labels])
    manifest.add_artifact(sched)
    for m in labels:
        print(f"{m}: feasible share {report.share[m]:.9g}")
    return EXIT_OK


def cmd_plot(args, manifest: RunManifest) -> int:
    from . import plots

    out = Path(args.out)
    path = out / (args.name or f"{args.kind}.svg")
    if args.kind == "set":
        if not args.result:
            raise ConfigurationError("--result is required for set plots")
        results = json.loads(Path(args.result).read_text())
        if not results:
            raise IngestionError(f"{args.result}: no results")
        flow = _load_flow(args.model) if any(r["kind"] == "ball" for r in results) else None
        samples = _load_dataset(args.data) if args.data else None
        g = _constraint(args.constraint) if args.constraint else None
        plots.plot_sets(results, flow, samples, g, path, extent=args.extent, resolution=args.resolution)
    elif args.kind in ("coverage", "hourly"):
        if not args.table or not Path(args.table).is_file():
            raise ConfigurationError("--table pointing to a CSV is required")
        rows = list(csv.DictReader(open(args.table)))
        if not rows:
            raise IngestionError(f"{args.table}: empty")
        (plots.plot_coverage if args.kind == "coverage" else plots.plot_hourly)(rows, path)
    manifest.add_artifact(path)
    print(path)
    return EXIT_OK


def cmd_export_graph(args, manifest: RunManifest) -> int:
    flow = _load_flow(args.model)
    manifest.add_input(args.model)
    graph = export_graph(flow)
    path = Path(args.out) / (args.name or "graph.json")
    path.write_text(json.dumps(graph))
    manifest.add_artifact(path)
    print(f"{path}: {len(graph['nodes'])} nodes")
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file whose keys supply option defaults")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--name", help="output file name")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="cfi", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-data", parents=[common], help="write a synthetic dataset")
    s.add_argument("kind", choices=["two-moons", "annulus", "cf"])
    s.add_argument("--n", type=int)
    s.add_argument("--noise", type=float, default=0.1)
    s.add_argument("--days", type=int)
    s.add_argument("--buses", type=int, default=3)
    s.add_argument("--start", default="2018-01-01")
    s.set_defaults(func=cmd_gen_data)

    s = sub.add_parser("train", parents=[common], help="fit a conditional flow")
    s.add_argument("--data", required=True)
    s.add_argument("--val-data")
    s.add_argument("--val-frac", type=float, default=0.15)
    s.add_argument("--preset", choices=["two-moons", "annulus", "scuc"], default="two-moons")
    s.add_argument("--context-mode", choices=[m.value for m in ContextMode])
    s.add_argument("--blocks", type=int)
    s.add_argument("--hidden", type=int)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--grad-clip", type=float)
    s.add_argument("--lr", type=float)
    s.add_argument("--max-epochs", type=int)
    s.set_defaults(func=cmd_train)

    def sip_opts(s):
        s.add_argument("--problem", choices=["two-moons", "annulus", "scuc"], default="two-moons")
        s.add_argument("--constraint", choices=CONSTRAINTS)
        s.add_argument("--context", action="append", help="context vector, comma separated; repeatable")
        s.add_argument("--alpha", type=float)
        s.add_argument("--tol-feas", type=float)
        s.add_argument("--delta-max", type=float)
        s.add_argument("--cert-margin", type=float)
        s.add_argument("--max-iter", type=int)
        s.add_argument("--grid-points", type=int)

    def grid_opts(s):
        s.add_argument("--grid", help="grid JSON; defaults to the bundled three-bus instance")
        s.add_argument("--demand", help="nodal demands, comma separated [MW]")
        s.add_argument("--line-scale", type=float, default=1.0)

    s = sub.add_parser("solve", parents=[common], help="solve for the flexibility index")
    sip_opts(s)
    grid_opts(s)
    s.add_argument("--method", choices=["flow", "cube"], default="flow")
    s.add_argument("--model")
    s.add_argument("--center", action="append", help="cube center, comma separated; repeatable")
    s.add_argument("--data", help="samples for mean-centered cubes")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("coverage", parents=[common], help="analytical vs empirical coverage")
    sip_opts(s)
    s.add_argument("--model")
    s.add_argument("--result")
    s.add_argument("--data")
    s.add_argument("--test-data")
    s.add_argument("--sweep-blocks")
    s.add_argument("--sweep-hidden")
    s.add_argument("--seeds", type=int, default=1)
    s.add_argument("--val-frac", type=float, default=0.1)
    s.add_argument("--max-epochs", type=int)
    s.add_argument("--batch-size", type=int)
    s.set_defaults(func=cmd_coverage)

    s = sub.add_parser("eval", parents=[common], help="benchmark hourly schedules on held-out data")
    grid_opts(s)
    s.add_argument("--cf", help="capacity-factor CSV; synthetic data when omitted")
    s.add_argument("--train-days", type=int, default=90)
    s.add_argument("--test-days", type=int, default=10)
    s.add_argument("--methods", default="PREV,PREV_T,PREV_TD,CUBE,CUBE@NF")
    s.add_argument("--model-prev")
    s.add_argument("--model-prev_t", dest="model_prev_t")
    s.add_argument("--model-prev_td", dest="model_prev_td")
    s.add_argument("--max-epochs", type=int)
    s.add_argument("--hours-limit", type=int)
    s.add_argument("--tol", type=float, default=25.0, help="feasibility tolerance for scoring [MW]")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("plot", parents=[common], help="render SVG figures")
    s.add_argument("kind", choices=["set", "coverage", "hourly"])
    s.add_argument("--model")
    s.add_argument("--result")
    s.add_argument("--data")
    s.add_argument("--table")
    s.add_argument("--constraint", choices=CONSTRAINTS)
    s.add_argument("--extent", type=float, nargs=4, default=None, metavar=("XMIN", "XMAX", "YMIN", "YMAX"))
    s.add_argument("--resolution", type=int, default=200)
    s.set_defaults(func=cmd_plot)

    s = sub.add_parser("export-graph", parents=[common], help="write the flow's constraint graph")
    s.add_argument("--model", required=True)
    s.set_defaults(func=cmd_export_graph)
    return p


def _apply_config(parser, argv):
    """Re-parse with defaults taken from a --config JSON file."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    path = Path(args.config)
    if not path.is_file():
        raise ConfigurationError(f"config file {path} does not exist")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigurationError(f"{path}: top level must be an object")
    aliases = {"flow_model": "model", "seeds": "seed"}
    known = vars(args)
    defaults = {}
    for key, value in cfg.items():
        name = aliases.get(key.replace("-", "_"), key.replace("-", "_"))
        if name not in known:
            raise ConfigurationError(f"{path}: unknown key {key!r}")
        if name in ("context", "center") and not isinstance(value, list):
            value = [value]
        if name in ("context", "center"):
            value = [",".join(str(v) for v in np.atleast_1d(x)) for x in value]
        if name == "seed" and isinstance(value, list):
            value = value[0]
        defaults[name] = value
    # command-line flags win over the file
    explicit = {a.dest for a in _explicit_actions(parser, argv)}
    for k, v in defaults.items():
        if k not in explicit:
            setattr(args, k, v)
    return args


def _explicit_actions(parser, argv):
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sp = sub.choices[argv[0]] if argv and argv[0] in sub.choices else None
    if sp is None:
        return []
    flags = {tok.split("=")[0] for tok in argv if tok.startswith("-")}
    return [a for a in sp._actions if any(f in flags for f in a.option_strings)]


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))
    out = Path(args.out)
    manifest = RunManifest(args.command, argv, args.config, args.seed, str(out), _now())
    try:
        out.mkdir(parents=True, exist_ok=True)
        manifest.add_input(args.config)
        code = args.func(args, manifest)
    except IngestionError as exc:
        print(f"ingestion error: {exc}", file=sys.stderr)
        return EXIT_INGEST
    except (ConfigurationError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    manifest.write(out)
    return code


if __name__ == "__main__":
    sys.exit(main())
