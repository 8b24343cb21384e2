"""Command-line entry point.

Subcommands: gen (datasets), train (one model), table (full grid), sweep
(excess risk vs n), design / bounds / ren (calculators), fitplot and
traceplot (SVG figures).  Exit codes: 0 success, 2 grid finished with
divergent replications, 1 runtime failure, 64 usage error, 65 config
schema violation.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace

from . import harness, theory
from .datagen import PrngStream, make_dataset
from .losses import parse_loss
from .mlp import as_predictor, save_params
from .optim import train

EX_OK = 0
EX_RUNTIME = 1
EX_PARTIAL = 2
EX_USAGE = 64
EX_CONFIG = 65


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _parse_p(text: str) -> float:
    if text.lower() in ("inf", "infinity", "+inf"):
        return math.inf
    return float(text)


def _apply_overrides(raw: dict, pairs: list[str]) -> dict:
    """Apply --set key=value pairs with dotted paths into the config dict."""
    for pair in pairs:
        if "=" not in pair:
            raise _UsageError(f"--set expects key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise harness.ConfigError([f"--set: no config section {part!r} in {key!r}"])
            node = node[part]
        if parts[-1] not in node:
            raise harness.ConfigError([f"--set: unknown config key {key!r}"])
        node[parts[-1]] = parsed
    return raw


def _load_config(args) -> harness.ExperimentConfig:
    if not getattr(args, "config", None):
        raise _UsageError("this subcommand requires --config")
    with open(args.config) as fh:
        raw = json.load(fh)
    raw = _apply_overrides(raw, args.set or [])
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        raw["threads"] = args.threads
    return harness.config_from_dict(raw)


def _outdir(args, *sub) -> str:
    path = os.path.join(args.out, *sub)
    os.makedirs(path, exist_ok=True)
    return path


def _add_common(sp, out_default="out"):
    sp.add_argument("--config", help="experiment config (JSON)")
    sp.add_argument("--out", default=out_default, help="output directory")
    sp.add_argument("--seed", type=int, default=None, help="override master seed")
    sp.add_argument("--threads", type=int, default=None, help="worker pool size")
    sp.add_argument("--dry-run", action="store_true",
                    help="validate config and print the plan, write nothing")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="override a config key (dotted path)", default=[])
    sp.add_argument("-v", "--verbose", action="store_true",
                    help="print every test-loss column per cell")


def build_parser() -> _Parser:
    parser = _Parser(prog="robustnpr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("gen", "train", "table", "sweep", "fitplot", "traceplot"):
        sp = sub.add_parser(name)
        _add_common(sp)
        if name == "sweep":
            sp.add_argument("--n-list", default=None,
                            help="comma-separated sample sizes (default: config n_list)")

    for name in ("design", "bounds", "ren"):
        sp = sub.add_parser(name)
        sp.add_argument("--n", type=float, required=True)
        sp.add_argument("--d", type=int, default=1)
        sp.add_argument("--p", type=_parse_p, default=math.inf,
                        help="moment order; 'inf' for sub-exponential")
        sp.add_argument("--alpha", type=float, default=1.0)
        sp.add_argument("--theta", type=float, default=1.0)
        sp.add_argument("--out", default=None, help="also write a CSV here")
        if name == "design":
            sp.add_argument("--quadratic", action="store_true")
            sp.add_argument("--d-delta", type=int, default=None)
            sp.add_argument("--family", choices=("dfw", "wfd"), default="dfw")
        if name == "bounds":
            sp.add_argument("--loss", default="lad")
            sp.add_argument("--hyper", type=float, default=None)
            sp.add_argument("--B", type=float, default=1.0)
            sp.add_argument("--variant", default="thm2",
                            choices=theory.EXCESS_VARIANTS)
            sp.add_argument("--C", type=float, default=1.0)
            sp.add_argument("--C2", type=float, default=1.0)
            sp.add_argument("--lambda-quad", type=float, default=None)
            sp.add_argument("--calibration", type=float, default=None)
            sp.add_argument("--d-delta", type=int, default=None)
    return parser


def _print_design_rows(rows, out_path):
    header = ("name", "W", "D", "S", "U", "exponent", "bound_terms")
    table = [header] + [tuple(str(v) for v in row) for row in rows]
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    for r in table:
        print("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip())
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(str(v) for v in row) + "\n")


def _cmd_design(args) -> int:
    rate = theory.RateSpec(p=args.p, alpha=args.alpha, d=args.d, theta=args.theta,
                           d_target=getattr(args, "d_delta", None))
    n = int(args.n)
    if args.family == "wfd":
        design = theory.wfd_design(n, rate)
    else:
        design = theory.rectangle_design(n, rate, quadratic=args.quadratic,
                                         manifold_d_delta=args.d_delta)
    expo = theory.rate_exponent(rate)
    bound = theory.excess_bound(design, rate, parse_loss("lad"), n,
                                variant="manifold" if args.d_delta else "thm2")
    terms = f"stoch={bound.stochastic:.6g}|approx={bound.approximation:.6g}"
    print(f"# design at n={n} (bounds up to constants, C=1)")
    _print_design_rows(
        [(design.label, design.W, design.D, design.S, design.U,
          f"{expo:.6g}", terms)], args.out)
    return EX_OK


def _cmd_bounds(args) -> int:
    rate = theory.RateSpec(p=args.p, alpha=args.alpha, d=args.d, theta=args.theta,
                           d_target=args.d_delta)
    n = int(args.n)
    loss = parse_loss(args.loss if args.hyper is None
                      else {"kind": args.loss, "hyper": args.hyper})
    design = theory.rectangle_design(n, rate, manifold_d_delta=args.d_delta, B=args.B)
    bound = theory.excess_bound(design, rate, loss, n, variant=args.variant,
                                C=args.C, C2=args.C2,
                                lambda_quad=args.lambda_quad,
                                calibration=args.calibration)
    print(f"# excess-risk bound, variant={bound.variant} (up to constants)")
    print(f"stochastic    {bound.stochastic:.8g}")
    print(f"approximation {bound.approximation:.8g}")
    print(f"total         {bound.total:.8g}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("name,W,D,S,U,exponent,bound_terms\n")
            fh.write(f"{design.label},{design.W},{design.D},{design.S},{design.U},"
                     f"{theory.rate_exponent(rate)!r},"
                     f"stoch={bound.stochastic!r}|approx={bound.approximation!r}\n")
    return EX_OK


def _cmd_ren(args) -> int:
    rate = theory.RateSpec(p=args.p, alpha=args.alpha, d=args.d, theta=args.theta)
    rows = theory.ren_catalog(args.n, rate)
    labels = [r.label for r in rows]
    print(f"# relative network efficiency at n={args.n:g}")
    header = ["name", "exponent", "size_estimate"] + [f"ren_vs_{l}" for l in labels]
    lines = []
    for r in rows:
        vals = [r.label, f"{r.exponent:.4g}", f"{r.size_estimate:.6g}"]
        vals += [f"{r.ren_vs[l]:.6g}" for l in labels]
        lines.append(vals)
    table = [header] + lines
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]
    for row in table:
        print("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip())
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(",".join(header) + "\n")
            for vals in lines:
                fh.write(",".join(vals) + "\n")
    return EX_OK


def _plan(cfg: harness.ExperimentConfig, command: str) -> str:
    cells = len(cfg.noises) * len(cfg.train_losses) * len(cfg.n_list)
    return (f"{command}: target={cfg.target.kind} d={cfg.target.d}, "
            f"{len(cfg.noises)} noise(s) x {len(cfg.train_losses)} train loss(es) x "
            f"{len(cfg.n_list)} n value(s) = {cells} cell(s), R={cfg.replications}, "
            f"T={cfg.test_size}, epochs={cfg.train.epochs}, seed={cfg.master_seed}")


def _cmd_gen(args) -> int:
    cfg = _load_config(args)
    if args.dry_run:
        print(_plan(cfg, "gen"))
        return EX_OK
    out = _outdir(args)
    stream = PrngStream(cfg.master_seed)
    ds = make_dataset(cfg.target, cfg.noises[0], cfg.n_list[0], stream,
                      manifold=cfg.manifold)
    path = os.path.join(out, "dataset.csv")
    from .datagen import dataset_to_csv

    dataset_to_csv(ds, path)
    print(f"wrote {path} (n={ds.n}, d={ds.d})")
    return EX_OK


def _cmd_train(args) -> int:
    cfg = _load_config(args)
    if args.dry_run:
        print(_plan(cfg, "train"))
        return EX_OK
    out = _outdir(args)
    master = PrngStream(cfg.master_seed)
    data_rng, train_rng = master.split(2)
    ds = make_dataset(cfg.target, cfg.noises[0], cfg.n_list[0], data_rng,
                      manifold=cfg.manifold)
    loss = cfg.train_losses[0]
    params, trace = train(ds, cfg.shape, loss, cfg.train, train_rng)
    model_path = os.path.join(out, f"model_{loss.label}.bin")
    save_params(params, model_path)
    trace.to_csv(os.path.join(out, f"trace_{loss.label}.csv"))
    print(f"trained {loss.label} on {cfg.target.kind} n={ds.n}; "
          f"final loss {trace.losses[-1]:.6g}; wrote {model_path}")
    return EX_OK


def _cmd_table(args) -> int:
    cfg = _load_config(args)
    if args.dry_run:
        print(_plan(cfg, "table"))
        return EX_OK
    out = _outdir(args)
    report = harness.run_table(cfg)
    harness.emit_csv(report, os.path.join(out, "report.csv"))
    harness.emit_raw_csv(report, os.path.join(out, "raw"))
    harness.emit_provenance(report, os.path.join(out, "provenance.json"))
    kind = "excess" if cfg.excess else "raw"
    for (noise, tl, n), cell in report.cells.items():
        if args.verbose:
            cols = " ".join(f"{t.label}={cell.mean(t.label):.6g}"
                            for t in cfg.test_losses)
        else:
            first = cfg.test_losses[0].label
            cols = f"{first}-{kind} mean={cell.mean(first):.6g}"
        print(f"cell noise={noise} train={tl} n={n}: {cols} "
              f"divergences={cell.divergences}")
    div = harness.total_divergences(report)
    print(f"report written to {out} ({div} divergent replications)")
    return EX_PARTIAL if div else EX_OK


def _cmd_sweep(args) -> int:
    cfg = _load_config(args)
    n_list = ([int(v) for v in args.n_list.split(",")] if args.n_list
              else list(cfg.n_list))
    if args.dry_run:
        print(_plan(replace(cfg, n_list=tuple(n_list)), "sweep"))
        return EX_OK
    out = _outdir(args)
    sweep = harness.convergence_sweep(cfg, n_list)
    path = os.path.join(out, "sweep.csv")
    harness.emit_sweep_csv(sweep, path)
    for label, slope in sweep.slopes.items():
        txt = "n/a" if slope is None else f"{slope:.4g}"
        print(f"test={label}: means={['%.4g' % v for v in sweep.means[label]]} "
              f"log-log slope={txt}")
    print(f"wrote {path}")
    return EX_OK


def _one_shot_models(cfg: harness.ExperimentConfig):
    """Train one replication per training loss on a shared dataset."""
    master = PrngStream(cfg.master_seed)
    data_rng, *train_rngs = master.split(1 + len(cfg.train_losses))
    ds = make_dataset(cfg.target, cfg.noises[0], cfg.n_list[0], data_rng,
                      manifold=cfg.manifold)
    models, traces = {}, {}
    for loss, rng in zip(cfg.train_losses, train_rngs):
        params, trace = train(ds, cfg.shape, loss, cfg.train, rng)
        models[loss.label] = as_predictor(params, clamp=cfg.clamp_eval)
        traces[loss.label] = trace
    return ds, models, traces


def _cmd_fitplot(args) -> int:
    cfg = _load_config(args)
    if args.dry_run:
        print(_plan(cfg, "fitplot"))
        return EX_OK
    plots = _outdir(args, "plots")
    ds, models, _ = _one_shot_models(cfg)
    name = f"fit_{cfg.target.kind}_{cfg.noises[0].label}_n{cfg.n_list[0]}.svg"
    path = os.path.join(plots, name)
    harness.emit_fit_svg(models, cfg.target, ds, path,
                         title=f"{cfg.target.kind}, {cfg.noises[0].label}, n={ds.n}")
    print(f"wrote {path}")
    return EX_OK


def _cmd_traceplot(args) -> int:
    cfg = _load_config(args)
    if args.dry_run:
        print(_plan(cfg, "traceplot"))
        return EX_OK
    plots = _outdir(args, "plots")
    _, _, traces = _one_shot_models(cfg)
    name = f"trace_{cfg.target.kind}_{cfg.noises[0].label}_n{cfg.n_list[0]}.svg"
    path = os.path.join(plots, name)
    harness.emit_trace_svg(traces, path,
                           title=f"{cfg.target.kind}, {cfg.noises[0].label}")
    print(f"wrote {path}")
    return EX_OK


_COMMANDS = {
    "gen": _cmd_gen,
    "train": _cmd_train,
    "table": _cmd_table,
    "sweep": _cmd_sweep,
    "design": _cmd_design,
    "bounds": _cmd_bounds,
    "ren": _cmd_ren,
    "fitplot": _cmd_fitplot,
    "traceplot": _cmd_traceplot,
}


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EX_USAGE
    except harness.ConfigError as exc:
        print("config errors:", file=sys.stderr)
        for item in exc.errors:
            print(f"  - {item}", file=sys.stderr)
        return EX_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_RUNTIME
    except (ValueError, RuntimeError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_RUNTIME


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
