"""Command-line front end: ``slipid {simulate,generate,train,eval,identify}``.

Exit codes: 0 success, 1 usage error, 2 gait/simulation failure, 3 I/O or
format error, 4 training failure.  Every error prints a single
``slipid: error[<kind>]: <reason>`` line to stderr.  Each output file gets a
``<file>.config.json`` echo of the invocation next to it.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import dataset, identifiability, mlp
from .dynamics import DEFAULT_ALPHA0, DEFAULT_G, GaitParams
from .simulator import (
    DEFAULT_DURATION,
    DEFAULT_INTERNAL_H,
    DEFAULT_OUTPUT_DT,
    DEFAULT_V0,
    GaitFailure,
    InitialConditions,
    simulate,
    write_csv,
)
from .svg import scatter_svg

EXIT_OK, EXIT_USAGE, EXIT_GAIT, EXIT_IO, EXIT_TRAIN = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _positive(text):
    v = float(text)
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return v


def _add_subject(p):
    p.add_argument("--m", type=_positive, default=70.0, help="mass, kg")
    p.add_argument("--k", type=_positive, default=9000.0, help="leg stiffness, N/m")
    p.add_argument("--l0", type=_positive, default=0.7, help="rest leg length, m")
    p.add_argument("--x0", type=float, default=0.0)
    p.add_argument("--y-offset", type=float, default=0.0, help="apex compression, m")
    p.add_argument("--v0", type=_positive, default=DEFAULT_V0)


def _add_physics(p):
    p.add_argument("--alpha0-deg", type=_positive, default=math.degrees(DEFAULT_ALPHA0))
    p.add_argument("--g", type=_positive, default=DEFAULT_G)


def _add_timing(p):
    p.add_argument("--duration", type=_positive, default=DEFAULT_DURATION)
    p.add_argument("--dt", type=_positive, default=DEFAULT_OUTPUT_DT)
    p.add_argument("--internal-h", type=_positive, default=DEFAULT_INTERNAL_H)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="slipid", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate one gait and write a trajectory CSV")
    _add_subject(s)
    _add_physics(s)
    _add_timing(s)
    s.add_argument("--out", required=True)

    g = sub.add_parser("generate", help="generate a synthetic gait dataset")
    g.add_argument("--n", type=_nonneg_int, required=True)
    g.add_argument("--seed", type=_nonneg_int, default=0)
    g.add_argument("--workers", type=int, default=1)
    for name, default in (("m", (60.0, 75.0)), ("k", (8000.0, 10000.0)), ("l0", (0.6, 0.8)),
                          ("x0", (0.0, 0.1)), ("y0", (0.0, 0.1))):
        g.add_argument(f"--{name}-range", type=float, nargs=2, metavar=("LO", "HI"), default=default)
    speed = g.add_mutually_exclusive_group()
    speed.add_argument("--v0", type=_positive, default=None)
    speed.add_argument("--v0-range", type=_positive, nargs=2, metavar=("LO", "HI"), default=None)
    _add_physics(g)
    _add_timing(g)
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train the regressor on a dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--scenario", choices=[s.value for s in mlp.Scenario], default="two-param")
    t.add_argument("--epochs", type=int, default=500)
    t.add_argument("--batch", type=int, default=1000)
    t.add_argument("--lr", type=_positive, default=1e-3)
    t.add_argument("--seed", type=_nonneg_int, default=0)
    t.add_argument("--model-out", required=True)
    t.add_argument("--history-out")
    t.add_argument("--scatter-dir")
    t.add_argument("--quiet", action="store_true")

    e = sub.add_parser("eval", help="evaluate a trained model on its held-out test split")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--scatter-dir", required=True)
    e.add_argument("--metrics-out")
    e.add_argument("--svg", action="store_true")

    i = sub.add_parser("identify", help="sensitivity-rank identifiability report at one parameter point")
    _add_subject(i)
    _add_physics(i)
    _add_timing(i)
    i.add_argument("--rel-step", type=_positive, default=1e-4)
    i.add_argument("--n-mc", type=int, default=200_000)
    i.add_argument("--report-out", required=True)
    i.add_argument("--svg", action="store_true")
    return parser


def _echo(path, args) -> None:
    cfg = {k: v for k, v in vars(args).items()}
    Path(f"{path}.config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")


def _subject(args) -> tuple[GaitParams, InitialConditions]:
    alpha0 = math.radians(args.alpha0_deg)
    if not 0 < alpha0 < math.pi / 2:
        raise UsageError(f"--alpha0-deg must lie in (0, 90), got {args.alpha0_deg}")
    if not 0 <= args.y_offset < args.l0:
        raise UsageError("--y-offset must lie in [0, l0)")
    return GaitParams(args.m, args.k, args.l0, alpha0, args.g), InitialConditions(args.x0, args.y_offset, args.v0)


def _check_timing(args) -> None:
    if args.internal_h > args.dt:
        raise UsageError("--internal-h must not exceed --dt")


def _cmd_simulate(args) -> int:
    _check_timing(args)
    p, ic = _subject(args)
    traj = simulate(p, ic, args.duration, args.dt, args.internal_h)
    write_csv(traj, args.out)
    _echo(args.out, args)
    steps = sum(1 for _, kind in traj.events if kind == "touchdown")
    print(f"{len(traj)} samples, {steps} touchdowns, energy drift {traj.energy_drift:.3e} -> {args.out}")
    return EXIT_OK


def _cmd_generate(args) -> int:
    _check_timing(args)
    if args.workers < 1:
        raise UsageError("--workers must be at least 1")
    v0 = tuple(args.v0_range) if args.v0_range else (args.v0 if args.v0 is not None else DEFAULT_V0)
    try:
        ranges = dataset.SamplingRanges(
            tuple(args.m_range), tuple(args.k_range), tuple(args.l0_range),
            tuple(args.x0_range), tuple(args.y0_range), v0, math.radians(args.alpha0_deg), args.g,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    sim = dataset.SimConfig(args.duration, args.dt, args.internal_h)
    ds = dataset.generate(args.n, args.seed, ranges, sim, workers=args.workers)
    dataset.save(ds, args.out)
    _echo(args.out, args)
    print(f"{len(ds)} records, {ds.meta.rejection_count} rejected "
          f"(acceptance {dataset.acceptance_rate(ds):.3f}) -> {args.out}")
    return EXIT_OK


def _write_pairs(pairs, directory, svg: bool, args) -> None:
    Path(directory).mkdir(parents=True, exist_ok=True)
    for path in mlp.write_scatter(pairs, directory):
        _echo(path, args)
    if svg:
        for name, (actual, predicted) in pairs.items():
            Path(directory, f"scatter_{name}.svg").write_text(
                scatter_svg(actual, predicted, title=f"test set: {name}",
                            xlabel=f"actual {name}", ylabel=f"predicted {name}"))


def _print_metrics(metrics: mlp.Metrics) -> None:
    for i, name in enumerate(metrics.names):
        r2 = metrics.r_squared[i]
        r2s = "undefined" if r2 is None else f"{r2:.4f}"
        print(f"{name:>4s}: R2 {r2s}  mae {metrics.mae[i]:.4g}  mse {metrics.mse[i]:.4g}")
    print(f"tolerance accuracy {metrics.tolerance_accuracy:.4f} (n={metrics.n})")


def _cmd_train(args) -> int:
    if args.epochs < 1 or args.batch < 1:
        raise UsageError("--epochs and --batch must be at least 1")
    ds = dataset.load(args.data)
    cfg = mlp.TrainConfig(epochs=args.epochs, batch_size=args.batch, learning_rate=args.lr,
                          seed=args.seed, scenario=args.scenario)

    def log(row):
        if not args.quiet:
            print("epoch {} train {:.5g} val {:.5g} acc {:.4f}/{:.4f}".format(*row), file=sys.stderr)

    model, metrics = mlp.train(ds, cfg, log=log)
    model.config["data"] = str(args.data)
    mlp.save_model(model, args.model_out)
    _echo(args.model_out, args)
    if args.history_out:
        mlp.write_history(metrics.history, args.history_out)
        _echo(args.history_out, args)
    if args.scatter_dir:
        _, pairs = mlp.evaluate(model, *mlp.held_out_split(model, ds))
        _write_pairs(pairs, args.scatter_dir, False, args)
    print(f"best epoch {metrics.best_epoch} -> {args.model_out}")
    _print_metrics(metrics)
    return EXIT_OK


def _cmd_eval(args) -> int:
    model = mlp.load_model(args.model)
    ds = dataset.load(args.data)
    try:
        x, y = mlp.held_out_split(model, ds)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    metrics, pairs = mlp.evaluate(model, x, y, model.config["train"].get("tolerance", 0.05))
    _write_pairs(pairs, args.scatter_dir, args.svg, args)
    if args.metrics_out:
        Path(args.metrics_out).write_text(json.dumps(metrics.to_dict(), indent=2) + "\n")
        _echo(args.metrics_out, args)
    _print_metrics(metrics)
    return EXIT_OK


def _cmd_identify(args) -> int:
    _check_timing(args)
    if args.n_mc < 100_000:
        raise UsageError("--n-mc must be at least 100000")
    p, ic = _subject(args)
    sim_kw = dict(duration=args.duration, output_dt=args.dt, internal_h=args.internal_h)
    reports = identifiability.analyze(p, ic, args.rel_step, **sim_kw)
    ranges = dataset.SamplingRanges(alpha0=p.alpha0, g=p.g, v0=ic.v0)
    bounds = {t: identifiability.conditional_r2_bound(ranges, t, args.n_mc) for t in ("m", "k")}
    identifiability.write_report_csv(reports, args.report_out)
    _echo(args.report_out, args)
    summary = identifiability.format_summary(reports, bounds)
    Path(f"{args.report_out}.txt").write_text(summary + "\n")
    print(summary)
    if args.svg:
        c = 1.25
        base = simulate(p, ic, **sim_kw)
        scaled = simulate(p.scaled(c), ic, **sim_kw)
        Path(f"{args.report_out}.svg").write_text(scatter_svg(
            base.ys, scaled.ys, title=f"CoM height: (m, k) vs ({c} m, {c} k)",
            xlabel="y baseline, m", ylabel="y scaled subject, m"))
    return EXIT_OK


COMMANDS = {
    "simulate": _cmd_simulate,
    "generate": _cmd_generate,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "identify": _cmd_identify,
}


def _fail(kind: str, message: str, code: int) -> int:
    print(f"slipid: error[{kind}]: {' '.join(str(message).split())}", file=sys.stderr)
    return code


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(parser.format_usage().rstrip(), file=sys.stderr)
        return _fail("usage", exc, EXIT_USAGE)
    except (GaitFailure, dataset.GenerationError, identifiability.SensitivityError) as exc:
        return _fail("gait", exc, EXIT_GAIT)
    except mlp.TrainingError as exc:
        return _fail("training", exc, EXIT_TRAIN)
    except (OSError, dataset.DatasetFormatError, mlp.ModelFormatError, KeyError) as exc:
        return _fail("io", exc, EXIT_IO)
    except ValueError as exc:
        return _fail("usage", exc, EXIT_USAGE)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
