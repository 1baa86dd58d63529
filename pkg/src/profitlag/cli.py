"""``profitlag`` command-line interface.

Subcommands: ``analyze``, ``curve``, ``sweep``, ``simulate``, ``compare`` and
``rerun``. Each command writes its outputs plus one ``<stem>.manifest.json``
recording the exact argv, so ``profitlag rerun <manifest>`` reproduces the
outputs byte for byte.

Exit codes: 0 ok, 2 invalid arguments, 3 I/O failure, 4 horizon too short.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, analytic, report, sim
from .domain import MinerParams, ParameterError, ProtocolParams, Strategy

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_HORIZON = 0, 2, 3, 4
OUTPUT_DIR_ENV = "PROFITLAG_OUTPUT_DIR"

FLAG_OF = {
    "q": "--q", "gamma": "--gamma", "tau0": "--proto-tau0", "n0": "--proto-n0", "b": "--proto-b",
    "n_runs": "--runs", "n_periods": "--periods", "seed": "--seed",
    "samples_per_period": "--samples-per-period", "timestamps": "--timestamps",
    "alt_chain": "--alt-chain", "strategy": "strategy", "horizon": "--horizon",
    "q_range": "--q-range", "gamma_range": "--gamma-range",
}


class UsageError(Exception):
    def __init__(self, flag: str, message: str):
        super().__init__(f"{flag}: {message}")
        self.flag = flag


def _strategies(with_hm=True):
    return [s.value for s in Strategy if with_hm or s is not Strategy.HM]


def _add_common(p: argparse.ArgumentParser, gamma=True):
    p.add_argument("--q", type=float, required=True, help="attacker hashrate share, in (0, 0.5)")
    if gamma:
        p.add_argument("--gamma", type=float, default=0.0, help="tie connectivity, in [0, 1] (default 0)")
    p.add_argument("--proto-tau0", type=float, default=600.0, help="target block time in seconds (default 600)")
    p.add_argument("--proto-n0", type=int, default=2016, help="blocks per difficulty period (default 2016)")
    p.add_argument("--proto-b", type=float, default=1.0, help="coinbase reward (default 1)")


def _add_output(p: argparse.ArgumentParser):
    p.add_argument("--out", help="output path stem; extensions are added per file")
    p.add_argument("--outdir", help=f"directory for relative stems (default ${OUTPUT_DIR_ENV} or cwd)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="profitlag", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"profitlag {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="closed-form statistics and profit lag")
    p.add_argument("strategy", choices=_strategies())
    _add_common(p)
    _add_output(p)

    p = sub.add_parser("curve", help="expected advantage over honest mining vs chain progress")
    p.add_argument("strategy", choices=_strategies())
    _add_common(p)
    p.add_argument("--horizon", type=int, default=20, help="difficulty periods to plot (default 20)")
    p.add_argument("--no-svg", action="store_true", help="skip the SVG plot")
    _add_output(p)

    p = sub.add_parser("sweep", help="dominance map over (q, gamma)")
    p.add_argument("--q-range", default="0.005:0.495:0.005", help="start:stop:step, inclusive")
    p.add_argument("--gamma-range", default="0:1:0.01", help="start:stop:step, inclusive")
    p.add_argument("--tol", type=float, default=1e-6, help="bisection tolerance on threshold curves")
    p.add_argument("--no-svg", action="store_true", help="skip the SVG region map")
    _add_output(p)

    for name, help_ in (("simulate", "Monte Carlo run with analytic side-by-side"),
                        ("compare", "simulate several strategies and rank them")):
        p = sub.add_parser(name, help=help_)
        if name == "simulate":
            p.add_argument("strategy", choices=_strategies())
        else:
            p.add_argument("strategies", nargs="*", metavar="strategy",
                           help="strategies to compare: hm, sm, ism, anm (default all)")
        _add_common(p)
        p.add_argument("--runs", type=int, default=1000, help="independent runs (default 1000)")
        p.add_argument("--periods", type=int, default=20, help="difficulty periods per run (default 20)")
        p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
        p.add_argument("--samples-per-period", type=int, default=16,
                       help="advantage samples per difficulty period (default 16)")
        p.add_argument("--timestamps", choices=sim.TIMESTAMP_MODES, default="publication",
                       help="retarget stamps of burst-published blocks")
        p.add_argument("--alt-chain", choices=sim.ALT_CHAIN_MODES, default="continuous",
                       help="revenue model on the alternate network")
        if name == "simulate":
            p.add_argument("--events", action="store_true", help="also write the per-block event log CSV")
            p.add_argument("--profit-lag", action="store_true",
                           help="require an empirical profit lag (exit 4 if the horizon is too short)")
        _add_output(p)

    p = sub.add_parser("rerun", help="repeat a command from its manifest")
    p.add_argument("manifest", help="path to a .manifest.json file")
    _add_output(p)
    return ap


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _params(args) -> tuple[MinerParams, ProtocolParams]:
    return (MinerParams(args.q, getattr(args, "gamma", 0.0)),
            ProtocolParams(args.proto_tau0, args.proto_n0, args.proto_b))


def parse_range(text: str, flag: str) -> np.ndarray:
    try:
        start, stop, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise UsageError(flag, f"expected start:stop:step, got {text!r}") from None
    if step <= 0 or stop < start:
        raise UsageError(flag, "need step > 0 and stop >= start")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return np.round(start + step * np.arange(n), 12)


def _output_dir(args) -> Path:
    return Path(args.outdir or os.environ.get(OUTPUT_DIR_ENV) or ".")


def _stem(args, default: str) -> Path:
    stem = Path(args.out) if args.out else Path(default)
    if stem.suffix in (".json", ".csv", ".svg"):
        stem = stem.with_suffix("")
    if not stem.is_absolute():
        stem = _output_dir(args) / stem
    return stem.resolve()


def _with_suffix(stem: Path, suffix: str) -> Path:
    return stem.with_name(stem.name + suffix)


def _replay_argv(argv: list[str], stem: Path) -> list[str]:
    """argv with output placement pinned to an absolute stem."""
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a in ("--out", "--outdir"):
            skip = True
            continue
        if a.startswith("--out=") or a.startswith("--outdir="):
            continue
        out.append(a)
    return out + ["--out", str(stem)]


def _write_outputs(command: str, stem: Path, files: dict[str, str], parameters: dict, seed,
                   argv: list[str], started: float) -> list[Path]:
    written = [report.atomic_write(_with_suffix(stem, suffix), text) for suffix, text in files.items()]
    manifest = {
        "command": command,
        "parameters": parameters,
        "seed": seed,
        "tool_version": __version__,
        "outputs": [str(p) for p in written],
        "wall_clock_seconds": round(time.perf_counter() - started, 6),
        "argv": _replay_argv(argv, stem),
    }
    m = report.atomic_write(_with_suffix(stem, ".manifest.json"),
                            json.dumps(manifest, indent=2, allow_nan=False) + "\n")
    return written + [m]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_analyze(args, argv, started) -> int:
    params, proto = _params(args)
    text = report.dumps(report.analyze_report(Strategy.parse(args.strategy), params, proto))
    stem = _stem(args, f"analyze_{args.strategy}")
    _write_outputs("analyze", stem, {".json": text}, report.params_dict(params, proto) | {"strategy": args.strategy},
                   None, argv, started)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_curve(args, argv, started) -> int:
    params, proto = _params(args)
    if args.horizon < 1:
        raise UsageError("--horizon", "must be >= 1 period")
    traj = analytic.delta_trajectory(args.strategy, params, proto, args.horizon)
    files = {".csv": report.curve_csv(traj)}
    if not args.no_svg:
        files[".svg"] = report.curve_svg(traj)
    stem = _stem(args, f"curve_{args.strategy}")
    paths = _write_outputs("curve", stem, files,
                           report.params_dict(params, proto) | {"strategy": args.strategy, "horizon": args.horizon},
                           None, argv, started)
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_sweep(args, argv, started) -> int:
    qs = parse_range(args.q_range, "--q-range")
    gs = parse_range(args.gamma_range, "--gamma-range")
    if np.any((qs <= 0) | (qs >= 0.5)):
        raise UsageError("--q-range", "q values must lie in (0, 0.5)")
    if np.any((gs < 0) | (gs > 1)):
        raise UsageError("--gamma-range", "gamma values must lie in [0, 1]")
    dmap = analytic.dominance_map(qs, gs, args.tol)
    files = {".csv": report.sweep_csv(dmap)}
    if not args.no_svg:
        files[".svg"] = report.dominance_svg(dmap)
    stem = _stem(args, "sweep")
    paths = _write_outputs("sweep", stem, files,
                           {"q_range": args.q_range, "gamma_range": args.gamma_range, "tol": args.tol},
                           None, argv, started)
    for p in paths:
        print(p)
    return EXIT_OK


def _sim_config(args, strategy, params, proto, record_events=False) -> sim.SimConfig:
    return sim.SimConfig(params, proto, Strategy.parse(strategy), n_periods=args.periods, n_runs=args.runs,
                         seed=args.seed, samples_per_period=args.samples_per_period,
                         timestamps=args.timestamps, alt_chain=args.alt_chain, record_events=record_events)


def _sim_parameters(args, params, proto) -> dict:
    return report.params_dict(params, proto) | {
        "runs": args.runs, "periods": args.periods, "samples_per_period": args.samples_per_period,
        "timestamps": args.timestamps, "alt_chain": args.alt_chain}


def cmd_simulate(args, argv, started) -> int:
    params, proto = _params(args)
    cfg = _sim_config(args, args.strategy, params, proto, record_events=args.events)
    outcome = sim.run(cfg)
    if args.profit_lag and cfg.strategy is not Strategy.HM and outcome.profit_lag_hat is None:
        final = outcome.delta_path.breakpoints[-1].delta
        print(f"error: horizon too short: mean delta at {args.periods} periods is {final:.6g}; "
              f"raise --periods", file=sys.stderr)
        return EXIT_HORIZON
    text = report.dumps(report.simulate_report(outcome, cfg))
    files = {".json": text}
    if args.events:
        buf = io.StringIO()
        sim.write_event_csv(outcome.events, buf)
        files[".events.csv"] = buf.getvalue()
    stem = _stem(args, f"simulate_{args.strategy}")
    _write_outputs("simulate", stem, files, _sim_parameters(args, params, proto) | {"strategy": args.strategy},
                   args.seed, argv, started)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_compare(args, argv, started) -> int:
    params, proto = _params(args)
    names = [Strategy.parse(n).value for n in args.strategies] or _strategies()
    rows = {}
    for name in names:
        cfg = dataclasses.replace(_sim_config(args, name, params, proto), record_delta=False)
        out = sim.run(cfg)
        pred = report.analytic_predictions(cfg.strategy, params, proto)
        rows[name] = {"apparent_hashrate": report._cmp(out.apparent_hashrate_hat, pred["apparent_hashrate"]),
                      "revenue_ratio": report._cmp(out.revenue_ratio_hat, pred["revenue_ratio"])}
    by_analytic = sorted(names, key=lambda n: -rows[n]["revenue_ratio"]["analytic"])
    by_sim = sorted(names, key=lambda n: -rows[n]["revenue_ratio"]["value"])
    doc = {"parameters": _sim_parameters(args, params, proto), "seed": args.seed, "strategies": rows,
           "ranking_analytic": by_analytic, "ranking_simulated": by_sim}
    text = report.dumps(doc)
    stem = _stem(args, "compare")
    _write_outputs("compare", stem, {".json": text}, _sim_parameters(args, params, proto) | {"strategies": names},
                   args.seed, argv, started)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_rerun(args, argv, started) -> int:
    text = Path(args.manifest).read_text()
    try:
        manifest = json.loads(text)
        replay = list(manifest["argv"])
    except (ValueError, KeyError, TypeError):
        raise UsageError("manifest", f"{args.manifest} is not a valid manifest") from None
    if manifest.get("tool_version") != __version__:
        print(f"warning: manifest written by version {manifest.get('tool_version')}, running {__version__}",
              file=sys.stderr)
    if not replay or replay[0] == "rerun":
        raise UsageError("manifest", "manifest does not record a replayable command")
    if args.out:
        replay += ["--out", str(_stem(args, args.out))]
    return main(replay)


COMMANDS = {"analyze": cmd_analyze, "curve": cmd_curve, "sweep": cmd_sweep, "simulate": cmd_simulate,
            "compare": cmd_compare, "rerun": cmd_rerun}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    started = time.perf_counter()
    try:
        return COMMANDS[args.command](args, argv, started)
    except ParameterError as exc:
        print(f"error: {FLAG_OF.get(exc.field, exc.field)}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except sim.HorizonTooShort as exc:
        print(f"error: horizon too short: {exc}", file=sys.stderr)
        return EXIT_HORIZON
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
