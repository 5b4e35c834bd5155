"""Command-line entry point: ``dpsc <subcommand> ...``."""
from __future__ import annotations

import argparse
import configparser
import os
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

from ..dp import BudgetLedger, PrivacyBudget, RandomStream
from ..geocast import ScoreMaps, Task, build_gr_greedy_utility, build_gr_rht, dump_gr
from ..psd import build_psd_gdy, build_psd_ggr, build_psd_rht, dump_psd, load_psd
from .data import IngestConfig, load_locations, read_dataset, read_synth_spec, synth_generate, write_dataset
from .experiment import (
    SCHEMES, SWEEP_GRIDS, dataset_from_parser, read_config, run_to_dir, schemes_from_parser, sweep,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"{self.prog}: error: {message}\n")


def default_config_path() -> Path:
    return Path(str(resources.files("dpsc.harness").joinpath("default_experiment.ini")))


def _resolve_seed(args, fallback: int = 0) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("GEOCAST_SEED")
    if env:
        return int(env)
    return fallback


def _noise(args) -> bool:
    return getattr(args, "noise", "on") != "off"


def _out(args) -> Path:
    out = Path(getattr(args, "out", None) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_ingest(args) -> int:
    cp = configparser.ConfigParser()
    if not cp.read(args.config):
        raise FileNotFoundError(args.config)
    s = cp["ingest"]
    base = Path(args.config).parent
    cfg = IngestConfig(
        path=str(base / s["path"]),
        format=s.get("format", "xy-csv"),
        blur_radius=float(s.get("blur_radius_m", "0")),
        scale_ratio=float(s.get("scale_ratio", "1")),
        period_spec=s.get("period_spec", "column"),
        realtime_period=int(s.get("realtime_period", "-1")),
    )
    ds = load_locations(cfg, RandomStream(_resolve_seed(args)))
    path = _out(args) / "dataset.csv"
    write_dataset(ds, path)
    print(path)
    return 0


def cmd_synth(args) -> int:
    spec = read_synth_spec(args.spec)
    ds = synth_generate(spec, RandomStream(_resolve_seed(args)))
    path = _out(args) / "dataset.csv"
    write_dataset(ds, path)
    print(path)
    return 0


def cmd_build_psd(args) -> int:
    ds = read_dataset(args.dataset)
    seed = _resolve_seed(args)
    rng = RandomStream(seed)
    ledger = BudgetLedger(args.epsilon)
    noise = _noise(args)
    if args.scheme == "RHT":
        psd = build_psd_rht(ds, PrivacyBudget(args.epsilon, args.beta), ledger, rng, noise)
    elif args.scheme == "GGR":
        psd = build_psd_ggr(ds.realtime, ds.bounds, args.epsilon, ledger, rng, noise=noise)
    else:
        psd = build_psd_gdy(ds.realtime, ds.bounds, args.epsilon, ledger, rng, args.beta, noise=noise)
    path = _out(args) / "psd.txt"
    path.write_text(dump_psd(psd))
    print(f"{path} leaves={psd.n_leaves} consumed={ledger.consumed()!r}")
    return 0


def cmd_geocast(args) -> int:
    psd = load_psd(Path(args.psd).read_text())
    task = Task((args.x, args.y), args.eu, args.mtd_m, args.mar, args.task_id)
    if args.algorithm == "rht":
        gr = build_gr_rht(psd, task, ScoreMaps.from_psd(psd, task.mtd), args.lgr_fraction)
    elif args.algorithm == "greedy":
        gr = build_gr_greedy_utility(psd, task)
    else:
        gr = build_gr_greedy_utility(psd, task, "hybrid", epsilon=args.hybrid_epsilon)
    record = dump_gr(gr)
    (_out(args) / "gr.txt").write_text(record + "\n")
    print(record)
    return 0


def _load_experiment(args):
    path = Path(args.config) if args.config else default_config_path()
    cfg, cp = read_config(path)
    cfg = replace(cfg, seed=_resolve_seed(args, cfg.seed), noise=cfg.noise and _noise(args))
    dataset = dataset_from_parser(cp, path.parent, cfg.seed)
    return cfg, cp, dataset


def cmd_experiment(args) -> int:
    cfg, cp, dataset = _load_experiment(args)
    out = _out(args)
    schemes = schemes_from_parser(cp, cfg)
    metrics, timing = [], []
    from .experiment import run_experiment

    for i, scheme in enumerate(schemes):
        report, t = run_experiment(replace(cfg, scheme=scheme), dataset)
        metrics.append(report.to_csv(header=i == 0))
        timing.append(t.to_csv(header=i == 0))
    (out / "metrics.csv").write_text("".join(metrics))
    (out / "timing.csv").write_text("".join(timing))
    print(out / "metrics.csv")
    return 0


def cmd_sweep(args) -> int:
    cfg, cp, dataset = _load_experiment(args)
    out = _out(args)
    values = [float(v) for v in args.values.split(",")] if args.values else None
    for scheme in schemes_from_parser(cp, cfg):
        text = sweep(replace(cfg, scheme=scheme), dataset, args.param, values)
        path = out / f"sweep_{args.param}_{scheme}.csv"
        path.write_text(text)
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="random seed (env GEOCAST_SEED is the fallback)")
    common.add_argument("--noise", choices=("on", "off"), default=argparse.SUPPRESS,
                        help="'off' disables Laplace noise (test mode)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")

    p = _Parser(prog="dpsc", description="Differentially private geocast simulator.", parents=[common])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", parents=[common], help="location CSV -> canonical dataset")
    s.add_argument("config", help="INI file with an [ingest] section")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("synth", parents=[common], help="synthetic spec -> canonical dataset")
    s.add_argument("spec")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("build-psd", parents=[common], help="dataset -> serialized PSD")
    s.add_argument("dataset")
    s.add_argument("--scheme", choices=("RHT", "GGR", "GDY"), default="RHT")
    s.add_argument("--epsilon", type=float, default=0.5)
    s.add_argument("--beta", type=float, default=0.04)
    s.set_defaults(func=cmd_build_psd)

    s = sub.add_parser("geocast", parents=[common], help="PSD + task -> geocast region record")
    s.add_argument("psd")
    s.add_argument("--x", type=float, required=True)
    s.add_argument("--y", type=float, required=True)
    s.add_argument("--task-id", type=int, default=0)
    s.add_argument("--eu", type=float, default=0.9)
    s.add_argument("--mtd-m", type=float, default=300.0)
    s.add_argument("--mar", type=float, default=0.1)
    s.add_argument("--lgr-fraction", type=float, default=1.0)
    s.add_argument("--algorithm", choices=("rht", "greedy", "hybrid"), default="rht")
    s.add_argument("--hybrid-epsilon", type=float, default=0.5)
    s.set_defaults(func=cmd_geocast)

    s = sub.add_parser("experiment", parents=[common], help="config -> metrics.csv + timing.csv")
    s.add_argument("config", nargs="?", help="experiment INI (default: shipped synthetic config)")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("sweep", parents=[common], help="vary one parameter over its grid")
    s.add_argument("config", nargs="?")
    s.add_argument("--param", choices=tuple(SWEEP_GRIDS), required=True)
    s.add_argument("--values", help="comma-separated override of the default grid")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, RuntimeError) as e:
        msg = str(e).splitlines()[0] if str(e) else type(e).__name__
        print(f"dpsc: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
