"""Command line: ``patternmap run`` and ``patternmap verify``.

Exit codes: 0 ok, 1 verification failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

from .core import HardwareConfig, PatternMapError, load_feature_maps, load_weights
from .pipeline import RunConfig, process_stack
from .report import build_report, dumps, to_csv, write_chart
from .synthetic import PROFILES, REFERENCE, vgg16_layers
from .verify import FAULTS, run_suite

log = logging.getLogger("patternmap")

FIXTURES = ("example16",)


class UsageError(Exception):
    pass


def _dims(text: str) -> tuple[int, int]:
    try:
        r, c = text.lower().split("x")
        return int(r), int(c)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected ROWSxCOLS, got {text!r}")


def _onoff(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on|off")
    return text == "on"


def _budgets(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("budgets must be positive")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="patternmap", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="prune, map, simulate and report")
    src = run.add_mutually_exclusive_group()
    src.add_argument("--manifest", type=Path, help="weight manifest (JSON + blob)")
    src.add_argument("--fixture", choices=FIXTURES, help="bundled example layer")
    src.add_argument("--synthetic", choices=("vgg16",), help="generate a VGG16-shaped conv stack")
    run.add_argument("--config", type=Path, help="JSON file of option defaults (keys as in --help, underscores)")
    run.add_argument("--profile", choices=sorted(PROFILES), default="cifar10")
    run.add_argument("--width-scale", type=float, default=0.25, help="channel scale for --synthetic")
    run.add_argument("--budget-per-layer", type=_budgets)
    run.add_argument("--budget", type=int, default=8, help="pattern budget for every layer")
    run.add_argument("--sparsity", type=float, help="magnitude-prune target before pattern selection")
    run.add_argument("--pre-pruned", action="store_true", help="weights are already pattern pruned")
    run.add_argument("--metric", choices=("hamming", "cosine"), default="hamming")
    run.add_argument("--ou", type=_dims, default=(9, 8), metavar="ROWSxCOLS")
    run.add_argument("--crossbar", type=_dims, default=(512, 512), metavar="RxC")
    run.add_argument("--cells-per-weight", type=int, default=1)
    run.add_argument("--skip-zero-inputs", type=_onoff, default=True, metavar="{on,off}")
    run.add_argument("--skip-saves-cycles", type=_onoff, default=True, metavar="{on,off}")
    run.add_argument("--baseline-skip-zero-inputs", type=_onoff, default=False, metavar="{on,off}")
    run.add_argument("--inputs", type=Path, help="feature-map manifest; inputs keyed by layer name")
    run.add_argument("--input-size", type=int, default=8, help="side of generated input maps")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--out", type=Path, default=Path("out"))
    run.add_argument("--chart", action="store_true", help="also write chart.svg")

    ver = sub.add_parser("verify", help="run the property suite over random layers")
    ver.add_argument("--seeds", type=int, default=100, help="number of random instances")
    ver.add_argument("--first-seed", type=int, default=0)
    ver.add_argument("--inject-fault", choices=FAULTS, help="corrupt each index stream (self-test)")
    ver.add_argument("--out", type=Path, help="write counterexample.json here on failure")
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "run" and args.config is not None:
        if not args.config.is_file():
            raise UsageError(f"config not found: {args.config}")
        defaults = json.loads(args.config.read_text())
        run_parser = parser._subparsers._group_actions[0].choices["run"]
        known = {a.dest for a in run_parser._actions}
        unknown = set(defaults) - known
        if unknown:
            raise UsageError(f"unknown keys in {args.config}: {sorted(unknown)}")
        for key in ("ou", "crossbar"):
            if isinstance(defaults.get(key), str):
                defaults[key] = _dims(defaults[key])
        for key in ("manifest", "inputs", "out"):
            if key in defaults:
                defaults[key] = Path(defaults[key])
        run_parser.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def _fixture_manifest(name: str) -> Path:
    return Path(str(resources.files("patternmap") / "data" / name / "manifest.json"))


def _load_layers(args):
    if args.synthetic:
        return vgg16_layers(args.seed, args.width_scale, args.profile), "synthetic-vgg16"
    if args.fixture:
        return load_weights(_fixture_manifest(args.fixture)), f"fixture-{args.fixture}"
    if args.manifest is None:
        raise UsageError("one of --manifest, --fixture or --synthetic is required")
    if not args.manifest.is_file():
        raise UsageError(f"manifest not found: {args.manifest}")
    return load_weights(args.manifest), str(args.manifest)


def cmd_run(args) -> int:
    layers, source = _load_layers(args)
    if args.budget_per_layer is not None:
        budgets = args.budget_per_layer
    elif args.synthetic:
        budgets = PROFILES[args.profile]["budgets"]
    else:
        budgets = [args.budget] * len(layers)
    if len(budgets) != len(layers):
        raise UsageError(f"--budget-per-layer has {len(budgets)} entries for {len(layers)} layers")
    target = args.sparsity
    if target is None and args.synthetic and not args.pre_pruned:
        target = PROFILES[args.profile]["irregular_sparsity"]
    hw = HardwareConfig(
        ou_rows=args.ou[0],
        ou_cols=args.ou[1],
        crossbar_rows=args.crossbar[0],
        crossbar_cols=args.crossbar[1],
        cells_per_weight=args.cells_per_weight,
        skip_zero_inputs=args.skip_zero_inputs,
        skip_saves_cycles=args.skip_saves_cycles,
        baseline_skip_zero_inputs=args.baseline_skip_zero_inputs,
    )
    config = RunConfig(
        metric=args.metric,
        target_sparsity=target or None,
        pre_pruned=args.pre_pruned,
        input_size=args.input_size,
        seed=args.seed,
    )
    feature_maps = load_feature_maps(args.inputs) if args.inputs else None
    log.info("processing %d layers from %s", len(layers), source)
    records = process_stack(layers, budgets, hw, config, feature_maps, jobs=args.jobs)
    run_config = {
        "source": source,
        "profile": args.profile if args.synthetic else None,
        "width_scale": args.width_scale if args.synthetic else None,
        "budgets": list(budgets),
        "sparsity": config.target_sparsity,
        "pre_pruned": config.pre_pruned,
        "metric": config.metric,
        "input_size": config.input_size,
        "inputs": str(args.inputs) if args.inputs else None,
        "seed": config.seed,
    }
    reference = REFERENCE.get(args.profile) if args.synthetic else None
    report = build_report(records, hw, run_config, reference)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "report.json").write_text(dumps(report))
    (args.out / "report.csv").write_text(to_csv(report))
    if args.chart:
        write_chart(report, args.out / "chart.svg")
    agg = report["aggregate"]
    print(
        f"{len(records)} layers: area efficiency {agg['area_efficiency']:.3f}x, "
        f"energy efficiency {agg['energy_efficiency'] or 0:.3f}x, speedup {agg['speedup'] or 0:.3f}x, "
        f"index {agg['index_bytes']} B -> {args.out}"
    )
    return 0


def cmd_verify(args) -> int:
    failures = run_suite(args.seeds, args.first_seed, args.inject_fault)
    if not failures:
        print(f"verify: {args.seeds} instances passed")
        return 0
    counterexample = json.dumps(failures[0], indent=2)
    print(f"verify: FAILED\n{counterexample}", file=sys.stderr)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "counterexample.json").write_text(counterexample + "\n")
    return 1


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, json.JSONDecodeError) as exc:
        print(f"patternmap: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            return cmd_run(args)
        return cmd_verify(args)
    except (UsageError, PatternMapError, ValueError, OSError) as exc:
        print(f"patternmap: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
