"""Command-line entry points: train, eval, ablate, efficiency, export, plot."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..learner import VARIANTS
from .config import RunConfig, _parse_value, load_config, output_root
from .export import export_artifacts, parse_segments
from .metrics import comm_efficiency, read_metrics
from .plotting import group_by_variant, plot_losses, plot_metric
from .runner import CONFIG_FILENAME, evaluate_checkpoint, train


def _resolve_dir(path: str) -> Path:
    """Accept both explicit paths and names under the output root."""
    direct = Path(path)
    if direct.exists():
        return direct
    rooted = output_root() / path
    if rooted.exists():
        return rooted
    raise FileNotFoundError(f"no run directory at {direct} or {rooted}")


def _overrides(pairs: list[str]) -> dict:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _build_config(args) -> RunConfig:
    overrides = _overrides(args.set)
    if args.seed is not None:
        overrides["run.seed"] = str(args.seed)
    if args.variant is not None:
        overrides["variant"] = args.variant
    if args.env is not None:
        overrides["env.kind"] = args.env
    if args.total_steps is not None:
        overrides["run.total_steps"] = str(args.total_steps)
    if args.output_dir is not None:
        overrides["run.output_dir"] = args.output_dir
    if args.name is not None:
        overrides["run.name"] = args.name
    if args.config is not None:
        return load_config(args.config, overrides)
    return RunConfig.from_flat({k: _parse_value(v) for k, v in overrides.items()})


def _add_config_arguments(parser):
    parser.add_argument("--config", type=Path, help="flat key=value config file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a dotted config key, e.g. learner.beta=0.5")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--variant", choices=VARIANTS)
    parser.add_argument("--env", help="environment kind")
    parser.add_argument("--total-steps", type=int)
    parser.add_argument("--output-dir")
    parser.add_argument("--name", help="run directory stem under the output root")


def cmd_train(args) -> int:
    run_dir = train(_build_config(args))
    final = read_metrics(run_dir)[-1]
    print(f"run directory: {run_dir}")
    print(final.to_json())
    return 0


def cmd_eval(args) -> int:
    summary = evaluate_checkpoint(_resolve_dir(args.run), args.episodes, args.seed)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_ablate(args) -> int:
    variants = args.variants.split(",") if args.variants else list(VARIANTS)
    rates = [float(r) for r in args.rates.split(",")] if args.rates else [0.8, 0.6, 0.4]
    results = []
    for variant in variants:
        for seed in range(args.seeds):
            run_args = argparse.Namespace(**vars(args))
            run_args.variant = variant
            run_args.seed = seed
            run_args.name = f"{args.prefix}_{variant}_seed{seed}"
            run_dir = train(_build_config(run_args))
            results.append((run_args.name, read_metrics(run_dir)[-1]))
    for rate in rates:
        mask_ratio = round(1.0 - rate, 6)
        for seed in range(args.seeds):
            run_args = argparse.Namespace(**vars(args))
            run_args.variant = "m2i2"
            run_args.seed = seed
            run_args.name = f"{args.prefix}_rate{rate:g}_seed{seed}"
            run_args.set = list(args.set) + [f"learner.mask_ratio={mask_ratio}"]
            run_dir = train(_build_config(run_args))
            results.append((run_args.name, read_metrics(run_dir)[-1]))
    for name, record in results:
        print(f"{name}: win_rate={record.test_win_rate:.3f} "
              f"mean_return={record.test_mean_return:.3f}")
    return 0


def cmd_efficiency(args) -> int:
    if args.run is not None:
        run_dir = _resolve_dir(args.run)
        baseline_dir = _resolve_dir(args.baseline)
        config = load_config(run_dir / CONFIG_FILENAME)
        metric = args.metric
        if metric == "auto":
            metric = "test_mean_return" if config.env_kind == "predator_prey" else "test_win_rate"
        final = read_metrics(run_dir)[-1]
        baseline_final = read_metrics(baseline_dir)[-1]
        perf = getattr(final, metric)
        baseline_perf = getattr(baseline_final, metric)
        frequency = final.comm_frequency
    else:
        if None in (args.perf, args.baseline_perf, args.frequency):
            raise ValueError("give either --run/--baseline or --perf/--baseline-perf/--frequency")
        perf, baseline_perf, frequency = args.perf, args.baseline_perf, args.frequency
        metric = args.metric
    report = {
        "metric": metric,
        "performance": perf,
        "baseline_performance": baseline_perf,
        "improvement": perf - baseline_perf,
        "frequency": frequency,
        "efficiency": comm_efficiency(perf, baseline_perf, frequency),
    }
    print(json.dumps(report, indent=2, sort_keys=True))
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_export(args) -> int:
    segments = parse_segments(args.segments) if args.segments else None
    written = export_artifacts(_resolve_dir(args.run), segments)
    print(f"retention: {written['retention']}")
    print(f"embeddings: {written['embeddings']}")
    for path in written["heatmaps"]:
        print(f"heatmap: {path}")
    return 0


def cmd_plot(args) -> int:
    run_dirs = [_resolve_dir(d) for d in args.runs]
    if args.group_by == "variant":
        groups = group_by_variant(run_dirs)
    else:
        groups = {"runs": run_dirs}
    out = plot_metric(groups, args.out, args.metric)
    print(f"wrote {out}")
    if args.losses:
        print(f"wrote {plot_losses(run_dirs, args.losses)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="m2i2",
        description="Masked-and-inverse-model message passing for cooperative "
        "multi-agent RL: training, evaluation, and analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one run from a config")
    _add_config_arguments(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="greedy evaluation of a saved checkpoint")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--episodes", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the variant and comm-rate grid")
    _add_config_arguments(p)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--variants", help="comma-separated variant subset")
    p.add_argument("--rates", help="comma-separated communication rates")
    p.add_argument("--prefix", default="ablation")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("efficiency", help="communication-efficiency report")
    p.add_argument("--run", help="trained run directory")
    p.add_argument("--baseline", help="communication-free baseline run directory")
    p.add_argument("--metric", default="auto",
                   choices=("auto", "test_win_rate", "test_mean_return"))
    p.add_argument("--perf", type=float, help="explicit performance value")
    p.add_argument("--baseline-perf", type=float, dest="baseline_perf")
    p.add_argument("--frequency", type=float)
    p.add_argument("--out", help="write the report JSON here")
    p.set_defaults(func=cmd_efficiency)

    p = sub.add_parser("export", help="mask statistics, embeddings, heatmaps")
    p.add_argument("run", help="run directory")
    p.add_argument("--segments", help="observation segments name:start:stop,...")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("plot", help="learning curves across runs")
    p.add_argument("runs", nargs="+", help="run directories")
    p.add_argument("--out", default="curves.png")
    p.add_argument("--metric", default="test_win_rate")
    p.add_argument("--group-by", default="variant", choices=("variant", "none"))
    p.add_argument("--losses", help="also write loss-component curves here")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
