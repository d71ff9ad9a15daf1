"""Command-line entry point: ``python -m app <command>``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from app.config import Settings, describe_settings, load_settings, parse_overrides
from app.control import (
    POPULATION_STREAM,
    WEATHER_STREAM,
    Strategy,
    build_scenario,
    derive_seed,
    metrics_summary,
    run_comparison,
    run_simulation,
    seeds_frame,
)
from app.errors import OccSimError, OutputError
from app.feature_select import feature_report, load_feature_table, report_frame
from app.occupants import generate_campaign, generate_population, instances_frame
from app.outputs import OutputFlags, emit_outputs, replot
from app.weather import WeatherSeries, synth_weather

logger = logging.getLogger(__name__)

CAMPAIGN_STREAM = 8
SENSOR_STREAM = 9

# Pure-noise sensor columns offered to feature selection next to the real features.
NOISE_SENSORS = {
    "globe_noise_c": (27.0, 1.5),
    "co2_ppm": (650.0, 120.0),
    "tvoc_ppb": (220.0, 60.0),
    "pm25_ugm3": (12.0, 4.0),
    "pressure_hpa": (1008.0, 2.5),
}


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="Flat key=value config file")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="Override one config key"
    )


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="occ-sim",
        description="Active-learning occupant-centric HVAC control simulator.",
        epilog="config keys:\n" + describe_settings(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="Simulate a data-collection campaign")
    _add_config_args(gen)
    gen.add_argument("--out", type=Path, required=True, help="Dataset CSV to write")
    gen.add_argument("--n", type=int, default=None, help="Number of occupants (default population.size)")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--days", type=int, default=10, help="Working days in the campaign")
    gen.add_argument("--extra-sensors", action="store_true", help="Append pure-noise sensor columns")

    select = sub.add_parser("select-features", help="Rank features by cross-validated elimination")
    _add_config_args(select)
    select.add_argument("--data", type=Path, required=True, help="Dataset CSV")
    select.add_argument("--folds", type=int, default=None, help="Folds (default features.folds)")
    select.add_argument("--seed", type=int, default=0)
    select.add_argument("--top", type=int, default=None, help="Features marked selected (default features.top_n)")

    run = sub.add_parser("run", help="Simulate one strategy")
    _add_config_args(run)
    run.add_argument("--strategy", choices=[s.value for s in Strategy], default=Strategy.AL.value)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", type=Path, required=True)
    run.add_argument("--dump-profiles", action="store_true")
    run.add_argument("--dump-model", action="store_true")

    compare = sub.add_parser("compare", help="Simulate every strategy and summarise")
    _add_config_args(compare)
    compare.add_argument("--seeds", type=int, nargs="+", default=[0])
    compare.add_argument("--out", type=Path, required=True)
    compare.add_argument("--workers", type=int, default=1, help="Strategies simulated concurrently")
    compare.add_argument("--dump-profiles", action="store_true")
    compare.add_argument("--dump-model", action="store_true")

    plot = sub.add_parser("plot", help="Re-render charts of a results directory")
    plot.add_argument("--in", dest="in_dir", type=Path, required=True)

    serve = sub.add_parser("serve", help="Serve the HTTP API")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)

    return parser.parse_args(argv)


def _settings(args: argparse.Namespace) -> Settings:
    settings = load_settings(getattr(args, "config", None), parse_overrides(getattr(args, "overrides", [])))
    logging.basicConfig(
        level=settings.log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    return settings


def cmd_gen_data(args: argparse.Namespace) -> None:
    settings = _settings(args)
    n = args.n or settings.population.size
    population = generate_population(n, derive_seed(args.seed, POPULATION_STREAM), settings.population)
    weather = WeatherSeries.from_points(
        synth_weather(max(1, args.days), 30, derive_seed(args.seed, WEATHER_STREAM), settings.weather)
    )
    instances = generate_campaign(population, weather.at, derive_seed(args.seed, CAMPAIGN_STREAM), days=args.days)
    frame = instances_frame(instances)
    if args.extra_sensors:
        rng = np.random.default_rng(derive_seed(args.seed, SENSOR_STREAM))
        for column, (mean, sd) in NOISE_SENSORS.items():
            frame[column] = np.round(rng.normal(mean, sd, len(frame)), 3)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    try:
        frame.to_csv(args.out, index=False)
    except OSError as exc:
        raise OutputError(str(exc), args.out) from exc
    logger.info("Wrote %d instances from %d occupants to %s", len(frame), n, args.out)


def cmd_select_features(args: argparse.Namespace) -> None:
    settings = _settings(args)
    table = load_feature_table(args.data)
    report = feature_report(
        table,
        k_folds=args.folds or settings.features.folds,
        params=settings.model,
        seed=args.seed,
        workers=settings.features.workers,
    )
    frame = report_frame(report)
    frame["selected"] = frame.index < (args.top or settings.features.top_n)
    sys.stdout.write(frame.to_csv(index=False))


def cmd_run(args: argparse.Namespace) -> None:
    settings = _settings(args)
    strategy = Strategy(args.strategy)
    scenario = build_scenario(settings, args.seed)
    result = run_simulation(settings, strategy, args.seed, scenario, record_profiles=args.dump_profiles)
    # The summary is relative to the fixed baseline, which gets a row of its own.
    baseline = result
    if strategy is not Strategy.BASELINE:
        baseline = run_simulation(settings, Strategy.BASELINE, args.seed, scenario)
    summary = metrics_summary(
        {strategy: result},
        baseline,
        settings.run.convergence_window_days,
        settings.run.match_tolerance,
        settings.run.annualize,
    )
    flags = OutputFlags(dump_profiles=args.dump_profiles, dump_model=args.dump_model)
    emit_outputs([result], args.out, summary, flags)


def cmd_compare(args: argparse.Namespace) -> None:
    settings = _settings(args)
    flags = OutputFlags(dump_profiles=args.dump_profiles, dump_model=args.dump_model)
    comparisons = []
    for seed in args.seeds:
        comparison = run_comparison(settings, seed, workers=args.workers, record_profiles=args.dump_profiles)
        out_dir = args.out if len(args.seeds) == 1 else args.out / f"seed_{seed}"
        emit_outputs(list(comparison.results.values()), out_dir, comparison.summary, flags)
        comparisons.append(comparison)
    if len(comparisons) > 1:
        path = args.out / "summary_seeds.csv"
        try:
            seeds_frame(comparisons).to_csv(path, index=False)
        except OSError as exc:
            raise OutputError(str(exc), path) from exc
        logger.info("Wrote %s", path)


def cmd_plot(args: argparse.Namespace) -> None:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    for path in replot(args.in_dir):
        logger.info("Rendered %s", path)


def cmd_serve(args: argparse.Namespace) -> None:
    import uvicorn

    uvicorn.run("app.main:app", host=args.host, port=args.port)


COMMANDS = {
    "gen-data": cmd_gen_data,
    "select-features": cmd_select_features,
    "run": cmd_run,
    "compare": cmd_compare,
    "plot": cmd_plot,
    "serve": cmd_serve,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except OccSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
