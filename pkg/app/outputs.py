"""Result artifacts: per-strategy CSVs, the summary table and SVG charts."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import pandas as pd  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402
from pydantic import BaseModel  # noqa: E402

from app import gbt  # noqa: E402
from app.control import RunResult, Summary  # noqa: E402
from app.errors import OutputError  # noqa: E402

logger = logging.getLogger(__name__)

# Fixed salt so repeated renders produce identical SVG ids.
matplotlib.rcParams["svg.hashsalt"] = "occ-sim"

STRATEGY_COLORS = {
    "al": "#1f77b4",
    "conventional": "#d62728",
    "baseline": "#7f7f7f",
    "random": "#2ca02c",
}

COMPONENT_COLORS = {"district_kwh": "#4c72b0", "fan_kwh": "#dd8452", "pump_kwh": "#55a868"}


class OutputFlags(BaseModel):
    dump_profiles: bool = False
    dump_model: bool = False


def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
    try:
        frame.to_csv(path, index=False)
    except OSError as exc:
        raise OutputError(str(exc), path) from exc
    return path


def _save_svg(fig: Figure, path: Path) -> Path:
    try:
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as exc:
        raise OutputError(str(exc), path) from exc
    return path


def _ensure_dir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(str(exc), path) from exc
    return path


def render_setpoint_chart(steps: Mapping[str, pd.DataFrame], path: Union[str, Path]) -> Path:
    """One setpoint trace per strategy against simulated days.

    Each trace is written as a ``<g id="setpoint-<strategy>">`` group holding a
    single ``<path>`` (a step polyline of M/L vertices), so a strategy's series
    can be located in the SVG by its group id.
    """
    fig = Figure(figsize=(10, 4))
    ax = fig.add_subplot()
    for strategy, frame in steps.items():
        (line,) = ax.plot(
            frame["time_min"] / 1440.0,
            frame["setpoint_c"],
            drawstyle="steps-post",
            label=strategy,
            color=STRATEGY_COLORS.get(strategy),
            linewidth=1.2,
        )
        line.set_gid(f"setpoint-{strategy}")
    ax.set_xlabel("Day")
    ax.set_ylabel("Setpoint (°C)")
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right")
    fig.tight_layout()
    return _save_svg(fig, Path(path))


def render_weekly_energy_chart(weekly: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Stacked weekly energy bars by component, strategies side by side."""
    fig = Figure(figsize=(10, 4))
    ax = fig.add_subplot()
    strategies = list(dict.fromkeys(weekly["strategy"]))
    width = 0.8 / max(1, len(strategies))
    for i, strategy in enumerate(strategies):
        rows = weekly[weekly["strategy"] == strategy]
        x = rows["week"].to_numpy() + (i - (len(strategies) - 1) / 2) * width
        bottom = 0.0
        for component, color in COMPONENT_COLORS.items():
            bars = ax.bar(
                x,
                rows[component],
                width,
                bottom=bottom,
                color=color,
                edgecolor=STRATEGY_COLORS.get(strategy, "black"),
                label=component.removesuffix("_kwh") if i == 0 else None,
            )
            for patch, week in zip(bars.patches, rows["week"]):
                patch.set_gid(f"energy-{strategy}-{component}-w{week}")
            bottom = bottom + rows[component].to_numpy()
    ax.set_xlabel("Week")
    ax.set_ylabel("Energy (kWh)")
    ax.legend(loc="upper right")
    ax.set_title(" | ".join(strategies))
    fig.tight_layout()
    return _save_svg(fig, Path(path))


def render_learning_curve(curves: Mapping[str, pd.DataFrame], path: Union[str, Path]) -> Path:
    """Holdout macro-F1 against cumulative labels."""
    fig = Figure(figsize=(7, 4))
    ax = fig.add_subplot()
    for strategy, frame in curves.items():
        if frame.empty:
            continue
        (line,) = ax.plot(
            frame["labels"], frame["macro_f1"], marker="o", markersize=3, label=strategy, color=STRATEGY_COLORS.get(strategy)
        )
        line.set_gid(f"curve-{strategy}")
    ax.set_xlabel("Labels collected")
    ax.set_ylabel("Macro F1")
    ax.set_ylim(0.0, 1.0)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right")
    fig.tight_layout()
    return _save_svg(fig, Path(path))


def write_run_outputs(result: RunResult, out_dir: Union[str, Path], flags: Optional[OutputFlags] = None) -> list[Path]:
    """CSV artifacts of one strategy run."""
    flags = flags or OutputFlags()
    out_dir = _ensure_dir(Path(out_dir))
    name = result.strategy.value
    written = [
        _write_csv(result.steps_frame(), out_dir / f"steps_{name}.csv"),
        _write_csv(result.control_frame(), out_dir / f"control_{name}.csv"),
    ]
    if result.strategy.occupant_centric:
        written.append(_write_csv(result.labels_frame(), out_dir / f"labels_{name}.csv"))
        written.append(_write_csv(result.curve_frame(), out_dir / f"curve_{name}.csv"))
    if flags.dump_profiles and result.profiles:
        profile_dir = _ensure_dir(out_dir / "profiles" / name)
        for step, frame in result.profiles:
            written.append(_write_csv(frame, profile_dir / f"step_{step}.csv"))
    if flags.dump_model and result.final_model is not None:
        path = out_dir / f"model_{name}.json"
        dump = gbt.dump_model(result.final_model.ensemble, result.final_model.layout.feature_names)
        try:
            path.write_text(json.dumps(dump, indent=1))
        except OSError as exc:
            raise OutputError(str(exc), path) from exc
        written.append(path)
    return written


def weekly_table(results: Sequence[RunResult]) -> pd.DataFrame:
    return pd.concat([r.weekly_frame() for r in results], ignore_index=True)


def render_charts(
    steps: Mapping[str, pd.DataFrame],
    weekly: pd.DataFrame,
    curves: Mapping[str, pd.DataFrame],
    out_dir: Path,
) -> list[Path]:
    return [
        render_setpoint_chart(steps, out_dir / "setpoints.svg"),
        render_weekly_energy_chart(weekly, out_dir / "weekly_energy.svg"),
        render_learning_curve(curves, out_dir / "learning_curve.svg"),
    ]


def emit_outputs(
    results: Sequence[RunResult],
    out_dir: Union[str, Path],
    summary: Optional[Summary] = None,
    flags: Optional[OutputFlags] = None,
) -> list[Path]:
    """Write every artifact of a results directory and return the paths written."""
    out_dir = _ensure_dir(Path(out_dir))
    written = []
    for result in results:
        written.extend(write_run_outputs(result, out_dir, flags))
    weekly = weekly_table(results)
    written.append(_write_csv(weekly, out_dir / "weekly.csv"))
    if summary is not None:
        written.append(_write_csv(summary.frame(), out_dir / "summary.csv"))
    written.extend(
        render_charts(
            {r.strategy.value: r.steps_frame() for r in results},
            weekly,
            {r.strategy.value: r.curve_frame() for r in results if r.strategy.occupant_centric},
            out_dir,
        )
    )
    logger.info("Wrote %d files to %s", len(written), out_dir)
    return written


def _read_csv(path: Path) -> pd.DataFrame:
    try:
        return pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise OutputError(str(exc), path) from exc


def replot(in_dir: Union[str, Path]) -> list[Path]:
    """Re-render the SVG charts from the CSVs of an existing results directory."""
    in_dir = Path(in_dir)
    step_files = sorted(in_dir.glob("steps_*.csv"))
    if not step_files:
        raise OutputError("no steps_<strategy>.csv files found", in_dir)
    steps = {p.stem.removeprefix("steps_"): _read_csv(p) for p in step_files}
    curves = {p.stem.removeprefix("curve_"): _read_csv(p) for p in sorted(in_dir.glob("curve_*.csv"))}
    weekly_path = in_dir / "weekly.csv"
    if not weekly_path.exists():
        raise OutputError("weekly.csv is missing", weekly_path)
    return render_charts(steps, _read_csv(weekly_path), curves, in_dir)
