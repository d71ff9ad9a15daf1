from typing import Any, Optional, Union

import pandas as pd
from fastapi import FastAPI, HTTPException, Path as ApiPath, Query
from pydantic import BaseModel, Field

from app.config import get_settings, load_settings, Settings
from app.control import RunResult, Strategy, run_comparison, run_simulation, StrategySummary
from app.errors import ConfigError, InputError, OccSimError
from app.occupants import EnvState, OccupantParams, PreferenceLabel, preference_probabilities
from app.run_store import cache_key, run_store


# FastAPI app
app = FastAPI(
    title="Occupant-Centric Control Simulator",
    description="Active-learning occupant-centric HVAC control runs, comparisons and the preference oracle",
    version="1.0.0",
)

OverrideValue = Union[str, float, int, bool]


# Request/Response models
class HealthResponse(BaseModel):
    """Health check response."""
    status: str
    message: str


class RunRequest(BaseModel):
    """Simulation request payload."""
    strategy: Strategy = Strategy.AL
    seed: int = Field(default=0, ge=0)
    overrides: dict[str, OverrideValue] = Field(default_factory=dict, description="Flat config keys, e.g. run.horizon_days")


class RunHeadline(BaseModel):
    """Headline metrics of a stored run."""
    run_id: str
    strategy: Strategy
    seed: int
    total_kwh: float
    n_labels: int
    n_candidates: int
    labelling_effort: Optional[float] = None
    final_setpoint: float
    final_macro_f1: Optional[float] = None
    cached: bool = False


class CompareRequest(BaseModel):
    """Comparison request payload."""
    seed: int = Field(default=0, ge=0)
    overrides: dict[str, OverrideValue] = Field(default_factory=dict)


class CompareResponse(BaseModel):
    seed: int
    convergence_step: Optional[int] = None
    rows: list[StrategySummary]


class OracleRequest(BaseModel):
    occupant: OccupantParams
    env: EnvState


class OracleResponse(BaseModel):
    p_cooler: float
    p_no_change: float
    p_warmer: float
    most_likely: str


def _raise_domain_http_error(exc: Exception) -> None:
    """Translate simulator errors into HTTP responses."""
    if isinstance(exc, HTTPException):
        raise exc
    if isinstance(exc, (ConfigError, InputError)):
        raise HTTPException(status_code=422, detail=str(exc))
    if isinstance(exc, OccSimError):
        raise HTTPException(status_code=400, detail=str(exc))
    raise HTTPException(status_code=500, detail=f"Simulation error: {str(exc)}")


def _settings_for(overrides: dict[str, Any]) -> Settings:
    if not overrides:
        return get_settings()
    return load_settings(overrides={k: str(v).lower() if isinstance(v, bool) else v for k, v in overrides.items()})


def _headline(run_id: str, result: RunResult, cached: bool) -> RunHeadline:
    effort = result.labelling_effort
    return RunHeadline(
        run_id=run_id,
        strategy=result.strategy,
        seed=result.seed,
        total_kwh=result.total_kwh,
        n_labels=len(result.labels),
        n_candidates=result.n_candidates_total,
        labelling_effort=None if effort != effort else effort,
        final_setpoint=result.records[-1].setpoint,
        final_macro_f1=result.final_metrics.macro_f1 if result.final_metrics else None,
        cached=cached,
    )


def _records(frame: pd.DataFrame) -> list[dict]:
    """Frame rows as JSON-safe dicts (NaN becomes null)."""
    return frame.astype(object).where(frame.notna(), None).to_dict(orient="records")


# ==================== #
# Health Routes        #
# ==================== #

@app.get("/health", response_model=HealthResponse)
async def health_check():
    """Health check endpoint."""
    return HealthResponse(status="healthy", message=f"{len(run_store.list_runs())} runs stored")


# ==================== #
# Simulation Routes    #
# ==================== #

@app.post("/runs", response_model=RunHeadline)
def create_run(request: RunRequest):
    """
    Simulate one strategy, or return the stored result of an identical request.
    """
    try:
        settings = _settings_for(request.overrides)
        key = cache_key(settings, request.strategy, request.seed)
        stored, cached = run_store.get_or_create(
            key, lambda: run_simulation(settings, request.strategy, request.seed)
        )
        return _headline(stored.run_id, stored.result, cached=cached)
    except Exception as e:
        _raise_domain_http_error(e)


@app.get("/runs")
async def list_runs():
    """List stored run ids."""
    return {"runs": run_store.list_runs()}


@app.get("/runs/{run_id}", response_model=RunHeadline)
async def get_run(run_id: str = ApiPath(..., min_length=1)):
    stored = run_store.get(run_id)
    if stored is None:
        raise HTTPException(status_code=404, detail=f"Run {run_id} not found")
    return _headline(stored.run_id, stored.result, cached=True)


@app.get("/runs/{run_id}/steps")
async def get_run_steps(
    run_id: str = ApiPath(..., min_length=1),
    control_only: bool = Query(False, description="Only occupied control steps, with labelling detail"),
):
    """
    Per-step records of a stored run.
    """
    stored = run_store.get(run_id)
    if stored is None:
        raise HTTPException(status_code=404, detail=f"Run {run_id} not found")
    frame = stored.result.control_frame() if control_only else stored.result.steps_frame()
    return {"run_id": run_id, "steps": _records(frame)}


@app.delete("/runs/{run_id}")
async def delete_run(run_id: str):
    """Remove a stored run."""
    if not run_store.delete(run_id):
        raise HTTPException(status_code=404, detail=f"Run {run_id} not found")
    return {"message": f"Run {run_id} deleted"}


@app.post("/compare", response_model=CompareResponse)
def compare(request: CompareRequest):
    """
    Run every strategy on one seed and return the summary rows.
    """
    try:
        settings = _settings_for(request.overrides)
        summary = run_comparison(settings, request.seed).summary
        return CompareResponse(seed=summary.seed, convergence_step=summary.convergence_step, rows=summary.rows)
    except Exception as e:
        _raise_domain_http_error(e)


# ==================== #
# Oracle Routes        #
# ==================== #

@app.post("/oracle/probabilities", response_model=OracleResponse)
async def oracle_probabilities(request: OracleRequest):
    """Ground-truth preference distribution of one occupant at one condition."""
    p_cooler, p_no_change, p_warmer = preference_probabilities(request.occupant, request.env)
    triple = [p_cooler, p_no_change, p_warmer]
    return OracleResponse(
        p_cooler=p_cooler,
        p_no_change=p_no_change,
        p_warmer=p_warmer,
        most_likely=PreferenceLabel(triple.index(max(triple))).token,
    )


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)
