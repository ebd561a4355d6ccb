from __future__ import annotations

import asyncio

from fastapi import APIRouter, HTTPException

from app.core.config import settings
from app.core.errors import ConfigError, DecoderSimError
from app.schemas.experiments import (
    ExperimentResult,
    ExperimentSpec,
    RankHistogram,
    RankHistogramRequest,
    SplittingCurve,
    SplittingRequest,
)
from app.schemas.responses import CodeListResponse, CodeReportResponse
from app.services.codes import CssCode, available_codes, code_report, load_code
from app.services.simulation import rank_histogram_experiment, run_experiment, stabilizer_splitting_experiment
from app.services.storage import MongoStorage

router = APIRouter(prefix="/api/v1/sim", tags=["simulation"])

storage = MongoStorage()


def resolve_code(name: str) -> CssCode:
    try:
        return load_code(name)
    except ConfigError as exc:
        raise HTTPException(status_code=404, detail=str(exc)) from exc
    except (DecoderSimError, OSError) as exc:
        raise HTTPException(status_code=400, detail=f"Failed to load code: {exc}") from exc


def check_trial_budget(trials: int, points: int = 1) -> None:
    if trials * points > settings.sim_api_max_trials:
        raise HTTPException(
            status_code=400,
            detail=f"At most {settings.sim_api_max_trials} trials per request; use the CLI for larger runs",
        )


@router.get("/codes", response_model=CodeListResponse)
async def list_codes():
    return CodeListResponse(codes=available_codes())


@router.get("/codes/{name}/report", response_model=CodeReportResponse)
async def get_code_report(name: str):
    code = resolve_code(name)
    return CodeReportResponse(**code_report(code))


@router.post("/experiments", response_model=ExperimentResult)
async def post_experiment(spec: ExperimentSpec):
    check_trial_budget(spec.trials, len(spec.p))
    code = resolve_code(spec.code)
    # Results go back in the response; nothing is written on the server's disk.
    spec = spec.model_copy(update={"out": None, "workers": 1})
    try:
        result = await asyncio.to_thread(run_experiment, spec, code)
    except DecoderSimError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc

    storage.save_snapshot_background("experiments", result.model_dump(mode="json"))
    return result


@router.post("/rank-histogram", response_model=RankHistogram)
async def post_rank_histogram(request: RankHistogramRequest):
    check_trial_budget(request.trials)
    code = resolve_code(request.code)
    try:
        histogram = await asyncio.to_thread(
            rank_histogram_experiment,
            code,
            request.p,
            request.decoder,
            request.trials,
            request.seed,
            request.bin_width,
        )
    except DecoderSimError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc

    storage.save_snapshot_background("rank_histograms", histogram.model_dump(mode="json"))
    return histogram


@router.post("/stabilizer-splitting", response_model=SplittingCurve)
async def post_stabilizer_splitting(request: SplittingRequest):
    check_trial_budget(request.trials, len(request.p))
    code = resolve_code(request.code)
    try:
        curve = await asyncio.to_thread(
            stabilizer_splitting_experiment,
            code,
            request.p,
            request.decoder,
            request.trials,
            request.seed,
            request.error_type,
        )
    except DecoderSimError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc

    storage.save_snapshot_background("stabilizer_splitting", curve.model_dump(mode="json"))
    return curve
