"""REST endpoints over the depth, region and steering pipeline."""

import asyncio
import logging
import time

from fastapi import APIRouter, File, HTTPException, Request, UploadFile
from pydantic import BaseModel

from app.config import settings
from app.errors import ImageFormatError, StereoAvoidError
from app.fuzzy.controller import SteerDecision, get_controller
from app.fuzzy.engine import evaluate, rulebase_from_dict
from app.stereo.disparity import fused_pipeline
from app.stereo.images import StereoPair, decode_pgm, split_side_by_side
from app.stereo.refine import DepthLUT
from app.stereo.regions import RegionDepths

logger = logging.getLogger("api")

router = APIRouter(prefix="/api")


# -- Models ------------------------------------------------------------------


class HealthResponse(BaseModel):
    status: str
    uptime_seconds: float
    workers: int
    rules: str
    width_px: int
    height_px: int


class GridResponse(BaseModel):
    width_px: int
    height_px: int
    center_side_px: int
    rectangles: dict[str, tuple[int, int, int, int]]


class SteerRequest(BaseModel):
    depths: RegionDepths
    rules: str | None = None


class SteerResponse(BaseModel):
    pitch: float
    yaw: float
    active_controller: str
    rule_strengths: dict[str, float]


class FuzzyEvalRequest(BaseModel):
    rulebase: dict
    inputs: dict[str, float]


class FuzzyEvalResponse(BaseModel):
    outputs: dict[str, float | None]


class DepthResponse(SteerResponse):
    depths: dict[str, float]
    valid_fraction: float


def _steer_response(decision: SteerDecision) -> dict:
    return {
        "pitch": decision.command.pitch,
        "yaw": decision.command.yaw,
        "active_controller": decision.active_controller.value,
        "rule_strengths": decision.rule_strengths,
    }


# -- Endpoints ---------------------------------------------------------------


@router.get("/health", response_model=HealthResponse)
async def health(request: Request):
    rig = request.app.state.rig
    return HealthResponse(
        status="ok",
        uptime_seconds=time.time() - request.app.state.start_time,
        workers=settings.workers,
        rules=settings.rules,
        width_px=rig.width_px,
        height_px=rig.height_px,
    )


@router.get("/grid", response_model=GridResponse)
async def grid(width_px: int | None = None, height_px: int | None = None):
    try:
        g = settings.grid(width_px, height_px)
    except StereoAvoidError as e:
        raise HTTPException(422, str(e))
    return GridResponse(
        width_px=g.width_px,
        height_px=g.height_px,
        center_side_px=g.x_hi - g.x_lo,
        rectangles=g.rectangles(),
    )


@router.post("/steer", response_model=SteerResponse)
async def steer(body: SteerRequest, request: Request):
    controller = request.app.state.controller
    try:
        if body.rules:
            controller = get_controller(settings.controller_config().model_copy(update={"rules": body.rules}))
        decision = controller.steer(body.depths)
    except StereoAvoidError as e:
        raise HTTPException(422, str(e))
    return _steer_response(decision)


@router.post("/fuzzy/eval", response_model=FuzzyEvalResponse)
async def fuzzy_eval(body: FuzzyEvalRequest):
    try:
        outputs = evaluate(rulebase_from_dict(body.rulebase), body.inputs)
    except StereoAvoidError as e:
        raise HTTPException(422, str(e))
    return FuzzyEvalResponse(outputs=outputs)


@router.post("/depth", response_model=DepthResponse)
async def depth(request: Request, left: UploadFile = File(...), right: UploadFile | None = File(None)):
    """Upload a left/right PGM pair, or a single side-by-side PGM as ``left``."""
    rig = request.app.state.rig
    try:
        left_img = decode_pgm(await left.read(), left.filename or "left")
        if right is None:
            left_img, right_img = split_side_by_side(left_img)
        else:
            right_img = decode_pgm(await right.read(), right.filename or "right")
    except ImageFormatError as e:
        raise HTTPException(400, str(e))

    def work():
        pair = StereoPair(left_img, right_img, rig)
        depth_map, depths = fused_pipeline(
            pair, request.app.state.match_params, request.app.state.grid, DepthLUT.identity()
        )
        return depth_map, depths, request.app.state.controller.steer(depths)

    try:
        depth_map, depths, decision = await asyncio.to_thread(work)
    except StereoAvoidError as e:
        raise HTTPException(422, str(e))
    logger.info("depth request: center %.2f m -> yaw %.3f", depths.center, decision.command.yaw)
    return DepthResponse(
        **_steer_response(decision),
        depths=depths.as_dict(),
        valid_fraction=float(depth_map.valid_mask().mean()),
    )
