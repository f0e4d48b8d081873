"""FastAPI application: lifespan setup and the REST router."""

import logging
import time
from contextlib import asynccontextmanager

from fastapi import FastAPI

from app.api.routes import router as api_router
from app.config import settings
from app.fuzzy.controller import get_controller

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s %(levelname)s [%(name)s] %(message)s",
)
logger = logging.getLogger("main")


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Startup and shutdown logic."""
    settings.log_startup()
    app.state.start_time = time.time()
    app.state.rig = settings.rig()
    app.state.match_params = settings.match_params()
    app.state.grid = settings.grid()
    # builds (and validates) the rule bases once
    app.state.controller = get_controller(settings.controller_config())
    logger.info(
        "Server ready (%dx%d, d_max=%d, rules=%s)",
        app.state.rig.width_px, app.state.rig.height_px,
        app.state.match_params.max_disparity_px, settings.rules,
    )
    yield
    logger.info("Shutdown complete")


app = FastAPI(
    title="Stereo Avoid",
    lifespan=lifespan,
    docs_url="/api/docs",
    redoc_url=None,
)

app.include_router(api_router)
