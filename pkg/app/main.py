from __future__ import annotations

from fastapi import FastAPI

from app.api.routes.simulation import router as simulation_router, storage
from app.core.logs import configure_logging

configure_logging()

app = FastAPI(
    title="qLDPC Decoding Simulator",
    description=(
        "Code reports, Monte Carlo logical error rate experiments and check-rank "
        "histograms for CSS quantum LDPC codes under message-passing decoding "
        "with stabilizer inactivation or OSD-0 post-processing."
    ),
    version="1.0.0",
    contact={"name": "qLDPC Simulator Maintainer"},
)

app.include_router(simulation_router)


@app.on_event("shutdown")
async def shutdown_event() -> None:
    await storage.close()
