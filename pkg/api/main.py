from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from collections import OrderedDict
from typing import List, Optional, Tuple
import sys
import os

import numpy as np

# Add project root to path
sys.path.append(os.path.join(os.path.dirname(__file__), '..'))

from api.models import (BuildRequest, BuildSummary, Constants, FamilyRow, HealthCheck, KernelRow, KernelTable,
                        ServiceInfo, VerifyReport)
from src.config_loader import RunConfig
from src.driver import Workbench
from src.exceptions import ConfigError, OutOfFamilyError, WorkbenchError
from src.linsolve import standard_piece_kernels
from src.rotsym import family_table, solve_critical_constants

VERSION = "1.0.0"

app = FastAPI(
    title="Free Boundary Minimal Surface Workbench API",
    description="Initial surfaces, kernel checks and verification for Scherk desingularizations in the unit ball",
    version=VERSION
)

# Add CORS middleware for browser clients
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Global instances
constants = None
workbenches: "OrderedDict[Tuple[int, int], Workbench]" = OrderedDict()
MAX_WORKBENCHES = 2


@app.on_event("startup")
async def startup_event():
    """Compute the critical constants once."""
    global constants
    try:
        print("Initializing workbench service...")
        constants = solve_critical_constants()
        print(f"Critical catenoid ready: r_crit = {constants.r_crit:.6f}")
    except Exception as e:
        print(f"Error during startup: {e}")


def _require_constants():
    if constants is None:
        raise HTTPException(status_code=503, detail="Workbench not initialized")


def _workbench(request: BuildRequest) -> Workbench:
    key = (request.m, request.res)
    if key not in workbenches:
        config = RunConfig(m=request.m, res=request.res, theta0=request.theta)
        workbench = Workbench(config)
        workbench.initialize_system()
        workbenches[key] = workbench
        while len(workbenches) > MAX_WORKBENCHES:
            workbenches.popitem(last=False)
    workbench = workbenches[key]
    workbench.config = workbench.config.model_copy(update={"theta0": request.theta})
    return workbench


def _bad_request(e: Exception) -> HTTPException:
    if isinstance(e, (ConfigError, OutOfFamilyError)):
        return HTTPException(status_code=400, detail=str(e))
    return HTTPException(status_code=500, detail=f"{type(e).__name__}: {str(e)}")


@app.get("/", response_model=ServiceInfo)
async def root():
    """Root endpoint with API information."""
    return ServiceInfo(
        message="Free Boundary Minimal Surface Workbench API",
        version=VERSION,
        endpoints={
            "constants": "/constants - Critical catenoid constants",
            "family": "/family - Catenoid family table",
            "kernels": "/kernels - Mode determinant table of the standard pieces",
            "build": "/build - Build an initial surface and summarize it",
            "verify": "/verify - Verify an initial surface"
        }
    )


@app.get("/health", response_model=HealthCheck)
async def health_check():
    """Health check endpoint."""
    return HealthCheck(status="healthy", constants_loaded=constants is not None, version=VERSION)


@app.get("/constants", response_model=Constants)
async def get_constants():
    """Critical catenoid constants with the structural margins."""
    _require_constants()
    return Constants(**constants.as_dict(), margins=constants.margins())


@app.get("/family", response_model=List[FamilyRow])
async def get_family(start: Optional[float] = None, stop: float = 0.5, num: int = 11):
    """Catenoid family r_theta on an angle grid (from theta_min by default)."""
    _require_constants()
    start = constants.theta_min if start is None else start
    if num < 2 or num > 1000:
        raise HTTPException(status_code=400, detail=f"num must lie in [2, 1000], got {num}")
    try:
        table = family_table(np.linspace(start, stop, num))
        return [FamilyRow(**row) for row in table.to_dict(orient="records")]
    except WorkbenchError as e:
        raise _bad_request(e)


@app.get("/kernels", response_model=KernelTable)
async def get_kernels(n_max: int = 32):
    """Boundary-condition determinants of the disk, annulus and catenoid modes."""
    _require_constants()
    if n_max < 0 or n_max > 256:
        raise HTTPException(status_code=400, detail=f"n_max must lie in [0, 256], got {n_max}")
    table = standard_piece_kernels(n_max)
    rows = [KernelRow(**row) for row in table.to_dict(orient="records")]
    return KernelTable(rows=rows, min_margin=float(table.loc[~table["excluded"], "margin"].min()))


@app.post("/build", response_model=BuildSummary)
async def build_surface(request: BuildRequest):
    """Build the initial surface M_theta for (m, theta, res)."""
    _require_constants()
    try:
        return BuildSummary(**_workbench(request).build(request.theta))
    except WorkbenchError as e:
        raise _bad_request(e)
    except Exception as e:
        raise HTTPException(status_code=500, detail=f"Error building surface: {str(e)}")


@app.post("/verify", response_model=VerifyReport)
async def verify_surface(request: BuildRequest):
    """Verification report of the initial surface."""
    _require_constants()
    try:
        return VerifyReport(**_workbench(request).verify(theta=request.theta))
    except WorkbenchError as e:
        raise _bad_request(e)
    except Exception as e:
        raise HTTPException(status_code=500, detail=f"Error verifying surface: {str(e)}")
