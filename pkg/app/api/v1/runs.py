"""Run API endpoints."""
from typing import List

from fastapi import APIRouter, Depends, HTTPException, status

from app.api.dependencies import get_experiment_service
from app.common.logging import get_logger
from app.models.run import RunConfig, RunDetail, RunRecord
from app.repositories.errors import RepositoryError, RunNotFoundError
from app.services.experiment_service import ExperimentService

logger = get_logger(__name__)
router = APIRouter()


@router.post("/runs",
             response_model=RunRecord,
             status_code=status.HTTP_201_CREATED,
             description="Start a new run",
             responses={
                 201: {"description": "Run started"},
                 400: {"description": "Invalid run configuration"}
             })
async def create_run(
    config: RunConfig,
    service: ExperimentService = Depends(get_experiment_service)
) -> RunRecord:
    """Validate a run configuration and start it in the background."""
    try:
        return await service.submit(config)
    except ValueError as e:
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail=str(e)
        )
    except Exception as e:
        logger.error(f"Error starting run: {str(e)}")
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail=f"Error starting run: {str(e)}"
        )


@router.get("/runs",
            response_model=List[RunRecord],
            description="List all runs",
            responses={200: {"description": "List of all runs"}})
async def get_runs(
    service: ExperimentService = Depends(get_experiment_service)
):
    """List every run with its status."""
    try:
        return await service.list_runs()
    except RepositoryError as e:
        logger.error(f"Error listing runs: {str(e)}")
        raise HTTPException(
            status_code=500,
            detail=f"Error listing runs: {str(e)}"
        )


@router.get("/runs/{run_id}",
            response_model=RunDetail,
            responses={
                200: {"description": "Run found"},
                404: {"description": "Run not found"},
                400: {"description": "Invalid run ID format"}
            })
async def get_run(
    run_id: str,
    service: ExperimentService = Depends(get_experiment_service)
):
    """Get a run and, once finished, its summary."""
    try:
        return await service.get_run(run_id)
    except RunNotFoundError:
        raise HTTPException(
            status_code=404,
            detail=f"Run {run_id} not found"
        )
    except ValueError as e:
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail=str(e)
        )
    except RepositoryError as e:
        logger.error(f"Error fetching run: {str(e)}")
        raise HTTPException(
            status_code=500,
            detail=f"Error fetching run: {str(e)}"
        )
