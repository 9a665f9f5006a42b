"""
Tracking API Routes

Endpoints for running one-pass evaluation on a sequence and
listing the runs made so far.
"""

import sys
import os

# Get the project root directory
PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)

from fastapi import APIRouter
from pydantic import BaseModel, Field
from typing import Optional

from src.errors import TrackerError
from src.evaluation import headline, run_ope, write_outputs
from src.run_config import dump_run_config, load_run_config
from src.sequences import generate_synthetic, load_sequence

from api.dependencies import get_app_state, http_error

router = APIRouter()


class TrackRequest(BaseModel):
    """Request model for a tracking run."""
    sequence_dir: Optional[str] = None  # None tracks the configured synthetic sequence
    config_overrides: dict[str, str] = Field(default_factory=dict)
    seed: Optional[int] = None
    out_dir: Optional[str] = None  # Write the usual output files here when set


@router.post("/track")
def track_sequence(request: TrackRequest):
    """
    Track one sequence and return its metrics and boxes.

    - **sequence_dir**: Directory with frames and groundtruth_rect.txt
    - **config_overrides**: "section.field" -> value pairs
    - **seed**: Overrides run.seed
    - **out_dir**: Optional directory for boxes.csv, metrics.json, ...
    """
    overrides = dict(request.config_overrides)
    if request.seed is not None:
        overrides["run.seed"] = str(request.seed)

    try:
        config = load_run_config(overrides=overrides)
        if request.sequence_dir:
            sequence = load_sequence(request.sequence_dir)
        else:
            sequence = generate_synthetic(config.synthetic, config.run.seed)

        result, metrics = run_ope(sequence, config.tracker_config())
        if request.out_dir:
            write_outputs(result, metrics, request.out_dir, trace=config.run.trace)
            dump_run_config(config, os.path.join(request.out_dir, "run_config.env"))
    except TrackerError as e:
        raise http_error(e)

    summary = headline(sequence.name, result, metrics)
    get_app_state().record("track", **summary)

    return {
        **summary,
        "boxes": [None if box.is_absent else list(box.as_tuple()) for box in result.boxes],
        "learned_frames": sum(1 for d in result.decisions if d.learned),
    }


@router.get("/runs")
async def list_runs():
    """Every run made through the API since the server started."""
    state = get_app_state()
    return {"runs": state.runs, "total": len(state.runs)}


@router.delete("/runs")
async def clear_runs():
    """Forget the run history."""
    get_app_state().clear()
    return {"message": "Run history cleared"}
