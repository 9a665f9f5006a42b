"""
Synthetic API Routes

Renders the synthetic moving-blob sequence to disk.
"""

import sys
import os

# Get the project root directory
PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)

from fastapi import APIRouter
from pydantic import BaseModel, Field

from src.errors import TrackerError
from src.run_config import load_run_config
from src.sequences import generate_synthetic, write_sequence

from api.dependencies import get_app_state, http_error

router = APIRouter()


class SynthRequest(BaseModel):
    """Request model for rendering a synthetic sequence."""
    out_dir: str
    seed: int = Field(0, ge=0)
    overrides: dict[str, str] = Field(default_factory=dict)  # "synthetic.field" -> value


@router.post("/synth")
def render_synthetic(request: SynthRequest):
    """
    Write frames and groundtruth_rect.txt for the synthetic sequence.

    - **out_dir**: Target directory (created if missing)
    - **seed**: Texture and noise seed
    - **overrides**: e.g. {"synthetic.frames": "20"}
    """
    overrides = {**request.overrides, "run.seed": str(request.seed)}
    try:
        config = load_run_config(overrides=overrides)
        sequence = generate_synthetic(config.synthetic, config.run.seed)
        truth_path = write_sequence(sequence, request.out_dir)
    except TrackerError as e:
        raise http_error(e)

    get_app_state().record("synth", out_dir=request.out_dir, frames=len(sequence), seed=request.seed)
    return {
        "frames": len(sequence),
        "truth_path": str(truth_path),
        "occluded_frames": list(sequence.occluded_frames),
    }
