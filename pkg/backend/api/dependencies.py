"""
Shared dependencies and state management for the API.
"""

import sys
import os
from datetime import datetime, timezone

# Get the project root directory
PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)

from fastapi import HTTPException

from src.errors import ConfigError, DataError, SolverDivergedError, TrackerError


class AppState:
    """
    Application state: the history of runs made through the API.
    Kept in memory only, so it lasts as long as the process.
    """

    def __init__(self):
        self.runs: list[dict] = []

    def record(self, kind: str, **details) -> dict:
        """Append one run to the history and return the entry."""
        entry = {
            "id": len(self.runs) + 1,
            "kind": kind,
            "finished_at": datetime.now(timezone.utc).isoformat(),
            **details,
        }
        self.runs.append(entry)
        return entry

    def clear(self):
        """Forget all runs."""
        self.runs = []


# Global app state instance
app_state = AppState()


def get_app_state() -> AppState:
    """Get the global app state."""
    return app_state


def http_error(error: TrackerError) -> HTTPException:
    """Map a package error onto an HTTP status code."""
    if isinstance(error, ConfigError):
        detail = {"error": str(error), "key": error.key}
        return HTTPException(status_code=422, detail=detail)
    if isinstance(error, DataError):
        return HTTPException(status_code=400, detail={"error": str(error)})
    if isinstance(error, SolverDivergedError):
        return HTTPException(status_code=500, detail={"error": str(error), "iteration": error.iteration})
    return HTTPException(status_code=500, detail={"error": str(error)})
