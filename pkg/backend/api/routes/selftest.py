"""
Self-test API Routes
"""

import sys
import os

# Get the project root directory
PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)

from fastapi import APIRouter, HTTPException, Query
from typing import Optional

from src.selftest import SUITES, run_selftest

from api.dependencies import get_app_state

router = APIRouter()


@router.get("/selftest")
def selftest(
    suite: Optional[list[str]] = Query(None, description="Run only these suites"),
    seed: int = Query(0, ge=0),
):
    """
    Run the oracle suites and report each one.

    Always answers 200; `passed` tells whether every suite passed.
    """
    unknown = [name for name in suite or [] if name not in SUITES]
    if unknown:
        raise HTTPException(status_code=404, detail={"error": f"unknown suites: {', '.join(unknown)}",
                                                     "available": list(SUITES)})

    results = run_selftest(seed, suite)
    passed = all(r.passed for r in results)
    get_app_state().record("selftest", passed=passed, suites=len(results))
    return {"passed": passed, "suites": [r.as_dict() for r in results]}
