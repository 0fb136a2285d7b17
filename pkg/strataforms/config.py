import logging
import os

from dotenv import load_dotenv
from pydantic import BaseModel, Field

load_dotenv()

DEFAULT_JOBS = int(os.getenv("STRATAFORMS_JOBS", "1"))
DEFAULT_TOL = float(os.getenv("STRATAFORMS_TOL", "1e-8"))
DEFAULT_QUAD_ORDER = int(os.getenv("STRATAFORMS_QUAD_ORDER", "10"))
DEFAULT_SEED = int(os.getenv("STRATAFORMS_SEED", "0"))
DEFAULT_SAMPLES = int(os.getenv("STRATAFORMS_SAMPLES", "64"))
LOG_LEVEL = os.getenv("STRATAFORMS_LOG_LEVEL", "WARNING")

# Fixed numerical constants of the individual checks
FRONTIER_TOL = 1e-9
CONTINUITY_TOL = 1e-6
CLOSURE_STEPS = 12
STOKES_EPS = tuple(2.0 ** -i for i in range(1, 9))
SEMIDIFF_T = tuple(2.0 ** -i for i in range(1, 11))
SEMIDIFF_TOL = 1e-4
FD_STEP = 1e-5
WEAK_TOL = 1e-6
WEAK_ORDER = 20
TUBE_DECAY_CONSTANT = 1.0
PAIRING_TOL = 1e-8


class RunSettings(BaseModel):
    """Effective configuration of one run"""
    jobs: int = Field(default=DEFAULT_JOBS, ge=1)
    tol: float = Field(default=DEFAULT_TOL, gt=0.0)
    quad_order: int = Field(default=DEFAULT_QUAD_ORDER, ge=1, le=60)
    seed: int = Field(default=DEFAULT_SEED, ge=0)
    samples: int = Field(default=DEFAULT_SAMPLES, ge=1)


def get_settings(**overrides) -> RunSettings:
    """Environment defaults, replaced by any override that is not None"""
    values = {k: v for k, v in overrides.items() if v is not None}
    return RunSettings(**values)


def configure_logging(level: str = LOG_LEVEL) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
