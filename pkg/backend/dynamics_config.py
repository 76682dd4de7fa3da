"""
Runtime settings: tolerances, budgets and sampler defaults.

Values come from the environment (BD_* variables, optionally from a
.env file at the repository root) and can be overridden per call scope.
"""

import logging
import os
from contextlib import contextmanager
from contextvars import ContextVar
from pathlib import Path
from typing import Iterator, Literal, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from dynamics_errors import InvalidInputError

logger = logging.getLogger(__name__)

ROOT_DIR = Path(__file__).parent.parent

Backend = Literal["exact", "float"]


class Settings(BaseModel):
    """Tolerances and budgets shared by every service"""

    model_config = ConfigDict(frozen=True)

    default_backend: Backend = "exact"

    # root finding / gcd
    tol_root: float = Field(1e-8, gt=0)
    tol_cluster: float = Field(1e-5, gt=0)
    tol_div: float = Field(1e-7, gt=0)

    # moduli
    tol_sigma: float = Field(1e-8, gt=0)
    tol_tau: float = Field(1e-6, gt=0)
    tol_tau_label: float = Field(1e-4, gt=0)
    tau_t0: float = Field(0.05, gt=0, lt=1)
    tau_levels: int = Field(20, ge=4)

    # barycenter
    tol_bc: float = Field(1e-10, gt=0)
    tol_atom: float = Field(1e-6, ge=0)
    max_bc_iter: int = Field(500, ge=1)

    # iterates and measures
    degree_budget: int = Field(4096, ge=1)
    depth_n: int = Field(40, ge=0)
    max_atoms: int = Field(20000, ge=1)
    r_cap: float = Field(0.05, gt=0)
    top_atoms: int = Field(50, ge=1)

    # sampler
    burn_in: int = Field(50, ge=0)
    n_samples: int = Field(10000, ge=1)
    n_walks: int = Field(8, ge=1)
    workers: int = Field(1, ge=1)

    log_level: str = "INFO"
    log_json: bool = False

    @classmethod
    def from_env(cls, env_file: Optional[Path] = None) -> "Settings":
        load_dotenv(env_file or ROOT_DIR / ".env")
        values = {}
        for name in cls.model_fields:
            raw = os.environ.get(f"BD_{name.upper()}")
            if raw is not None:
                values[name] = raw
        try:
            return cls(**values)
        except ValidationError as e:
            first = e.errors()[0]
            field = f"BD_{str(first['loc'][0]).upper()}"
            logger.error(f"Invalid environment setting {field}: {first['msg']}")
            raise InvalidInputError(field, first["msg"])


_active: ContextVar[Optional[Settings]] = ContextVar("boundary_dynamics_settings", default=None)


def get_settings() -> Settings:
    settings = _active.get()
    if settings is None:
        settings = Settings.from_env()
        _active.set(settings)
    return settings


def set_settings(settings: Settings) -> None:
    _active.set(settings)


@contextmanager
def override_settings(**changes) -> Iterator[Settings]:
    """Temporarily replace selected settings within the current context"""
    current = get_settings()
    try:
        updated = Settings(**{**current.model_dump(), **changes})
    except ValidationError as e:
        first = e.errors()[0]
        raise InvalidInputError(str(first["loc"][0]), first["msg"])
    token = _active.set(updated)
    try:
        yield updated
    finally:
        _active.reset(token)
