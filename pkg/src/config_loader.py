import os
import logging
from typing import Dict, Any, Optional

from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src.exceptions import ConfigError, UnknownKeyError

logger = logging.getLogger(__name__)

ENV_PREFIX = "FBMS_"


class RunConfig(BaseModel):
    """All tunable parameters of a workbench run."""

    model_config = ConfigDict(extra="forbid")

    m: int = Field(6, description="Number of Scherk periods; genus is m - 1")
    theta0: float = Field(0.0, description="Initial unbalancing angle")
    a: Optional[float] = Field(None, description="Core/wing offset; empty selects the desk-scale rule")
    delta_s: float = Field(0.05, gt=0, description="Truncation scale")
    delta_theta: float = Field(0.05, gt=0, description="Soft window for |theta|")
    gamma: float = Field(0.75, gt=0, lt=1, description="Decay rate of the norm weights")
    beta: float = Field(0.75, gt=0, lt=1, description="Hoelder exponent (surrogate)")
    res: int = Field(8, ge=2, description="Grid cells per unit of the Scherk metric")
    s_far: float = Field(6.0, gt=0, description="Extra wing length of the Scherk quotient")
    blend_width: Optional[float] = Field(None, description="Core/wing blend width; empty means min(1, 3 delta_s m)")
    collar_eps: float = Field(0.1, gt=0, description="Twist collar width")
    min_angle_deg: float = Field(15.0, gt=0, lt=60, description="Smallest triangle angle accepted by the mesher")
    admissible_norm: float = Field(1.0, gt=0, description="Largest admissible weighted norm of phi")
    fd_delta: float = Field(1e-4, gt=0, description="Finite-difference step for w")
    linear_tol: float = Field(1e-10, gt=0, description="Relative tolerance of linear solves")
    residual_tol: float = Field(1e-3, gt=0, description="Stop when max|H| <= residual_tol / lambda")
    theta_tol: float = Field(1e-3, gt=0, description="Stop when max|Theta| <= theta_tol")
    max_iter: int = Field(20, ge=1, description="Fixed-point iteration cap")
    min_relaxation: float = Field(0.0625, gt=0, le=1, description="Smallest damping factor of the fixed-point step")
    linear_iterations: int = Field(6, ge=1, description="Steps of the semi-local linear iteration")
    out_dir: str = Field("output", description="Directory for meshes and reports")
    run_log: str = Field("logs/runs.log", description="JSON-lines run log")
    log_level: str = Field("INFO", description="Logging level name")

    @field_validator("m")
    @classmethod
    def _m_at_least_three(cls, value: int) -> int:
        if value < 3:
            raise ValueError(f"m must be >= 3, got {value}")
        return value

    @field_validator("log_level")
    @classmethod
    def _known_level(cls, value: str) -> str:
        level = value.upper()
        if level not in ("DEBUG", "INFO", "WARNING", "ERROR"):
            raise ValueError(f"unknown log level {value!r}")
        return level


class ConfigLoader:
    def __init__(self, config_path: Optional[str] = None, use_env: bool = True):
        self.config_path = config_path
        self.use_env = use_env
        self.values: Dict[str, Any] = {}

    def read_file(self) -> Dict[str, Any]:
        """Read the flat key = value file."""
        if self.config_path is None:
            return {}
        if not os.path.exists(self.config_path):
            raise FileNotFoundError(f"Configuration file not found: {self.config_path}")

        try:
            raw = dotenv_values(self.config_path)
        except Exception as e:
            raise ConfigError(f"Cannot parse {self.config_path}: {str(e)}")

        values = {}
        for key, value in raw.items():
            key = key.strip().lower()
            if key not in RunConfig.model_fields:
                raise UnknownKeyError(f"Unknown configuration key {key!r} in {self.config_path}")
            values[key] = None if value is None or value.strip() == "" else value.strip()
        return values

    def read_environment(self) -> Dict[str, Any]:
        """Collect FBMS_* overrides, after loading a local .env if present."""
        if not self.use_env:
            return {}
        load_dotenv(override=False)
        values = {}
        for name, value in os.environ.items():
            if not name.startswith(ENV_PREFIX):
                continue
            key = name[len(ENV_PREFIX):].lower()
            if key not in RunConfig.model_fields:
                raise UnknownKeyError(f"Unknown configuration key {key!r} from environment variable {name}")
            values[key] = None if value.strip() == "" else value
        return values

    def load(self, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
        """Merge file, environment and explicit overrides into a RunConfig."""
        values = self.read_file()
        values.update(self.read_environment())
        for key, value in (overrides or {}).items():
            if value is not None:
                values[key] = value
        self.values = values

        try:
            config = RunConfig(**values)
        except ValidationError as e:
            unknown = [err["loc"][0] for err in e.errors() if err["type"] == "extra_forbidden"]
            if unknown:
                raise UnknownKeyError(f"Unknown configuration keys: {unknown}")
            raise ConfigError(f"Invalid configuration: {str(e)}")

        logger.debug("configuration loaded: %s", config.model_dump())
        return config


def check_windows(config: RunConfig):
    """Resolve construction parameters, raising on hard window violations."""
    from src.scherk import DeformParams

    return DeformParams.build(
        theta=config.theta0,
        m=config.m,
        a=config.a,
        delta_s=config.delta_s,
        delta_theta=config.delta_theta,
        blend_width=config.blend_width,
    )
