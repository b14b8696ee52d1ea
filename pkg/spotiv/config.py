"""
Centralized configuration management for the SpotIV library.
"""

import os
from typing import Optional
from pydantic import BaseModel, Field
from dotenv import load_dotenv

# Load environment variables
load_dotenv()


def _safe_int(value: Optional[str], default: int) -> int:
    """
    Safely convert a string to int, returning default on failure.

    Args:
        value: String value to convert
        default: Default value to return if conversion fails

    Returns:
        Converted integer or default value
    """
    try:
        return int(value)
    except (ValueError, TypeError):
        return default


def _safe_float(value: Optional[str], default: float) -> float:
    """Safely convert a string to float, returning default on failure."""
    try:
        return float(value)
    except (ValueError, TypeError):
        return default


class SpotIVConfig(BaseModel):
    """Centralized configuration for estimation, bootstrap and simulation."""

    # Worker Configuration
    threads: int = Field(
        default_factory=lambda: _safe_int(
            os.getenv("SPOTIV_THREADS"), os.cpu_count() or 1
        ),
        description="Upper bound on the replication worker pool",
    )

    # Step 1: first stage and SIR
    selection_constant: float = Field(
        default_factory=lambda: _safe_float(
            os.getenv("SPOTIV_SELECTION_CONSTANT"), 2.0
        ),
        description="Constant inside the square root of the relevant-IV threshold",
    )
    condition_limit: float = Field(
        default_factory=lambda: _safe_float(
            os.getenv("SPOTIV_CONDITION_LIMIT"), 1e12
        ),
        description="Largest admissible condition number of the design",
    )
    c0: float = Field(
        default_factory=lambda: _safe_float(os.getenv("SPOTIV_C0"), 0.5),
        description="Exponent of the n^c0 penalty in rank selection",
    )
    n_slices: int = Field(
        default_factory=lambda: _safe_int(os.getenv("SPOTIV_N_SLICES"), 10),
        description="Number of slices for continuous outcomes",
    )
    omega_method: str = Field(
        default_factory=lambda: os.getenv("SPOTIV_OMEGA_METHOD", "slice"),
        description="Omega_hat for continuous outcomes: slice or kernel",
    )
    sqrt_floor: float = Field(
        default_factory=lambda: _safe_float(os.getenv("SPOTIV_SQRT_FLOOR"), 1e-10),
        description="Relative eigenvalue floor used by the inverse square root",
    )

    # Step 2: majority vote
    vote_constant: float = Field(
        default_factory=lambda: _safe_float(os.getenv("SPOTIV_VOTE_CONSTANT"), 2.01),
        description="Leading constant of the voting threshold",
    )
    vote_threshold: str = Field(
        default_factory=lambda: os.getenv("SPOTIV_VOTE_THRESHOLD", "sandwich"),
        description="Voting threshold form: sandwich (p-weighted SE) or plain",
    )
    p_hat_source: str = Field(
        default_factory=lambda: os.getenv("SPOTIV_P_HAT_SOURCE", "logistic"),
        description="Source of fitted probabilities for the voting test",
    )
    p_hat_clamp: float = Field(
        default_factory=lambda: _safe_float(os.getenv("SPOTIV_P_HAT_CLAMP"), 0.01),
        description="Fitted probabilities are clamped to [clamp, 1 - clamp]",
    )

    # Step 3: partial mean and inference
    rot_constant: float = Field(
        default_factory=lambda: _safe_float(os.getenv("SPOTIV_ROT_CONSTANT"), 0.9),
        description="Leading constant of the rule-of-thumb bandwidth",
    )
    kernel_chunk_size: int = Field(
        default_factory=lambda: _safe_int(
            os.getenv("SPOTIV_KERNEL_CHUNK_SIZE"), 512
        ),
        description="Evaluation rows per kernel block",
    )
    n_boot: int = Field(
        default_factory=lambda: _safe_int(os.getenv("SPOTIV_N_BOOT"), 50),
        description="Number of bootstrap resamples",
    )
    alpha: float = Field(
        default_factory=lambda: _safe_float(os.getenv("SPOTIV_ALPHA"), 0.05),
        description="Confidence intervals have level 1 - alpha",
    )
    boot_attempt_factor: int = Field(
        default_factory=lambda: _safe_int(
            os.getenv("SPOTIV_BOOT_ATTEMPT_FACTOR"), 5
        ),
        description="Bootstrap gives up after factor * n_boot resample attempts",
    )

    # Simulation Configuration
    oracle_n_mc: int = Field(
        default_factory=lambda: _safe_int(
            os.getenv("SPOTIV_ORACLE_N_MC"), 1_000_000
        ),
        description="Monte Carlo draws for the true CATE",
    )
    replications: int = Field(
        default_factory=lambda: _safe_int(os.getenv("SPOTIV_REPLICATIONS"), 200),
        description="Default replications per simulation cell",
    )
    max_failure_rate: float = Field(
        default_factory=lambda: _safe_float(
            os.getenv("SPOTIV_MAX_FAILURE_RATE"), 0.05
        ),
        description="Share of failed replications tolerated in a cell",
    )

    # Logging Configuration
    log_level: str = Field(
        default_factory=lambda: os.getenv("LOG_LEVEL", "INFO"),
        description="Logging level",
    )
    enable_structured_logging: bool = Field(
        default_factory=lambda: os.getenv("ENABLE_STRUCTURED_LOGGING", "false").lower()
        == "true",
        description="Enable structured logging",
    )

    def validate_config(self) -> None:
        """Validate configuration values."""
        if self.threads <= 0:
            raise ValueError("SPOTIV_THREADS must be positive")

        if self.selection_constant <= 0:
            raise ValueError("SPOTIV_SELECTION_CONSTANT must be positive")

        if self.condition_limit <= 1:
            raise ValueError("SPOTIV_CONDITION_LIMIT must exceed 1")

        if not 0 < self.c0 < 1:
            raise ValueError("SPOTIV_C0 must lie strictly between 0 and 1")

        if self.n_slices < 2:
            raise ValueError("SPOTIV_N_SLICES must be at least 2")

        if self.omega_method not in ("slice", "kernel"):
            raise ValueError("SPOTIV_OMEGA_METHOD must be 'slice' or 'kernel'")

        if not 0 < self.sqrt_floor < 1:
            raise ValueError("SPOTIV_SQRT_FLOOR must lie strictly between 0 and 1")

        if self.vote_constant <= 0:
            raise ValueError("SPOTIV_VOTE_CONSTANT must be positive")

        if self.vote_threshold not in ("sandwich", "plain"):
            raise ValueError("SPOTIV_VOTE_THRESHOLD must be 'sandwich' or 'plain'")

        if self.p_hat_source not in ("logistic", "kernel"):
            raise ValueError("SPOTIV_P_HAT_SOURCE must be 'logistic' or 'kernel'")

        if not 0 < self.p_hat_clamp < 0.5:
            raise ValueError("SPOTIV_P_HAT_CLAMP must lie strictly between 0 and 0.5")

        if self.rot_constant <= 0:
            raise ValueError("SPOTIV_ROT_CONSTANT must be positive")

        if self.kernel_chunk_size <= 0:
            raise ValueError("SPOTIV_KERNEL_CHUNK_SIZE must be positive")

        if self.n_boot < 2:
            raise ValueError("SPOTIV_N_BOOT must be at least 2")

        if not 0 < self.alpha < 1:
            raise ValueError("SPOTIV_ALPHA must lie strictly between 0 and 1")

        if self.boot_attempt_factor < 1:
            raise ValueError("SPOTIV_BOOT_ATTEMPT_FACTOR must be at least 1")

        if self.oracle_n_mc <= 0:
            raise ValueError("SPOTIV_ORACLE_N_MC must be positive")

        if self.replications < 1:
            raise ValueError("SPOTIV_REPLICATIONS must be at least 1")

        if not 0 <= self.max_failure_rate < 1:
            raise ValueError("SPOTIV_MAX_FAILURE_RATE must lie in [0, 1)")

        valid_log_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if self.log_level.upper() not in valid_log_levels:
            raise ValueError(f"LOG_LEVEL must be one of: {', '.join(valid_log_levels)}")

    @classmethod
    def load_config(cls) -> "SpotIVConfig":
        """Load and validate configuration."""
        config = cls()
        config.validate_config()
        return config


# Global configuration instance
_config: Optional[SpotIVConfig] = None


def get_config() -> SpotIVConfig:
    """Get the global configuration instance."""
    global _config
    if _config is None:
        _config = SpotIVConfig.load_config()
    return _config


def reload_config() -> SpotIVConfig:
    """Reload configuration from environment."""
    global _config
    load_dotenv(override=True)  # Reload .env file
    _config = SpotIVConfig.load_config()
    return _config
