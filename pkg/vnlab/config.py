"""
Configuration
=============
Load settings from vnlab.yaml, env vars, or CLI args.

Numerical tolerances are module constants; every function that takes a
tolerance uses them as keyword defaults. The Config dataclass carries the
run-level knobs (seed, optimizer effort, workers) plus an optional global
tolerance override.
"""

import os
import logging
from dataclasses import dataclass, field, asdict
from typing import Dict, Any, Optional
from pathlib import Path

log = logging.getLogger("vnlab.config")

CONFIG_FILENAME = "vnlab.yaml"
CONFIG_SEARCH_PATHS = [
    Path.cwd() / CONFIG_FILENAME,
    Path.home() / ".config" / "vnlab" / CONFIG_FILENAME,
    Path.home() / ".vnlab" / CONFIG_FILENAME,
]

# Spectral calculus
EIG_CUTOFF = 1e-12        # relative to the largest |eigenvalue|
HERMITIAN_TOL = 1e-8      # relative Frobenius asymmetry
DENSITY_TOL = 1e-10

# Algebras
RANK_CUTOFF = 1e-10       # relative singular-value cutoff for span decisions
SPAN_TOL = 1e-9
SQUARE_TOL = 1e-9
BLOCK_GAP = 1e-7
BLOCK_RETRIES = 8
BLOCK_TOL = 1e-8

# Inequalities
SSA_TOL = 1e-9
RECOVERY_TOL = 1e-8
DUALITY_TOL = 1e-7
UCR_TOL = 1e-9
MU_TOL = 1e-8
MIXTURE_TOL = 1e-8        # trace distance to a complete mixture
PURE_TOL = 1e-8
PHASE_TOL = 1e-9


@dataclass
class Config:
    """Run configuration."""
    # Reproducibility
    seed: int = 0

    # Optimizers
    restarts: int = 16         # multi-start count for estimators
    maxfev: int = 4000         # evaluation budget per local search
    ext_dim: int = 0           # 0 = min(|ST|^2, 16)
    converse_budget: int = 10000

    # Scans
    workers: int = 4
    samples: int = 50
    output_dir: str = "vnlab-runs"

    # Optional global override; None keeps the per-check defaults
    tolerance: Optional[float] = None

    extra: Dict[str, Any] = field(default_factory=dict)

    def tolerances(self) -> Dict[str, float]:
        """Return the effective tolerance for every named check."""
        defaults = {
            "square": SQUARE_TOL,
            "ssa": SSA_TOL,
            "recovery": RECOVERY_TOL,
            "duality": DUALITY_TOL,
            "ucr": UCR_TOL,
            "mu": MU_TOL,
        }
        if self.tolerance is None:
            return defaults
        return {name: float(self.tolerance) for name in defaults}

    def with_tolerance(self, tolerance: Optional[float]) -> "Config":
        """Return a copy with the global tolerance override applied."""
        if tolerance is not None and tolerance <= 0:
            raise ValueError(f"Tolerance must be positive, got {tolerance}")
        data = asdict(self)
        data["tolerance"] = tolerance if tolerance is not None else self.tolerance
        return Config(**data)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["tolerances"] = self.tolerances()
        return data

    @classmethod
    def load(cls, path: str = None) -> "Config":
        """Load config from YAML file, env vars, or defaults."""
        config = cls()

        yaml_path = find_config_path(path)
        if path and yaml_path is None:
            raise FileNotFoundError(f"Config file not found: {path}")

        if yaml_path is not None:
            config._load_yaml(yaml_path)
            log.info(f"Loaded config from {yaml_path}")

        # Env vars override YAML
        config._load_env()
        return config

    def _load_yaml(self, path: Path):
        """Load from YAML file."""
        try:
            import yaml
        except ImportError:
            log.warning("PyYAML not installed. Config file ignored. pip install pyyaml")
            return

        with open(path, "r") as f:
            data = yaml.safe_load(f) or {}
        if not isinstance(data, dict):
            raise ValueError(f"Config file {path} must contain a mapping, got {type(data).__name__}")

        for key, value in data.items():
            if key == "extra" or not hasattr(self, key):
                self.extra[key] = value
                log.debug(f"Unknown config key kept in extra: {key}")
                continue
            setattr(self, key, value)

    def _load_env(self):
        """Override with environment variables."""
        if os.getenv("VNLAB_SEED"):
            self.seed = int(os.getenv("VNLAB_SEED"))
        if os.getenv("VNLAB_RESTARTS"):
            self.restarts = int(os.getenv("VNLAB_RESTARTS"))
        if os.getenv("VNLAB_WORKERS"):
            self.workers = int(os.getenv("VNLAB_WORKERS"))
        if os.getenv("VNLAB_TOLERANCE"):
            self.tolerance = float(os.getenv("VNLAB_TOLERANCE"))
        if os.getenv("VNLAB_OUTPUT_DIR"):
            self.output_dir = os.getenv("VNLAB_OUTPUT_DIR", self.output_dir)


def find_config_path(path: str = None) -> Path | None:
    """Return the first existing config path, if any."""
    yaml_path = Path(path) if path else None
    if yaml_path and yaml_path.exists():
        return yaml_path
    if yaml_path:
        return None
    for search_path in CONFIG_SEARCH_PATHS:
        if search_path.exists():
            return search_path
    return None
