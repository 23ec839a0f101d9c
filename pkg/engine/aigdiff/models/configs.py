"""
Experiment Configuration Models

Pydantic models for training, the denoiser architecture and MCTS refinement.
Config files are JSON or YAML mirroring the field names; unknown keys are
rejected.
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from aigdiff.models.dag import K_E, K_X


class ModelConfig(BaseModel):
    """Graph transformer dimensions"""

    model_config = ConfigDict(extra="forbid")

    layers: int = Field(4, ge=1, description="Transformer layer count")
    hidden_x: int = Field(64, ge=1, description="Node hidden width")
    hidden_e: int = Field(32, ge=1, description="Edge hidden width")
    hidden_y: int = Field(32, ge=1, description="Graph-level hidden width")
    heads: int = Field(4, ge=1, description="Attention heads")
    time_dim: int = Field(16, ge=2, description="Sinusoidal timestep embedding width (even)")
    cond_dim: int = Field(32, ge=0, description="Condition row width per node")
    k_x: int = Field(K_X, ge=1, description="Node category count")
    k_e: int = Field(K_E, ge=2, description="Edge category count")

    @model_validator(mode="after")
    def _check_dims(self) -> "ModelConfig":
        if self.hidden_x % self.heads or self.hidden_e % self.heads:
            raise ValueError(
                f"hidden_x={self.hidden_x} and hidden_e={self.hidden_e} must be divisible "
                f"by heads={self.heads}"
            )
        if self.time_dim % 2:
            raise ValueError(f"time_dim must be even, got {self.time_dim}")
        return self

    @property
    def d_x(self) -> int:
        """Input node feature width."""
        return self.k_x + 1 + self.time_dim + 2 + self.cond_dim

    @property
    def d_e(self) -> int:
        return self.k_e

    @property
    def d_y(self) -> int:
        return self.time_dim + self.k_e


class TrainConfig(BaseModel):
    """Training run configuration (desk-scale defaults)"""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    # Diffusion
    T: int = Field(50, ge=1, description="Diffusion horizon")
    beta: float = Field(20.0, ge=0, description="Level offset of the local timestep map")
    mode: Literal["bottom-up", "top-down"] = Field("bottom-up", description="Generation order")
    node_diffusion_enabled: bool = Field(
        False, description="Corrupt and denoise node types (off for circuits)"
    )

    # Objective
    lambda_cond: float = Field(1.0, ge=0, alias="lambda", description="Condition-loss weight")
    cond_via_gumbel: bool = Field(
        False, description="Feed a straight-through Gumbel sample of pE to the soft simulator"
    )
    gumbel_temperature: float = Field(1.0, gt=0, description="Gumbel-Softmax temperature")

    # Architecture
    layers: int = Field(4, ge=1)
    hidden: int = Field(64, ge=1, description="Node hidden width")
    hidden_e: int = Field(32, ge=1)
    hidden_y: int = Field(32, ge=1)
    heads: int = Field(4, ge=1)
    time_dim: int = Field(16, ge=2)

    # Optimization
    learning_rate: float = Field(2e-4, gt=0)
    weight_decay: float = Field(1e-12, ge=0)
    batch_size: int = Field(32, ge=1)
    epochs: int = Field(100, ge=1)
    grad_clip: Optional[float] = Field(10.0, gt=0, description="Global norm clip; null disables")

    # Bookkeeping
    seed: int = Field(0)
    checkpoint_every: int = Field(10, ge=1, description="Checkpoint cadence in epochs")
    val_fraction: float = Field(
        0.1, ge=0, lt=1, description="Held-out share when no validation file is given"
    )
    threads: Optional[int] = Field(None, ge=1, description="Torch intra-op threads")

    @model_validator(mode="after")
    def _check_schedule(self) -> "TrainConfig":
        if self.beta >= self.T:
            raise ValueError(f"beta={self.beta} must be smaller than T={self.T}")
        return self

    def to_model_config(self) -> ModelConfig:
        return ModelConfig(
            layers=self.layers,
            hidden_x=self.hidden,
            hidden_e=self.hidden_e,
            hidden_y=self.hidden_y,
            heads=self.heads,
            time_dim=self.time_dim,
        )


class MctsConfig(BaseModel):
    """Monte Carlo tree search refinement budget"""

    model_config = ConfigDict(extra="forbid")

    simulations: int = Field(500, ge=1, description="Simulations per decision step")
    steps: int = Field(50, ge=1, description="Decision steps")
    rollout_depth: int = Field(5, ge=0, description="Random actions per rollout")
    ucb_c: float = Field(math.sqrt(2.0), ge=0, description="UCB exploration constant")
    pw_c: float = Field(1.0, gt=0, description="Progressive widening coefficient")
    pw_alpha: float = Field(0.5, ge=0, le=1, description="Progressive widening exponent")
    mode: Literal["serial", "parallel"] = Field(
        "serial", description="serial is reproducible under a seed; parallel uses threads"
    )
    workers: int = Field(4, ge=1, description="Simulation threads in parallel mode")
    seed: int = Field(0)


def load_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Read a JSON or YAML config file into a dict.

    Raises:
        OSError: If the file cannot be read
        ValueError: If the content is not a mapping
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() in (".yaml", ".yml"):
        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a mapping, got {type(data).__name__}")
    return data


def merge_overrides(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Flags win over file values; None means 'not given'."""
    merged = dict(base)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return merged
