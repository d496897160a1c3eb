from enum import Enum
from pathlib import Path
from typing import List, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator

PairName = Literal["identity", "linear_lift", "reacher23"]


class Method(str, Enum):
    """Mapping-learning methods."""

    ECC = "ecc"
    ECC_NOSYM = "ecc_nosym"
    DCC = "dcc"
    CYCLEGAN = "cyclegan"

    @property
    def needs_forward_model(self) -> bool:
        return self is Method.DCC


# Schema for mapping training (one method, one seed)
class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    method: Method = Method.ECC
    lambda1: float = Field(default=1.0, ge=0)
    lambda2: float = Field(default=1.0, ge=0)
    epochs: int = Field(default=30, ge=1)
    phase1_epochs: int = Field(default=2, ge=1)
    phase2_epochs: int = Field(default=2, ge=1)
    steps_per_epoch: int = Field(default=200, ge=1)
    batch_size: int = Field(default=256, ge=1)
    lr_generator: float = Field(default=1e-4, gt=0)
    lr_discriminator: float = Field(default=2e-4, gt=0)
    # identity warm-up of the state maps before the first epoch
    warmup_steps: int = Field(default=1000, ge=0)
    lr_warmup: float = Field(default=1e-3, gt=0)
    hidden: int = Field(default=64, ge=1)
    seed: int = Field(default=0, ge=0)

    @property
    def total_steps(self) -> int:
        return self.epochs * (self.phase1_epochs + self.phase2_epochs) * self.steps_per_epoch


# Schema for inverse and forward dynamics training
class DynamicsConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    epochs: int = Field(default=50, ge=1)
    batch_size: int = Field(default=256, ge=1)
    lr: float = Field(default=1e-3, gt=0)
    hidden: int = Field(default=64, ge=1)
    heldout_fraction: float = Field(default=0.1, gt=0, lt=1)


# Schema for a whole command invocation: config file values merged with CLI flags
class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", use_enum_values=False)

    pair: PairName = "linear_lift"
    method: Method = Method.ECC
    methods: List[Method] = Field(default_factory=lambda: list(Method))
    n_traj: int = Field(default=1000, ge=1)
    horizon: int = Field(default=200, ge=1)
    seed: int = Field(default=0, ge=0)
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    sizes: List[int] = Field(default_factory=lambda: [100, 300, 1000, 3000])
    episodes: int = Field(default=10, ge=1)
    eval_mode: Literal["mean", "sample"] = "mean"
    smoothing_window: int = Field(default=11, ge=1)

    lambda1: float = Field(default=1.0, ge=0)
    lambda2: float = Field(default=1.0, ge=0)
    epochs: int = Field(default=30, ge=1)
    phase1_epochs: int = Field(default=2, ge=1)
    phase2_epochs: int = Field(default=2, ge=1)
    steps_per_epoch: int = Field(default=200, ge=1)
    batch_size: int = Field(default=256, ge=1)
    lr_generator: float = Field(default=1e-4, gt=0)
    lr_discriminator: float = Field(default=2e-4, gt=0)
    # identity warm-up of the state maps before the first epoch
    warmup_steps: int = Field(default=1000, ge=0)
    lr_warmup: float = Field(default=1e-3, gt=0)
    hidden: int = Field(default=64, ge=1)

    invdyn_epochs: int = Field(default=50, ge=1)
    invdyn_batch_size: int = Field(default=256, ge=1)
    invdyn_lr: float = Field(default=1e-3, gt=0)
    heldout_fraction: float = Field(default=0.1, gt=0, lt=1)

    output_root: Path = Path(".")

    @field_validator("methods", "seeds", "sizes", mode="before")
    @classmethod
    def split_comma_list(cls, value):
        if isinstance(value, str):
            return [item.strip() for item in value.split(",") if item.strip()]
        return value

    @field_validator("seeds", "sizes")
    @classmethod
    def check_non_empty(cls, value):
        if not value or any(v < 0 for v in value):
            raise ValueError("must be a non-empty list of non-negative integers")
        return value

    @field_validator("methods")
    @classmethod
    def check_methods(cls, value):
        if not value:
            raise ValueError("must name at least one method")
        return value

    def train_config(self, seed: int, method: Method = None) -> TrainConfig:
        return TrainConfig(
            method=method or self.method,
            lambda1=self.lambda1,
            lambda2=self.lambda2,
            epochs=self.epochs,
            phase1_epochs=self.phase1_epochs,
            phase2_epochs=self.phase2_epochs,
            steps_per_epoch=self.steps_per_epoch,
            batch_size=self.batch_size,
            lr_generator=self.lr_generator,
            lr_discriminator=self.lr_discriminator,
            warmup_steps=self.warmup_steps,
            lr_warmup=self.lr_warmup,
            hidden=self.hidden,
            seed=seed,
        )

    def dynamics_config(self) -> DynamicsConfig:
        return DynamicsConfig(
            epochs=self.invdyn_epochs,
            batch_size=self.invdyn_batch_size,
            lr=self.invdyn_lr,
            hidden=self.hidden,
            heldout_fraction=self.heldout_fraction,
        )

    def resolved_lines(self) -> List[str]:
        """Sorted `key = value` lines, the format config files are read in."""
        lines = []
        for key, value in sorted(self.model_dump().items()):
            if isinstance(value, list):
                value = ",".join(_plain(v) for v in value)
            lines.append(f"{key} = {_plain(value)}")
        return lines


def _plain(value) -> str:
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, float):
        return repr(value)
    return str(value)
