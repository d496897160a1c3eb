from typing import List

from pydantic import BaseModel, ConfigDict, Field, model_validator


# Static description of one MDP (dimensions, bounds, episode length)
class DomainSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    state_dim: int = Field(ge=1)
    action_dim: int = Field(ge=1)
    action_low: List[float]
    action_high: List[float]
    horizon: int = Field(default=200, ge=1)
    dt: float = Field(default=0.05, gt=0)
    discount: float = Field(default=0.99, ge=0, le=1)
    # state columns that live on the circle; their differences wrap to [-pi, pi)
    angle_dims: List[int] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_bounds(self):
        if len(self.action_low) != self.action_dim or len(self.action_high) != self.action_dim:
            raise ValueError("action bounds must have one entry per action dimension")
        if any(lo >= hi for lo, hi in zip(self.action_low, self.action_high)):
            raise ValueError("every action bound needs lo < hi")
        if any(not 0 <= dim < self.state_dim for dim in self.angle_dims):
            raise ValueError("angle dimensions must index the state vector")
        return self
