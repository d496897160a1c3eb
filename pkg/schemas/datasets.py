from typing import List, Literal

from pydantic import BaseModel, ConfigDict, Field, FiniteFloat

Domain = Literal["source", "target"]


# First line of a dataset file: provenance of everything below it
class DatasetHeader(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["header"] = "header"
    pair: str
    domain: Domain
    env: str
    policy: Literal["random"] = "random"
    seed: int = Field(ge=0)
    n_traj: int = Field(ge=1)
    horizon: int = Field(ge=1)
    state_dim: int = Field(ge=1)
    action_dim: int = Field(ge=1)


# One transition per line; no field links it to the other domain
class TransitionRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    domain: Domain
    traj_id: int = Field(ge=0)
    t: int = Field(ge=0)
    state: List[FiniteFloat]
    action: List[FiniteFloat]
    next_state: List[FiniteFloat]
