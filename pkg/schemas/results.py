import math
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field, FiniteFloat, model_validator

GAP_MARKER = "missing"


class EpisodeReturn(BaseModel):
    seed: int
    episode: int
    value: FiniteFloat


# Returns of one method on one pair, over seeds and episodes
class TransferResult(BaseModel):
    pair: str
    method: str
    episodes: int = Field(ge=1)
    returns: List[EpisodeReturn]
    clipped_steps: int = 0

    @model_validator(mode="after")
    def check_episode_count(self):
        seeds = {r.seed for r in self.returns}
        if len(self.returns) != self.episodes * max(1, len(seeds)):
            raise ValueError("episode count does not match the returns recorded")
        return self

    @classmethod
    def merge(cls, results: List["TransferResult"]) -> "TransferResult":
        first = results[0]
        returns = sorted((r for res in results for r in res.returns), key=lambda r: (r.seed, r.episode))
        return cls(
            pair=first.pair,
            method=first.method,
            episodes=first.episodes,
            returns=returns,
            clipped_steps=sum(res.clipped_steps for res in results),
        )

    @property
    def values(self) -> List[float]:
        return [r.value for r in sorted(self.returns, key=lambda r: (r.seed, r.episode))]

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def std(self) -> float:
        return float(np.std(self.values))

    def seed_means(self) -> Dict[int, float]:
        by_seed: Dict[int, list] = {}
        for r in self.returns:
            by_seed.setdefault(r.seed, []).append(r.value)
        return {seed: float(np.mean(v)) for seed, v in sorted(by_seed.items())}


# Per-timestep shared-coordinate error of one seed
class AlignmentCurve(BaseModel):
    pair: str
    method: str
    seed: int
    window: int = Field(ge=1)
    running_mean: List[float]
    smoothed: List[float]
    # fingertip proxy on arm pairs rather than a planar position
    extension: bool = False

    @model_validator(mode="after")
    def check_values(self):
        if len(self.running_mean) != len(self.smoothed):
            raise ValueError("curve lengths differ")
        if any(v < 0 or not math.isfinite(v) for v in self.running_mean + self.smoothed):
            raise ValueError("alignment errors must be finite and non-negative")
        return self


# Gap between direct translation F(x_t) and progressive forward-model predictions
class CompoundingCurve(BaseModel):
    pair: str
    method: str
    seed: int
    errors: List[float]


class SuiteCell(BaseModel):
    method: str
    cell: str
    mean: Optional[float] = None
    std: Optional[float] = None
    median: Optional[float] = None
    normalized: Optional[float] = None
    missing_seeds: List[int] = Field(default_factory=list)


class SuiteReport(BaseModel):
    pair: str
    cells: List[SuiteCell]

    @property
    def complete(self) -> bool:
        return all(not c.missing_seeds for c in self.cells)

    def cell(self, method: str) -> SuiteCell:
        return next(c for c in self.cells if c.method == method)


class SizeSweepRow(BaseModel):
    n_traj: int
    cell: str
    mean: float
    std: float
    median: float


class AblationRow(BaseModel):
    seed: int
    ecc: Optional[float] = None
    ecc_nosym: Optional[float] = None

    @property
    def difference(self) -> Optional[float]:
        if self.ecc is None or self.ecc_nosym is None:
            return None
        return self.ecc - self.ecc_nosym


class AblationReport(BaseModel):
    pair: str
    rows: List[AblationRow]
    median_difference: Optional[float] = None
    std_ecc: Optional[float] = None
    std_ecc_nosym: Optional[float] = None
