from typing import Optional

from sqlmodel import Field, SQLModel


class TrainingRuns(SQLModel, table=True):
    __tablename__ = "TrainingRuns"

    RunId: Optional[int] = Field(default=None, primary_key=True, index=True)
    Pair: str = Field(max_length=32, index=True)
    Method: str = Field(max_length=16, index=True)
    Seed: int = Field(index=True)
    TrajectoryCount: int
    SnapshotPath: str = Field(max_length=512)
    PhaseLogPath: Optional[str] = Field(default=None, max_length=512)
    ConfigDigest: str = Field(max_length=64)
    Status: str = Field(default="completed", max_length=16)
    FinalLoss: Optional[float] = None


class EvaluationResults(SQLModel, table=True):
    __tablename__ = "EvaluationResults"

    ResultId: Optional[int] = Field(default=None, primary_key=True, index=True)
    Pair: str = Field(max_length=32, index=True)
    Method: str = Field(max_length=16, index=True)
    Seed: int
    Episode: int
    Return: float
