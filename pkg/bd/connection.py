from functools import lru_cache
from pathlib import Path

from sqlalchemy import Engine
from sqlalchemy.orm import sessionmaker
from sqlmodel import Session, SQLModel, create_engine

from core.config import settings

# Import all models to ensure they are registered with SQLModel
from models.runs import EvaluationResults, TrainingRuns  # noqa: F401


@lru_cache(maxsize=None)
def get_engine(database_url: str) -> Engine:
    """One engine per registry URL."""
    connect_args = {"check_same_thread": False} if database_url.startswith("sqlite") else {}
    return create_engine(database_url, connect_args=connect_args)


def engine_for(output_root) -> Engine:
    root = Path(output_root)
    if not settings.DATABASE_URL:
        root.mkdir(parents=True, exist_ok=True)
    return get_engine(settings.registry_url(root))


def session_factory(engine: Engine) -> sessionmaker:
    return sessionmaker(bind=engine, class_=Session)


# Function to create tables
def create_db_and_tables(engine: Engine) -> None:
    SQLModel.metadata.create_all(engine)

