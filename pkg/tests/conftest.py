import numpy as np
import pytest
from click.testing import CliRunner
from sqlmodel import Session, SQLModel, create_engine

from core.datasets import collect_random
from core.envs import make_domain_pair
from core.invdyn import InverseDynamicsModel

# Import models to register them with SQLModel metadata
from models.runs import EvaluationResults, TrainingRuns  # noqa: F401

# Small settings every pipeline test shares; keeps each run to a few seconds
TINY_CONFIG = """\
horizon = 10
n_traj = 3
seeds = 0
episodes = 2
epochs = 1
phase1_epochs = 1
phase2_epochs = 1
steps_per_epoch = 2
warmup_steps = 2
batch_size = 16
hidden = 8
invdyn_epochs = 1
invdyn_batch_size = 16
"""


@pytest.fixture(scope="function")
def db_session(tmp_path):
    """
    Create a fresh registry session for each test.
    """
    test_engine = create_engine(
        f"sqlite:///{tmp_path / 'test_registry.db'}", connect_args={"check_same_thread": False}
    )
    # Create all tables
    SQLModel.metadata.create_all(bind=test_engine)

    with Session(test_engine) as db:
        try:
            yield db
        finally:
            db.rollback()

    # Drop all tables after test
    SQLModel.metadata.drop_all(bind=test_engine)
    test_engine.dispose()


@pytest.fixture
def runner():
    """Click test runner for the command line."""
    return CliRunner()


@pytest.fixture
def tiny_config(tmp_path):
    """A key = value config file with a training budget of a few steps."""
    path = tmp_path / "tiny.conf"
    path.write_text(TINY_CONFIG)
    return path


@pytest.fixture
def identity_pair():
    return make_domain_pair("identity")


@pytest.fixture
def lift_pair():
    return make_domain_pair("linear_lift")


@pytest.fixture
def reacher_pair():
    return make_domain_pair("reacher23")


@pytest.fixture
def lift_datasets(lift_pair):
    """Unpaired source/target datasets of linear_lift, 3 trajectories of 10 steps each."""
    return (
        collect_random(lift_pair.source, 3, 10, 0, "source", lift_pair.name),
        collect_random(lift_pair.target, 3, 10, 0, "target", lift_pair.name),
    )


@pytest.fixture
def frozen_invdyns(lift_pair):
    """Randomly initialized, frozen inverse dynamics models for both lift domains."""
    models = []
    for domain, env in (("source", lift_pair.source), ("target", lift_pair.target)):
        model = InverseDynamicsModel(
            env.spec.state_dim, env.spec.action_dim, rng=np.random.default_rng(7), hidden=8, domain=domain
        )
        model.freeze()
        models.append(model)
    return tuple(models)
