"""Unpaired transition datasets: collection, sampling and JSON-lines storage."""

import json
import logging
from pathlib import Path
from typing import Iterator, NamedTuple, Tuple

import numpy as np
from pydantic import ValidationError

from core.envs import Env
from core.errors import DimensionError, MissingInputError, ParseError, UsageError
from core.seeding import derive_rng
from schemas.datasets import DatasetHeader, TransitionRecord

logger = logging.getLogger(__name__)


class Transition(NamedTuple):
    state: np.ndarray
    action: np.ndarray
    next_state: np.ndarray


class Batch(NamedTuple):
    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray

    def __len__(self) -> int:
        return self.states.shape[0]


class Dataset:
    """Transitions of one domain, stored row-wise and ordered by (traj_id, t)."""

    def __init__(self, header: DatasetHeader, states, actions, next_states, traj_ids, steps):
        self.header = header
        self.states = np.asarray(states, dtype=np.float64).reshape(-1, header.state_dim)
        self.actions = np.asarray(actions, dtype=np.float64).reshape(-1, header.action_dim)
        self.next_states = np.asarray(next_states, dtype=np.float64).reshape(-1, header.state_dim)
        self.traj_ids = np.asarray(traj_ids, dtype=np.int64)
        self.steps = np.asarray(steps, dtype=np.int64)
        n = self.states.shape[0]
        if not (self.actions.shape[0] == self.next_states.shape[0] == self.traj_ids.shape[0] == self.steps.shape[0] == n):
            raise DimensionError("dataset columns have different lengths")

    def __len__(self) -> int:
        return self.states.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.header == other.header and all(
            np.array_equal(a, b)
            for a, b in zip(self._columns(), other._columns())
        )

    def _columns(self):
        return (self.states, self.actions, self.next_states, self.traj_ids, self.steps)

    @property
    def domain(self) -> str:
        return self.header.domain

    def transition(self, index: int) -> Transition:
        return Transition(self.states[index], self.actions[index], self.next_states[index])

    def trajectories(self) -> Iterator[list]:
        for traj_id in np.unique(self.traj_ids):
            rows = np.flatnonzero(self.traj_ids == traj_id)
            yield [self.transition(i) for i in rows]

    def select_trajectories(self, traj_ids) -> "Dataset":
        mask = np.isin(self.traj_ids, np.asarray(list(traj_ids), dtype=np.int64))
        kept = np.unique(self.traj_ids[mask])
        if kept.size == 0:
            raise UsageError("selection contains no trajectories")
        header = self.header.model_copy(update={"n_traj": int(kept.size)})
        return Dataset(
            header,
            self.states[mask],
            self.actions[mask],
            self.next_states[mask],
            self.traj_ids[mask],
            self.steps[mask],
        )

    def head(self, n_traj: int) -> "Dataset":
        """The first `n_traj` trajectories; equal to a fresh collection of that size."""
        if n_traj < 1 or n_traj > self.header.n_traj:
            raise UsageError(f"cannot take {n_traj} of {self.header.n_traj} trajectories")
        return self.select_trajectories(range(n_traj))


def collect_random(env: Env, n_traj: int, horizon: int, seed: int, domain: str, pair: str) -> Dataset:
    """Roll out a uniform random policy; trajectory i uses its own stream (seed, i)."""
    if n_traj < 1:
        raise UsageError(f"n_traj must be at least 1, got {n_traj}")
    if horizon < 1 or horizon > env.spec.horizon:
        raise UsageError(f"horizon must lie in [1, {env.spec.horizon}], got {horizon}")
    header = DatasetHeader(
        pair=pair,
        domain=domain,
        env=env.spec.name,
        seed=seed,
        n_traj=n_traj,
        horizon=horizon,
        state_dim=env.spec.state_dim,
        action_dim=env.spec.action_dim,
    )
    states, actions, next_states, traj_ids, steps = [], [], [], [], []
    for traj_id in range(n_traj):
        rng = derive_rng(seed, f"collect/{pair}/{domain}", traj_id)
        state = env.reset(rng)
        for t in range(horizon):
            action = env.random_action(rng)
            result = env.step(state, action)
            states.append(state.vector)
            actions.append(action)
            next_states.append(result.state.vector)
            traj_ids.append(traj_id)
            steps.append(t)
            state = result.state
    logger.info(f"📦 Collected {len(states)} {domain} transitions on {env.spec.name} ({n_traj} trajectories)")
    return Dataset(header, states, actions, next_states, traj_ids, steps)


def sample_batch(dataset: Dataset, batch_size: int, rng: np.random.Generator) -> Batch:
    """Uniform sampling with replacement."""
    if batch_size < 1:
        raise UsageError(f"batch_size must be at least 1, got {batch_size}")
    if len(dataset) == 0:
        raise UsageError("cannot sample from an empty dataset")
    index = rng.integers(0, len(dataset), size=batch_size)
    return Batch(dataset.states[index], dataset.actions[index], dataset.next_states[index])


def full_batch(dataset: Dataset) -> Batch:
    return Batch(dataset.states, dataset.actions, dataset.next_states)


def split_by_trajectory(dataset: Dataset, heldout_fraction: float = 0.1) -> Tuple[Dataset, Dataset]:
    """Hold out the last trajectories. A single trajectory serves as both splits."""
    traj = np.unique(dataset.traj_ids)
    if traj.size < 2:
        return dataset, dataset
    n_heldout = min(traj.size - 1, max(1, int(round(heldout_fraction * traj.size))))
    return dataset.select_trajectories(traj[:-n_heldout]), dataset.select_trajectories(traj[-n_heldout:])


# ----------------------------
# 📌 JSON-lines storage
# ----------------------------
def save_dataset(dataset: Dataset, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        handle.write(dataset.header.model_dump_json() + "\n")
        for i in range(len(dataset)):
            record = TransitionRecord(
                domain=dataset.domain,
                traj_id=int(dataset.traj_ids[i]),
                t=int(dataset.steps[i]),
                state=dataset.states[i].tolist(),
                action=dataset.actions[i].tolist(),
                next_state=dataset.next_states[i].tolist(),
            )
            handle.write(record.model_dump_json() + "\n")
    logger.debug(f"Wrote {len(dataset)} transitions to {path}")
    return path


def load_dataset(path) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"dataset {path} does not exist")
    with path.open("r", encoding="utf-8") as handle:
        header = _parse_line(handle.readline(), DatasetHeader, 1)
        states, actions, next_states, traj_ids, steps = [], [], [], [], []
        for line_number, line in enumerate(handle, start=2):
            if not line.strip():
                continue
            record = _parse_line(line, TransitionRecord, line_number)
            if record.domain != header.domain:
                raise ParseError(
                    f"record domain {record.domain!r} contradicts header domain {header.domain!r}",
                    line_number=line_number,
                )
            if (
                len(record.state) != header.state_dim
                or len(record.next_state) != header.state_dim
                or len(record.action) != header.action_dim
            ):
                raise DimensionError(
                    f"line {line_number}: dimensions ({len(record.state)}, {len(record.action)}) "
                    f"contradict header ({header.state_dim}, {header.action_dim})"
                )
            states.append(record.state)
            actions.append(record.action)
            next_states.append(record.next_state)
            traj_ids.append(record.traj_id)
            steps.append(record.t)
    return Dataset(header, states, actions, next_states, traj_ids, steps)


def _parse_line(line: str, model, line_number: int):
    if not line.strip():
        raise ParseError("unexpected empty line", line_number=line_number)
    try:
        return model.model_validate(json.loads(line))
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", line_number=line_number)
    except ValidationError as e:
        raise ParseError(f"invalid {model.__name__}: {e.errors()[0]['msg']}", line_number=line_number)
