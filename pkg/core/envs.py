"""Toy control domains and the domain pairs built from them.

Environments hold no episode state: `step` is a pure function of the state it
is given, so copies can be shared between threads freely.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

from core.errors import UnsupportedMetricError, UsageError
from schemas.domains import DomainSpec

logger = logging.getLogger(__name__)

HORIZON = 200
DT = 0.05
PAIR_NAMES = ("identity", "linear_lift", "reacher23")

# State lift of linear_lift: y = M x. The first two rows copy the position so
# the shared coordinates survive the lift; the rest mixes all six entries.
LIFT_STATE = np.array(
    [
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        [0.5, -0.3, 1.0, 0.2, 0.0, 0.0],
        [0.1, 0.4, -0.2, 0.8, 0.3, 0.0],
        [-0.6, 0.2, 0.3, 0.1, 0.9, -0.4],
        [0.3, 0.3, 0.1, -0.5, 0.2, 1.1],
        [0.2, -0.1, 0.7, 0.4, -0.3, 0.5],
        [-0.4, 0.6, 0.0, 0.3, 0.5, 0.2],
    ]
)
# Action lift of linear_lift: u = N a.
LIFT_ACTION = np.array(
    [
        [1.0, 0.0],
        [0.5, 0.8],
        [-0.3, 0.6],
    ]
)


class EnvState(NamedTuple):
    vector: np.ndarray
    t: int


class StepResult(NamedTuple):
    state: EnvState
    reward: float
    done: bool
    clipped: bool


class Env:
    """Base environment. Subclasses supply `_transition` and a scripted expert."""

    spec: DomainSpec
    has_shared_coords = False

    def reset(self, rng: np.random.Generator) -> EnvState:
        return EnvState(self._initial_vector(rng), 0)

    def step(self, state: EnvState, action) -> StepResult:
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (self.spec.action_dim,):
            raise UsageError(
                f"{self.spec.name}: action shape {action.shape} != ({self.spec.action_dim},)"
            )
        if not np.all(np.isfinite(action)):
            raise UsageError(f"{self.spec.name}: non-finite action {action.tolist()}")
        low, high = self.action_bounds
        bounded = np.clip(action, low, high)
        clipped = bool(np.any(bounded != action))
        next_vector, reward = self._transition(np.asarray(state.vector, dtype=np.float64), bounded)
        t = state.t + 1
        return StepResult(EnvState(next_vector, t), reward, t >= self.spec.horizon, clipped)

    @property
    def action_bounds(self) -> tuple:
        return np.asarray(self.spec.action_low), np.asarray(self.spec.action_high)

    def random_action(self, rng: np.random.Generator) -> np.ndarray:
        low, high = self.action_bounds
        return rng.uniform(low, high)

    def shared_coords(self, vector: np.ndarray) -> np.ndarray:
        raise UnsupportedMetricError(f"{self.spec.name} has no shared coordinates")

    def expert_action(self, vector: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _initial_vector(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def _transition(self, vector: np.ndarray, action: np.ndarray) -> tuple:
        raise NotImplementedError


class PointMass(Env):
    """2-D point mass; state [pos(2), vel(2), goal(2)], action = acceleration."""

    has_shared_coords = True
    kp = 4.0
    kd = 2.0

    def __init__(self, name: str = "point_mass", horizon: int = HORIZON, dt: float = DT):
        self.spec = DomainSpec(
            name=name,
            state_dim=6,
            action_dim=2,
            action_low=[-1.0, -1.0],
            action_high=[1.0, 1.0],
            horizon=horizon,
            dt=dt,
        )

    def _initial_vector(self, rng):
        pos = rng.uniform(-1.0, 1.0, size=2)
        goal = rng.uniform(-1.0, 1.0, size=2)
        return np.concatenate([pos, np.zeros(2), goal])

    def _transition(self, vector, action):
        pos, vel, goal = vector[0:2], vector[2:4], vector[4:6]
        vel_next = np.clip(vel + self.spec.dt * action, -1.0, 1.0)
        pos_next = pos + self.spec.dt * vel_next
        reward = -float(np.linalg.norm(pos_next - goal))
        return np.concatenate([pos_next, vel_next, goal]), reward

    def expert_action(self, vector):
        vector = np.asarray(vector, dtype=np.float64)
        pos, vel, goal = vector[0:2], vector[2:4], vector[4:6]
        return np.clip(self.kp * (goal - pos) - self.kd * vel, -1.0, 1.0)

    def shared_coords(self, vector):
        return np.asarray(vector, dtype=np.float64)[0:2].copy()


class LiftedPointMass(Env):
    """A point mass observed through y = M x and actuated through a = N⁺ u."""

    has_shared_coords = True

    def __init__(self, base: PointMass, state_lift: np.ndarray, action_lift: np.ndarray, name: str = "lifted_point_mass"):
        self.base = base
        self.state_lift = np.asarray(state_lift, dtype=np.float64)
        self.action_lift = np.asarray(action_lift, dtype=np.float64)
        self.state_unlift = np.linalg.pinv(self.state_lift)
        self.action_unlift = np.linalg.pinv(self.action_lift)
        bound = np.abs(self.action_lift).sum(axis=1)
        self.spec = DomainSpec(
            name=name,
            state_dim=self.state_lift.shape[0],
            action_dim=self.action_lift.shape[0],
            action_low=(-bound).tolist(),
            action_high=bound.tolist(),
            horizon=base.spec.horizon,
            dt=base.spec.dt,
        )

    def random_action(self, rng):
        # only N a reaches the dynamics; the rest of the box is the null space of N⁺
        return self.action_lift @ self.base.random_action(rng)

    def _initial_vector(self, rng):
        return self.state_lift @ self.base._initial_vector(rng)

    def _transition(self, vector, action):
        x = self.state_unlift @ vector
        a = np.clip(self.action_unlift @ action, -1.0, 1.0)
        x_next, reward = self.base._transition(x, a)
        return self.state_lift @ x_next, reward

    def expert_action(self, vector):
        return self.action_lift @ self.base.expert_action(self.state_unlift @ np.asarray(vector))

    def shared_coords(self, vector):
        return np.asarray(vector, dtype=np.float64)[0:2].copy()


class Reacher(Env):
    """Planar n-link arm with damped, torque-limited joints.

    State: joint angles, joint velocities, goal xy, fingertip xy, and (when
    `with_heading`) the fingertip heading.
    """

    has_shared_coords = True
    gain = 4.0
    damping = 2.0
    max_velocity = 10.0
    kp = 8.0
    kd = 1.0

    def __init__(self, link_lengths: Sequence[float], with_heading: bool = False, name: str = "reacher", horizon: int = HORIZON, dt: float = DT):
        self.links = np.asarray(link_lengths, dtype=np.float64)
        self.n = len(self.links)
        self.with_heading = with_heading
        self.reach = float(self.links.sum())
        self.spec = DomainSpec(
            name=name,
            state_dim=2 * self.n + 4 + int(with_heading),
            action_dim=self.n,
            action_low=[-1.0] * self.n,
            action_high=[1.0] * self.n,
            horizon=horizon,
            dt=dt,
            angle_dims=list(range(self.n)) + ([2 * self.n + 4] if with_heading else []),
        )

    def fingertip(self, angles: np.ndarray) -> np.ndarray:
        phi = np.cumsum(angles)
        return np.array([np.sum(self.links * np.cos(phi)), np.sum(self.links * np.sin(phi))])

    def jacobian(self, angles: np.ndarray) -> np.ndarray:
        phi = np.cumsum(angles)
        dx = -self.links * np.sin(phi)
        dy = self.links * np.cos(phi)
        # joint j moves every link from j outwards
        return np.stack([np.cumsum(dx[::-1])[::-1], np.cumsum(dy[::-1])[::-1]])

    def _compose(self, angles, velocities, goal):
        parts = [angles, velocities, goal, self.fingertip(angles)]
        if self.with_heading:
            parts.append([wrap_angle(np.sum(angles))])
        return np.concatenate(parts)

    def _split(self, vector):
        n = self.n
        return vector[0:n], vector[n : 2 * n], vector[2 * n : 2 * n + 2]

    def _initial_vector(self, rng):
        angles = rng.uniform(-np.pi, np.pi, size=self.n)
        radius = rng.uniform(0.2, 0.9) * self.reach
        bearing = rng.uniform(-np.pi, np.pi)
        goal = radius * np.array([np.cos(bearing), np.sin(bearing)])
        return self._compose(angles, np.zeros(self.n), goal)

    def _transition(self, vector, action):
        angles, velocities, goal = self._split(vector)
        acceleration = self.gain * action - self.damping * velocities
        velocities_next = np.clip(velocities + self.spec.dt * acceleration, -self.max_velocity, self.max_velocity)
        angles_next = wrap_angle(angles + self.spec.dt * velocities_next)
        vector_next = self._compose(angles_next, velocities_next, goal)
        reward = -float(np.linalg.norm(self.fingertip(angles_next) - goal))
        return vector_next, reward

    def expert_action(self, vector):
        angles, velocities, goal = self._split(np.asarray(vector, dtype=np.float64))
        error = goal - self.fingertip(angles)
        torque = self.kp * self.jacobian(angles).T @ error - self.kd * velocities
        return np.clip(torque, -1.0, 1.0)

    def shared_coords(self, vector):
        start = 2 * self.n + 2
        return np.asarray(vector, dtype=np.float64)[start : start + 2].copy()


def wrap_angle(angle):
    return (np.asarray(angle) + np.pi) % (2.0 * np.pi) - np.pi


def angle_delta(before, after, angle_dims: Sequence[int] = ()) -> np.ndarray:
    """`after - before` with the angle columns taken the short way round the circle."""
    delta = np.asarray(after, dtype=np.float64) - np.asarray(before, dtype=np.float64)
    if len(angle_dims):
        delta[..., list(angle_dims)] = wrap_angle(delta[..., list(angle_dims)])
    return delta


@dataclass(frozen=True)
class GroundTruth:
    """Exact morphism between the two domains: F*(x) = M x, H*(x, a) = N a."""

    state_lift: np.ndarray
    action_lift: np.ndarray

    @property
    def state_unlift(self) -> np.ndarray:
        return np.linalg.pinv(self.state_lift)

    @property
    def action_unlift(self) -> np.ndarray:
        return np.linalg.pinv(self.action_lift)

    def state_forward(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) @ self.state_lift.T

    def state_backward(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y) @ self.state_unlift.T

    def action_forward(self, x: np.ndarray, a: np.ndarray) -> np.ndarray:
        return np.asarray(a) @ self.action_lift.T

    def action_backward(self, y: np.ndarray, u: np.ndarray) -> np.ndarray:
        return np.asarray(u) @ self.action_unlift.T


@dataclass(frozen=True)
class DomainPair:
    name: str
    source: Env
    target: Env
    ground_truth: Optional[GroundTruth] = None

    @property
    def has_shared_coords(self) -> bool:
        return self.source.has_shared_coords and self.target.has_shared_coords

    def env(self, domain: str) -> Env:
        if domain == "source":
            return self.source
        if domain == "target":
            return self.target
        raise UsageError(f"unknown domain {domain!r}; expected source or target")


def make_domain_pair(name: str, seed: int = 0) -> DomainPair:
    """Build one of the catalogued pairs.

    All pairs are fixed constructions; `seed` only affects the environments'
    resets, which are seeded by the caller's generators.
    """
    if name == "identity":
        source = PointMass(name="point_mass")
        target = PointMass(name="point_mass")
        return DomainPair(name, source, target, GroundTruth(np.eye(6), np.eye(2)))
    if name == "linear_lift":
        source = PointMass(name="point_mass")
        target = LiftedPointMass(source, LIFT_STATE, LIFT_ACTION)
        return DomainPair(name, source, target, GroundTruth(LIFT_STATE.copy(), LIFT_ACTION.copy()))
    if name == "reacher23":
        source = Reacher((0.5, 0.5), name="reacher2")
        target = Reacher((0.4, 0.3, 0.3), with_heading=True, name="reacher3")
        return DomainPair(name, source, target)
    raise UsageError(f"unknown domain pair {name!r}; choose from {', '.join(PAIR_NAMES)}")


def export_ground_truth(pair: DomainPair, directory) -> list:
    """Write M, N and their pseudo-inverses as full-precision text files."""
    if pair.ground_truth is None:
        raise UnsupportedMetricError(f"{pair.name} has no ground-truth morphism")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for stem, matrix in (
        ("state_lift", pair.ground_truth.state_lift),
        ("state_unlift", pair.ground_truth.state_unlift),
        ("action_lift", pair.ground_truth.action_lift),
        ("action_unlift", pair.ground_truth.action_unlift),
    ):
        path = directory / f"{stem}.txt"
        np.savetxt(path, matrix, fmt="%.17g")
        written.append(path)
    logger.debug(f"Exported ground truth of {pair.name} to {directory}")
    return written


def rollout_return(env: Env, policy, rng: np.random.Generator, horizon: Optional[int] = None) -> float:
    """Return of one episode driven by `policy(vector) -> action`."""
    horizon = horizon or env.spec.horizon
    state = env.reset(rng)
    total = 0.0
    for _ in range(horizon):
        result = env.step(state, policy(state.vector))
        total += result.reward
        state = result.state
        if result.done:
            break
    return total
