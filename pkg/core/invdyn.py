"""Per-domain inverse dynamics (s, s') -> action distribution, and the forward
dynamics model (s, a) -> s' used by the dynamics-consistency baseline.

Both are trained once per dataset and then frozen. Frozen models still pass
gradients through to their inputs, which is what lets the effect losses reach
the state maps.
"""

import logging
import math
from typing import NamedTuple, Optional, Sequence

import numpy as np

from core.datasets import Batch, Dataset, split_by_trajectory
from core.diffcore import (
    Adam,
    DiagGaussian,
    GaussianHead,
    Mlp,
    Standardizer,
    Tensor,
    as_tensor,
    concat,
    l1_rows,
    load_snapshot,
    mean,
    no_grad,
    reparam_sample,
    save_snapshot,
)
from core.envs import angle_delta, wrap_angle
from core.errors import DimensionError, TrainingError
from core.seeding import derive_rng
from schemas.config import DynamicsConfig

logger = logging.getLogger(__name__)

EVAL_CHUNK = 8192


def wrap_columns(x: Tensor, angle_dims: Sequence[int]) -> Tensor:
    """Wrap the angle columns of `x` into [-pi, pi). The wrap is a constant shift, so gradients pass unchanged."""
    if not angle_dims:
        return x
    dims = list(angle_dims)
    offset = np.zeros_like(x.data)
    offset[..., dims] = wrap_angle(x.data[..., dims]) - x.data[..., dims]
    return x + offset


def state_delta(s: Tensor, s_next: Tensor, angle_dims: Sequence[int] = ()) -> Tensor:
    return wrap_columns(s_next - s, angle_dims)


class CurveRow(NamedTuple):
    epoch: int
    train_l1: float
    heldout_l1: float


class InverseDynamicsModel:
    """Gaussian over actions given (s, s'); input is [norm(s), norm(s' - s)]."""

    def __init__(
        self,
        state_dim: int,
        action_dim: int,
        rng: Optional[np.random.Generator] = None,
        hidden: int = 64,
        domain: str = "target",
        zero_init: bool = False,
        state_norm: Optional[Standardizer] = None,
        delta_norm: Optional[Standardizer] = None,
        angle_dims: Sequence[int] = (),
    ):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.domain = domain
        self.angle_dims = tuple(angle_dims)
        self.network = Mlp(
            [2 * state_dim, hidden, hidden, 2 * action_dim],
            rng=rng,
            name=f"invdyn_{domain}",
            zero_init=zero_init,
        )
        self.head = GaussianHead(self.network)
        self.state_norm = state_norm or Standardizer.identity(state_dim, "state_norm")
        self.delta_norm = delta_norm or Standardizer.identity(state_dim, "delta_norm")

    def __call__(self, s, s_next) -> DiagGaussian:
        return invdyn_predict(self, s, s_next)

    @property
    def frozen(self) -> bool:
        return self.network.frozen

    def freeze(self) -> None:
        self.network.freeze()

    def parameters(self) -> list:
        return self.network.parameters()

    def state_bytes(self) -> bytes:
        return self.network.state_bytes()

    def snapshot_modules(self) -> dict:
        return {"network": self.network, "state_norm": self.state_norm, "delta_norm": self.delta_norm}


def invdyn_predict(model: InverseDynamicsModel, s, s_next) -> DiagGaussian:
    s, s_next = as_tensor(s), as_tensor(s_next)
    if s.shape[-1] != model.state_dim or s_next.shape != s.shape:
        raise DimensionError(
            f"inverse dynamics of the {model.domain} domain expects states of dimension "
            f"{model.state_dim}, got {s.shape} and {s_next.shape}"
        )
    delta = state_delta(s, s_next, model.angle_dims)
    features = concat([model.state_norm(s), model.delta_norm(delta)], axis=-1)
    return model.head(features)


class ForwardDynamicsModel:
    """Point estimate of s' given (s, a), predicted as a standardized state delta."""

    def __init__(
        self,
        state_dim: int,
        action_dim: int,
        rng: Optional[np.random.Generator] = None,
        hidden: int = 64,
        domain: str = "target",
        zero_init: bool = False,
        state_norm: Optional[Standardizer] = None,
        action_norm: Optional[Standardizer] = None,
        delta_norm: Optional[Standardizer] = None,
        angle_dims: Sequence[int] = (),
    ):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.domain = domain
        self.angle_dims = tuple(angle_dims)
        self.network = Mlp(
            [state_dim + action_dim, hidden, hidden, state_dim],
            rng=rng,
            name=f"forward_{domain}",
            zero_init=zero_init,
        )
        self.state_norm = state_norm or Standardizer.identity(state_dim, "state_norm")
        self.action_norm = action_norm or Standardizer.identity(action_dim, "action_norm")
        self.delta_norm = delta_norm or Standardizer.identity(state_dim, "delta_norm")

    def normalized_delta(self, s, a) -> Tensor:
        s, a = as_tensor(s), as_tensor(a)
        if s.shape[-1] != self.state_dim or a.shape[-1] != self.action_dim:
            raise DimensionError(
                f"forward dynamics expects ({self.state_dim}, {self.action_dim}), got {s.shape} and {a.shape}"
            )
        return self.network(concat([self.state_norm(s), self.action_norm(a)], axis=-1))

    def __call__(self, s, a) -> Tensor:
        return wrap_columns(as_tensor(s) + self.delta_norm.inverse(self.normalized_delta(s, a)), self.angle_dims)

    @property
    def frozen(self) -> bool:
        return self.network.frozen

    def freeze(self) -> None:
        self.network.freeze()

    def parameters(self) -> list:
        return self.network.parameters()

    def state_bytes(self) -> bytes:
        return self.network.state_bytes()

    def snapshot_modules(self) -> dict:
        return {
            "network": self.network,
            "state_norm": self.state_norm,
            "action_norm": self.action_norm,
            "delta_norm": self.delta_norm,
        }


# ----------------------------
# Losses and metrics
# ----------------------------
def reparam_l1_loss(model: InverseDynamicsModel, batch: Batch, noise: np.ndarray) -> Tensor:
    """Batch mean of ‖a - (μ + ε σ)‖₁ with the given ε."""
    g = model(Tensor(batch.states), Tensor(batch.next_states))
    sample = reparam_sample(g, noise)
    return mean(l1_rows(Tensor(batch.actions) - sample))


def forward_l1_loss(model: ForwardDynamicsModel, batch: Batch) -> Tensor:
    target = model.delta_norm(Tensor(angle_delta(batch.states, batch.next_states, model.angle_dims)))
    return mean(l1_rows(model.normalized_delta(Tensor(batch.states), Tensor(batch.actions)) - target))


def inverse_heldout_l1(model: InverseDynamicsModel, dataset: Dataset) -> float:
    """Per-dimension mean |a - μ(s, s')| over the dataset."""
    total = 0.0
    with no_grad():
        for start in range(0, len(dataset), EVAL_CHUNK):
            stop = start + EVAL_CHUNK
            g = model(dataset.states[start:stop], dataset.next_states[start:stop])
            total += float(np.abs(dataset.actions[start:stop] - g.mean.data).sum())
    return total / (len(dataset) * model.action_dim)


def forward_heldout_l1(model: ForwardDynamicsModel, dataset: Dataset) -> float:
    """Per-dimension mean |s' - ŝ'| over the dataset, in raw state units."""
    total = 0.0
    with no_grad():
        for start in range(0, len(dataset), EVAL_CHUNK):
            stop = start + EVAL_CHUNK
            predicted = model(dataset.states[start:stop], dataset.actions[start:stop])
            total += float(np.abs(angle_delta(predicted.data, dataset.next_states[start:stop], model.angle_dims)).sum())
    return total / (len(dataset) * model.state_dim)


# ----------------------------
# Training
# ----------------------------
class DynamicsFit(NamedTuple):
    model: object
    curve: list
    heldout_l1: float


def fit_state_norms(dataset: Dataset, angle_dims: Sequence[int] = ()) -> tuple:
    return (
        Standardizer.fit(dataset.states, "state_norm"),
        Standardizer.fit(angle_delta(dataset.states, dataset.next_states, angle_dims), "delta_norm"),
    )


def train_inverse_dynamics(
    dataset: Dataset, config: DynamicsConfig, seed: Optional[int] = None, angle_dims: Sequence[int] = ()
) -> DynamicsFit:
    """Fit T_inv on one domain's data, report the curve, then freeze the model."""
    seed = dataset.header.seed if seed is None else seed
    purpose = f"invdyn/{dataset.header.pair}/{dataset.domain}"
    train, heldout = split_by_trajectory(dataset, config.heldout_fraction)
    state_norm, delta_norm = fit_state_norms(train, angle_dims)
    model = InverseDynamicsModel(
        dataset.header.state_dim,
        dataset.header.action_dim,
        rng=derive_rng(seed, purpose + "/init"),
        hidden=config.hidden,
        domain=dataset.domain,
        state_norm=state_norm,
        delta_norm=delta_norm,
        angle_dims=angle_dims,
    )
    noise_rng = derive_rng(seed, purpose + "/noise")

    def loss_fn(batch: Batch) -> Tensor:
        return reparam_l1_loss(model, batch, noise_rng.standard_normal(batch.actions.shape))

    curve = _fit(
        model,
        loss_fn,
        train,
        heldout,
        lambda ds: inverse_heldout_l1(model, ds),
        config,
        derive_rng(seed, purpose + "/batch"),
        label=f"inverse dynamics ({dataset.domain})",
    )
    model.freeze()
    return DynamicsFit(model, curve, curve[-1].heldout_l1)


def train_forward_dynamics(
    dataset: Dataset, config: DynamicsConfig, seed: Optional[int] = None, angle_dims: Sequence[int] = ()
) -> DynamicsFit:
    """Fit T(s, a) -> s' with an L1 loss on standardized deltas, then freeze it."""
    seed = dataset.header.seed if seed is None else seed
    purpose = f"forward/{dataset.header.pair}/{dataset.domain}"
    train, heldout = split_by_trajectory(dataset, config.heldout_fraction)
    state_norm, delta_norm = fit_state_norms(train, angle_dims)
    model = ForwardDynamicsModel(
        dataset.header.state_dim,
        dataset.header.action_dim,
        rng=derive_rng(seed, purpose + "/init"),
        hidden=config.hidden,
        domain=dataset.domain,
        state_norm=state_norm,
        action_norm=Standardizer.fit(train.actions, "action_norm"),
        delta_norm=delta_norm,
        angle_dims=angle_dims,
    )
    curve = _fit(
        model,
        lambda batch: forward_l1_loss(model, batch),
        train,
        heldout,
        lambda ds: forward_heldout_l1(model, ds),
        config,
        derive_rng(seed, purpose + "/batch"),
        label=f"forward dynamics ({dataset.domain})",
    )
    model.freeze()
    return DynamicsFit(model, curve, curve[-1].heldout_l1)


def _fit(model, loss_fn, train: Dataset, heldout: Dataset, metric, config: DynamicsConfig, rng, label: str) -> list:
    optimizer = Adam(model.parameters(), lr=config.lr)
    curve = [CurveRow(0, metric(train), metric(heldout))]
    steps = math.ceil(len(train) / config.batch_size)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train))
        for step in range(steps):
            index = order[step * config.batch_size : (step + 1) * config.batch_size]
            loss = loss_fn(Batch(train.states[index], train.actions[index], train.next_states[index]))
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(
                    f"{label} loss became non-finite at epoch {epoch}, step {step}",
                    diagnostics={"epoch": epoch, "step": step, "loss": value},
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        row = CurveRow(epoch, metric(train), metric(heldout))
        curve.append(row)
        logger.info(f"🧠 {label} epoch {epoch}/{config.epochs}: train L1 {row.train_l1:.5f}, held-out L1 {row.heldout_l1:.5f}")
    return curve


# ----------------------------
# Snapshots
# ----------------------------
def save_dynamics(model, path) -> None:
    save_snapshot(path, model.snapshot_modules())


def load_inverse_dynamics(
    path, state_dim: int, action_dim: int, hidden: int = 64, domain: str = "target", angle_dims: Sequence[int] = ()
) -> InverseDynamicsModel:
    model = InverseDynamicsModel(state_dim, action_dim, hidden=hidden, domain=domain, zero_init=True, angle_dims=angle_dims)
    load_snapshot(path, model.snapshot_modules())
    model.freeze()
    return model


def load_forward_dynamics(
    path, state_dim: int, action_dim: int, hidden: int = 64, domain: str = "target", angle_dims: Sequence[int] = ()
) -> ForwardDynamicsModel:
    model = ForwardDynamicsModel(state_dim, action_dim, hidden=hidden, domain=domain, zero_init=True, angle_dims=angle_dims)
    load_snapshot(path, model.snapshot_modules())
    model.freeze()
    return model
