"""Cross-domain mapping functions and the effect-cycle-consistency trainer.

F: X -> Y and G: Y -> X translate states; H: (x, a) -> Gaussian over U and
P: (y, u) -> Gaussian over A translate actions. D_X and D_Y score states as
real (logit > 0) or translated. After a short warm-up that pulls F and G
toward the padded identity, training alternates two phases per outer epoch:
an adversarial + cycle phase on F, G and the discriminators with the action
maps frozen, then an effect phase on F, G, H, P with the discriminators
frozen.
"""

import csv
import logging
import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, NamedTuple, Optional

import numpy as np

from core.datasets import Batch, Dataset, sample_batch
from core.diffcore import (
    Adam,
    DiagGaussian,
    GaussianHead,
    Mlp,
    Standardizer,
    Tensor,
    as_tensor,
    bce_logits,
    concat,
    gaussian_kl,
    l1_rows,
    linear,
    load_snapshot,
    mean,
    no_grad,
    save_snapshot,
)
from core.envs import DomainPair
from core.errors import ConfigurationError, DimensionError, NumericalError, UsageError
from core.seeding import derive_rng
from schemas.config import Method, TrainConfig

logger = logging.getLogger(__name__)


# ----------------------------
# Map types
# ----------------------------
class _Module:
    """Shared freezing/snapshot plumbing for maps built on one or more Mlps."""

    networks: tuple = ()

    def parameters(self) -> list:
        return [p for net in self.networks for p in net.parameters()]

    @property
    def frozen(self) -> bool:
        return all(p.frozen for p in self.parameters())

    def freeze(self) -> None:
        for p in self.parameters():
            p.freeze()

    def unfreeze(self) -> None:
        for p in self.parameters():
            p.unfreeze()

    def state_bytes(self) -> bytes:
        return b"".join(p.data.tobytes() for p in self.parameters())

    def snapshot_modules(self) -> dict:
        return {}


class MlpStateMap(_Module):
    """Learned state translation, trained in standardized coordinates."""

    def __init__(self, in_dim: int, out_dim: int, rng, hidden: int = 64, name: str = "F",
                 in_norm: Optional[Standardizer] = None, out_norm: Optional[Standardizer] = None):
        self.in_dim, self.out_dim = in_dim, out_dim
        self.network = Mlp([in_dim, hidden, hidden, out_dim], rng=rng, name=name)
        self.networks = (self.network,)
        self.in_norm = in_norm or Standardizer.identity(in_dim, "in_norm")
        self.out_norm = out_norm or Standardizer.identity(out_dim, "out_norm")

    def __call__(self, x) -> Tensor:
        return self.out_norm.inverse(self.network(self.in_norm(as_tensor(x))))

    def snapshot_modules(self) -> dict:
        return {"network": self.network, "in_norm": self.in_norm, "out_norm": self.out_norm}


class LinearStateMap(_Module):
    """Fixed x -> M x."""

    def __init__(self, matrix):
        self.matrix = Tensor(np.asarray(matrix, dtype=np.float64))
        self.out_dim, self.in_dim = self.matrix.shape
        self.bias = Tensor(np.zeros(self.out_dim))

    def __call__(self, x) -> Tensor:
        return linear(as_tensor(x), self.matrix, self.bias)


class IdentityMap(_Module):
    def __init__(self, dim: int):
        self.in_dim = self.out_dim = dim

    def __call__(self, x) -> Tensor:
        x = as_tensor(x)
        if x.shape[-1] != self.in_dim:
            raise ConfigurationError(f"identity map of dimension {self.in_dim} got {x.shape}")
        return x


class MlpActionMap(_Module):
    """Learned (state, action) -> Gaussian over the other domain's actions."""

    def __init__(self, state_dim: int, action_dim: int, out_dim: int, rng, hidden: int = 64, name: str = "H",
                 state_norm: Optional[Standardizer] = None, action_norm: Optional[Standardizer] = None):
        self.state_dim, self.action_dim, self.out_dim = state_dim, action_dim, out_dim
        self.network = Mlp([state_dim + action_dim, hidden, hidden, 2 * out_dim], rng=rng, name=name)
        self.networks = (self.network,)
        self.head = GaussianHead(self.network)
        self.state_norm = state_norm or Standardizer.identity(state_dim, "state_norm")
        self.action_norm = action_norm or Standardizer.identity(action_dim, "action_norm")

    def __call__(self, state, action) -> DiagGaussian:
        return self.head(concat([self.state_norm(as_tensor(state)), self.action_norm(as_tensor(action))], axis=-1))

    def snapshot_modules(self) -> dict:
        return {"network": self.network, "state_norm": self.state_norm, "action_norm": self.action_norm}


class LinearActionMap(_Module):
    """Fixed (x, a) -> N(N a, e^{2·log_std}); the state input is ignored."""

    def __init__(self, matrix, log_std: float = -5.0):
        self.matrix = Tensor(np.asarray(matrix, dtype=np.float64))
        self.out_dim, self.action_dim = self.matrix.shape
        self.log_std = log_std

    def __call__(self, state, action) -> DiagGaussian:
        mu = linear(as_tensor(action), self.matrix, Tensor(np.zeros(self.out_dim)))
        return DiagGaussian(mu, Tensor(np.full(mu.shape, self.log_std)))


class Discriminator(_Module):
    """Real-vs-translated scorer returning one logit per row."""

    def __init__(self, in_dim: int, rng, hidden: int = 64, name: str = "D_X", norm: Optional[Standardizer] = None):
        self.in_dim = in_dim
        self.network = Mlp([in_dim, hidden, hidden, 1], rng=rng, name=name)
        self.networks = (self.network,)
        self.norm = norm or Standardizer.identity(in_dim, "norm")

    def __call__(self, x) -> Tensor:
        return self.network(self.norm(as_tensor(x)))

    def snapshot_modules(self) -> dict:
        return {"network": self.network, "norm": self.norm}


@dataclass
class MappingSet:
    F: object
    G: object
    H: object
    P: Optional[object]
    D_X: Optional[Discriminator] = None
    D_Y: Optional[Discriminator] = None
    # action discriminators, only used by the baselines
    D_A: Optional[Discriminator] = None
    D_U: Optional[Discriminator] = None

    def members(self) -> Dict[str, object]:
        return {
            name: member
            for name, member in (
                ("F", self.F), ("G", self.G), ("H", self.H), ("P", self.P),
                ("D_X", self.D_X), ("D_Y", self.D_Y), ("D_A", self.D_A), ("D_U", self.D_U),
            )
            if member is not None
        }

    def group(self, *names: str) -> list:
        members = self.members()
        return [p for name in names if name in members for p in members[name].parameters()]

    def state_bytes(self, name: str) -> bytes:
        return self.members()[name].state_bytes()

    def snapshot_modules(self) -> dict:
        return {
            f"{name}.{part}": module
            for name, member in self.members().items()
            for part, module in member.snapshot_modules().items()
        }


@contextmanager
def frozen(*members) -> Iterator[None]:
    """Freeze the given maps for the duration of the block, restoring trainability after."""
    params = [p for m in members if m is not None for p in m.parameters() if not p.frozen]
    for p in params:
        p.freeze()
    try:
        yield
    finally:
        for p in params:
            p.unfreeze()


class DomainStats(NamedTuple):
    """Standardization statistics of both training datasets."""

    source_states: Standardizer
    source_actions: Standardizer
    target_states: Standardizer
    target_actions: Standardizer

    @classmethod
    def from_datasets(cls, source: Dataset, target: Dataset) -> "DomainStats":
        return cls(
            Standardizer.fit(source.states, "source_states"),
            Standardizer.fit(source.actions, "source_actions"),
            Standardizer.fit(target.states, "target_states"),
            Standardizer.fit(target.actions, "target_actions"),
        )

    @classmethod
    def identity(cls, pair: DomainPair) -> "DomainStats":
        s, t = pair.source.spec, pair.target.spec
        return cls(
            Standardizer.identity(s.state_dim), Standardizer.identity(s.action_dim),
            Standardizer.identity(t.state_dim), Standardizer.identity(t.action_dim),
        )


def _copy(norm: Standardizer, name: str) -> Standardizer:
    return Standardizer(norm.mean.copy(), norm.std.copy(), name=name)


def build_mapping_set(
    pair: DomainPair,
    method: Method,
    rng: np.random.Generator,
    hidden: int = 64,
    stats: Optional[DomainStats] = None,
) -> MappingSet:
    """Freshly initialized maps and discriminators for `method` on `pair`."""
    method = Method(method)
    stats = stats or DomainStats.identity(pair)
    xs, xa = pair.source.spec.state_dim, pair.source.spec.action_dim
    ys, ya = pair.target.spec.state_dim, pair.target.spec.action_dim
    maps = MappingSet(
        F=MlpStateMap(xs, ys, rng, hidden, "F", _copy(stats.source_states, "in_norm"), _copy(stats.target_states, "out_norm")),
        G=MlpStateMap(ys, xs, rng, hidden, "G", _copy(stats.target_states, "in_norm"), _copy(stats.source_states, "out_norm")),
        H=MlpActionMap(xs, xa, ya, rng, hidden, "H", _copy(stats.source_states, "state_norm"), _copy(stats.source_actions, "action_norm")),
        P=None,
        D_X=Discriminator(xs, rng, hidden, "D_X", _copy(stats.source_states, "norm")),
        D_Y=Discriminator(ys, rng, hidden, "D_Y", _copy(stats.target_states, "norm")),
    )
    if method is not Method.ECC_NOSYM:
        maps.P = MlpActionMap(ys, ya, xa, rng, hidden, "P", _copy(stats.target_states, "state_norm"), _copy(stats.target_actions, "action_norm"))
    if method is Method.DCC:
        maps.D_A = Discriminator(xs + xa, rng, hidden, "D_A", _concat_norm(stats.source_states, stats.source_actions))
        maps.D_U = Discriminator(ys + ya, rng, hidden, "D_U", _concat_norm(stats.target_states, stats.target_actions))
    elif method is Method.CYCLEGAN:
        maps.D_A = Discriminator(xa, rng, hidden, "D_A", _copy(stats.source_actions, "norm"))
        maps.D_U = Discriminator(ya, rng, hidden, "D_U", _copy(stats.target_actions, "norm"))
    return maps


def _concat_norm(states: Standardizer, actions: Standardizer) -> Standardizer:
    return Standardizer(
        np.concatenate([states.mean, actions.mean]), np.concatenate([states.std, actions.std]), name="norm"
    )


def ground_truth_mapping_set(pair: DomainPair) -> MappingSet:
    """F*, G*, H*, P* as fixed maps (no discriminators)."""
    truth = pair.ground_truth
    if truth is None:
        raise UsageError(f"{pair.name} has no ground-truth maps")
    return MappingSet(
        F=LinearStateMap(truth.state_lift),
        G=LinearStateMap(truth.state_unlift),
        H=LinearActionMap(truth.action_lift),
        P=LinearActionMap(truth.action_unlift),
    )


def save_mapping_set(maps: MappingSet, path) -> None:
    save_snapshot(path, maps.snapshot_modules())


def load_mapping_set(path, pair: DomainPair, method: Method, hidden: int = 64) -> MappingSet:
    maps = build_mapping_set(pair, method, np.random.default_rng(0), hidden)
    load_snapshot(path, maps.snapshot_modules())
    return maps


# ----------------------------
# Losses
# ----------------------------
class AdversarialLosses(NamedTuple):
    gen_g: Tensor
    gen_f: Tensor
    disc_x: Tensor
    disc_y: Tensor


class EffectLosses(NamedTuple):
    fh: Tensor
    gp: Optional[Tensor]


class FullObjective(NamedTuple):
    total: Tensor
    adversarial: Optional[AdversarialLosses]
    cycle: Optional[Tensor]
    effect: Optional[EffectLosses]


def _check_batches(maps: MappingSet, src: Batch, tgt: Batch) -> None:
    if src.states.shape[-1] != maps.F.in_dim or tgt.states.shape[-1] != maps.G.in_dim:
        raise DimensionError(
            f"batches of state dims ({src.states.shape[-1]}, {tgt.states.shape[-1]}) do not match "
            f"the maps ({maps.F.in_dim}, {maps.G.in_dim})"
        )


def adversarial_losses(maps: MappingSet, src: Batch, tgt: Batch) -> AdversarialLosses:
    """Non-saturating generator losses and discriminator losses on detached fakes."""
    _check_batches(maps, src, tgt)
    x_real, y_real = Tensor(src.states), Tensor(tgt.states)
    x_fake, y_fake = maps.G(y_real), maps.F(x_real)
    return AdversarialLosses(
        gen_g=bce_logits(maps.D_X(x_fake), 1.0),
        gen_f=bce_logits(maps.D_Y(y_fake), 1.0),
        disc_x=bce_logits(maps.D_X(x_real), 1.0) + bce_logits(maps.D_X(x_fake.detach()), 0.0),
        disc_y=bce_logits(maps.D_Y(y_real), 1.0) + bce_logits(maps.D_Y(y_fake.detach()), 0.0),
    )


def cycle_loss(maps: MappingSet, src: Batch, tgt: Batch) -> Tensor:
    """mean ‖x - G(F(x))‖₁ + mean ‖y - F(G(y))‖₁."""
    _check_batches(maps, src, tgt)
    x, y = Tensor(src.states), Tensor(tgt.states)
    return mean(l1_rows(x - maps.G(maps.F(x)))) + mean(l1_rows(y - maps.F(maps.G(y))))


def identity_loss(maps: MappingSet, src: Batch, tgt: Batch) -> Optional[Tensor]:
    """Distance of the learned state maps from the padded identity, in standardized units.

    A state map whose input is wider than its output keeps the leading columns;
    a narrower one is padded with zeros. Fixed maps contribute nothing, and
    None means there is nothing to fit.
    """
    _check_batches(maps, src, tgt)
    total: Optional[Tensor] = None
    for state_map, states in ((maps.F, src.states), (maps.G, tgt.states)):
        if not isinstance(state_map, MlpStateMap):
            continue
        z = state_map.in_norm(Tensor(states))
        padded = z.data @ np.eye(state_map.out_dim, state_map.in_dim).T
        term = mean(l1_rows(state_map.network(z) - padded))
        total = term if total is None else total + term
    return total


def effect_losses(maps: MappingSet, invdyn_src, invdyn_tgt, src: Batch, tgt: Batch) -> EffectLosses:
    """KL(T_inv_Y(F(x), F(x')) ‖ H(x, a)) and, with P present, the mirrored term."""
    if not (invdyn_src.frozen and invdyn_tgt.frozen):
        raise UsageError("effect losses need frozen inverse dynamics models; train and freeze them first")
    _check_batches(maps, src, tgt)
    x, x_next = Tensor(src.states), Tensor(src.next_states)
    fh = mean(gaussian_kl(invdyn_tgt(maps.F(x), maps.F(x_next)), maps.H(x, src.actions)))
    gp = None
    if maps.P is not None:
        y, y_next = Tensor(tgt.states), Tensor(tgt.next_states)
        gp = mean(gaussian_kl(invdyn_src(maps.G(y), maps.G(y_next)), maps.P(y, tgt.actions)))
    return EffectLosses(fh, gp)


def full_objective(maps: MappingSet, invdyn_src, invdyn_tgt, src: Batch, tgt: Batch,
                   lambda1: float, lambda2: float) -> FullObjective:
    """λ₁ (generator adversarial + cycle) + λ₂ (effect); a zero weight drops its terms."""
    total = None
    adversarial = cycle = effect = None
    if lambda1 != 0:
        adversarial = adversarial_losses(maps, src, tgt)
        cycle = cycle_loss(maps, src, tgt)
        total = (adversarial.gen_g + adversarial.gen_f + cycle) * lambda1
    if lambda2 != 0:
        effect = effect_losses(maps, invdyn_src, invdyn_tgt, src, tgt)
        term = effect.fh if effect.gp is None else effect.fh + effect.gp
        term = term * lambda2
        total = term if total is None else total + term
    if total is None:
        total = Tensor(0.0)
    return FullObjective(total, adversarial, cycle, effect)


# ----------------------------
# Phase log
# ----------------------------
ECC_COLUMNS = (
    "loss_adv_x", "loss_adv_y", "loss_disc_x", "loss_disc_y",
    "loss_cyc", "loss_eff_fh", "loss_eff_gp", "loss_idt",
)


@dataclass
class PhaseLog:
    """Per-step loss records; a missing term is left empty."""

    columns: tuple = ECC_COLUMNS
    rows: List[dict] = field(default_factory=list)

    def record(self, step: int, phase: str, epoch: int, **losses) -> dict:
        unknown = set(losses) - set(self.columns)
        if unknown:
            raise UsageError(f"unknown loss columns {sorted(unknown)}")
        row = {"step": step, "phase": phase, "epoch": epoch}
        for name in self.columns:
            value = losses.get(name)
            row[name] = None if value is None else float(value)
        self.rows.append(row)
        bad = [name for name in self.columns if row[name] is not None and not math.isfinite(row[name])]
        if bad:
            raise NumericalError(
                f"non-finite {', '.join(bad)} at step {step} ({phase}, epoch {epoch})",
                diagnostics=row,
                phase_log=self,
            )
        return row

    def last(self, column: str) -> Optional[float]:
        for row in reversed(self.rows):
            if row[column] is not None:
                return row[column]
        return None

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=["step", "phase", "epoch", *self.columns], lineterminator="\n")
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
        logger.debug(f"Wrote phase log {path} ({len(self.rows)} rows)")
        return path


def _value(loss: Optional[Tensor]) -> Optional[float]:
    return None if loss is None else loss.item()


def _fmt(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.4f}"


# ----------------------------
# Trainer
# ----------------------------
class TrainingOutcome(NamedTuple):
    maps: MappingSet
    log: PhaseLog


def identity_warmup(maps: MappingSet, source: Dataset, target: Dataset, config: TrainConfig, log: PhaseLog) -> int:
    """Fit F and G to the padded identity for `config.warmup_steps` steps; returns the steps taken.

    Only the state maps move. Each step is logged as phase "warmup", epoch 0.
    """
    params = maps.group("F", "G")
    if config.warmup_steps == 0 or not params:
        return 0
    optimizer = Adam(params, lr=config.lr_warmup)
    source_rng = derive_rng(config.seed, "maps/warmup/source")
    target_rng = derive_rng(config.seed, "maps/warmup/target")
    for step in range(config.warmup_steps):
        src = sample_batch(source, config.batch_size, source_rng)
        tgt = sample_batch(target, config.batch_size, target_rng)
        loss = identity_loss(maps, src, tgt)
        log.record(step, "warmup", 0, loss_idt=loss.item())
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
    optimizer.zero_grad()
    logger.info(f"🔥 Identity warm-up of {config.method.value} seed {config.seed}: loss_idt {_fmt(log.last('loss_idt'))}")
    return config.warmup_steps


class MappingTrainer:
    """Alternating two-phase optimization of a MappingSet.

    Each phase keeps its own Adam state for F and G.
    """

    def __init__(self, maps: MappingSet, invdyn_src, invdyn_tgt, source: Dataset, target: Dataset, config: TrainConfig):
        if not (invdyn_src.frozen and invdyn_tgt.frozen):
            raise UsageError("inverse dynamics models must be trained and frozen before mapping training")
        self.maps = maps
        self.invdyn_src = invdyn_src
        self.invdyn_tgt = invdyn_tgt
        self.source = source
        self.target = target
        self.config = config
        self.adversarial_optimizer = Adam(maps.group("F", "G"), lr=config.lr_generator)
        self.effect_optimizer = Adam(maps.group("F", "G", "H", "P"), lr=config.lr_generator)
        self.disc_optimizer = Adam(maps.group("D_X", "D_Y"), lr=config.lr_discriminator)
        self.source_rng = derive_rng(config.seed, "maps/batch/source")
        self.target_rng = derive_rng(config.seed, "maps/batch/target")
        self.log = PhaseLog()
        self.step = 0

    def _batches(self) -> tuple:
        return (
            sample_batch(self.source, self.config.batch_size, self.source_rng),
            sample_batch(self.target, self.config.batch_size, self.target_rng),
        )

    def _zero_all(self) -> None:
        for p in self.maps.group(*self.maps.members()):
            p.zero_grad()

    def phase_one(self, epoch: int) -> None:
        """Adversarial + cycle updates of F, G, then D_X, D_Y; H and P frozen."""
        maps, cfg = self.maps, self.config
        with frozen(maps.H, maps.P):
            for _ in range(cfg.phase1_epochs * cfg.steps_per_epoch):
                src, tgt = self._batches()
                objective = full_objective(maps, self.invdyn_src, self.invdyn_tgt, src, tgt, cfg.lambda1, 0.0)
                adv = objective.adversarial or adversarial_losses(maps, src, tgt)
                self.log.record(
                    self.step, "adversarial", epoch,
                    loss_adv_x=_value(adv.gen_g), loss_adv_y=_value(adv.gen_f),
                    loss_disc_x=_value(adv.disc_x), loss_disc_y=_value(adv.disc_y),
                    loss_cyc=_value(objective.cycle),
                )
                if objective.total.requires_grad:
                    self._zero_all()
                    objective.total.backward()
                    self.adversarial_optimizer.step()
                self._zero_all()
                (adv.disc_x + adv.disc_y).backward()
                self.disc_optimizer.step()
                self.step += 1

    def phase_two(self, epoch: int) -> None:
        """Effect updates of F, G, H, P; discriminators frozen."""
        maps, cfg = self.maps, self.config
        with frozen(maps.D_X, maps.D_Y):
            for _ in range(cfg.phase2_epochs * cfg.steps_per_epoch):
                src, tgt = self._batches()
                objective = full_objective(maps, self.invdyn_src, self.invdyn_tgt, src, tgt, 0.0, cfg.lambda2)
                effect = objective.effect or effect_losses(maps, self.invdyn_src, self.invdyn_tgt, src, tgt)
                self.log.record(
                    self.step, "effect", epoch,
                    loss_eff_fh=_value(effect.fh), loss_eff_gp=_value(effect.gp),
                )
                if objective.total.requires_grad:
                    self._zero_all()
                    objective.total.backward()
                    self.effect_optimizer.step()
                self.step += 1

    def run(self) -> TrainingOutcome:
        cfg = self.config
        self.step = identity_warmup(self.maps, self.source, self.target, cfg, self.log)
        for epoch in range(1, cfg.epochs + 1):
            self.phase_one(epoch)
            self.phase_two(epoch)
            logger.info(
                f"🔁 {cfg.method.value} seed {cfg.seed} epoch {epoch}/{cfg.epochs}: "
                f"cyc {_fmt(self.log.last('loss_cyc'))}, eff_fh {_fmt(self.log.last('loss_eff_fh'))}"
            )
        self._zero_all()
        return TrainingOutcome(self.maps, self.log)


def train_mappings(
    pair: DomainPair,
    datasets: tuple,
    invdyns: tuple,
    config: TrainConfig,
    maps: Optional[MappingSet] = None,
) -> TrainingOutcome:
    """Train F, G, H (and P unless ecc_nosym) from unpaired (source, target) data."""
    method = Method(config.method)
    if method not in (Method.ECC, Method.ECC_NOSYM):
        raise UsageError(f"train_mappings handles ecc and ecc_nosym, not {method.value}")
    source, target = datasets
    invdyn_src, invdyn_tgt = invdyns
    if maps is None:
        maps = build_mapping_set(
            pair, method, derive_rng(config.seed, f"maps/init/{method.value}"), config.hidden,
            DomainStats.from_datasets(source, target),
        )
    logger.info(f"🚀 Training {method.value} on {pair.name} (seed {config.seed}, {config.total_steps} steps)")
    return MappingTrainer(maps, invdyn_src, invdyn_tgt, source, target, config).run()


def state_map_error(maps: MappingSet, pair: DomainPair, states: np.ndarray) -> float:
    """mean ‖F(x) - F*(x)‖₁ / dim(Y) over source states."""
    if pair.ground_truth is None:
        raise UsageError(f"{pair.name} has no ground-truth state map")
    with no_grad():
        predicted = maps.F(Tensor(states)).data
    return float(np.abs(predicted - pair.ground_truth.state_forward(states)).mean())


def reconstruction_error(maps: MappingSet, states: np.ndarray) -> float:
    """mean ‖G(F(x)) - x‖₁ / dim(X)."""
    with no_grad():
        reconstructed = maps.G(maps.F(Tensor(states))).data
    return float(np.abs(reconstructed - states).mean())
