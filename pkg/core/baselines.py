"""Baselines trained under the same harness as effect cycle-consistency.

dcc: adversarial state losses, an action cycle loss P(F(x), H(x, a)) ≈ a,
next-state consistency through a frozen target forward model, and action
adversarial losses whose discriminators see (state, action) pairs.

cyclegan: adversarial and cycle losses on states, and the same pair of losses
on raw action vectors; no dynamics information at all.

Both run as a single joint phase with as many steps as the ecc schedule,
after the same identity warm-up of the state maps.
"""

import logging
from typing import NamedTuple, Optional

from core.datasets import Batch, Dataset, sample_batch
from core.diffcore import Adam, Tensor, bce_logits, concat, l1_rows, mean
from core.envs import DomainPair
from core.errors import UsageError
from core.mappings import (
    DomainStats,
    MappingSet,
    PhaseLog,
    TrainingOutcome,
    adversarial_losses,
    build_mapping_set,
    cycle_loss,
    identity_warmup,
)
from core.seeding import derive_rng
from schemas.config import Method, TrainConfig

logger = logging.getLogger(__name__)

BASELINE_COLUMNS = (
    "loss_adv_x", "loss_adv_y", "loss_disc_x", "loss_disc_y", "loss_cyc",
    "loss_adv_a", "loss_adv_u", "loss_disc_a", "loss_disc_u", "loss_act_cyc", "loss_dyn", "loss_idt",
)


class ActionAdversarialLosses(NamedTuple):
    gen_p: Tensor
    gen_h: Tensor
    disc_a: Tensor
    disc_u: Tensor


def action_cycle_loss(maps: MappingSet, src: Batch) -> Tensor:
    """mean ‖P(F(x), H(x, a)) - a‖₁ using the Gaussian means."""
    x, a = Tensor(src.states), Tensor(src.actions)
    u = maps.H(x, a).mean
    return mean(l1_rows(maps.P(maps.F(x), u).mean - a))


def reverse_action_cycle_loss(maps: MappingSet, tgt: Batch) -> Tensor:
    """mean ‖H(G(y), P(y, u)) - u‖₁."""
    y, u = Tensor(tgt.states), Tensor(tgt.actions)
    a = maps.P(y, u).mean
    return mean(l1_rows(maps.H(maps.G(y), a).mean - u))


def dynamics_consistency_loss(maps: MappingSet, forward_tgt, src: Batch) -> Tensor:
    """mean ‖F(x') - T_Y(F(x), H(x, a))‖₁ through a frozen target forward model."""
    if not forward_tgt.frozen:
        raise UsageError("the forward dynamics model must be trained and frozen first")
    x, x_next = Tensor(src.states), Tensor(src.next_states)
    predicted = forward_tgt(maps.F(x), maps.H(x, src.actions).mean)
    return mean(l1_rows(maps.F(x_next) - predicted))


def action_adversarial_losses(maps: MappingSet, src: Batch, tgt: Batch, conditioned: bool) -> ActionAdversarialLosses:
    """Real vs translated actions; `conditioned` prepends the (translated) state."""
    x, a = Tensor(src.states), Tensor(src.actions)
    y, u = Tensor(tgt.states), Tensor(tgt.actions)
    u_fake = maps.H(x, a).mean
    a_fake = maps.P(y, u).mean
    if conditioned:
        real_a, fake_a = concat([x, a]), concat([maps.G(y), a_fake])
        real_u, fake_u = concat([y, u]), concat([maps.F(x), u_fake])
    else:
        real_a, fake_a, real_u, fake_u = a, a_fake, u, u_fake
    return ActionAdversarialLosses(
        gen_p=bce_logits(maps.D_A(fake_a), 1.0),
        gen_h=bce_logits(maps.D_U(fake_u), 1.0),
        disc_a=bce_logits(maps.D_A(real_a), 1.0) + bce_logits(maps.D_A(fake_a.detach()), 0.0),
        disc_u=bce_logits(maps.D_U(real_u), 1.0) + bce_logits(maps.D_U(fake_u.detach()), 0.0),
    )


class BaselineTrainer:
    """Joint generator/discriminator steps for dcc and cyclegan."""

    def __init__(self, maps: MappingSet, source: Dataset, target: Dataset, config: TrainConfig, forward_tgt=None):
        self.method = Method(config.method)
        if self.method is Method.DCC and forward_tgt is None:
            raise UsageError("dcc needs a trained target forward dynamics model")
        self.maps = maps
        self.forward_tgt = forward_tgt
        self.source = source
        self.target = target
        self.config = config
        self.generator_optimizer = Adam(maps.group("F", "G", "H", "P"), lr=config.lr_generator)
        self.disc_optimizer = Adam(maps.group("D_X", "D_Y", "D_A", "D_U"), lr=config.lr_discriminator)
        self.source_rng = derive_rng(config.seed, "maps/batch/source")
        self.target_rng = derive_rng(config.seed, "maps/batch/target")
        self.log = PhaseLog(columns=BASELINE_COLUMNS)

    def _zero_all(self) -> None:
        for p in self.maps.group(*self.maps.members()):
            p.zero_grad()

    def train_step(self, step: int, epoch: int) -> None:
        cfg, maps = self.config, self.maps
        src = sample_batch(self.source, cfg.batch_size, self.source_rng)
        tgt = sample_batch(self.target, cfg.batch_size, self.target_rng)
        conditioned = self.method is Method.DCC

        states = adversarial_losses(maps, src, tgt)
        actions = action_adversarial_losses(maps, src, tgt, conditioned)
        cyc = cycle_loss(maps, src, tgt)
        act_cyc = action_cycle_loss(maps, src)
        if not conditioned:
            act_cyc = act_cyc + reverse_action_cycle_loss(maps, tgt)
        dyn: Optional[Tensor] = None
        if conditioned:
            dyn = dynamics_consistency_loss(maps, self.forward_tgt, src)

        generator = (states.gen_g + states.gen_f + actions.gen_p + actions.gen_h + cyc + act_cyc) * cfg.lambda1
        if dyn is not None:
            generator = generator + dyn * cfg.lambda2
        self.log.record(
            step, "joint", epoch,
            loss_adv_x=states.gen_g.item(), loss_adv_y=states.gen_f.item(),
            loss_disc_x=states.disc_x.item(), loss_disc_y=states.disc_y.item(),
            loss_cyc=cyc.item(),
            loss_adv_a=actions.gen_p.item(), loss_adv_u=actions.gen_h.item(),
            loss_disc_a=actions.disc_a.item(), loss_disc_u=actions.disc_u.item(),
            loss_act_cyc=act_cyc.item(),
            loss_dyn=None if dyn is None else dyn.item(),
        )
        if generator.requires_grad:
            self._zero_all()
            generator.backward()
            self.generator_optimizer.step()
        self._zero_all()
        (states.disc_x + states.disc_y + actions.disc_a + actions.disc_u).backward()
        self.disc_optimizer.step()

    def run(self) -> TrainingOutcome:
        cfg = self.config
        per_epoch = (cfg.phase1_epochs + cfg.phase2_epochs) * cfg.steps_per_epoch
        step = identity_warmup(self.maps, self.source, self.target, cfg, self.log)
        for epoch in range(1, cfg.epochs + 1):
            for _ in range(per_epoch):
                self.train_step(step, epoch)
                step += 1
            logger.info(
                f"🔁 {self.method.value} seed {cfg.seed} epoch {epoch}/{cfg.epochs}: "
                f"cyc {self.log.last('loss_cyc'):.4f}, act_cyc {self.log.last('loss_act_cyc'):.4f}"
            )
        self._zero_all()
        return TrainingOutcome(self.maps, self.log)


def _baseline(pair: DomainPair, datasets: tuple, config: TrainConfig, forward_tgt=None) -> TrainingOutcome:
    source, target = datasets
    method = Method(config.method)
    maps = build_mapping_set(
        pair, method, derive_rng(config.seed, f"maps/init/{method.value}"), config.hidden,
        DomainStats.from_datasets(source, target),
    )
    logger.info(f"🚀 Training {method.value} on {pair.name} (seed {config.seed}, {config.total_steps} steps)")
    return BaselineTrainer(maps, source, target, config, forward_tgt).run()


def train_dcc_baseline(pair: DomainPair, datasets: tuple, forward_tgt, config: TrainConfig) -> TrainingOutcome:
    if Method(config.method) is not Method.DCC:
        raise UsageError(f"train_dcc_baseline needs method dcc, got {Method(config.method).value}")
    if not forward_tgt.frozen:
        raise UsageError("the forward dynamics model must be trained and frozen first")
    return _baseline(pair, datasets, config, forward_tgt)


def train_cyclegan_baseline(pair: DomainPair, datasets: tuple, config: TrainConfig) -> TrainingOutcome:
    if Method(config.method) is not Method.CYCLEGAN:
        raise UsageError(f"train_cyclegan_baseline needs method cyclegan, got {Method(config.method).value}")
    return _baseline(pair, datasets, config)
