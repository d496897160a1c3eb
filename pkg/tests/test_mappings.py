import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from core.datasets import Batch, full_batch, sample_batch
from core.diffcore import DiagGaussian, Tensor, as_tensor, finite_diff_check, linear
from core.envs import LIFT_STATE
from core.errors import NumericalError, UsageError
from core.mappings import (
    DomainStats,
    IdentityMap,
    LinearActionMap,
    LinearStateMap,
    MappingSet,
    MappingTrainer,
    PhaseLog,
    adversarial_losses,
    build_mapping_set,
    cycle_loss,
    effect_losses,
    full_objective,
    ground_truth_mapping_set,
    identity_loss,
    identity_warmup,
    load_mapping_set,
    reconstruction_error,
    save_mapping_set,
    state_map_error,
    train_mappings,
)
from core.seeding import derive_rng
from schemas.config import Method, TrainConfig

TINY = TrainConfig(
    epochs=1, phase1_epochs=1, phase2_epochs=1, steps_per_epoch=2, batch_size=16, hidden=8, warmup_steps=0
)


@pytest.fixture
def lift_maps(lift_pair, lift_datasets):
    return build_mapping_set(
        lift_pair, Method.ECC, np.random.default_rng(0), hidden=8, stats=DomainStats.from_datasets(*lift_datasets)
    )


@pytest.fixture
def batches(lift_datasets):
    return sample_batch(lift_datasets[0], 16, derive_rng(0, "s")), sample_batch(lift_datasets[1], 16, derive_rng(0, "t"))


class InvDynEcho:
    """H stand-in returning the inverse model's own prediction."""

    def __init__(self, invdyn, next_states):
        self.invdyn = invdyn
        self.next_states = next_states

    def __call__(self, x, a):
        return self.invdyn(x, Tensor(self.next_states))


class TestMappingSet:
    """Test cases for building and storing mapping sets"""

    def test_dimensions(self, lift_maps):
        """Test every map has the pair's dimensions"""
        assert (lift_maps.F.in_dim, lift_maps.F.out_dim) == (6, 8)
        assert (lift_maps.G.in_dim, lift_maps.G.out_dim) == (8, 6)
        assert lift_maps.H.out_dim == 3 and lift_maps.P.out_dim == 2
        assert lift_maps.D_A is None

    def test_nosym_has_no_p(self, lift_pair):
        """Test ecc_nosym builds no P"""
        maps = build_mapping_set(lift_pair, Method.ECC_NOSYM, np.random.default_rng(0), hidden=8)
        assert maps.P is None
        assert "P" not in maps.members()

    def test_baselines_get_action_discriminators(self, lift_pair):
        """Test dcc discriminates (state, action) pairs and cyclegan raw actions"""
        dcc = build_mapping_set(lift_pair, Method.DCC, np.random.default_rng(0), hidden=8)
        cyclegan = build_mapping_set(lift_pair, Method.CYCLEGAN, np.random.default_rng(0), hidden=8)
        assert (dcc.D_A.in_dim, dcc.D_U.in_dim) == (8, 11)
        assert (cyclegan.D_A.in_dim, cyclegan.D_U.in_dim) == (2, 3)

    def test_snapshot_round_trip(self, lift_pair, lift_maps, tmp_path):
        """Test a saved mapping set reloads bit-identically"""
        save_mapping_set(lift_maps, tmp_path / "ecc_seed0.bin")
        loaded = load_mapping_set(tmp_path / "ecc_seed0.bin", lift_pair, Method.ECC, hidden=8)
        for name in lift_maps.members():
            assert loaded.state_bytes(name) == lift_maps.state_bytes(name)
        x = np.ones((2, 6))
        assert np.array_equal(loaded.F(Tensor(x)).data, lift_maps.F(Tensor(x)).data)


class TestAdversarialLosses:
    """Test cases for the state adversarial terms"""

    def test_constant_half_discriminator(self, lift_maps, batches):
        """Test zero-logit discriminators cost 2 ln 2 each"""
        for disc in (lift_maps.D_X, lift_maps.D_Y):
            for p in disc.parameters():
                p.data[...] = 0.0
        losses = adversarial_losses(lift_maps, *batches)
        assert losses.disc_x.item() == pytest.approx(2 * math.log(2))
        assert losses.disc_y.item() == pytest.approx(2 * math.log(2))

    def test_generator_loss_leaves_discriminators(self, lift_maps, batches):
        """Test discriminator losses do not reach F or G"""
        losses = adversarial_losses(lift_maps, *batches)
        (losses.disc_x + losses.disc_y).backward()
        assert all(p.grad is None for p in lift_maps.group("F", "G"))
        assert any(p.grad is not None for p in lift_maps.group("D_X", "D_Y"))

    def test_generator_gradient(self, lift_maps, batches):
        """Test gen_g passes the finite-difference check on G"""
        check = finite_diff_check(lambda: adversarial_losses(lift_maps, *batches).gen_g, lift_maps.group("G"), floor=1e-6)
        assert check.max_relative_error < 1e-3


class TestCycleLoss:
    """Test cases for the state cycle term"""

    def test_identity_maps(self, lift_datasets):
        """Test identity F and G give zero cycle loss"""
        maps = MappingSet(F=IdentityMap(6), G=IdentityMap(6), H=None, P=None)
        batch = full_batch(lift_datasets[0])
        assert cycle_loss(maps, batch, batch).item() == 0.0

    def test_ground_truth_maps(self, lift_pair, batches):
        """Test F*, G* give zero cycle loss on linear_lift"""
        assert cycle_loss(ground_truth_mapping_set(lift_pair), *batches).item() < 1e-9

    def test_broken_inverse(self, lift_pair, batches):
        """Test F = 2 F* with G = G* is penalized"""
        maps = ground_truth_mapping_set(lift_pair)
        maps.F = LinearStateMap(2.0 * LIFT_STATE)
        assert cycle_loss(maps, *batches).item() > 0.1

    def test_gradient(self, lift_maps, batches):
        """Test the cycle loss passes the finite-difference check on F"""
        check = finite_diff_check(lambda: cycle_loss(lift_maps, *batches), lift_maps.group("F"), floor=1e-6)
        assert check.max_relative_error < 1e-3


class TestEffectLosses:
    """Test cases for the effect cycle-consistency terms"""

    def test_requires_frozen_inverse_models(self, lift_maps, frozen_invdyns, batches):
        """Test trainable inverse models are refused"""
        source, target = frozen_invdyns
        target.network.unfreeze()
        with pytest.raises(UsageError):
            effect_losses(lift_maps, source, target, *batches)

    def test_matching_action_map_costs_nothing(self, frozen_invdyns, lift_datasets):
        """Test H equal to T_inv(F(x), F(x')) with identity F gives zero effect loss"""
        source_invdyn = frozen_invdyns[0]
        batch = full_batch(lift_datasets[0])
        maps = MappingSet(F=IdentityMap(6), G=IdentityMap(6), H=InvDynEcho(source_invdyn, batch.next_states), P=None)
        losses = effect_losses(maps, source_invdyn, source_invdyn, batch, batch)
        assert losses.fh.item() == 0.0
        assert losses.gp is None

    @settings(max_examples=20, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(st.integers(0, 2**32 - 1))
    def test_batch_order_invariance(self, lift_maps, frozen_invdyns, batches, seed):
        """Test permuting a batch changes the loss by less than 1e-12"""
        src, tgt = batches
        order = np.random.default_rng(seed).permutation(len(src))
        permuted = type(src)(src.states[order], src.actions[order], src.next_states[order])
        a = effect_losses(lift_maps, *frozen_invdyns, src, tgt).fh.item()
        b = effect_losses(lift_maps, *frozen_invdyns, permuted, tgt).fh.item()
        assert abs(a - b) < 1e-12

    def test_gradient_reaches_state_map(self, lift_maps, frozen_invdyns, batches):
        """Test the effect loss differentiates F through the frozen inverse model"""
        effect_losses(lift_maps, *frozen_invdyns, *batches).fh.backward()
        assert any(np.any(p.grad != 0) for p in lift_maps.group("F") if p.grad is not None)
        assert all(p.grad is None for p in frozen_invdyns[1].parameters())

    def test_gradient(self, lift_maps, frozen_invdyns, batches):
        """Test both effect terms pass the finite-difference check"""

        def total():
            losses = effect_losses(lift_maps, *frozen_invdyns, *batches)
            return losses.fh + losses.gp

        check = finite_diff_check(total, lift_maps.group("F", "H", "G", "P"), floor=1e-6)
        assert check.max_relative_error < 1e-3


class TestFullObjective:
    """Test cases for the weighted objective"""

    def test_without_effect_terms(self, lift_maps, frozen_invdyns, batches):
        """Test lambda2 = 0 leaves exactly the adversarial and cycle terms"""
        objective = full_objective(lift_maps, *frozen_invdyns, *batches, 1.0, 0.0)
        adv = adversarial_losses(lift_maps, *batches)
        expected = adv.gen_g.item() + adv.gen_f.item() + cycle_loss(lift_maps, *batches).item()
        assert objective.total.item() == pytest.approx(expected, rel=1e-12)
        assert objective.effect is None

    def test_without_adversarial_terms(self, lift_maps, frozen_invdyns, batches):
        """Test lambda1 = 0 leaves exactly the effect terms"""
        objective = full_objective(lift_maps, *frozen_invdyns, *batches, 0.0, 1.0)
        effect = effect_losses(lift_maps, *frozen_invdyns, *batches)
        assert objective.total.item() == pytest.approx(effect.fh.item() + effect.gp.item(), rel=1e-12)
        assert objective.adversarial is None and objective.cycle is None


class TestPhaseLog:
    """Test cases for the per-step loss log"""

    def test_missing_terms_stay_empty(self, tmp_path):
        """Test terms not recorded are written as empty cells"""
        log = PhaseLog()
        log.record(0, "adversarial", 1, loss_cyc=0.5)
        path = log.write_csv(tmp_path / "phases.csv")
        lines = path.read_text().splitlines()
        assert lines[0].startswith("step,phase,epoch,loss_adv_x")
        assert lines[1] == "0,adversarial,1,,,,,0.5,,,"

    def test_non_finite_loss_aborts(self):
        """Test a NaN loss raises a numerical error carrying the log"""
        log = PhaseLog()
        with pytest.raises(NumericalError) as e:
            log.record(3, "effect", 1, loss_eff_fh=float("nan"))
        assert e.value.phase_log is log
        assert e.value.exit_code == 3

    def test_unknown_column(self):
        """Test an unknown loss name is refused"""
        with pytest.raises(UsageError):
            PhaseLog().record(0, "effect", 1, loss_made_up=1.0)


class TestMappingTrainer:
    """Test cases for the alternating schedule"""

    def test_phase_one_keeps_action_maps(self, lift_maps, frozen_invdyns, lift_datasets):
        """Test H and P are byte-identical across the adversarial phase while F moves"""
        trainer = MappingTrainer(lift_maps, *frozen_invdyns, *lift_datasets, TINY)
        before = {name: lift_maps.state_bytes(name) for name in ("F", "H", "P", "D_X")}
        trainer.phase_one(1)
        assert lift_maps.state_bytes("H") == before["H"]
        assert lift_maps.state_bytes("P") == before["P"]
        assert lift_maps.state_bytes("F") != before["F"]
        assert lift_maps.state_bytes("D_X") != before["D_X"]
        assert not lift_maps.H.frozen

    def test_phase_two_keeps_discriminators(self, lift_maps, frozen_invdyns, lift_datasets):
        """Test D_X and D_Y are byte-identical across the effect phase while H moves"""
        trainer = MappingTrainer(lift_maps, *frozen_invdyns, *lift_datasets, TINY)
        before = {name: lift_maps.state_bytes(name) for name in ("H", "D_X", "D_Y")}
        trainer.phase_two(1)
        assert lift_maps.state_bytes("D_X") == before["D_X"]
        assert lift_maps.state_bytes("D_Y") == before["D_Y"]
        assert lift_maps.state_bytes("H") != before["H"]

    def test_inverse_models_untouched(self, lift_pair, frozen_invdyns, lift_datasets):
        """Test the inverse dynamics models are byte-identical after training"""
        before = [m.state_bytes() for m in frozen_invdyns]
        train_mappings(lift_pair, lift_datasets, frozen_invdyns, TINY)
        assert [m.state_bytes() for m in frozen_invdyns] == before

    def test_log_records_every_step(self, lift_pair, frozen_invdyns, lift_datasets):
        """Test the log holds one row per step with the phase's terms"""
        outcome = train_mappings(lift_pair, lift_datasets, frozen_invdyns, TINY)
        assert [row["phase"] for row in outcome.log.rows] == ["adversarial"] * 2 + ["effect"] * 2
        assert outcome.log.rows[0]["loss_eff_fh"] is None
        assert outcome.log.rows[-1]["loss_cyc"] is None
        assert outcome.log.rows[-1]["loss_eff_gp"] is not None

    def test_nosym_logs_no_gp_term(self, lift_pair, frozen_invdyns, lift_datasets):
        """Test ecc_nosym trains without P or the G, P effect term"""
        outcome = train_mappings(lift_pair, lift_datasets, frozen_invdyns, TINY.model_copy(update={"method": Method.ECC_NOSYM}))
        assert outcome.maps.P is None
        assert all(row["loss_eff_gp"] is None for row in outcome.log.rows)

    def test_training_is_deterministic(self, lift_pair, frozen_invdyns, lift_datasets):
        """Test two runs with the same seed give identical maps"""
        a = train_mappings(lift_pair, lift_datasets, frozen_invdyns, TINY)
        b = train_mappings(lift_pair, lift_datasets, frozen_invdyns, TINY)
        for name in ("F", "G", "H", "P"):
            assert a.maps.state_bytes(name) == b.maps.state_bytes(name)

    def test_rejects_baseline_methods(self, lift_pair, frozen_invdyns, lift_datasets):
        """Test baselines are routed elsewhere"""
        with pytest.raises(UsageError):
            train_mappings(lift_pair, lift_datasets, frozen_invdyns, TINY.model_copy(update={"method": Method.DCC}))

    def test_requires_frozen_inverse_models(self, lift_maps, frozen_invdyns, lift_datasets):
        """Test the trainer refuses trainable inverse models"""
        frozen_invdyns[0].network.unfreeze()
        with pytest.raises(UsageError):
            MappingTrainer(lift_maps, *frozen_invdyns, *lift_datasets, TINY)

    def test_phases_keep_separate_optimizer_state(self, lift_maps, frozen_invdyns, lift_datasets):
        """Test each phase advances only its own Adam moments for F and G"""
        trainer = MappingTrainer(lift_maps, *frozen_invdyns, *lift_datasets, TINY)
        assert {p.name for p in trainer.adversarial_optimizer.params} == {p.name for p in lift_maps.group("F", "G")}
        assert {p.name for p in trainer.effect_optimizer.params} == {
            p.name for p in lift_maps.group("F", "G", "H", "P")
        }
        trainer.phase_one(1)
        assert trainer.adversarial_optimizer.state.step == 2
        assert trainer.effect_optimizer.state.step == 0
        trainer.phase_two(1)
        assert trainer.adversarial_optimizer.state.step == 2
        assert trainer.effect_optimizer.state.step == 2


class TestIdentityWarmup:
    """Test cases for the identity warm-up of the state maps"""

    def test_identity_loss_pads_and_truncates(self, lift_maps, lift_datasets):
        """Test F is compared to z padded with zeros and G to the leading columns of z"""
        src, tgt = full_batch(lift_datasets[0]), full_batch(lift_datasets[1])
        z_x = lift_maps.F.in_norm(Tensor(src.states)).data
        z_y = lift_maps.G.in_norm(Tensor(tgt.states)).data
        f_out = lift_maps.F.network(Tensor(z_x)).data
        g_out = lift_maps.G.network(Tensor(z_y)).data
        padded = np.concatenate([z_x, np.zeros((z_x.shape[0], 2))], axis=1)
        expected = np.abs(f_out - padded).sum(axis=1).mean() + np.abs(g_out - z_y[:, :6]).sum(axis=1).mean()
        assert identity_loss(lift_maps, src, tgt).item() == pytest.approx(expected, rel=1e-12)

    def test_fixed_maps_have_nothing_to_fit(self, lift_pair, lift_datasets):
        maps = ground_truth_mapping_set(lift_pair)
        assert identity_loss(maps, full_batch(lift_datasets[0]), full_batch(lift_datasets[1])) is None

    def test_warmup_lowers_identity_loss(self, lift_maps, lift_datasets):
        """Test fifty warm-up steps bring F and G closer to the identity"""
        src, tgt = full_batch(lift_datasets[0]), full_batch(lift_datasets[1])
        before = identity_loss(lift_maps, src, tgt).item()
        config = TINY.model_copy(update={"warmup_steps": 50, "lr_warmup": 1e-2})
        assert identity_warmup(lift_maps, *lift_datasets, config, PhaseLog()) == 50
        assert identity_loss(lift_maps, src, tgt).item() < before

    def test_warmup_moves_only_state_maps(self, lift_maps, lift_datasets):
        """Test H, P and the discriminators are byte-identical across the warm-up"""
        before = {name: lift_maps.state_bytes(name) for name in ("F", "G", "H", "P", "D_X", "D_Y")}
        identity_warmup(lift_maps, *lift_datasets, TINY.model_copy(update={"warmup_steps": 3}), PhaseLog())
        for name in ("H", "P", "D_X", "D_Y"):
            assert lift_maps.state_bytes(name) == before[name]
        assert lift_maps.state_bytes("F") != before["F"]
        assert lift_maps.state_bytes("G") != before["G"]

    def test_zero_steps_skip_warmup(self, lift_maps, lift_datasets):
        log = PhaseLog()
        before = lift_maps.state_bytes("F")
        assert identity_warmup(lift_maps, *lift_datasets, TINY, log) == 0
        assert log.rows == [] and lift_maps.state_bytes("F") == before

    def test_warmup_rows_lead_the_log(self, lift_pair, frozen_invdyns, lift_datasets):
        """Test warm-up rows come first, in epoch 0, and the step counter runs on"""
        outcome = train_mappings(lift_pair, lift_datasets, frozen_invdyns, TINY.model_copy(update={"warmup_steps": 2}))
        rows = outcome.log.rows
        assert [row["phase"] for row in rows] == ["warmup"] * 2 + ["adversarial"] * 2 + ["effect"] * 2
        assert [row["step"] for row in rows] == list(range(6))
        assert all(row["epoch"] == 0 and row["loss_idt"] is not None for row in rows[:2])
        assert all(row["loss_cyc"] is None for row in rows[:2])


class AnalyticInverse:
    """Exact inverse dynamics of a (possibly lifted) point mass away from the velocity clip.

    The velocity is read off the state through `velocity_rows`, the action is
    Δvel / dt pushed through `action_lift`, with a near-deterministic spread.
    """

    frozen = True

    def __init__(self, velocity_rows, action_lift, dt=0.05):
        self.velocity_rows = Tensor(np.asarray(velocity_rows) / dt)
        self.action_lift = Tensor(np.asarray(action_lift, dtype=np.float64))

    def __call__(self, s, s_next):
        delta = as_tensor(s_next) - as_tensor(s)
        accel = linear(delta, self.velocity_rows, Tensor(np.zeros(2)))
        mu = linear(accel, self.action_lift, Tensor(np.zeros(self.action_lift.shape[0])))
        return DiagGaussian(mu, Tensor(np.full(mu.shape, -5.0)))


@pytest.fixture
def analytic_invdyns(lift_pair):
    truth = lift_pair.ground_truth
    return (
        AnalyticInverse(np.eye(6)[2:4], np.eye(2)),
        AnalyticInverse(truth.state_unlift[2:4], truth.action_lift),
    )


class TestGroundTruthEffect:
    """Test cases for the effect losses at the true morphism of linear_lift"""

    def test_analytic_inverse_recovers_actions(self, lift_datasets, analytic_invdyns):
        """Test the analytic models return the stored actions of both domains"""
        for dataset, invdyn in zip(lift_datasets, analytic_invdyns):
            predicted = invdyn(dataset.states, dataset.next_states).mean.data
            assert np.allclose(predicted, dataset.actions, atol=1e-9)

    def test_effect_vanishes_at_the_morphism(self, lift_pair, lift_datasets, analytic_invdyns):
        """Test both effect terms are zero for F*, G*, H*, P* on collected random-policy data"""
        maps = ground_truth_mapping_set(lift_pair)
        effect = effect_losses(maps, *analytic_invdyns, full_batch(lift_datasets[0]), full_batch(lift_datasets[1]))
        assert effect.fh.item() < 1e-6
        assert effect.gp.item() < 1e-6

    def test_effect_vanishes_from_reset_states(self, lift_pair, analytic_invdyns):
        """Test the same on 64 fresh single-step transitions per domain"""
        rng = derive_rng(9, "test")
        batches = []
        for env in (lift_pair.source, lift_pair.target):
            rows = []
            for _ in range(64):
                state = env.reset(rng)
                action = env.random_action(rng)
                rows.append((state.vector, action, env.step(state, action).state.vector))
            batches.append(Batch(*(np.stack(column) for column in zip(*rows))))
        effect = effect_losses(ground_truth_mapping_set(lift_pair), *analytic_invdyns, *batches)
        assert effect.fh.item() < 1e-6
        assert effect.gp.item() < 1e-6

    def test_reversed_transitions_raise_the_effect(self, lift_pair, lift_datasets, analytic_invdyns):
        """Test T_inv(F(x'), F(x)) disagrees with H*(x, a) so the effect loss grows"""
        maps = ground_truth_mapping_set(lift_pair)
        src, tgt = full_batch(lift_datasets[0]), full_batch(lift_datasets[1])
        forward = effect_losses(maps, *analytic_invdyns, src, tgt)
        backward = effect_losses(
            maps, *analytic_invdyns,
            Batch(src.next_states, src.actions, src.states), Batch(tgt.next_states, tgt.actions, tgt.states),
        )
        assert backward.fh.item() > forward.fh.item() + 1.0
        assert backward.gp.item() > forward.gp.item() + 1.0


class TestMetrics:
    """Test cases for the ground-truth metrics"""

    def test_ground_truth_scores_zero(self, lift_pair, lift_datasets):
        """Test F* has no state-map error and G*F* reconstructs"""
        maps = ground_truth_mapping_set(lift_pair)
        states = lift_datasets[0].states
        assert state_map_error(maps, lift_pair, states) < 1e-12
        assert reconstruction_error(maps, states) < 1e-12

    def test_ground_truth_action_map(self, lift_pair):
        """Test H* is N a with a near-deterministic spread"""
        h = LinearActionMap(lift_pair.ground_truth.action_lift)
        g = h(Tensor(np.zeros((1, 6))), Tensor([[1.0, -1.0]]))
        assert np.allclose(g.mean.data, [[1.0, -0.3, -0.9]])
        assert np.all(g.log_std.data == -5.0)

    def test_reacher_has_no_ground_truth(self, reacher_pair):
        """Test ground-truth maps are refused without a morphism"""
        with pytest.raises(UsageError):
            ground_truth_mapping_set(reacher_pair)
