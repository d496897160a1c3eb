import numpy as np
import pytest

from core.datasets import Batch, collect_random
from core.diffcore import Parameter, Tensor, finite_diff_check, tensor_sum
from core.envs import make_domain_pair
from core.errors import DimensionError
from core.invdyn import (
    ForwardDynamicsModel,
    InverseDynamicsModel,
    forward_l1_loss,
    load_forward_dynamics,
    load_inverse_dynamics,
    fit_state_norms,
    reparam_l1_loss,
    save_dynamics,
    state_delta,
    train_forward_dynamics,
    train_inverse_dynamics,
)
from schemas.config import DynamicsConfig

FAST = DynamicsConfig(epochs=10, batch_size=64, lr=1e-2, hidden=16)


@pytest.fixture
def source_dataset(identity_pair):
    return collect_random(identity_pair.source, 20, 50, 0, "source", identity_pair.name)


class TestInverseDynamicsModel:
    """Test cases for T_inv(s, s') -> Gaussian over actions"""

    def test_zero_init_predicts_standard_gaussian(self):
        """Test a zero-initialized model returns mean 0 and log_std 0"""
        model = InverseDynamicsModel(6, 2, zero_init=True)
        g = model(np.ones((3, 6)), np.zeros((3, 6)))
        assert np.array_equal(g.mean.data, np.zeros((3, 2)))
        assert np.array_equal(g.log_std.data, np.zeros((3, 2)))

    def test_dimension_mismatch(self):
        """Test states of the other domain raise a dimension error"""
        model = InverseDynamicsModel(6, 2, zero_init=True)
        with pytest.raises(DimensionError):
            model(np.ones((1, 8)), np.ones((1, 8)))

    def test_frozen_predictions_repeat(self):
        """Test a frozen model gives bit-identical outputs on repeated calls"""
        model = InverseDynamicsModel(6, 2, rng=np.random.default_rng(0))
        model.freeze()
        s, s_next = np.random.default_rng(1).normal(size=(2, 4, 6))
        assert model(s, s_next).mean.data.tobytes() == model(s, s_next).mean.data.tobytes()

    def test_gradient_reaches_inputs_when_frozen(self):
        """Test a frozen model still differentiates with respect to s and s'"""
        model = InverseDynamicsModel(6, 2, rng=np.random.default_rng(0))
        model.freeze()
        s = Parameter(np.random.default_rng(2).normal(size=(3, 6)), "s")
        s_next = Parameter(np.random.default_rng(3).normal(size=(3, 6)), "s_next")
        tensor_sum(model(s, s_next).mean).backward()
        assert np.any(s.grad != 0) and np.any(s_next.grad != 0)
        assert all(p.grad is None for p in model.parameters())

    def test_reparam_loss_gradient(self):
        """Test the reparameterized L1 loss passes the finite-difference check"""
        rng = np.random.default_rng(4)
        model = InverseDynamicsModel(3, 2, rng=rng, hidden=8)
        batch = Batch(rng.normal(size=(5, 3)), rng.normal(size=(5, 2)) * 4.0, rng.normal(size=(5, 3)))
        noise = rng.standard_normal((5, 2))
        check = finite_diff_check(lambda: reparam_l1_loss(model, batch, noise), model.parameters())
        assert check.max_relative_error < 1e-3


class TestAngleDeltas:
    """Test cases for dynamics models on circular state columns"""

    def test_crossing_pi_gives_small_delta(self):
        s = Tensor(np.array([[np.pi - 0.01, 0.3, 0.0]]))
        s_next = Tensor(np.array([[-np.pi + 0.01, 0.5, 0.0]]))
        assert np.allclose(state_delta(s, s_next, (0,)).data, [[0.02, 0.2, 0.0]])
        assert state_delta(s, s_next).data[0, 0] == pytest.approx(-2 * np.pi + 0.02)

    def test_inverse_model_sees_wrapped_transition_as_unwrapped(self):
        """Test T_inv gives the same action for a wrapped transition and its unwrapped twin"""
        model = InverseDynamicsModel(3, 1, rng=np.random.default_rng(0), hidden=8, angle_dims=[0])
        s = np.array([[np.pi - 0.01, 0.3, 0.0]])
        wrapped = model(s, np.array([[-np.pi + 0.01, 0.5, 0.0]])).mean.data
        unwrapped = model(s, np.array([[np.pi + 0.01, 0.5, 0.0]])).mean.data
        assert np.allclose(wrapped, unwrapped, atol=1e-12)

    def test_wrap_keeps_gradients(self):
        """Test the wrap passes the identity gradient to both states"""
        s = Parameter(np.array([[np.pi - 0.01, 0.0]]), "s")
        s_next = Parameter(np.array([[-np.pi + 0.01, 0.0]]), "s_next")
        tensor_sum(state_delta(s, s_next, (0,))).backward()
        assert np.array_equal(s_next.grad, np.ones((1, 2)))
        assert np.array_equal(s.grad, -np.ones((1, 2)))

    def test_forward_prediction_stays_on_the_circle(self):
        model = ForwardDynamicsModel(2, 1, zero_init=True, angle_dims=[0])
        model.delta_norm.mean = np.array([0.5, 0.0])
        predicted = model(Tensor(np.array([[np.pi - 0.1, 0.0]])), Tensor(np.zeros((1, 1)))).data
        assert predicted[0, 0] == pytest.approx(-np.pi + 0.4)

    def test_reacher_delta_norm_uses_wrapped_deltas(self, reacher_pair):
        """Test wrapped angle deltas keep the delta scale within what the joint speed cap allows"""
        env = reacher_pair.target
        dataset = collect_random(env, 20, 50, 0, "target", reacher_pair.name)
        _, delta_norm = fit_state_norms(dataset, env.spec.angle_dims)
        bound = env.n * env.spec.dt * env.max_velocity
        assert np.all(delta_norm.std[env.spec.angle_dims] <= bound)

    def test_reacher_inverse_heldout_improves(self, reacher_pair):
        env = reacher_pair.target
        dataset = collect_random(env, 20, 50, 0, "target", reacher_pair.name)
        fit = train_inverse_dynamics(dataset, FAST, angle_dims=env.spec.angle_dims)
        assert fit.model.angle_dims == (0, 1, 2, 10)
        assert fit.curve[-1].heldout_l1 < fit.curve[0].heldout_l1


class TestTraining:
    """Test cases for fitting the dynamics models"""

    def test_inverse_heldout_improves(self, source_dataset):
        """Test training lowers the held-out L1 and freezes the model"""
        fit = train_inverse_dynamics(source_dataset, FAST)
        assert fit.curve[0].epoch == 0 and fit.curve[-1].epoch == FAST.epochs
        assert fit.curve[-1].heldout_l1 < fit.curve[0].heldout_l1
        assert fit.model.frozen
        assert fit.heldout_l1 == fit.curve[-1].heldout_l1

    @pytest.mark.parametrize("pair_name", ["identity", "linear_lift", "reacher23"])
    @pytest.mark.parametrize("domain", ["source", "target"])
    def test_heldout_improves_on_every_pair(self, pair_name, domain):
        """Test both inverse models of every pair end below their untrained held-out L1"""
        pair = make_domain_pair(pair_name)
        env = pair.env(domain)
        dataset = collect_random(env, 20, 50, 0, domain, pair.name)
        fit = train_inverse_dynamics(dataset, FAST, angle_dims=env.spec.angle_dims)
        assert fit.curve[-1].heldout_l1 < fit.curve[0].heldout_l1

    def test_inverse_is_deterministic(self, source_dataset):
        """Test two fits of the same data give identical parameter bytes"""
        config = DynamicsConfig(epochs=2, batch_size=64, hidden=8)
        a = train_inverse_dynamics(source_dataset, config)
        b = train_inverse_dynamics(source_dataset, config)
        assert a.model.state_bytes() == b.model.state_bytes()

    def test_temporal_order_matters(self, source_dataset):
        """Test T_inv(s, s') differs from T_inv(s', s) after training"""
        model = train_inverse_dynamics(source_dataset, FAST).model
        s, s_next = source_dataset.states[:100], source_dataset.next_states[:100]
        forward = model(s, s_next).mean.data
        backward = model(s_next, s).mean.data
        assert np.abs(forward - backward).mean() > 0

    def test_forward_heldout_improves(self, source_dataset):
        """Test the forward model's held-out next-state error drops"""
        fit = train_forward_dynamics(source_dataset, FAST)
        assert fit.curve[-1].heldout_l1 < fit.curve[0].heldout_l1
        assert fit.model.frozen

    def test_forward_loss_gradient(self):
        """Test the forward L1 loss passes the finite-difference check"""
        rng = np.random.default_rng(5)
        model = ForwardDynamicsModel(3, 2, rng=rng, hidden=8)
        batch = Batch(rng.normal(size=(5, 3)), rng.normal(size=(5, 2)), rng.normal(size=(5, 3)) * 4.0)
        assert finite_diff_check(lambda: forward_l1_loss(model, batch), model.parameters()).max_relative_error < 1e-3

    def test_zero_init_forward_predicts_no_movement(self):
        """Test an untrained zero model predicts s' = s"""
        model = ForwardDynamicsModel(6, 2, zero_init=True)
        s = np.random.default_rng(0).normal(size=(2, 6))
        assert np.array_equal(model(Tensor(s), Tensor(np.zeros((2, 2)))).data, s)


class TestSnapshots:
    """Test cases for dynamics snapshots"""

    def test_inverse_round_trip(self, source_dataset, tmp_path):
        """Test a saved inverse model reloads frozen and bit-identical"""
        fit = train_inverse_dynamics(source_dataset, DynamicsConfig(epochs=1, batch_size=64, hidden=8))
        save_dynamics(fit.model, tmp_path / "invdyn_source.bin")
        loaded = load_inverse_dynamics(tmp_path / "invdyn_source.bin", 6, 2, hidden=8, domain="source")
        assert loaded.frozen
        assert loaded.state_bytes() == fit.model.state_bytes()
        s, s_next = source_dataset.states[:5], source_dataset.next_states[:5]
        assert np.array_equal(loaded(s, s_next).mean.data, fit.model(s, s_next).mean.data)

    def test_forward_round_trip(self, source_dataset, tmp_path):
        """Test a saved forward model reloads with its normalization"""
        fit = train_forward_dynamics(source_dataset, DynamicsConfig(epochs=1, batch_size=64, hidden=8))
        save_dynamics(fit.model, tmp_path / "forward_target.bin")
        loaded = load_forward_dynamics(tmp_path / "forward_target.bin", 6, 2, hidden=8)
        s, a = Tensor(source_dataset.states[:5]), Tensor(source_dataset.actions[:5])
        assert np.array_equal(loaded(s, a).data, fit.model(s, a).data)
