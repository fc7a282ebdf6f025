"""Tests for trainable objectives and starting points."""

import math

import numpy as np
import pytest

from mllab.gp import log_marginal_likelihood
from mllab.lab import random_instance
from mllab.models import (
    ClmlConfig,
    Coordinate,
    Dataset,
    Hyperparameters,
    KernelFamily,
    KernelSpec,
    NoiseMode,
    Objective,
    ObjectiveKind,
    Seed,
)
from mllab.objectives import (
    active_mask,
    clml_chain_residual,
    clml_orders,
    conditional_log_likelihood,
    eval_objective,
    initial_hyperparameters,
    to_noise_mode,
    with_overrides,
)
from mllab.profiled import profiled_value


def _central(obj, h, step=1e-6):
    x = h.to_vector()
    grad = np.zeros_like(x)
    for i in range(x.size):
        up, down = x.copy(), x.copy()
        up[i] += step
        down[i] -= step
        grad[i] = (eval_objective(obj, h.with_vector(up))[0] - eval_objective(obj, h.with_vector(down))[0]) / (
            2 * step
        )
    return grad


def _relative(a, b):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)


@pytest.mark.unit
class TestClml:
    """Tests for the conditional log marginal likelihood."""

    def test_nothing_held_out(self, small_dataset, small_hyperparameters):
        """Test m = N gives exactly 0."""
        obj = Objective(
            kind=ObjectiveKind.CLML, dataset=small_dataset, clml=ClmlConfig(m=small_dataset.n)
        )
        value, grad = eval_objective(obj, small_hyperparameters)
        assert value == 0.0
        assert np.all(grad == 0.0)

    def test_nothing_conditioned_on(self, small_dataset, small_hyperparameters, rbf_spec):
        """Test m = 0 gives the full LML."""
        obj = Objective(kind=ObjectiveKind.CLML, dataset=small_dataset, clml=ClmlConfig(m=0))
        expected = log_marginal_likelihood(small_dataset, small_hyperparameters, rbf_spec).total
        assert eval_objective(obj, small_hyperparameters)[0] == pytest.approx(expected, abs=1e-12)

    def test_half_correlation_pair(self, two_point_dataset, unit_hyperparameters):
        """Test m = 1 with the identity order gives LML(2 points) - LML(first point)."""
        obj = Objective(
            kind=ObjectiveKind.CLML,
            dataset=two_point_dataset,
            clml=ClmlConfig(m=1, permutations=1, shuffle=False),
        )
        assert eval_objective(obj, unit_hyperparameters)[0] == pytest.approx(-0.941764, abs=1e-6)

    def test_default_conditioning_size(self):
        """Test the default m is ceil(0.8 N) and an oversized m is refused."""
        assert ClmlConfig().conditioning_size(10) == 8
        assert ClmlConfig().conditioning_size(11) == 9
        with pytest.raises(ValueError):
            ClmlConfig(m=5).conditioning_size(4)

    def test_orders_are_seeded(self, small_dataset):
        """Test equal seeds give equal permutations and shuffle=False gives the identity."""
        obj = Objective(kind=ObjectiveKind.CLML, dataset=small_dataset, clml=ClmlConfig(permutations=3, seed=4))
        first, second = clml_orders(obj), clml_orders(obj)
        assert all(np.array_equal(a, b) for a, b in zip(first, second))
        assert sorted(first[0].tolist()) == list(range(small_dataset.n))

        plain = obj.model_copy(update={"clml": ClmlConfig(permutations=2, shuffle=False)})
        assert all(np.array_equal(o, np.arange(small_dataset.n)) for o in clml_orders(plain))

    def test_chain_rule(self):
        """Test LML(all) - LML(A) equals log p(y_B | y_A) on random instances."""
        for seed in range(20):
            d, h, spec = random_instance(Seed(value=seed))
            order = Seed(value=seed).spawn(9).generator().permutation(d.n)
            m = int(math.ceil(0.8 * d.n))
            assert clml_chain_residual(d, h, spec, order, m) <= 1e-8 * max(1.0, d.n)

    def test_conditional_empty_sets(self, small_dataset, small_hyperparameters, rbf_spec):
        """Test the conditional is 0 with nothing held out and the LML with nothing held in."""
        order = np.arange(small_dataset.n)
        assert conditional_log_likelihood(
            small_dataset, small_hyperparameters, rbf_spec, order, small_dataset.n
        ) == 0.0
        assert conditional_log_likelihood(
            small_dataset, small_hyperparameters, rbf_spec, order, 0
        ) == pytest.approx(log_marginal_likelihood(small_dataset, small_hyperparameters, rbf_spec).total)

    def test_gradient_matches_finite_differences(self):
        """Test the CLML gradient on 10 random instances."""
        for seed in range(10):
            d, h, spec = random_instance(Seed(value=seed))
            obj = Objective(
                kind=ObjectiveKind.CLML, dataset=d, spec=spec, clml=ClmlConfig(permutations=3, seed=seed)
            )
            assert np.all(_relative(eval_objective(obj, h)[1], _central(obj, h)) <= 1e-5)


@pytest.mark.unit
class TestEvalObjective:
    """Tests for objective dispatch, masking and weight decay."""

    def test_lml_value(self, small_dataset, small_hyperparameters, rbf_spec):
        """Test the lml objective returns the LML total."""
        obj = Objective(dataset=small_dataset)
        expected = log_marginal_likelihood(small_dataset, small_hyperparameters, rbf_spec).total
        assert eval_objective(obj, small_hyperparameters)[0] == expected

    def test_profiled_value(self, small_dataset, rbf_spec):
        """Test the profiled objective returns the profiled total and ignores sigma_f^2."""
        h = Hyperparameters.from_values(lengthscale=1.0, noise=0.05, noise_mode=NoiseMode.RATIO)
        obj = Objective(kind=ObjectiveKind.PROFILED_LML, dataset=small_dataset)
        value, grad = eval_objective(obj, h)
        assert value == profiled_value(small_dataset, h, rbf_spec)
        assert grad[1] == 0.0

    def test_fixed_coordinates_have_zero_gradient(self, small_dataset, small_hyperparameters):
        """Test fixed coordinates are masked out."""
        obj = Objective(dataset=small_dataset, fixed=[Coordinate.LENGTHSCALE, Coordinate.NOISE])
        _, grad = eval_objective(obj, small_hyperparameters)
        assert grad[0] == 0.0
        assert grad[2] == 0.0
        assert grad[1] != 0.0

    def test_zero_noise_is_inactive(self, small_dataset):
        """Test log_noise = -inf is never optimized."""
        h = Hyperparameters.from_values(lengthscale=1.0, noise=0.0)
        mask = active_mask(Objective(dataset=small_dataset), h)
        assert mask.tolist() == [True, True, False]

    def test_network_mask(self, small_dataset, deep_spec, deep_hyperparameters):
        """Test network weights are active for deep kernels unless fixed."""
        obj = Objective(dataset=small_dataset, spec=deep_spec)
        assert np.all(active_mask(obj, deep_hyperparameters)[3:])
        fixed = Objective(dataset=small_dataset, spec=deep_spec, fixed=[Coordinate.NET])
        assert not np.any(active_mask(fixed, deep_hyperparameters)[3:])

    def test_weight_decay(self, small_dataset, deep_spec, deep_hyperparameters):
        """Test weight decay subtracts lambda/2 ||w||^2 and lambda w."""
        plain = Objective(dataset=small_dataset, spec=deep_spec)
        decayed = Objective(dataset=small_dataset, spec=deep_spec, weight_decay=0.5)
        w = deep_hyperparameters.net_weights.flatten()
        v0, g0 = eval_objective(plain, deep_hyperparameters)
        v1, g1 = eval_objective(decayed, deep_hyperparameters)
        assert v0 - v1 == pytest.approx(0.25 * float(w @ w), abs=1e-12)
        assert np.allclose(g0[3:] - g1[3:], 0.5 * w, atol=1e-12)
        assert np.array_equal(g0[:3], g1[:3])

    def test_deep_lml_gradient(self, small_dataset, deep_spec, deep_hyperparameters):
        """Test the deep lml objective gradient against finite differences."""
        obj = Objective(dataset=small_dataset, spec=deep_spec, weight_decay=0.1)
        _, grad = eval_objective(obj, deep_hyperparameters)
        assert np.all(_relative(grad, _central(obj, deep_hyperparameters)) <= 1e-5)


@pytest.mark.unit
class TestInitialHyperparameters:
    """Tests for scale-aware starting points."""

    def test_rbf(self, rbf_spec):
        """Test median distance, target variance and one tenth of it as noise."""
        d = Dataset(X=[0.0, 1.0, 3.0], y=[1.0, 2.0, 3.0])
        h = initial_hyperparameters(d, rbf_spec, Seed(value=0))
        var_y = float(np.var([1.0, 2.0, 3.0]))
        assert h.lengthscale == pytest.approx(2.0)
        assert h.signal_var == pytest.approx(var_y)
        assert h.noise_var == pytest.approx(0.1 * var_y)
        assert h.net_weights is None

    def test_ratio_mode(self, rbf_spec):
        """Test ratio mode starts from a noise ratio of 0.1."""
        d = Dataset(X=[0.0, 1.0], y=[1.0, -1.0])
        h = initial_hyperparameters(d, rbf_spec, Seed(value=0), NoiseMode.RATIO)
        assert h.noise_ratio == pytest.approx(0.1)

    def test_constant_targets(self, rbf_spec):
        """Test zero target variance falls back to 1."""
        h = initial_hyperparameters(Dataset(X=[0.0, 1.0], y=[2.0, 2.0]), rbf_spec, Seed(value=0))
        assert h.signal_var == 1.0

    def test_deep_is_seeded(self, small_dataset, deep_spec):
        """Test deep starting points carry seeded network weights."""
        a = initial_hyperparameters(small_dataset, deep_spec, Seed(value=5))
        b = initial_hyperparameters(small_dataset, deep_spec, Seed(value=5))
        assert a.net_weights is not None
        assert np.array_equal(a.to_vector(), b.to_vector())

    def test_deep_without_network(self, small_dataset):
        """Test a deep spec without an architecture is refused."""
        with pytest.raises(ValueError):
            initial_hyperparameters(small_dataset, KernelSpec(family=KernelFamily.DEEP_RBF), Seed(value=0))


@pytest.mark.unit
class TestNoiseModes:
    """Tests for noise-mode conversion and overrides."""

    def test_round_trip(self, small_hyperparameters):
        """Test converting to ratio mode keeps the effective noise."""
        ratio = to_noise_mode(small_hyperparameters, NoiseMode.RATIO)
        assert ratio.noise_var == pytest.approx(small_hyperparameters.noise_var)
        back = to_noise_mode(ratio, NoiseMode.ABSOLUTE)
        assert back.log_noise == pytest.approx(small_hyperparameters.log_noise)

    def test_overrides(self, small_hyperparameters):
        """Test overrides replace natural values and zero noise maps to -inf."""
        h = with_overrides(small_hyperparameters, lengthscale=3.0, noise=0.0)
        assert h.lengthscale == pytest.approx(3.0)
        assert h.log_noise == -math.inf
        assert h.signal_var == small_hyperparameters.signal_var
