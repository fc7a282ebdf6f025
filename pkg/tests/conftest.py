"""Test configuration and fixtures."""

import math

import numpy as np
import pytest

from mllab.feature_net import net_init
from mllab.models import (
    Dataset,
    Hyperparameters,
    KernelFamily,
    KernelSpec,
    NetSpec,
    NoiseMode,
    Seed,
)

# with l = 1 these two inputs give K_hat = [[1, 0.5], [0.5, 1]]
HALF_CORRELATION_GAP = math.sqrt(2.0 * math.log(2.0))


@pytest.fixture
def rbf_spec():
    """Plain RBF kernel."""
    return KernelSpec()


@pytest.fixture
def two_point_dataset():
    """Two points at half correlation under l = 1 with targets [1, 1]."""
    return Dataset(X=[0.0, HALF_CORRELATION_GAP], y=[1.0, 1.0])


@pytest.fixture
def unit_hyperparameters():
    """l = 1, sigma_f^2 = 1 and no noise."""
    return Hyperparameters.from_values(lengthscale=1.0, signal_var=1.0, noise=0.0)


@pytest.fixture
def small_dataset():
    """Twelve seeded 1-D points with a smooth target."""
    rng = Seed(value=11).generator()
    x = np.sort(rng.uniform(0.0, 6.0, size=12))
    y = np.sin(x) + 0.1 * rng.standard_normal(12)
    return Dataset(X=x, y=y)


@pytest.fixture
def small_hyperparameters():
    """Well-conditioned absolute-mode hyperparameters for small_dataset."""
    return Hyperparameters.from_values(lengthscale=1.2, signal_var=0.8, noise=0.05)


@pytest.fixture
def deep_spec():
    """Deep RBF kernel on a 1 -> 3 -> 2 tanh network."""
    return KernelSpec(family=KernelFamily.DEEP_RBF, net=NetSpec.mlp([1, 3, 2]))


@pytest.fixture
def deep_hyperparameters(deep_spec):
    """Ratio-mode hyperparameters carrying seeded network weights."""
    return Hyperparameters(
        log_lengthscale=math.log(0.9),
        log_signal_var=math.log(1.5),
        log_noise=math.log(0.05),
        noise_mode=NoiseMode.RATIO,
        net_weights=net_init(deep_spec.net, Seed(value=3)),
    )


@pytest.fixture
def write_csv(tmp_path):
    """Factory writing text to a CSV file under tmp_path."""

    def _write(text, name="data.csv"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write
