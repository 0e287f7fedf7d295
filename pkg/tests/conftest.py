import numpy as np
import pytest

from annealrbm.model import RbmModel, UnitKind


def random_bernoulli_model(n_visible, n_hidden, rng, scale=0.8,
                           label_span=None):
    return RbmModel(
        rng.normal(scale=scale, size=(n_visible, n_hidden)),
        rng.normal(scale=scale, size=n_visible),
        rng.normal(scale=scale, size=n_hidden),
        (UnitKind.BERNOULLI,) * n_visible,
        label_span,
    )


def random_grbm(n_gaussian, n_bernoulli, n_hidden, rng, scale=0.5):
    kinds = ((UnitKind.GAUSSIAN,) * n_gaussian
             + (UnitKind.BERNOULLI,) * n_bernoulli)
    n_visible = n_gaussian + n_bernoulli
    return RbmModel(
        rng.normal(scale=scale, size=(n_visible, n_hidden)),
        rng.normal(scale=scale, size=n_visible),
        rng.normal(scale=scale, size=n_hidden),
        kinds,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
