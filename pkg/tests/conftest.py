"""Shared fixtures: reference pipelines on the built-in models.

The heavy runs (frame construction, full-evolution propagation, all three
wave-operator routes) are session-scoped so every test module asserts
against the same numbers.
"""

import pytest

from blochwave import landau_zener_model, random_smooth_model, three_level_model

from tests.helpers import PipelineBundle


@pytest.fixture(scope="session")
def lz_bundle():
    """Two-level sweep, gamma=2, over [-20, 20]."""
    return PipelineBundle(landau_zener_model(2.0), -20.0, 20.0, n_checkpoints=161)


@pytest.fixture(scope="session")
def tl_bundle():
    """Three-level system, gamma=10, a=1, over [0, 20]."""
    return PipelineBundle(three_level_model(10.0, 1.0), 0.0, 20.0, n_checkpoints=121)


@pytest.fixture(scope="session")
def random_bundle():
    """A seeded smooth two-block model over a short horizon."""
    return PipelineBundle(
        random_smooth_model(4, 2, seed=11, gamma=12.0), 0.0, 4.0, n_checkpoints=81
    )
