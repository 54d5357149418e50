import numpy as np
import pytest

from condmon.som import GridTopology, SomModel, TrainingMeta


def make_model(codebook, rows, cols, sigma=1.0):
    """Model with a hand-picked codebook, bypassing training."""
    return SomModel(
        topology=GridTopology(rows=rows, cols=cols),
        codebook=np.asarray(codebook, dtype=float),
        sigma=sigma,
        training_meta=TrainingMeta(epochs=0, final_distortion=0.0, data_fingerprint=""),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20250810)
