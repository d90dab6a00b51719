import numpy as np
import pytest

from specbench.datagen import (
    GenerationConfig,
    build_dataset,
    generate_dataset_config,
)
from specbench.peaks import TestGridConfig, VariationConfig


def mini_generation_config(master_seed: int = 11) -> GenerationConfig:
    """Small-but-real config: 8 classes, 300 datapoints, seconds to build."""
    return GenerationConfig(
        n_datapoints=300,
        n_classes=8,
        min_peaks=2,
        max_peaks=4,
        border_margin=12.0,
        min_peak_separation=8.0,
        train_samples_per_class=12,
        val_fraction=1.0 / 6.0,
        training_variation=VariationConfig(6.0, 0.05, (2.0, 4.0)),
        test_grid=TestGridConfig(3.0, 0.02, 2.0),
        master_seed=master_seed,
    )


@pytest.fixture(scope="session")
def mini_config():
    return generate_dataset_config(mini_generation_config())


@pytest.fixture(scope="session")
def mini_splits(mini_config):
    return build_dataset(mini_config, threads=2)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240811)
