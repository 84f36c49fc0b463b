import pytest

from ole.config import ExperimentConfig

TINY = dict(
    blob_dim=6,
    blob_classes=3,
    blob_train_per_class=20,
    blob_test_per_class=8,
    hidden="8",
    feature_dim=6,
    epochs=3,
    batch_size=16,
    lr=0.05,
    use_batchnorm=False,
)


@pytest.fixture
def tiny_cfg(tmp_path):
    """A config that trains in well under a second."""
    return ExperimentConfig(**TINY, output_dir=str(tmp_path / "run"))
