"""Named experiment settings shared by the acceptance suite and scripts/.

``GEOMETRY`` is the desk-scale embedding study: 3 Gaussian blobs in 16-d and
a 4-layer, 100-unit ReLU MLP. Batchnorm is off and the optimizer is plain SGD
with Nesterov momentum (see the README for why).
"""

from .config import ExperimentConfig

GEOMETRY = dict(
    dataset="blobs",
    blob_dim=16,
    blob_classes=3,
    blob_train_per_class=200,
    blob_test_per_class=50,
    blob_spread=0.1,
    hidden="100,100,100",
    feature_dim=100,
    use_batchnorm=False,
    optimizer="sgd_nesterov",
    lr=0.05,
    momentum=0.9,
    weight_decay=1e-4,
    epochs=30,
    batch_size=64,
)

# five blobs, the last one never seen in training; wider clusters so the
# held-out class is neither trivially accepted nor trivially rejected
NOVELTY = dict(GEOMETRY, blob_classes=5, known_classes="0,1,2,3", blob_spread=1.0, mode="softmax+ole", lam=0.25)

SWEEP_LAMBDAS = (0.0, 1 / 16, 1 / 4, 1 / 2)


def preset(name: str, **changes) -> ExperimentConfig:
    base = {"geometry": GEOMETRY, "novelty": NOVELTY}[name]
    return ExperimentConfig(**{**base, **changes})
