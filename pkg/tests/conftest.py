import numpy as np
import pytest

from fixations.dataset import DataConfig, load_samples
from fixations.synth import synth_dataset
from networks.rgbs_classifier import ClassifierConfig
from networks.salclassnet import SalClassNet
from networks.saliency_net import SaliencyNetConfig
from training.trainer import TrainConfig


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def tiny_saliency_config():
    return SaliencyNetConfig(stage_channels=[4, 6], convs_per_stage=[1, 1], input_size=16, coarse_size=4)


@pytest.fixture
def tiny_classifier_config():
    return ClassifierConfig(
        n_classes=3, input_channels=4, stage_channels=[4, 6], convs_per_stage=[1, 1], fc_width=8, input_size=16
    )


@pytest.fixture
def tiny_model(tiny_saliency_config, tiny_classifier_config):
    return SalClassNet(tiny_saliency_config, tiny_classifier_config, rng_seed=3)


@pytest.fixture
def tiny_data_config():
    return DataConfig(rescale_target=18, crop_size=16)


@pytest.fixture
def tiny_train_config():
    return TrainConfig(
        alpha=0.2, lr=0.01, momentum=0.9, weight_decay=0.0005, batch_size=4, patience_epochs=50, max_epochs=2, seed=5
    )


@pytest.fixture(scope="session")
def synth_root(tmp_path_factory):
    """Two classes, ten 24x24 images each: 16 train, 2 val, 2 test."""
    root = tmp_path_factory.mktemp("synth")
    synth_dataset(root, n_classes=2, n_per_class=10, image_size=24, seed=11)
    return root


@pytest.fixture(scope="session")
def synth_manifest(synth_root):
    from fixations.manifest import load_manifest

    return load_manifest(synth_root / "manifest.tsv")


@pytest.fixture(scope="session")
def synth_splits(synth_manifest):
    config = DataConfig(rescale_target=18, crop_size=16)
    return {split: load_samples(synth_manifest, split, config) for split in ("train", "val", "test")}


def tiny_two_class_model(seed=3, input_channels=4):
    saliency = SaliencyNetConfig(stage_channels=[4, 6], convs_per_stage=[1, 1], input_size=16, coarse_size=4)
    classifier = ClassifierConfig(
        n_classes=2,
        input_channels=input_channels,
        stage_channels=[4, 6],
        convs_per_stage=[1, 1],
        fc_width=8,
        input_size=16,
    )
    return SalClassNet(saliency, classifier, rng_seed=seed)
