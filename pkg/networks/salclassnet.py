from dataclasses import dataclass
from typing import Optional

import numpy as np

from engine import ops
from engine.errors import ConfigError, ShapeError
from engine.tensor import Tensor
from networks.base_network import BaseNetwork
from networks.rgbs_classifier import ClassifierConfig, RGBSClassifier
from networks.saliency_net import SaliencyNet, SaliencyNetConfig


class BatchNormBridge(BaseNetwork):
    """Single-channel batch normalization between saliency detector and classifier."""

    def __init__(self, name="bridge"):
        super().__init__(name, network_type="batchnorm-bridge")
        self.gamma = self.register_parameter("gamma", np.ones(1), decay=False)
        self.beta = self.register_parameter("beta", np.zeros(1), decay=False)
        self.running_mean = self.register_buffer("running_mean", np.zeros(1))
        self.running_var = self.register_buffer("running_var", np.ones(1))

    def forward(self, saliency: Tensor) -> Tensor:
        return ops.batchnorm2d(
            saliency,
            self.gamma,
            self.beta,
            self.running_mean,
            self.running_var,
            mode="train" if self.training else "eval",
        )

    __call__ = forward


@dataclass
class SalClassOutput:
    coarse: Tensor
    full: Tensor
    bridged: Optional[Tensor]
    logits: Tensor
    probs: Tensor

    def predictions(self):
        return np.argmax(self.probs.data, axis=1)


class SalClassNet(BaseNetwork):
    """
    Saliency detector -> batch-norm bridge -> RGBS classifier, as one model.

    With a 3-channel classifier the bridge is skipped and the classifier sees
    RGB only; the saliency branch still produces maps for the L_S term.
    ``saliency_override`` feeds given maps (e.g. ground truth) through the
    bridge instead of the predicted ones.
    """

    def __init__(self, saliency_config: SaliencyNetConfig, classifier_config: ClassifierConfig, rng_seed=0):
        super().__init__("salclassnet", network_type="salclassnet")
        if saliency_config.input_size != classifier_config.input_size:
            raise ConfigError(
                f"saliency input {saliency_config.input_size} != classifier input {classifier_config.input_size}"
            )
        self.saliency = self.add_child("saliency", SaliencyNet(saliency_config, rng_seed=rng_seed))
        self.bridge = self.add_child("bridge", BatchNormBridge())
        self.classifier = self.add_child("classifier", RGBSClassifier(classifier_config, rng_seed=rng_seed))

    @property
    def uses_saliency(self):
        return self.classifier.config.input_channels == 4

    def replace_classifier(self, classifier: RGBSClassifier):
        if classifier.config.input_size != self.saliency.config.input_size:
            raise ShapeError("replacement classifier has a different input size")
        self.classifier = self.add_child("classifier", classifier)
        return classifier

    def forward(self, images: Tensor, saliency_override: Optional[Tensor] = None) -> SalClassOutput:
        coarse, full = self.saliency.forward(images)
        bridged = None
        if self.uses_saliency:
            source = full if saliency_override is None else saliency_override
            if source.shape != full.shape:
                raise ShapeError(f"saliency override shape {source.shape} != {full.shape}")
            bridged = self.bridge.forward(source)
            out = self.classifier.forward(ops.concat([images, bridged], axis=1))
        else:
            out = self.classifier.forward(images)
        return SalClassOutput(coarse=coarse, full=full, bridged=bridged, logits=out.logits, probs=out.probs)

    __call__ = forward
