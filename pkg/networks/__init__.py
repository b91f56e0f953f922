"""
SalClassNet networks: the saliency detector, the RGBS classifier and the
joint model that chains them through a batch-normalization bridge.
"""

from networks.base_network import BaseNetwork
from networks.rgbs_classifier import (
    ClassifierConfig,
    ClassifierOutput,
    RGBSClassifier,
    extend_classifier,
    extend_first_layer,
    forward_classify,
    parameter_groups,
)
from networks.salclassnet import BatchNormBridge, SalClassNet, SalClassOutput
from networks.saliency_map import SaliencyMap, normalize_map
from networks.saliency_net import SaliencyNet, SaliencyNetConfig, build_saliency_net, forward_saliency

__all__ = [
    "BaseNetwork",
    "BatchNormBridge",
    "ClassifierConfig",
    "ClassifierOutput",
    "RGBSClassifier",
    "SalClassNet",
    "SalClassOutput",
    "SaliencyMap",
    "SaliencyNet",
    "SaliencyNetConfig",
    "build_saliency_net",
    "extend_classifier",
    "extend_first_layer",
    "forward_classify",
    "forward_saliency",
    "normalize_map",
    "parameter_groups",
]
