from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional

import numpy as np

from engine import ops
from engine.errors import ConfigError, ContractError, ShapeError
from engine.seeding import rng_stream
from engine.tensor import Tensor
from networks.base_network import BaseNetwork, he_normal


@dataclass
class ClassifierConfig:
    n_classes: int = 4
    input_channels: int = 4
    stage_channels: List[int] = field(default_factory=lambda: [16, 32, 64])
    convs_per_stage: List[int] = field(default_factory=lambda: [1, 1, 1])
    fc_width: int = 64
    input_size: int = 64
    kernel_size: int = 3

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown classifier keys: {sorted(unknown)}")
        return cls(**data)

    def validate(self):
        if self.input_channels not in (3, 4):
            raise ConfigError(f"input_channels must be 3 or 4, got {self.input_channels}")
        if self.n_classes < 2:
            raise ConfigError(f"n_classes must be >= 2, got {self.n_classes}")
        if len(self.stage_channels) != len(self.convs_per_stage) or not self.stage_channels:
            raise ConfigError("classifier stage_channels and convs_per_stage must be non-empty and aligned")
        if self.fc_width < 0:
            raise ConfigError("fc_width must be >= 0")
        return self


@dataclass
class ClassifierOutput:
    logits: Tensor
    probs: Tensor

    def predictions(self):
        return np.argmax(self.probs.data, axis=1)


def extend_first_layer(kernels3: Tensor, rng_seed=0, init_scale: Optional[float] = None) -> Tensor:
    """
    Add a saliency input channel to [K,3,kh,kw] first-layer kernels.
    Channels 0-2 are copied bit for bit; channel 3 is drawn from
    N(0, init_scale^2), with the fan-in rule sqrt(2 / (4*kh*kw)) by default.
    """
    data = np.asarray(kernels3.data if isinstance(kernels3, Tensor) else kernels3)
    if data.ndim != 4 or data.shape[1] != 3:
        raise ContractError(f"extend_first_layer needs [K,3,kh,kw] kernels, got {data.shape}")
    k, _, kh, kw = data.shape
    if init_scale is None:
        init_scale = np.sqrt(2.0 / (4 * kh * kw))
    rng = rng_stream(rng_seed, "init", 1)
    saliency = rng.normal(0.0, 1.0, size=(k, 1, kh, kw)) * init_scale
    return Tensor(np.concatenate([data, saliency], axis=1))


class RGBSClassifier(BaseNetwork):
    """
    Conv classifier over RGB or RGBS input. The first-layer kernel is kept
    as two parameters, ``weight_rgb`` [K,3,k,k] and ``weight_sal`` [K,1,k,k],
    concatenated on every forward so the saliency slice can form its own
    learning-rate group.
    """

    def __init__(self, config: ClassifierConfig, rng_seed=0, name="classifier"):
        super().__init__(name, network_type="rgbs-classifier")
        self.config = config.validate()
        rng = rng_stream(rng_seed, "init", 2)
        k = config.kernel_size
        fan_in = config.input_channels * k * k
        first = config.stage_channels[0]

        self.weight_rgb = self.register_parameter("stage0.conv0.weight_rgb", he_normal(rng, (first, 3, k, k), fan_in))
        self.weight_sal = None
        if config.input_channels == 4:
            self.weight_sal = self.register_parameter(
                "stage0.conv0.weight_sal", he_normal(rng, (first, 1, k, k), fan_in)
            )
        self.first_bias = self.register_parameter("stage0.conv0.bias", np.zeros(first))

        self.layers = []
        in_channels = first
        for stage, (width, count) in enumerate(zip(config.stage_channels, config.convs_per_stage)):
            convs = []
            start = 1 if stage == 0 else 0
            for index in range(start, count):
                prefix = f"stage{stage}.conv{index}"
                weight = self.register_parameter(
                    prefix + ".weight", he_normal(rng, (width, in_channels, k, k), in_channels * k * k)
                )
                bias = self.register_parameter(prefix + ".bias", np.zeros(width))
                convs.append((weight, bias))
                in_channels = width
            self.layers.append(convs)

        extent = config.input_size
        for _ in config.stage_channels:
            extent = ops.pooled_extent(extent, 2, 2)
        flat = in_channels * extent * extent

        self.hidden = None
        if config.fc_width:
            self.hidden = (
                self.register_parameter("fc.weight", he_normal(rng, (config.fc_width, flat), flat)),
                self.register_parameter("fc.bias", np.zeros(config.fc_width)),
            )
            flat = config.fc_width
        self.head = (
            self.register_parameter("head.weight", rng.normal(0.0, np.sqrt(1.0 / flat), (config.n_classes, flat))),
            self.register_parameter("head.bias", np.zeros(config.n_classes)),
        )

    def first_layer_kernel(self) -> Tensor:
        if self.weight_sal is None:
            return self.weight_rgb
        return ops.concat([self.weight_rgb, self.weight_sal], axis=1)

    def forward(self, inputs: Tensor) -> ClassifierOutput:
        cfg = self.config
        expected = (cfg.input_channels, cfg.input_size, cfg.input_size)
        if inputs.ndim != 4 or inputs.shape[1:] != expected:
            raise ShapeError(f"classifier expects [N,{','.join(map(str, expected))}], got {inputs.shape}")
        pad = cfg.kernel_size // 2
        x = ops.relu(ops.conv2d(inputs, self.first_layer_kernel(), self.first_bias, padding=pad))
        for convs in self.layers:
            for weight, bias in convs:
                x = ops.relu(ops.conv2d(x, weight, bias, padding=pad))
            x, _ = ops.maxpool2d(x, 2, 2)
        x = ops.flatten(x)
        if self.hidden is not None:
            x = ops.relu(ops.linear(x, *self.hidden))
        logits = ops.linear(x, *self.head)
        return ClassifierOutput(logits=logits, probs=ops.softmax(logits))

    __call__ = forward


def forward_classify(net: RGBSClassifier, rgbs: Tensor) -> ClassifierOutput:
    return net.forward(rgbs)


def extend_classifier(rgb_net: RGBSClassifier, rng_seed=0, init_scale=None) -> RGBSClassifier:
    """
    4-channel classifier whose weights come from a trained 3-channel one.
    Every copied parameter joins the ``pretrained`` group; the new saliency
    kernel slice is the only ``fresh`` parameter.
    """
    if rgb_net.config.input_channels != 3:
        raise ContractError("extend_classifier needs a 3-channel classifier")
    config = ClassifierConfig(**{**rgb_net.config.__dict__, "input_channels": 4})
    extended = RGBSClassifier(config, rng_seed=rng_seed, name=rgb_net.name)
    kernels = extend_first_layer(rgb_net.weight_rgb, rng_seed=rng_seed, init_scale=init_scale)
    source = dict(rgb_net.named_parameters())
    for name, tensor in extended.named_parameters():
        if name == "stage0.conv0.weight_sal":
            tensor.data[...] = kernels.data[:, 3:]
            continue
        tensor.data[...] = source[name].data
        extended.set_parameter_group(name, "pretrained")
    return extended


def parameter_groups(net: BaseNetwork) -> Dict[str, Dict[str, Tensor]]:
    """Partition of ``net``'s parameters into ``pretrained`` and ``fresh``."""
    groups = {"pretrained": {}, "fresh": {}}
    for name, tensor in net.named_parameters():
        groups[net.parameter_group(name)][name] = tensor
    return groups
