from dataclasses import dataclass, field, fields
from typing import List

import numpy as np

from engine import ops
from engine.errors import BuildError, ConfigError, ShapeError
from engine.seeding import rng_stream
from engine.tensor import Tensor
from networks.base_network import BaseNetwork, he_normal


@dataclass
class SaliencyNetConfig:
    stage_channels: List[int] = field(default_factory=lambda: [16, 32, 64])
    convs_per_stage: List[int] = field(default_factory=lambda: [1, 1, 1])
    input_size: int = 64
    coarse_size: int = 8
    kernel_size: int = 3
    pool_window: int = 2
    pool_stride: int = 2
    ceil_pooling: bool = False

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown saliency_net keys: {sorted(unknown)}")
        return cls(**data)

    def validate(self):
        if not self.stage_channels:
            raise ConfigError("saliency_net needs at least one stage")
        if len(self.stage_channels) != len(self.convs_per_stage):
            raise ConfigError("stage_channels and convs_per_stage must have the same length")
        if any(c < 1 for c in self.stage_channels) or any(c < 1 for c in self.convs_per_stage):
            raise ConfigError("stage widths and conv counts must be positive")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError("kernel_size must be a positive odd number")
        return self

    def stage_extents(self):
        """Spatial extent after each pooling stage; BuildError names the stage that fails."""
        extents = []
        size = self.input_size
        for stage in range(len(self.stage_channels)):
            try:
                size = ops.pooled_extent(size, self.pool_window, self.pool_stride, self.ceil_pooling)
            except ShapeError as exc:
                raise BuildError(f"stage {stage}: {exc}", stage=stage) from exc
            extents.append(size)
        return extents

    @property
    def conv_count(self):
        return int(np.sum(self.convs_per_stage))


class SaliencyNet(BaseNetwork):
    """
    Top-down saliency detector: conv/ReLU stages each closed by a max pool,
    a 1x1 scoring conv to one channel (no squashing), and align-corners
    bilinear upsampling back to the input size.
    """

    def __init__(self, config: SaliencyNetConfig, rng_seed=0, name="saliency"):
        super().__init__(name, network_type="saliency-net")
        self.config = config.validate()
        extents = config.stage_extents()
        if extents[-1] != config.coarse_size:
            raise BuildError(
                f"stage {len(extents) - 1}: pooling yields {extents[-1]}x{extents[-1]}, "
                f"expected coarse size {config.coarse_size}",
                stage=len(extents) - 1,
            )

        rng = rng_stream(rng_seed, "init", 0)
        k = config.kernel_size
        in_channels = 3
        self.layers = []
        for stage, (width, count) in enumerate(zip(config.stage_channels, config.convs_per_stage)):
            convs = []
            for index in range(count):
                prefix = f"stage{stage}.conv{index}"
                weight = self.register_parameter(
                    prefix + ".weight", he_normal(rng, (width, in_channels, k, k), in_channels * k * k)
                )
                bias = self.register_parameter(prefix + ".bias", np.zeros(width))
                convs.append((weight, bias))
                in_channels = width
            self.layers.append(convs)

        self.score_weight = self.register_parameter(
            "score.weight", he_normal(rng, (1, in_channels, 1, 1), in_channels)
        )
        self.score_bias = self.register_parameter("score.bias", np.zeros(1))

    def features(self, images: Tensor) -> Tensor:
        """Last pooled feature block, [N, stage_channels[-1], c, c]."""
        cfg = self.config
        if images.ndim != 4 or images.shape[1] != 3 or images.shape[2:] != (cfg.input_size, cfg.input_size):
            raise ShapeError(
                f"saliency net expects [N,3,{cfg.input_size},{cfg.input_size}], got {images.shape}"
            )
        x = images
        pad = cfg.kernel_size // 2
        for convs in self.layers:
            for weight, bias in convs:
                x = ops.relu(ops.conv2d(x, weight, bias, stride=1, padding=pad))
            x, _ = ops.maxpool2d(x, cfg.pool_window, cfg.pool_stride, ceil_mode=cfg.ceil_pooling)
        return x

    def forward(self, images: Tensor):
        """Returns ``(coarse [N,1,c,c], full [N,1,S,S])`` with full = upsample(coarse)."""
        coarse = ops.conv2d(self.features(images), self.score_weight, self.score_bias)
        size = self.config.input_size
        return coarse, ops.bilinear_upsample(coarse, size, size)

    __call__ = forward


def build_saliency_net(config: SaliencyNetConfig, rng_seed=0) -> SaliencyNet:
    return SaliencyNet(config, rng_seed=rng_seed)


def forward_saliency(net: SaliencyNet, images: Tensor):
    return net.forward(images)
