from collections import OrderedDict
from typing import Dict, Iterator, Tuple

import numpy as np

from engine.errors import ContractError
from engine.tensor import Tensor

GROUPS = ("pretrained", "fresh")


class BaseNetwork:
    """
    Base class for SalClassNet networks.
    Holds named parameters (each tagged with a learning-rate group),
    non-trainable buffers such as batch-norm running statistics, child
    networks, and the train/eval flag.
    """

    def __init__(self, name, network_type="base"):
        self.name = name
        self.network_type = network_type
        self.training = True
        self._parameters: "OrderedDict[str, Tensor]" = OrderedDict()
        self._groups: Dict[str, str] = {}
        self._no_decay = set()
        self._buffers: "OrderedDict[str, np.ndarray]" = OrderedDict()
        self._children: "OrderedDict[str, BaseNetwork]" = OrderedDict()

    def register_parameter(self, name, data, group="fresh", decay=True):
        if group not in GROUPS:
            raise ContractError(f"unknown parameter group {group!r}")
        tensor = Tensor(data, requires_grad=True, name=name)
        self._parameters[name] = tensor
        self._groups[name] = group
        if not decay:
            self._no_decay.add(name)
        return tensor

    def register_buffer(self, name, data):
        self._buffers[name] = np.array(data, dtype=np.float64)
        return self._buffers[name]

    def add_child(self, prefix, network):
        self._children[prefix] = network
        return network

    def train(self):
        self.training = True
        for child in self._children.values():
            child.train()
        return self

    def eval(self):
        self.training = False
        for child in self._children.values():
            child.eval()
        return self

    def named_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        yield from self._parameters.items()
        for prefix, child in self._children.items():
            for name, tensor in child.named_parameters():
                yield f"{prefix}.{name}", tensor

    def parameters(self):
        return [t for _, t in self.named_parameters()]

    def named_buffers(self) -> Iterator[Tuple[str, np.ndarray]]:
        yield from self._buffers.items()
        for prefix, child in self._children.items():
            for name, array in child.named_buffers():
                yield f"{prefix}.{name}", array

    def parameter_group(self, name) -> str:
        owner, local = self._resolve(name)
        return owner._groups[local]

    def set_parameter_group(self, name, group):
        if group not in GROUPS:
            raise ContractError(f"unknown parameter group {group!r}")
        owner, local = self._resolve(name)
        owner._groups[local] = group

    def decays(self, name) -> bool:
        owner, local = self._resolve(name)
        return local not in owner._no_decay

    def _resolve(self, name):
        if name in self._parameters:
            return self, name
        prefix, _, rest = name.partition(".")
        if prefix in self._children and rest:
            return self._children[prefix]._resolve(rest)
        raise KeyError(name)

    def zero_grad(self):
        for tensor in self.parameters():
            tensor.zero_grad()

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        """Parameters and buffers, keyed ``param/<name>`` and ``buffer/<name>``."""
        state = OrderedDict()
        for name, tensor in self.named_parameters():
            state[f"param/{name}"] = tensor.data.copy()
        for name, array in self.named_buffers():
            state[f"buffer/{name}"] = array.copy()
        return state

    def load_state_dict(self, state, strict=True):
        """Copy matching entries in place; returns the names left untouched."""
        missing = []
        for name, tensor in self.named_parameters():
            key = f"param/{name}"
            if key not in state:
                missing.append(key)
                continue
            self._copy_into(tensor.data, state[key], key)
        for name, array in self.named_buffers():
            key = f"buffer/{name}"
            if key not in state:
                missing.append(key)
                continue
            self._copy_into(array, state[key], key)
        if strict and missing:
            raise ContractError(f"state is missing entries: {', '.join(missing)}")
        return missing

    @staticmethod
    def _copy_into(target, source, key):
        source = np.asarray(source, dtype=np.float64)
        if source.shape != target.shape:
            raise ContractError(f"{key}: stored shape {source.shape} != {target.shape}")
        target[...] = source


def he_normal(rng, shape, fan_in):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
