import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from engine.errors import ContractError

_local = threading.local()


def _graph_stack():
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def current_graph() -> Optional["Graph"]:
    """The innermost active graph of this thread, or None outside any ``with Graph()``."""
    stack = _graph_stack()
    return stack[-1] if stack else None


class Tensor:
    """
    Dense float64 array with optional participation in a gradient tape.

    ``data`` is always a C-contiguous float64 ndarray. ``grad`` stays None
    until a backward pass reaches the tensor, then has the same shape as
    ``data`` and accumulates over successive passes until ``zero_grad``.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_tracked")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.require(np.asarray(data, dtype=np.float64), requirements="C")
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        # True when the tensor is a leaf needing gradients or the output of a recorded node
        self._tracked = self.requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"


@dataclass
class Node:
    kind: str
    inputs: tuple
    output: Tensor
    backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class Graph:
    """
    Gradient tape. Operations executed while the graph is active append a
    node; nodes are appended after their inputs exist, so list order is a
    topological order.
    """

    nodes: list = field(default_factory=list)

    def __enter__(self):
        _graph_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _graph_stack().pop()
        return False

    def record(self, kind, inputs, output, backward_fn):
        node = Node(kind, tuple(inputs), output, backward_fn)
        self.nodes.append(node)
        output._tracked = True
        return node

    def backward(self, loss: Tensor):
        return backward(self, loss)


def make_output(kind, inputs, out_data, backward_fn) -> Tensor:
    """Wrap ``out_data`` and record the op on the active graph when any input is tracked."""
    out = Tensor(out_data)
    graph = current_graph()
    if graph is not None and any(t._tracked for t in inputs):
        graph.record(kind, inputs, out, backward_fn)
    return out


def backward(graph: Graph, loss: Tensor):
    """
    Reverse-mode sweep over ``graph`` seeded with d(loss)/d(loss) = 1.

    Leaf tensors with ``requires_grad`` receive (accumulate) ``.grad``.
    Returns the mapping of those leaves to their gradient from this pass.
    """
    if loss.ndim != 0:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")

    grads = {id(loss): np.ones_like(loss.data)}
    tensors = {id(loss): loss}

    for node in reversed(graph.nodes):
        upstream = grads.pop(id(node.output), None)
        if upstream is None:
            continue
        input_grads = node.backward_fn(upstream)
        for inp, g in zip(node.inputs, input_grads):
            if g is None or not inp._tracked:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + g
            else:
                grads[key] = np.array(g, dtype=np.float64, copy=True)
                tensors[key] = inp

    leaf_grads = {}
    for key, g in grads.items():
        tensor = tensors[key]
        if not tensor.requires_grad:
            continue
        tensor.grad = g if tensor.grad is None else tensor.grad + g
        leaf_grads[tensor] = g
    return leaf_grads
