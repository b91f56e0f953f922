"""
Binary checkpoint format (little-endian throughout):

    magic b"SCNC" | u32 version
    u32 tensor count, then per tensor:
        u32 name length | UTF-8 name | u32 rank | u64 extent * rank | f8 payload
    u32 scalar count, then per scalar:
        u32 name length | UTF-8 name | f8 value

Tensor names are ``param/<name>``, ``buffer/<name>``, ``momentum/<name>``
and ``trace/<key>``. Scalars hold the training counters plus one
``group/<name>`` per parameter (1 pretrained, 0 fresh). Records are
written in model order, so the same model and state always produce the
same bytes.
"""

import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from engine.errors import CheckpointError
from training.state import TRACE_KEYS, TrainState

MAGIC = b"SCNC"
VERSION = 1


def _pack_name(name):
    raw = name.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def encode(tensors, scalars) -> bytes:
    chunks = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(tensors))]
    for name, array in tensors.items():
        array = np.require(np.asarray(array, dtype="<f8"), requirements="C")
        chunks.append(_pack_name(name))
        chunks.append(struct.pack("<I", array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}Q", *array.shape))
        chunks.append(array.tobytes(order="C"))
    chunks.append(struct.pack("<I", len(scalars)))
    for name, value in scalars.items():
        chunks.append(_pack_name(name))
        chunks.append(struct.pack("<d", float(value)))
    return b"".join(chunks)


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.offset = 0
        self.path = path

    def take(self, n):
        if self.offset + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated at byte {self.offset}")
        chunk = self.data[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def name(self):
        (length,) = self.unpack("<I")
        try:
            return self.take(length).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"{self.path}: record name is not UTF-8") from exc


def decode(data: bytes, path="<bytes>"):
    reader = _Reader(data, path)
    if reader.take(4) != MAGIC:
        raise CheckpointError(f"{path}: not a SalClassNet checkpoint")
    (version,) = reader.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    tensors = OrderedDict()
    (count,) = reader.unpack("<I")
    for _ in range(count):
        name = reader.name()
        (rank,) = reader.unpack("<I")
        shape = reader.unpack(f"<{rank}Q") if rank else ()
        n = int(np.prod(shape)) if rank else 1
        payload = reader.take(8 * n)
        tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64)
    scalars = OrderedDict()
    (count,) = reader.unpack("<I")
    for _ in range(count):
        name = reader.name()
        (scalars[name],) = reader.unpack("<d")
    if reader.offset != len(data):
        raise CheckpointError(f"{path}: {len(data) - reader.offset} trailing bytes")
    return tensors, scalars


def save_checkpoint(path, model, state: TrainState = None):
    state = state or TrainState()
    tensors = OrderedDict(model.state_dict())
    for name, _ in model.named_parameters():
        if name in state.optimizer.velocity:
            tensors[f"momentum/{name}"] = state.optimizer.velocity[name]
    for key in TRACE_KEYS:
        tensors[f"trace/{key}"] = np.asarray(state.traces.get(key, []), dtype=np.float64)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    scalars = state.scalars()
    for name, _ in model.named_parameters():
        scalars[f"group/{name}"] = 1.0 if model.parameter_group(name) == "pretrained" else 0.0
    path.write_bytes(encode(tensors, scalars))
    return path


def read_checkpoint(path):
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    return decode(path.read_bytes(), path)


def load_checkpoint(path, model, strict=True) -> TrainState:
    """
    Restore weights, buffers and training state into ``model``. With
    ``strict=False`` entries the model lacks (or that are missing from the
    file) are skipped; the skipped model entries are listed on the returned
    state as ``missing``.
    """
    tensors, scalars = read_checkpoint(path)
    model_state = OrderedDict((k, v) for k, v in tensors.items() if k.startswith(("param/", "buffer/")))
    if not strict:
        current = model.state_dict()
        model_state = OrderedDict(
            (k, v) for k, v in model_state.items() if k in current and v.shape == current[k].shape
        )
    try:
        missing = model.load_state_dict(model_state, strict=strict)
    except Exception as exc:
        raise CheckpointError(f"{path}: {exc}") from exc

    state = TrainState()
    if strict:
        try:
            state.load_scalars(scalars)
        except KeyError as exc:
            raise CheckpointError(f"{path}: missing state scalar {exc}") from exc
        names = {name for name, _ in model.named_parameters()}
        for key, array in tensors.items():
            if key.startswith("momentum/") and key[len("momentum/") :] in names:
                state.optimizer.velocity[key[len("momentum/") :]] = array.copy()
        for key in TRACE_KEYS:
            state.traces[key] = tensors.get(f"trace/{key}", np.zeros(0)).tolist()
        for name in names:
            if f"group/{name}" in scalars:
                model.set_parameter_group(name, "pretrained" if scalars[f"group/{name}"] else "fresh")
    state.missing = missing
    return state
