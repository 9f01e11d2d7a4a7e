"""
SM-CNN assembly: layer descriptors, shape propagation, parameter init,
forward/backward over the layer chain, complexity accounting and a
checksummed binary checkpoint.

Parameters are an ordered ``dict[str, np.ndarray]`` keyed ``"<layer>.w"`` /
``"<layer>.b"`` where ``<layer>`` is the index in ``arch.layers``. Dict order
is the declared order used on disk and by the optimizer.
"""
from __future__ import annotations

import json
import math
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from . import nn
from .errors import ChecksumError, FormatError, MagicError, TruncatedError, VersionError

Shape = tuple[int, ...]


@dataclass(frozen=True)
class CircularPadChannels:
    width: int = 1


@dataclass(frozen=True)
class Conv2D:
    kh: int
    kw: int
    c_in: int
    c_out: int


@dataclass(frozen=True)
class MaxPool:
    ph: int
    pw: int


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Dense:
    d_in: int
    d_out: int


@dataclass(frozen=True)
class Softmax:
    pass


LayerSpec = Union[CircularPadChannels, Conv2D, MaxPool, ReLU, Flatten, Dense, Softmax]
_LAYER_TYPES = {cls.__name__: cls for cls in
                (CircularPadChannels, Conv2D, MaxPool, ReLU, Flatten, Dense, Softmax)}


@dataclass(frozen=True)
class ArchDescriptor:
    input_shape: tuple[int, int, int]
    layers: tuple = field(default_factory=tuple)
    name: str = "custom"

    def shapes(self) -> list[Shape]:
        """Input shape followed by the output shape of every layer."""
        shapes = [tuple(self.input_shape)]
        for layer in self.layers:
            shapes.append(layer_output_shape(layer, shapes[-1]))
        return shapes

    def to_json(self) -> str:
        return json.dumps({
            "name": self.name,
            "input_shape": list(self.input_shape),
            "layers": [{"type": type(l).__name__, **asdict(l)} for l in self.layers],
        }, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "ArchDescriptor":
        obj = json.loads(text)
        layers = []
        for entry in obj["layers"]:
            entry = dict(entry)
            kind = _LAYER_TYPES.get(entry.pop("type"))
            if kind is None:
                raise FormatError(f"unknown layer type in architecture: {entry}")
            layers.append(kind(**entry))
        return cls(tuple(obj["input_shape"]), tuple(layers), obj.get("name", "custom"))


def layer_output_shape(layer: LayerSpec, shape: Shape) -> Shape:
    if isinstance(layer, CircularPadChannels):
        T, C, F = shape
        if C < 2:
            raise ValueError(f"circular padding needs >= 2 channels, got {shape}")
        return (T, C + 2 * layer.width, F)
    if isinstance(layer, Conv2D):
        T, C, F = shape
        if F != layer.c_in or T < layer.kh or C < layer.kw:
            raise ValueError(f"{layer} cannot consume shape {shape}")
        return (T - layer.kh + 1, C - layer.kw + 1, layer.c_out)
    if isinstance(layer, MaxPool):
        T, C, F = shape
        if T < layer.ph or C < layer.pw:
            raise ValueError(f"{layer} cannot consume shape {shape}")
        return (T // layer.ph, C // layer.pw, F)
    if isinstance(layer, (ReLU, Softmax)):
        return shape
    if isinstance(layer, Flatten):
        return (int(np.prod(shape)),)
    if isinstance(layer, Dense):
        if shape != (layer.d_in,):
            raise ValueError(f"{layer} cannot consume shape {shape}")
        return (layer.d_out,)
    raise TypeError(f"unknown layer {layer!r}")


def build_sm_cnn(channels: int = 16, length: int = 300) -> ArchDescriptor:
    """The signal-matrix CNN: circular padding, five conv/ReLU/pool stages
    (2x1 stripe pooling in the first four, 2x2 in the last), dense 128, softmax 2."""
    layers: list = [CircularPadChannels(1)]
    c_in = 1
    filters = (16, 32, 64, 128, 256)
    for k, c_out in enumerate(filters):
        pool = MaxPool(2, 2) if k == len(filters) - 1 else MaxPool(2, 1)
        layers += [Conv2D(2, 2, c_in, c_out), ReLU(), pool]
        c_in = c_out
    arch = ArchDescriptor((length, channels, 1), tuple(layers), "sm-cnn")
    flat = int(np.prod(arch.shapes()[-1]))
    layers += [Flatten(), Dense(flat, 128), ReLU(), Dense(128, 2), Softmax()]
    return ArchDescriptor((length, channels, 1), tuple(layers), "sm-cnn")


def parametric_layers(arch: ArchDescriptor) -> list[tuple[int, LayerSpec]]:
    return [(i, l) for i, l in enumerate(arch.layers) if isinstance(l, (Conv2D, Dense))]


def param_shapes(arch: ArchDescriptor) -> dict[str, Shape]:
    shapes: dict[str, Shape] = {}
    for i, layer in parametric_layers(arch):
        if isinstance(layer, Conv2D):
            shapes[f"{i}.w"] = (layer.kh, layer.kw, layer.c_in, layer.c_out)
            shapes[f"{i}.b"] = (layer.c_out,)
        else:
            shapes[f"{i}.w"] = (layer.d_in, layer.d_out)
            shapes[f"{i}.b"] = (layer.d_out,)
    return shapes


def init_params(arch: ArchDescriptor, seed: int, dtype=np.float32) -> dict[str, np.ndarray]:
    """Glorot-uniform weights (variance 2/(fan_in+fan_out)), zero biases."""
    arch.shapes()  # validates the chain
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for i, layer in parametric_layers(arch):
        if isinstance(layer, Conv2D):
            rf = layer.kh * layer.kw
            fan_in, fan_out = rf * layer.c_in, rf * layer.c_out
            wshape: Shape = (layer.kh, layer.kw, layer.c_in, layer.c_out)
            n_out = layer.c_out
        else:
            fan_in, fan_out = layer.d_in, layer.d_out
            wshape = (layer.d_in, layer.d_out)
            n_out = layer.d_out
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[f"{i}.w"] = rng.uniform(-limit, limit, size=wshape).astype(dtype)
        params[f"{i}.b"] = np.zeros(n_out, dtype=dtype)
    return params


# --------------------------------------------------------------------------
# forward / backward
# --------------------------------------------------------------------------

def _as_batch(arch: ArchDescriptor, x: np.ndarray) -> np.ndarray:
    T, C, F = arch.input_shape
    x = np.asarray(x)
    if x.shape[-2:] == (T, C) and F == 1:
        x = x[..., None]
    if x.shape[-3:] != (T, C, F):
        raise ValueError(f"expected input shape (..., {T}, {C}[, {F}]), got {x.shape}")
    return x


def forward_logits(arch: ArchDescriptor, params: dict[str, np.ndarray], x: np.ndarray,
                   keep_cache: bool = False):
    """Run every layer except the final softmax.

    Returns ``logits`` or ``(logits, cache)`` where ``cache`` holds what the
    backward pass needs.
    """
    h = _as_batch(arch, x)
    cache = []
    for i, layer in enumerate(arch.layers):
        if isinstance(layer, Softmax):
            if i != len(arch.layers) - 1:
                raise ValueError("softmax must be the last layer")
            break
        inp = h
        aux = None
        if isinstance(layer, CircularPadChannels):
            h = nn.circular_pad_channels(h, layer.width)
        elif isinstance(layer, Conv2D):
            h = nn.conv2d_forward(h, params[f"{i}.w"], params[f"{i}.b"])
        elif isinstance(layer, MaxPool):
            h, aux = nn.maxpool_forward(h, layer.ph, layer.pw)
        elif isinstance(layer, ReLU):
            h = nn.relu_forward(h)
        elif isinstance(layer, Flatten):
            aux = h.shape[-3:]
            h = nn.flatten(h)
        elif isinstance(layer, Dense):
            h = nn.dense_forward(h, params[f"{i}.w"], params[f"{i}.b"])
        if keep_cache:
            cache.append((inp, aux))
    return (h, cache) if keep_cache else h


def backward(arch: ArchDescriptor, params: dict[str, np.ndarray], cache: list,
             grad_logits: np.ndarray) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Backpropagate ``grad_logits`` through the cached forward pass.

    Returns parameter gradients (same keys as ``params``) and the input gradient.
    """
    grads: dict[str, np.ndarray] = {}
    g = grad_logits
    for i in range(len(cache) - 1, -1, -1):
        layer = arch.layers[i]
        inp, aux = cache[i]
        if isinstance(layer, CircularPadChannels):
            g = nn.circular_pad_channels_backward(g, layer.width)
        elif isinstance(layer, Conv2D):
            g, grads[f"{i}.w"], grads[f"{i}.b"] = nn.conv2d_backward(inp, params[f"{i}.w"], g)
        elif isinstance(layer, MaxPool):
            g = nn.maxpool_backward(aux, g)
        elif isinstance(layer, ReLU):
            g = nn.relu_backward(inp, g)
        elif isinstance(layer, Flatten):
            g = nn.unflatten(g, aux)
        elif isinstance(layer, Dense):
            g, grads[f"{i}.w"], grads[f"{i}.b"] = nn.dense_backward(inp, params[f"{i}.w"], g)
    return {k: grads[k] for k in params}, g


def predict_proba(arch: ArchDescriptor, params: dict[str, np.ndarray], x: np.ndarray,
                  batch_size: int = 64) -> np.ndarray:
    """Class probabilities, columns [normal, defect], for a batch of inputs."""
    x = _as_batch(arch, x)
    if x.ndim == 3:
        return nn.softmax(forward_logits(arch, params, x))
    out = [nn.softmax(forward_logits(arch, params, x[s:s + batch_size]))
           for s in range(0, len(x), batch_size)]
    return np.concatenate(out, axis=0) if out else np.zeros((0, 2), dtype=np.float32)


def forward(arch: ArchDescriptor, params: dict[str, np.ndarray], sample) -> tuple[float, float]:
    """Classify one window; returns ``(p_defect, p_normal)``."""
    values = getattr(sample, "values", sample)
    p = predict_proba(arch, params, np.asarray(values))
    if p.ndim != 1:
        raise ValueError(f"forward takes a single window, got input shape {np.shape(values)}")
    return float(p[nn.DEFECT]), float(p[nn.NORMAL])


# --------------------------------------------------------------------------
# complexity accounting
# --------------------------------------------------------------------------

def param_count(arch: ArchDescriptor) -> int:
    total = 0
    for _, layer in parametric_layers(arch):
        if isinstance(layer, Conv2D):
            total += (layer.kh * layer.kw * layer.c_in + 1) * layer.c_out
        else:
            total += (layer.d_in + 1) * layer.d_out
    return total


def layer_macs(arch: ArchDescriptor) -> list[tuple[int, LayerSpec, int]]:
    """Multiply-accumulates of every conv/dense layer for one forward pass."""
    shapes = arch.shapes()
    rows = []
    for i, layer in parametric_layers(arch):
        out = shapes[i + 1]
        if isinstance(layer, Conv2D):
            macs = layer.kh * layer.kw * layer.c_in * layer.c_out * out[0] * out[1]
        else:
            macs = layer.d_in * layer.d_out
        rows.append((i, layer, macs))
    return rows


def flop_count(arch: ArchDescriptor) -> tuple[int, int]:
    """(MACs, FLOPs) over conv and dense layers, 2 FLOPs per MAC."""
    macs = sum(m for _, _, m in layer_macs(arch))
    return macs, 2 * macs


def comparison_count(arch: ArchDescriptor) -> int:
    """Max/ReLU comparisons per forward pass, kept out of the FLOP figure."""
    shapes = arch.shapes()
    total = 0
    for i, layer in enumerate(arch.layers):
        if isinstance(layer, ReLU):
            total += int(np.prod(shapes[i + 1]))
        elif isinstance(layer, MaxPool):
            total += int(np.prod(shapes[i + 1])) * (layer.ph * layer.pw - 1)
    return total


def complexity_report(arch: ArchDescriptor) -> list[tuple[str, str]]:
    macs, flops = flop_count(arch)
    rows = [
        ("arch", arch.name),
        ("params", str(param_count(arch))),
        ("macs", str(macs)),
        ("flops", str(flops)),
        ("gflops", f"{flops / 1e9:.6f}"),
        ("comparisons", str(comparison_count(arch))),
    ]
    for i, layer, m in layer_macs(arch):
        rows.append((f"macs.layer{i}.{type(layer).__name__}", str(m)))
    return rows


# --------------------------------------------------------------------------
# checkpoint
# --------------------------------------------------------------------------

CKPT_MAGIC = b"SMCK"
CKPT_VERSION = 1
_HEAD = struct.Struct("<4sHI")  # magic, version, arch json length


def checkpoint_bytes(arch: ArchDescriptor, params: dict[str, np.ndarray]) -> bytes:
    expected = param_shapes(arch)
    if list(expected) != list(params):
        raise ValueError("parameter keys do not match the architecture")
    arch_json = arch.to_json().encode()
    out = bytearray(_HEAD.pack(CKPT_MAGIC, CKPT_VERSION, len(arch_json)))
    out += arch_json
    out += struct.pack("<I", len(params))
    for key, arr in params.items():
        if arr.shape != expected[key]:
            raise ValueError(f"{key}: shape {arr.shape}, expected {expected[key]}")
        kb = key.encode()
        out += struct.pack("<B", len(kb)) + kb
        out += struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    out += struct.pack("<I", zlib.crc32(out))
    return bytes(out)


def save_checkpoint(arch: ArchDescriptor, params: dict[str, np.ndarray], path) -> None:
    Path(path).write_bytes(checkpoint_bytes(arch, params))


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedError(f"checkpoint truncated at byte {len(self.data)} "
                                 f"(needed {self.pos + n})")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def parse_checkpoint(data: bytes) -> tuple[ArchDescriptor, dict[str, np.ndarray]]:
    r = _Reader(data)
    magic, version, arch_len = r.unpack(_HEAD.format)
    if magic != CKPT_MAGIC:
        raise MagicError(f"not a checkpoint (magic {magic!r})")
    if version != CKPT_VERSION:
        raise VersionError(f"checkpoint version {version}, this build reads {CKPT_VERSION}")
    arch_raw = r.take(arch_len)
    (n_arrays,) = r.unpack("<I")
    blobs = []
    for _ in range(n_arrays):
        (klen,) = r.unpack("<B")
        key = r.take(klen)
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        payload = r.take(4 * math.prod(shape))
        blobs.append((key, shape, payload))
    (stored,) = r.unpack("<I")
    if r.pos != len(data):
        raise FormatError(f"{len(data) - r.pos} trailing bytes after checkpoint")
    if zlib.crc32(data[:-4]) != stored:
        raise ChecksumError("checkpoint checksum mismatch")
    try:
        arch = ArchDescriptor.from_json(arch_raw.decode())
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"bad architecture record: {exc}") from exc
    params = {key.decode(): np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float32)
              for key, shape, payload in blobs}
    if {k: v.shape for k, v in params.items()} != param_shapes(arch):
        raise FormatError("stored parameters do not match the stored architecture")
    return arch, params


def load_checkpoint(path) -> tuple[ArchDescriptor, dict[str, np.ndarray]]:
    return parse_checkpoint(Path(path).read_bytes())
