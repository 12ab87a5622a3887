"""MLP encoders projecting onto the unit hypersphere.

A query encoder and a momentum key encoder share this parameter container.
The forward pass is affine -> relu per hidden layer, a final affine, then
row-wise L2 normalization, all taped so gradients reach every weight. The
key encoder is advanced only through :func:`ema_update`; it is never given
taped parameters and therefore never accumulates gradient.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .errors import ContractError, FormatError, ShapeError

DEFAULT_FEATURE_DIM = 128
DEFAULT_MOMENTUM = 0.999


@dataclass
class EncoderParams:
    """Weights and biases for one MLP, keyed by its layer size sequence."""

    layer_sizes: tuple
    weights: list
    biases: list

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            fan_in, fan_out = self.layer_sizes[i], self.layer_sizes[i + 1]
            if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                raise ShapeError(f"layer {i} parameters disagree with arch {self.layer_sizes}")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def feature_dim(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.layer_sizes,
                             [w.copy() for w in self.weights],
                             [b.copy() for b in self.biases])

    def as_tensors(self, requires_grad=True):
        """Fresh leaf tensors for one training step's tape."""
        ws = [tt.Tensor(w, requires_grad=requires_grad, name=f"W{i}")
              for i, w in enumerate(self.weights)]
        bs = [tt.Tensor(b, requires_grad=requires_grad, name=f"b{i}")
              for i, b in enumerate(self.biases)]
        return ws, bs


def init_params(arch, seed: int) -> EncoderParams:
    """Uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases."""
    arch = tuple(int(s) for s in arch)
    if len(arch) < 2 or any(s < 1 for s in arch):
        raise ContractError(f"arch needs at least input and output sizes, got {arch}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(arch[:-1], arch[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return EncoderParams(arch, weights, biases)


def forward(weight_tensors, bias_tensors, x: tt.Tensor) -> tt.Tensor:
    """Taped forward pass to unit-norm embeddings."""
    h = x
    last = len(weight_tensors) - 1
    for i, (w, b) in enumerate(zip(weight_tensors, bias_tensors)):
        h = tt.matmul(h, w) + b
        if i != last:
            h = tt.relu(h)
    return tt.l2_normalize(h)


def encode(params: EncoderParams, x) -> np.ndarray:
    """Unit-norm embeddings of a batch, without building a tape."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ShapeError(f"expected batch x {params.input_dim} input, got {x.shape}")
    ws, bs = params.as_tensors(requires_grad=False)
    return forward(ws, bs, tt.Tensor(x)).data


def ema_update(key: EncoderParams, query: EncoderParams, m: float) -> EncoderParams:
    """Momentum average: every key parameter becomes m*key + (1-m)*query."""
    if key.layer_sizes != query.layer_sizes:
        raise ContractError(f"architecture mismatch: {key.layer_sizes} vs {query.layer_sizes}")
    if not 0.0 <= m <= 1.0:
        raise ContractError("momentum must lie in [0, 1]")
    return EncoderParams(
        key.layer_sizes,
        [m * kw + (1.0 - m) * qw for kw, qw in zip(key.weights, query.weights)],
        [m * kb + (1.0 - m) * qb for kb, qb in zip(key.biases, query.biases)],
    )


# ---------------------------------------------------------------------------
# binary parameter block: little-endian, length-prefixed arch header then
# float64 weight and bias payloads in layer order

def params_to_bytes(params: EncoderParams) -> bytes:
    out = [struct.pack("<I", len(params.layer_sizes))]
    out.append(struct.pack(f"<{len(params.layer_sizes)}I", *params.layer_sizes))
    for w, b in zip(params.weights, params.biases):
        out.append(w.astype("<f8").tobytes(order="C"))
        out.append(b.astype("<f8").tobytes())
    return b"".join(out)


def params_from_bytes(blob: bytes, offset: int = 0):
    """Parse a parameter block; returns (params, next_offset)."""
    def take(n, what):
        nonlocal offset
        if offset + n > len(blob):
            raise FormatError(f"truncated parameter block while reading {what}", offset=offset)
        piece = blob[offset:offset + n]
        offset += n
        return piece

    (n_sizes,) = struct.unpack("<I", take(4, "arch length"))
    sizes = struct.unpack(f"<{n_sizes}I", take(4 * n_sizes, "arch sizes"))
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = np.frombuffer(take(8 * fan_in * fan_out, "weights"), dtype="<f8")
        weights.append(w.reshape(fan_in, fan_out).copy())
        biases.append(np.frombuffer(take(8 * fan_out, "biases"), dtype="<f8").copy())
    return EncoderParams(sizes, weights, biases), offset
