"""Three-to-four-channel convolution weight extension, a naive reference
convolution to verify the forward-equivalence invariants, and a simple
tensor container file format.

Extension rules: the encoder's first convolution gains a fourth input
slice initialized to zero (the alpha input is inert at initialization),
and the decoder's last convolution gains a fourth output channel with
zero weights and a bias of one (the alpha output starts fully opaque).
The new slice sits at zero-based channel index 3.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Dict

import numpy as np

from .errors import InputError

ATC1_MAGIC = b"ATC1"


@dataclass(frozen=True)
class ConvTensor:
    """Square-kernel convolution weights (k, k, Cin, Cout) plus bias (Cout,)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        bias = np.ascontiguousarray(self.bias, dtype=np.float64)
        if weights.ndim != 4 or weights.shape[0] != weights.shape[1]:
            raise InputError(
                "weights must have shape (k, k, Cin, Cout), got %s"
                % (weights.shape,)
            )
        if bias.shape != (weights.shape[3],):
            raise InputError(
                "bias shape %s does not match %d output channels"
                % (bias.shape, weights.shape[3])
            )
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(bias))):
            raise InputError("conv tensor contains non-finite values")
        weights.setflags(write=False)
        bias.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bias", bias)

    @property
    def kernel(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[2]

    @property
    def out_channels(self) -> int:
        return self.weights.shape[3]


def extend_encoder_first_conv(w3: ConvTensor) -> ConvTensor:
    """Extend Cin from 3 to 4: the rgb slices are copied, the new alpha
    input slice is all zero, and the bias is unchanged."""
    if w3.in_channels != 3:
        raise InputError(
            "encoder extension needs Cin = 3, got %d" % w3.in_channels
        )
    k = w3.kernel
    weights = np.zeros((k, k, 4, w3.out_channels))
    weights[:, :, :3, :] = w3.weights
    return ConvTensor(weights=weights, bias=w3.bias)


def extend_decoder_last_conv(w3: ConvTensor) -> ConvTensor:
    """Extend Cout from 3 to 4: rgb output channels are copied, the new
    alpha output channel has zero weights and a bias of exactly one."""
    if w3.out_channels != 3:
        raise InputError(
            "decoder extension needs Cout = 3, got %d" % w3.out_channels
        )
    k = w3.kernel
    weights = np.zeros((k, k, w3.in_channels, 4))
    weights[:, :, :, :3] = w3.weights
    bias = np.concatenate([w3.bias, [1.0]])
    return ConvTensor(weights=weights, bias=bias)


def conv2d_reference(x: np.ndarray, w: ConvTensor) -> np.ndarray:
    """Direct cross-correlation with same-size zero padding, stride 1.

    Deliberately naive O(k^2 * C * H * W); it exists as a verification
    oracle, not a performance path.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise InputError("input must have shape (Cin, H, W), got %s" % (x.shape,))
    if x.shape[0] != w.in_channels:
        raise InputError(
            "input has %d channels but weights expect %d"
            % (x.shape[0], w.in_channels)
        )
    k = w.kernel
    if k % 2 == 0:
        raise InputError("same padding needs an odd kernel size, got %d" % k)
    pad = k // 2
    h, width = x.shape[1], x.shape[2]
    padded = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((w.out_channels, h, width))
    for di in range(k):
        for dj in range(k):
            patch = padded[:, di : di + h, dj : dj + width]
            out += np.einsum("co,chw->ohw", w.weights[di, dj], patch)
    return out + w.bias[:, None, None]


@dataclass(frozen=True)
class TensorContainer:
    """A named map of conv tensors plus free-form metadata (source tag)."""

    tensors: Dict[str, ConvTensor]
    metadata: Dict[str, str]

    def __post_init__(self):
        object.__setattr__(self, "tensors", dict(self.tensors))
        object.__setattr__(self, "metadata", dict(self.metadata))
        for name in self.tensors:
            if not name:
                raise InputError("tensor names must be nonempty")


def write_atc1(container: TensorContainer, path: str) -> None:
    """Serialize a container: magic, u32 header length, JSON header, u64
    payload length, then raw little-endian float32 data.

    Tensor names are sorted in the header and the payload, so the same
    container always produces byte-identical files.
    """
    names = sorted(container.tensors)
    header_tensors = {}
    chunks = []
    offset = 0
    for name in names:
        t = container.tensors[name]
        entry = {}
        for part, arr in (("weights", t.weights), ("bias", t.bias)):
            data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
            entry[part] = {"shape": list(arr.shape), "offset": offset}
            chunks.append(data)
            offset += len(data)
        header_tensors[name] = entry
    header = json.dumps(
        {"metadata": dict(sorted(container.metadata.items())), "tensors": header_tensors},
        sort_keys=True,
    ).encode("utf-8")
    payload = b"".join(chunks)
    with open(path, "wb") as fh:
        fh.write(ATC1_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)


def read_atc1(path: str) -> TensorContainer:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise InputError("cannot read container %r: %s" % (str(path), exc)) from exc
    if blob[:4] != ATC1_MAGIC:
        raise InputError("%r is not a tensor container (bad magic)" % str(path))
    (header_len,) = struct.unpack_from("<I", blob, 4)
    header_end = 8 + header_len
    try:
        header = json.loads(blob[8:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InputError("corrupt container header in %r" % str(path)) from exc
    (payload_len,) = struct.unpack_from("<Q", blob, header_end)
    payload = blob[header_end + 8 : header_end + 8 + payload_len]
    if len(payload) != payload_len:
        raise InputError("truncated container payload in %r" % str(path))
    tensors = {}
    for name, entry in header.get("tensors", {}).items():
        parts = {}
        for part in ("weights", "bias"):
            shape = tuple(entry[part]["shape"])
            start = entry[part]["offset"]
            count = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(
                payload, dtype="<f4", count=count, offset=start
            ).reshape(shape)
            parts[part] = arr.astype(np.float64)
        tensors[name] = ConvTensor(weights=parts["weights"], bias=parts["bias"])
    return TensorContainer(tensors=tensors, metadata=header.get("metadata", {}))
