"""Bit-exact functional model of binarized inference arithmetic.

Operands live in the {0,1} domain, as they do on the optical hardware.
A bipolar {-1,+1} view is kept for cross-checking: the bitcount ``z`` of
an XNOR vector relates to the bipolar inner product by ``2*z - S``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


def _as_bit_array(values, allowed, what):
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise ValidationError(f"{what} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValidationError(f"{what} must not be empty")
    if not np.isin(arr, allowed).all():
        raise ValidationError(f"{what} elements must be in {set(allowed)}")
    arr = arr.astype(np.int8)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class BinaryVector:
    """A {0,1}-valued operand vector."""

    bits: np.ndarray

    def __init__(self, bits):
        object.__setattr__(self, "bits", _as_bit_array(bits, (0, 1), "BinaryVector"))

    @property
    def size(self) -> int:
        return int(self.bits.size)

    def __len__(self):
        return self.size

    def __eq__(self, other):
        if not isinstance(other, BinaryVector):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())

    def complement(self) -> "BinaryVector":
        return BinaryVector(1 - self.bits)

    def slice(self, offset: int, length: int) -> "BinaryVector":
        return BinaryVector(self.bits[offset:offset + length])


@dataclass(frozen=True, eq=False)
class BipolarVector:
    """A {-1,+1}-valued vector."""

    values: np.ndarray

    def __init__(self, values):
        object.__setattr__(
            self, "values", _as_bit_array(values, (-1, 1), "BipolarVector")
        )

    @property
    def size(self) -> int:
        return int(self.values.size)

    def __eq__(self, other):
        if not isinstance(other, BipolarVector):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())


@dataclass(frozen=True)
class BitcountResult:
    """Bitcount ``z`` of an XNOR vector of length ``z_max``."""

    z: int
    z_max: int

    def __post_init__(self):
        if self.z_max < 1:
            raise ValidationError(f"z_max must be positive, got {self.z_max}")
        if not 0 <= self.z <= self.z_max:
            raise ValidationError(f"z={self.z} outside [0, {self.z_max}]")


def quantize_sign(x: float) -> int:
    """Binarize a real value: +1 for x >= 0, otherwise -1."""
    if not math.isfinite(x):
        raise ValidationError(f"cannot binarize non-finite value {x!r}")
    return 1 if x >= 0 else -1


def bipolar_to_binary(v: BipolarVector) -> BinaryVector:
    return BinaryVector((v.values > 0).astype(np.int8))


def binary_to_bipolar(v: BinaryVector) -> BipolarVector:
    return BipolarVector(2 * v.bits.astype(np.int8) - 1)


def xnor_bit(a: int, b: int) -> int:
    if a not in (0, 1) or b not in (0, 1):
        raise ValidationError(f"xnor operands must be bits, got {a!r}, {b!r}")
    return 1 if a == b else 0


def xnor_dot(i_vec: BinaryVector, w_vec: BinaryVector) -> BitcountResult:
    """XNOR the two vectors element-wise and count the ones."""
    if i_vec.size != w_vec.size:
        raise ValidationError(
            f"size mismatch: input has {i_vec.size} bits, weight has {w_vec.size}"
        )
    z = int(np.count_nonzero(i_vec.bits == w_vec.bits))
    return BitcountResult(z, i_vec.size)


def bipolar_dot_from_bitcount(result: BitcountResult) -> int:
    return 2 * result.z - result.z_max


def activation_compare(result: BitcountResult) -> int:
    """Next-layer activation in the {0,1} domain.

    Strict comparison, so a bitcount of exactly half of ``z_max`` yields 0.
    """
    return 1 if 2 * result.z > result.z_max else 0


# --------------------------------------------------------------------------
# Convolution oracle


def _check_binary_array(arr, what):
    arr = np.asarray(arr)
    if not np.isin(arr, (0, 1)).all():
        raise ValidationError(f"{what} must be {{0,1}}-valued")
    return arr.astype(np.int8)


def as_input_tensor(x) -> np.ndarray:
    """Coerce to an (H, W, C) binary tensor; (H, W) gains a unit channel axis."""
    x = _check_binary_array(x, "input tensor")
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3:
        raise ValidationError(f"input tensor must be (H, W[, C]), got shape {x.shape}")
    return x


def as_weight_tensor(w) -> np.ndarray:
    """Coerce to a (K, kH, kW, C) binary tensor.

    (kH, kW) and (kH, kW, C) are accepted for a single filter.
    """
    w = _check_binary_array(w, "weight tensor")
    if w.ndim == 2:
        w = w[None, :, :, None]
    elif w.ndim == 3:
        w = w[None]
    if w.ndim != 4:
        raise ValidationError(
            f"weight tensor must be ([K,] kH, kW[, C]), got shape {w.shape}"
        )
    return w


def output_extent(size: int, kernel: int, stride: int, padding: int) -> int:
    """Number of window positions along one spatial axis."""
    if stride < 1 or padding < 0:
        raise ValidationError(f"invalid stride={stride} / padding={padding}")
    span = size + 2 * padding - kernel
    if span < 0:
        raise ValidationError(
            f"kernel {kernel} larger than padded input {size + 2 * padding}"
        )
    return span // stride + 1


def im2col(x, kernel_hw, stride=1, padding=0) -> np.ndarray:
    """Flatten every sliding window of ``x`` into a row.

    Rows enumerate windows row-major; each row is flattened as
    (rows, columns, channels), the same order used for filters.
    """
    x = as_input_tensor(x)
    kh, kw = kernel_hw
    h, w, c = x.shape
    oh = output_extent(h, kh, stride, padding)
    ow = output_extent(w, kw, stride, padding)
    if padding:
        x = np.pad(x, ((padding, padding), (padding, padding), (0, 0)))
    rows = np.empty((oh * ow, kh * kw * c), dtype=np.int8)
    r = 0
    for oy in range(oh):
        for ox in range(ow):
            y0, x0 = oy * stride, ox * stride
            rows[r] = x[y0:y0 + kh, x0:x0 + kw, :].reshape(-1)
            r += 1
    return rows


def conv_reference(input_tensor, weight_tensor, stride=1, padding=0) -> np.ndarray:
    """Binary convolution computed window by window with ``xnor_dot``.

    Returns integer bitcounts shaped (out_h, out_w, K). Padding is zero in
    the {0,1} domain.
    """
    x = as_input_tensor(input_tensor)
    w = as_weight_tensor(weight_tensor)
    k, kh, kw, c = w.shape
    if c != x.shape[2]:
        raise ValidationError(
            f"channel mismatch: input has {x.shape[2]}, weight has {c}"
        )
    oh = output_extent(x.shape[0], kh, stride, padding)
    ow = output_extent(x.shape[1], kw, stride, padding)
    windows = im2col(x, (kh, kw), stride, padding)
    filters = [BinaryVector(w[f].reshape(-1)) for f in range(k)]
    out = np.empty((oh * ow, k), dtype=np.int64)
    for r in range(windows.shape[0]):
        win = BinaryVector(windows[r])
        for f, filt in enumerate(filters):
            out[r, f] = xnor_dot(win, filt).z
    return out.reshape(oh, ow, k)
