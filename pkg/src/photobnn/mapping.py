"""Lowering of binary convolutions and PASS scheduling on an XPC.

A convolution is lowered to ``h`` (input vector, weight vector) pairs of
length ``s``. Each vector is cut into ``ceil(s/n)`` slices for XPEs of
``n`` gates. Two scheduling policies are supported:

``oxbnn``
    All slices of one vector go to the same XPE in consecutive passes and
    the PCA accumulates across them. The PCA is read out once per vector,
    or once per ``alpha`` slices when a vector needs more than that.
``baseline``
    Slices of a vector are spread over XPEs. Every slice yields a psum and
    the psums are added by a reduction network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .functional import (
    BinaryVector,
    BitcountResult,
    as_input_tensor,
    as_weight_tensor,
    im2col,
    output_extent,
    xnor_dot,
)

POLICIES = ("oxbnn", "baseline")


# --------------------------------------------------------------------------
# Workloads


@dataclass(frozen=True)
class ConvWorkload:
    """Shape of one binary convolution.

    ``depthwise`` convolutions filter each input channel separately, so a
    vector covers only ``kernel_height * kernel_width`` bits and there is
    one weight vector per channel.
    """

    input_height: int
    input_width: int
    input_channels: int
    kernel_height: int
    kernel_width: int
    output_channels: int
    stride: int = 1
    padding: int = 0
    depthwise: bool = False

    def __post_init__(self):
        for name in ("input_height", "input_width", "input_channels",
                     "kernel_height", "kernel_width", "output_channels", "stride"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValidationError(f"{name} must be a positive integer, got {v!r}")
        if int(self.padding) != self.padding or self.padding < 0:
            raise ValidationError(f"padding must be a non-negative integer, got {self.padding!r}")
        if self.depthwise and self.output_channels != self.input_channels:
            raise ValidationError("depthwise convolution must keep the channel count")
        # raises if the kernel does not fit
        self.output_height
        self.output_width

    @property
    def output_height(self) -> int:
        return output_extent(self.input_height, self.kernel_height, self.stride, self.padding)

    @property
    def output_width(self) -> int:
        return output_extent(self.input_width, self.kernel_width, self.stride, self.padding)

    @property
    def s(self) -> int:
        """Bits per flattened vector."""
        channels = 1 if self.depthwise else self.input_channels
        return self.kernel_height * self.kernel_width * channels

    @property
    def h(self) -> int:
        """Number of sliding windows."""
        return self.output_height * self.output_width

    @property
    def filters(self) -> int:
        return self.output_channels

    @property
    def pairs(self) -> int:
        """Vector pairs to evaluate: every window against every filter."""
        return self.h * self.filters

    @property
    def bit_ops(self) -> int:
        return self.pairs * self.s


def flatten(workload: ConvWorkload) -> tuple[tuple[int, int], tuple[int, int]]:
    """Dimensions of the lowered input matrix (H, S) and weight matrix (K, S)."""
    return (workload.h, workload.s), (workload.filters, workload.s)


def lower_conv_pairs(input_tensor, weight_tensor, stride=1, padding=0):
    """Lower a convolution into aligned pair matrices.

    Row ``p`` of both returned arrays is one (window, filter) pair; pairs
    run window-major and filter-minor, so consecutive pair ids (and thus
    neighbouring XPEs) work on different filters of the same window.
    Returns ``(inputs, weights, (out_h, out_w, K))``.
    """
    x = as_input_tensor(input_tensor)
    w = as_weight_tensor(weight_tensor)
    k, kh, kw, _ = w.shape
    windows = im2col(x, (kh, kw), stride, padding)
    filters = w.reshape(k, -1)
    if windows.shape[1] != filters.shape[1]:
        raise ValidationError("input and weight channel counts differ")
    inputs = np.repeat(windows, k, axis=0)
    weights = np.tile(filters, (windows.shape[0], 1))
    oh = output_extent(x.shape[0], kh, stride, padding)
    ow = output_extent(x.shape[1], kw, stride, padding)
    return inputs, weights, (oh, ow, k)


# --------------------------------------------------------------------------
# Slicing


@dataclass(frozen=True)
class VectorSlicePlan:
    parent_vector_id: int
    slice_index: int
    offset: int
    length: int


def slice_vector(s: int, n: int) -> list[int]:
    """Slice lengths for a vector of ``s`` bits on ``n``-gate XPEs."""
    if s < 1 or n < 1:
        raise ValidationError(f"s and n must be positive, got s={s}, n={n}")
    full, rest = divmod(s, n)
    return [n] * full + ([rest] if rest else [])


def slice_plans(vector_id: int, s: int, n: int) -> list[VectorSlicePlan]:
    plans, offset = [], 0
    for k, length in enumerate(slice_vector(s, n)):
        plans.append(VectorSlicePlan(vector_id, k, offset, length))
        offset += length
    return plans


# --------------------------------------------------------------------------
# Schedules


@dataclass(frozen=True)
class Assignment:
    """One slice pair placed on one XPE during a pass.

    ``readout`` marks that the XPE emits a psum after this pass; ``segment``
    numbers the psums of a vector.
    """

    xpe: int
    slice: VectorSlicePlan
    readout: bool
    segment: int

    @property
    def vector(self) -> int:
        return self.slice.parent_vector_id

    @property
    def psum_id(self) -> str:
        return psum_id(self.vector, self.segment)


@dataclass(frozen=True)
class PassRecord:
    index: int
    assignments: tuple[Assignment, ...]


@dataclass(frozen=True)
class ReductionOp:
    vector: int
    operands: tuple[str, str]
    output: str


@dataclass(frozen=True)
class PassSchedule:
    policy: str
    h: int
    s: int
    m: int
    n: int
    alpha: int | None
    passes: tuple[PassRecord, ...]
    reduction_ops: tuple[ReductionOp, ...]
    final_ids: tuple[str, ...] = field(repr=False)

    @property
    def slices_per_vector(self) -> int:
        return math.ceil(self.s / self.n)

    @property
    def psum_count(self) -> int:
        return sum(a.readout for p in self.passes for a in p.assignments)

    def to_trace(self) -> str:
        """Line-oriented rendering: a header, one line per pass, one per reduction."""
        alpha = "-" if self.alpha is None else str(self.alpha)
        lines = [f"schedule policy={self.policy} h={self.h} s={self.s} "
                 f"m={self.m} n={self.n} alpha={alpha}"]
        for p in self.passes:
            parts = []
            for a in p.assignments:
                v, k = a.vector + 1, a.slice.slice_index + 1
                tag = f" -> {a.psum_id}" if a.readout else ""
                parts.append(
                    f"XPE{a.xpe + 1}:(I{v}^{k},W{v}^{k})"
                    f"[{a.slice.offset}:{a.slice.offset + a.slice.length}]{tag}"
                )
            lines.append(f"pass {p.index + 1}: " + " ".join(parts))
        for r in self.reduction_ops:
            lines.append(f"reduce {r.operands[0]} + {r.operands[1]} -> {r.output}")
        return "\n".join(lines) + "\n"


def psum_id(vector: int, segment: int) -> str:
    return f"p{vector + 1}.{segment + 1}"


def _chain_reductions(vector, psums):
    """Sequential two-input adds of ``psums``; returns (ops, final id)."""
    if len(psums) == 1:
        return [], psums[0]
    ops, acc = [], psums[0]
    for j, nxt in enumerate(psums[1:], 1):
        out = f"final{vector + 1}" if j == len(psums) - 1 else f"t{vector + 1}.{j}"
        ops.append(ReductionOp(vector, (acc, nxt), out))
        acc = out
    return ops, acc


def _validate_dims(**dims):
    for name, v in dims.items():
        if int(v) != v or v < 1:
            raise ValidationError(f"{name} must be a positive integer, got {v!r}")


def schedule_oxbnn(h: int, s: int, m: int, n: int, alpha: int) -> PassSchedule:
    """Vector-stationary schedule: every slice of vector ``v`` runs on XPE ``v mod m``."""
    _validate_dims(h=h, s=s, m=m, n=n, alpha=alpha)
    ns = math.ceil(s / n)
    plans = [slice_plans(v, s, n) for v in range(h)]
    passes = []
    for g in range(math.ceil(h / m)):
        group = range(g * m, min(h, (g + 1) * m))
        for k in range(ns):
            last_in_segment = k == ns - 1 or (k + 1) % alpha == 0
            assignments = tuple(
                Assignment(v % m, plans[v][k], last_in_segment, k // alpha) for v in group
            )
            passes.append(PassRecord(len(passes), assignments))
    segments = math.ceil(ns / alpha)
    ops, finals = [], []
    for v in range(h):
        vops, final = _chain_reductions(v, [psum_id(v, seg) for seg in range(segments)])
        ops.extend(vops)
        finals.append(final)
    return PassSchedule("oxbnn", h, s, m, n, alpha, tuple(passes), tuple(ops), tuple(finals))


def schedule_baseline(h: int, s: int, m: int, n: int) -> PassSchedule:
    """Slice-parallel schedule: slices are packed onto XPEs in vector order, m per pass."""
    _validate_dims(h=h, s=s, m=m, n=n)
    ns = math.ceil(s / n)
    work = [plan for v in range(h) for plan in slice_plans(v, s, n)]
    passes = []
    for start in range(0, len(work), m):
        chunk = work[start:start + m]
        assignments = tuple(
            Assignment(x, plan, True, plan.slice_index) for x, plan in enumerate(chunk)
        )
        passes.append(PassRecord(len(passes), assignments))
    ops, finals = [], []
    for v in range(h):
        vops, final = _chain_reductions(v, [psum_id(v, k) for k in range(ns)])
        ops.extend(vops)
        finals.append(final)
    return PassSchedule("baseline", h, s, m, n, None, tuple(passes), tuple(ops), tuple(finals))


def build_schedule(policy: str, h: int, s: int, m: int, n: int, alpha: int | None = None):
    if policy == "oxbnn":
        if alpha is None:
            raise ValidationError("oxbnn schedules need the PCA slice capacity alpha")
        return schedule_oxbnn(h, s, m, n, alpha)
    if policy == "baseline":
        return schedule_baseline(h, s, m, n)
    raise ValidationError(f"policy must be one of {POLICIES}, got {policy!r}")


# --------------------------------------------------------------------------
# Functional execution


def _as_matrix(matrix, what):
    if isinstance(matrix, np.ndarray):
        arr = matrix
    else:
        rows = [r.bits if isinstance(r, BinaryVector) else np.asarray(r) for r in matrix]
        arr = np.stack(rows) if rows else np.empty((0, 0))
    if arr.ndim != 2:
        raise ValidationError(f"{what} must be two-dimensional")
    return arr


def execute_schedule(schedule: PassSchedule, input_matrix, weight_matrix) -> list[BitcountResult]:
    """Evaluate a schedule bit-exactly; returns one result per vector pair.

    XPEs under the oxbnn policy keep a running count between passes, as the
    PCA does; every readout turns the running count into a psum.
    """
    inputs = _as_matrix(input_matrix, "input matrix")
    weights = _as_matrix(weight_matrix, "weight matrix")
    expected = (schedule.h, schedule.s)
    if inputs.shape != expected or weights.shape != expected:
        raise ValidationError(
            f"matrices must be {expected}, got {inputs.shape} and {weights.shape}"
        )
    values: dict[str, int] = {}
    running: dict[int, tuple[int, int]] = {}  # xpe -> (vector, count)
    for p in schedule.passes:
        seen = set()
        for a in p.assignments:
            if a.xpe in seen:
                raise ValidationError(f"XPE {a.xpe} used twice in pass {p.index}")
            seen.add(a.xpe)
            sl = a.slice
            window = slice(sl.offset, sl.offset + sl.length)
            z = xnor_dot(BinaryVector(inputs[a.vector, window]),
                         BinaryVector(weights[a.vector, window])).z
            if schedule.policy == "oxbnn":
                vec, count = running.get(a.xpe, (a.vector, 0))
                if vec != a.vector:
                    raise ValidationError(f"XPE {a.xpe} mixes vectors {vec} and {a.vector}")
                count += z
                if a.readout:
                    values[a.psum_id] = count
                    running.pop(a.xpe, None)
                else:
                    running[a.xpe] = (vec, count)
            else:
                values[a.psum_id] = z
    for op in schedule.reduction_ops:
        values[op.output] = values[op.operands[0]] + values[op.operands[1]]
    return [BitcountResult(values[f], schedule.s) for f in schedule.final_ids]


def unsliced_results(input_matrix, weight_matrix) -> list[BitcountResult]:
    inputs = _as_matrix(input_matrix, "input matrix")
    weights = _as_matrix(weight_matrix, "weight matrix")
    return [xnor_dot(BinaryVector(i), BinaryVector(w)) for i, w in zip(inputs, weights)]


def psums_of(schedule: PassSchedule) -> Sequence[str]:
    return [a.psum_id for p in schedule.passes for a in p.assignments if a.readout]
