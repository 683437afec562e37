"""Randomized oracle sweeps: sliced schedules against unsliced XNOR-bitcount.

Each instance is a small binary convolution. It is lowered to vector
pairs, scheduled under both mapping policies, executed slice by slice,
and compared with the unsliced dot products and with a direct
convolution. A separate sweep checks the bipolar identity 2z - S.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .functional import (BinaryVector, bipolar_dot_from_bitcount, binary_to_bipolar,
                         conv_reference, xnor_dot)
from .mapping import POLICIES, build_schedule, execute_schedule, lower_conv_pairs, unsliced_results


@dataclass(frozen=True)
class Instance:
    seed: int
    s: int
    n: int
    m: int
    alpha: int
    stride: int
    padding: int
    input_tensor: np.ndarray = field(repr=False)
    weight_tensor: np.ndarray = field(repr=False)


@dataclass
class Failure:
    instance: Instance
    policy: str
    detail: str

    def describe(self) -> str:
        i = self.instance
        return (f"counterexample: s={i.s} n={i.n} m={i.m} alpha={i.alpha} seed={i.seed} "
                f"policy={self.policy}: {self.detail}")


@dataclass
class VerifyReport:
    instances: int = 0
    checks: int = 0
    failures: list[Failure] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


# A fault hook receives (instance, policy, results) and returns the results to check.
FaultHook = Callable[[Instance, str, list], list]


def make_instance(seed: int, max_s: int = 128, max_m: int = 8, max_pairs: int = 8) -> Instance:
    """Draw one conv instance with S <= max_s and at most ``max_pairs`` vector pairs."""
    rng = np.random.default_rng(seed)
    kh, kw = (int(v) for v in rng.integers(1, 4, size=2))
    while kh * kw > max_s:
        kh, kw = max(1, kh - 1), max(1, kw - 1)
    c = int(rng.integers(1, max_s // (kh * kw) + 1))
    s = kh * kw * c
    k = int(rng.integers(1, min(2, max_pairs) + 1))
    windows = int(rng.integers(1, max_pairs // k + 1))
    oh = int(rng.integers(1, windows + 1))
    ow = max(1, windows // oh)
    stride = int(rng.integers(1, 3))
    padding = int(rng.integers(0, 2)) if min(kh, kw) > 1 else 0
    h_in = (oh - 1) * stride + kh - 2 * padding
    w_in = (ow - 1) * stride + kw - 2 * padding
    if h_in < 1 or w_in < 1:
        padding = 0
        h_in, w_in = (oh - 1) * stride + kh, (ow - 1) * stride + kw
    n = int(rng.integers(1, s + 1))
    m = int(rng.integers(1, max_m + 1))
    slices = -(-s // n)
    # Small alpha values force the multi-readout path of the oxbnn schedule.
    alpha = int(rng.integers(1, slices + 2))
    x = rng.integers(0, 2, size=(h_in, w_in, c), dtype=np.int8)
    wt = rng.integers(0, 2, size=(k, kh, kw, c), dtype=np.int8)
    return Instance(seed, s, n, m, alpha, stride, padding, x, wt)


def check_instance(inst: Instance, fault: FaultHook | None = None) -> list[Failure]:
    inputs, weights, shape = lower_conv_pairs(inst.input_tensor, inst.weight_tensor,
                                              inst.stride, inst.padding)
    expected = [r.z for r in unsliced_results(inputs, weights)]
    direct = conv_reference(inst.input_tensor, inst.weight_tensor,
                            inst.stride, inst.padding).reshape(-1).tolist()
    failures = []
    if direct != expected:
        failures.append(Failure(inst, "oracle", f"conv_reference {direct} != xnor_dot {expected}"))
    for policy in POLICIES:
        sched = build_schedule(policy, len(inputs), inst.s, inst.m, inst.n,
                               inst.alpha if policy == "oxbnn" else None)
        results = execute_schedule(sched, inputs, weights)
        if fault is not None:
            results = fault(inst, policy, results)
        got = [r.z for r in results]
        if got != expected:
            failures.append(Failure(inst, policy, f"got {got}, expected {expected}"))
    return failures


def check_bipolar_identity(pairs: int = 1000, seed: int = 0, max_s: int = 128) -> list[str]:
    """Bipolar dot product versus 2z - S on random vector pairs; returns mismatch descriptions."""
    rng = np.random.default_rng(seed)
    bad = []
    for k in range(pairs):
        s = int(rng.integers(1, max_s + 1))
        a = BinaryVector(rng.integers(0, 2, size=s))
        b = BinaryVector(rng.integers(0, 2, size=s))
        dot = int(np.dot(binary_to_bipolar(a).values.astype(np.int64),
                         binary_to_bipolar(b).values.astype(np.int64)))
        via = bipolar_dot_from_bitcount(xnor_dot(a, b))
        if dot != via:
            bad.append(f"pair {k}: s={s} dot={dot} 2z-S={via}")
    return bad


def run_verification(instances: int = 1000, max_s: int = 128, seed: int = 0,
                     fault: FaultHook | None = None, stop_on_failure: bool = True) -> VerifyReport:
    report = VerifyReport()
    for k in range(instances):
        inst = make_instance(seed * 1_000_003 + k, max_s=max_s)
        report.instances += 1
        report.checks += len(POLICIES)
        report.failures.extend(check_instance(inst, fault))
        if report.failures and stop_on_failure:
            break
    return report


def flip_first_result(inst: Instance, policy: str, results: list) -> list:
    """Fault hook for exercising the failure path: corrupts the first oxbnn result."""
    if policy != "oxbnn" or not results:
        return results
    first = results[0]
    flipped = type(first)((first.z + 1) % (first.z_max + 1), first.z_max)
    return [flipped] + list(results[1:])
