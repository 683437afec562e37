"""Photo-charge accumulator (PCA) model.

Every optical '1' reaching the photodetector deposits a fixed charge on the
active integrator capacitor, so the output voltage grows linearly with the
count of ones until the integrator's dynamic range is exhausted. Two
integrators alternate: while one discharges, the other keeps counting.

The electrical chain (``photocurrent`` -> ``charge_step`` -> TIR gain) is
exposed for sensitivity studies. Capacities come from the published
per-datarate values, because that chain alone does not reproduce them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import PcaError, PcaOverflowError, TableLookupError, ValidationError
from .functional import BitcountResult, activation_compare
from .linkbudget import PUBLISHED_DATARATES, PUBLISHED_SCALABILITY

MODES = ("analytic", "table")

# Waits shorter than this are floating-point residue of summed PASS periods.
STALL_EPSILON_S = 1e-15

PUBLISHED_CAPACITY = {dr: (row[2], row[3]) for dr, row in PUBLISHED_SCALABILITY.items()}


@dataclass(frozen=True)
class PcaParams:
    capacitance: float = 10e-12
    tir_gain: float = 50.0
    dynamic_range_volts: float = 5.0
    v_ref_volts: float = 2.5
    responsivity: float = 1.2
    pulse_width_s: float = 20e-12
    charge_per_one: float | None = None
    discharge_latency_s: float | None = None

    def __post_init__(self):
        for name in ("capacitance", "tir_gain", "dynamic_range_volts",
                     "v_ref_volts", "responsivity", "pulse_width_s"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be finite and positive, got {v!r}")
        if self.v_ref_volts > self.dynamic_range_volts:
            raise ValidationError("v_ref_volts cannot exceed the dynamic range")
        if self.charge_per_one is not None and not self.charge_per_one > 0:
            raise ValidationError("charge_per_one must be positive")
        if self.discharge_latency_s is not None and self.discharge_latency_s < 0:
            raise ValidationError("discharge_latency_s must be non-negative")

    @classmethod
    def for_datarate(cls, datarate_GSps: float, **overrides) -> "PcaParams":
        """Defaults for one datarate: pulse width and discharge latency of one PASS."""
        tau = 1.0 / (datarate_GSps * 1e9)
        base = cls(pulse_width_s=tau, discharge_latency_s=tau)
        return replace(base, **overrides)

    @property
    def datarate_GSps(self) -> float:
        return 1.0 / self.pulse_width_s / 1e9


@dataclass(frozen=True)
class PcaCapacity:
    """Accumulator capacity in ones (``gamma``) and in whole N-bit slices (``alpha``)."""

    gamma: int
    alpha: int
    n: int

    def __post_init__(self):
        if self.n < 1 or self.gamma < 1:
            raise ValidationError("gamma and n must be positive")
        if self.alpha != self.gamma // self.n:
            raise ValidationError(
                f"alpha={self.alpha} inconsistent with floor({self.gamma}/{self.n})"
            )
        if self.alpha < 1:
            raise ValidationError(f"gamma={self.gamma} cannot hold one slice of {self.n}")

    @classmethod
    def from_gamma(cls, gamma: int, n: int) -> "PcaCapacity":
        return cls(gamma, gamma // n, n)


@dataclass(frozen=True)
class PcaState:
    """Value state of one accumulator pair.

    ``retired_ones`` counts ones already read out of earlier accumulation
    phases; ``discharge_ready_at`` holds, per integrator, the time at which
    its capacitor is empty again.
    """

    accumulated_ones: int = 0
    output_volts: float = 0.0
    active_integrator: int = 1
    saturated: bool = False
    retired_ones: int = 0
    discharge_ready_at: tuple[float, float] = (0.0, 0.0)

    @property
    def total_ones(self) -> int:
        return self.retired_ones + self.accumulated_ones


def photocurrent(optical_power_watts: float, responsivity: float = 1.2) -> float:
    if optical_power_watts < 0:
        raise ValidationError("optical power must be non-negative")
    return responsivity * optical_power_watts


def charge_step(current_amperes: float, pulse_width_s: float, capacitance_farads: float) -> float:
    """Capacitor voltage gained from one current pulse: i * dt / C."""
    if current_amperes < 0 or pulse_width_s <= 0 or capacitance_farads <= 0:
        raise ValidationError("charge_step needs i >= 0, dt > 0, C > 0")
    return current_amperes * pulse_width_s / capacitance_farads


def electrical_step_volts(optical_power_watts: float, params: PcaParams) -> float:
    """TIR output increment for one optical '1' from the uncalibrated electrical chain."""
    i = photocurrent(optical_power_watts, params.responsivity)
    return params.tir_gain * charge_step(i, params.pulse_width_s, params.capacitance)


def calibrated_charge_per_one(datarate_GSps: float, dynamic_range_volts: float = 5.0) -> float:
    """Per-one output increment reproducing the published gamma for this datarate.

    Chosen half a step inside the range so ``floor(range / step)`` lands on
    gamma without depending on floating-point rounding.
    """
    gamma, _ = _published_capacity(datarate_GSps)
    return dynamic_range_volts / (gamma + 0.5)


def _published_capacity(datarate_GSps):
    for dr in PUBLISHED_DATARATES:
        if abs(dr - datarate_GSps) < 1e-9:
            return PUBLISHED_CAPACITY[dr]
    raise TableLookupError(f"no published PCA capacity for DR={datarate_GSps:g} GS/s")


def effective_charge_per_one(params: PcaParams, datarate_GSps: float | None = None) -> float:
    if params.charge_per_one is not None:
        return params.charge_per_one
    dr = params.datarate_GSps if datarate_GSps is None else datarate_GSps
    return calibrated_charge_per_one(dr, params.dynamic_range_volts)


def capacity(params: PcaParams, n: int, datarate_GSps: float, mode: str = "table") -> PcaCapacity:
    """Accumulation capacity of one PCA feeding an XPE of size ``n``."""
    if n < 1:
        raise ValidationError("n must be at least 1")
    if mode == "table":
        gamma, _ = _published_capacity(datarate_GSps)
    elif mode == "analytic":
        step = effective_charge_per_one(params, datarate_GSps)
        gamma = math.floor(params.dynamic_range_volts / step)
    else:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
    return PcaCapacity.from_gamma(gamma, n)


def accumulate(state: PcaState, ones_in_pass: int, cap: PcaCapacity,
               params: PcaParams) -> PcaState:
    """Add one PASS worth of detected ones to the active integrator.

    Reaching gamma exactly saturates the state. Offering more than the
    remaining capacity raises ``PcaOverflowError`` carrying the saturated
    state; accumulating into a saturated state raises ``PcaError``.
    """
    if state.saturated:
        raise PcaError("accumulator is saturated; swap integrators before accumulating")
    if ones_in_pass < 0 or ones_in_pass > cap.n:
        raise ValidationError(f"a pass carries 0..{cap.n} ones, got {ones_in_pass}")
    step = effective_charge_per_one(params)
    room = cap.gamma - state.accumulated_ones
    accepted = min(ones_in_pass, room)
    total = state.accumulated_ones + accepted
    new = replace(
        state,
        accumulated_ones=total,
        output_volts=total * step,
        saturated=total >= cap.gamma,
    )
    if accepted < ones_in_pass:
        raise PcaOverflowError(new, accepted, ones_in_pass - accepted)
    return new


def swap_integrator(state: PcaState, now: float = 0.0,
                    discharge_latency_s: float = 0.0) -> tuple[PcaState, float]:
    """Retire the active integrator and continue on the other one.

    Returns the new state and the stall (seconds) spent waiting for the
    other integrator to finish discharging. The retired integrator starts
    discharging when the swap completes.
    """
    other = 2 if state.active_integrator == 1 else 1
    ready = state.discharge_ready_at[other - 1]
    stall = ready - now
    if stall <= STALL_EPSILON_S:
        stall = 0.0
    done = list(state.discharge_ready_at)
    done[state.active_integrator - 1] = now + stall + discharge_latency_s
    new = PcaState(
        accumulated_ones=0,
        output_volts=0.0,
        active_integrator=other,
        saturated=False,
        retired_ones=state.retired_ones + state.accumulated_ones,
        discharge_ready_at=tuple(done),
    )
    return new, stall


def readout(state: PcaState, params: PcaParams) -> int:
    """Comparator against V_REF; output exactly at V_REF reads as 0."""
    return 1 if state.output_volts > params.v_ref_volts else 0


def readout_matches_activation(z: int, z_max: int, params: PcaParams) -> bool:
    """Whether the analog readout agrees with the digital threshold for this bitcount."""
    p = replace(params, charge_per_one=params.dynamic_range_volts / z_max)
    state = PcaState(accumulated_ones=z, output_volts=z * p.charge_per_one)
    return readout(state, p) == activation_compare(BitcountResult(z, z_max))
