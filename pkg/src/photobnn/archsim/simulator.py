"""Transaction-level performance and energy simulation of one inference.

A compute layer's vector pairs are processed in blocks of up to
``xpe_count`` pairs. Each block is a chain of transactions: an eDRAM
read of its operands, bus and router transfers, the PASSes on the XPE
array, then either a PCA readout (the oxbnn policy) or a psum write-back,
read and reduction (the baseline policy with sliced vectors), and finally
the activation comparators. Reading the next block's operands overlaps
with the current block's PASSes (double buffering).

Energy is the sum of unit power times occupancy over all events, plus
OXG energy per XNOR bit and static laser power over the whole run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from ..errors import ValidationError
from ..linkbudget import dbm_to_watts
from ..mapping import ConvWorkload
from ..pca import PcaState, swap_integrator
from ..workloads import Layer, ModelSpec
from .config import AcceleratorConfig
from .engine import Engine, SimEvent

GRANULARITIES = ("block", "pass")
NS = 1e-9
MW = 1e-3


@dataclass(frozen=True)
class Metrics:
    config: str
    workload: str
    latency_s: float
    fps: float
    total_power_W: float
    fps_per_watt: float
    energy_breakdown: dict[str, float]
    event_count: int
    event_counts: dict[str, int] = field(default_factory=dict)
    passes: int = 0
    reduction_ops: int = 0
    bit_ops: int = 0
    stall_s: float = 0.0

    @property
    def total_energy_J(self) -> float:
        return math.fsum(self.energy_breakdown.values())


@dataclass
class SimulationResult:
    metrics: Metrics
    trace: list[SimEvent] | None
    audit_ok: bool
    overlaps: int


class _Simulation:
    def __init__(self, config: AcceleratorConfig, granularity: str, keep_trace: bool):
        if granularity not in GRANULARITIES:
            raise ValidationError(f"granularity must be one of {GRANULARITIES}")
        self.cfg = config
        self.per = config.peripherals
        self.tau = config.tau_s
        self.granularity = granularity
        self.eng = Engine(keep_trace=keep_trace)
        self.passes = 0
        self.reduction_ops = 0
        self.bit_ops = 0
        self.stall_s = 0.0
        self.pca_state = PcaState()
        self.pca_blocks = 0  # blocks accumulated so far; the first needs no swap

    # -- helpers ---------------------------------------------------------

    def _tiles_energy(self, power_mW, duration_s):
        return power_mW * MW * duration_s * self.cfg.tile_count

    def tuning(self, earliest, latency_ns, power_mW, label, on_done):
        dur = latency_ns * NS
        rings = self.cfg.ring_count
        self.eng.occupy("tuning", earliest, dur, "tuning", (("type", label), ("rings", rings)),
                        energy=(f"{label}_tuning", power_mW * MW * dur * rings),
                        on_done=on_done)

    def io(self, earliest, direction, on_done):
        dur = self.per.io_latency_ns * NS
        self.eng.occupy("io", earliest, dur, "io", (("dir", direction),),
                        energy=("io", self.per.io_power_mW * MW * dur), on_done=on_done)

    # -- layers ----------------------------------------------------------

    def run_layer(self, layer: Layer | ConvWorkload, start: float, on_done, index: int = 0):
        if isinstance(layer, ConvWorkload):
            layer = Layer("conv", layer)
        if layer.kind == "concat":
            self.eng.at(start, lambda: on_done(start))
        elif layer.kind == "pool":
            self._pool(layer.workload, start, on_done, index)
        else:
            _ComputeLayer(self, layer.workload, index).start(start, on_done)

    def _pool(self, w: ConvWorkload, start, on_done, index):
        outputs = w.output_height * w.output_width * w.output_channels
        steps = math.ceil(outputs / self.cfg.n_pooling_units)
        unit = self.per.pooling_latency_ns * NS
        self.eng.occupy("pooling", start, steps * unit, "pooling",
                        (("layer", index), ("outputs", outputs)),
                        energy=("pooling", self.per.pooling_power_mW * MW * unit * outputs),
                        on_done=on_done)

    def finish(self, workload_name: str) -> Metrics:
        latency = self.eng.last_event_end
        cfg = self.cfg
        energy = dict(self.eng.energy)
        energy["oxg"] = self.bit_ops * cfg.gates_per_xnor * cfg.oxg_energy_per_op_J
        laser_w = dbm_to_watts(cfg.laser_dBm) / cfg.link.wall_plug_efficiency
        energy["laser"] = laser_w * cfg.xpe_size * cfg.xpc_count * latency
        energy = dict(sorted(energy.items()))
        total = math.fsum(energy.values())
        if latency <= 0:
            raise ValidationError("simulation produced no timed events")
        fps = 1.0 / latency
        power = total / latency
        return Metrics(
            config=cfg.name, workload=workload_name, latency_s=latency, fps=fps,
            total_power_W=power, fps_per_watt=fps / power, energy_breakdown=energy,
            event_count=self.eng.event_count,
            event_counts=dict(sorted(self.eng.kind_counts.items())),
            passes=self.passes, reduction_ops=self.reduction_ops,
            bit_ops=self.bit_ops, stall_s=self.stall_s,
        )


class _ComputeLayer:
    """Block pipeline of one compute layer."""

    def __init__(self, sim: _Simulation, w: ConvWorkload, index: int):
        cfg = sim.cfg
        self.sim, self.w, self.index = sim, w, index
        self.x = cfg.xpe_count
        self.ns = math.ceil(w.s / cfg.xpe_size)
        pairs = w.pairs
        full, rest = divmod(pairs, self.x)
        self.blocks = [self.x] * full + ([rest] if rest else [])
        if cfg.policy == "oxbnn":
            self.chain = math.ceil(self.ns / cfg.alpha) - 1
        else:
            self.chain = self.ns - 1
        self.done_blocks = 0
        self.tuned_at = 0.0
        sim.bit_ops += pairs * w.s

    def start(self, t0, on_done):
        sim = self.sim
        self.on_done = on_done
        self.tuned_at = t0 + sim.per.eo_tuning_latency_ns * NS
        sim.tuning(t0, sim.per.eo_tuning_latency_ns, sim.per.eo_tuning_power_mW_per_fsr,
                   "eo", None)
        self.read(0, t0)

    def passes_for(self, b):
        if self.sim.cfg.policy == "oxbnn":
            return self.ns
        return math.ceil(b * self.ns / self.x)

    def read(self, i, t):
        sim, per = self.sim, self.sim.per
        dur = per.edram_latency_ns * NS
        payload = (("layer", self.index), ("block", i))

        def after_router(end):
            self.compute(i, end)

        def after_bus(end):
            d = per.router_latency_cycles * sim.tau
            sim.eng.occupy("router", end, d, "transfer", payload,
                           energy=("router", sim._tiles_energy(per.router_power_mW, d)),
                           on_done=after_router)

        def after_read(end):
            d = per.bus_latency_cycles * sim.tau
            sim.eng.occupy("bus", end, d, "transfer", payload,
                           energy=("bus", sim._tiles_energy(per.bus_power_mW, d)),
                           on_done=after_bus)

        sim.eng.occupy("edram", t, dur, "memory_read", payload,
                       energy=("edram", sim._tiles_energy(per.edram_power_mW, dur)),
                       on_done=after_read)

    def compute(self, i, ready):
        sim, cfg, eng = self.sim, self.sim.cfg, self.sim.eng
        b = self.blocks[i]
        passes = self.passes_for(b)
        sim.passes += passes
        payload = (("layer", self.index), ("block", i))
        earliest = max(ready, self.tuned_at, eng.resource("xpe_array").free_at)

        if cfg.policy == "oxbnn":
            if sim.pca_blocks:
                # The integrator used by the previous block retires when its
                # last PASS ends; the other one must have finished discharging.
                prev_end = eng.resource("xpe_array").free_at
                sim.pca_state, stall = swap_integrator(
                    sim.pca_state, prev_end, cfg.discharge_latency_s)
                integ_ready = prev_end + stall
                if earliest < integ_ready:
                    wait = integ_ready - earliest
                    sim.stall_s += wait
                    eng.occupy("pca", earliest, wait, "stall", payload)
                    earliest = integ_ready
            sim.pca_blocks += 1

        start_next = None
        if i + 1 < len(self.blocks):
            start_next = lambda t: self.read(i + 1, t)  # noqa: E731

        if sim.granularity == "pass":
            for p in range(passes):
                eng.occupy("xpe_array", earliest + p * sim.tau, sim.tau, "pass",
                           payload + (("pass", p),),
                           on_start=start_next if p == 0 else None)
            end = earliest + passes * sim.tau
        else:
            start = eng.occupy("xpe_array", earliest, passes * sim.tau, "pass",
                               payload + (("passes", passes), ("pairs", b)),
                               on_start=start_next)
            end = start + passes * sim.tau
        eng.occupy("pca", end, 0.0, "readout", payload + (("results", b),),
                   on_done=lambda t: self.post(i, t))

    def post(self, i, t):
        sim, cfg, per, eng = self.sim, self.sim.cfg, self.sim.per, self.sim.eng
        b = self.blocks[i]
        payload = (("layer", self.index), ("block", i))
        ops = b * self.chain

        def activation(t_ready):
            unit = per.activation_latency_ns * NS
            steps = math.ceil(b / cfg.n_activation_units)
            eng.occupy("activation", t_ready, steps * unit, "activation",
                       payload + (("outputs", b),),
                       energy=("activation", per.activation_power_mW * MW * unit * b),
                       on_done=self.block_done)

        def reduction(t_ready):
            unit = per.reduction_latency_ns * NS
            steps = max(self.chain, math.ceil(ops / cfg.n_reduction_units))
            sim.reduction_ops += ops
            eng.occupy("reduction", t_ready, steps * unit, "reduction",
                       payload + (("ops", ops),),
                       energy=("reduction", per.reduction_power_mW * MW * unit * ops),
                       on_done=activation)

        if ops == 0:
            activation(t)
            return
        if cfg.policy == "baseline":
            dur = per.edram_latency_ns * NS
            e = ("edram", sim._tiles_energy(per.edram_power_mW, dur))

            def read_back(end):
                eng.occupy("edram", end, dur, "memory_read", payload + (("psums", b * self.ns),),
                           energy=e, on_done=reduction)

            eng.occupy("edram", t, dur, "memory_write", payload + (("psums", b * self.ns),),
                       energy=e, on_done=read_back)
        else:
            reduction(t)

    def block_done(self, t):
        self.done_blocks += 1
        if self.done_blocks == len(self.blocks):
            self.on_done(t)


# ----------------------------------------------------------------------------
# Public entry points


def _layers_of(layers) -> tuple[str, list[Layer]]:
    if isinstance(layers, ModelSpec):
        return layers.name, list(layers.layers)
    if isinstance(layers, (ConvWorkload, Layer)):
        layers = [layers]
    out = [Layer("conv", item) if isinstance(item, ConvWorkload) else item for item in layers]
    if not out:
        raise ValidationError("simulate_network needs at least one layer")
    for item in out:
        if not isinstance(item, Layer):
            raise ValidationError(f"not a layer: {item!r}")
    return "network", out


def run_layer(workload: ConvWorkload, config: AcceleratorConfig, *,
              granularity: str = "block", keep_trace: bool = False,
              name: str = "layer") -> SimulationResult:
    if not isinstance(workload, ConvWorkload):
        raise ValidationError("simulate_layer expects a ConvWorkload")
    sim = _Simulation(config, granularity, keep_trace)
    sim.run_layer(workload, 0.0, lambda t: None)
    sim.eng.run()
    return _result(sim, name)


def run_network(layers, config: AcceleratorConfig, *, granularity: str = "block",
                keep_trace: bool = False, name: str | None = None) -> SimulationResult:
    """Load (TO tuning, input IO), run the layers back to back, then emit the output."""
    model_name, items = _layers_of(layers)
    sim = _Simulation(config, granularity, keep_trace)
    per = sim.per
    gate = {"left": 2, "t": 0.0}

    def next_layer(k):
        def go(t):
            if k == len(items):
                sim.io(t, "out", None)
            else:
                sim.run_layer(items[k], t, next_layer(k + 1), k)
        return go

    def loaded(t):
        gate["left"] -= 1
        gate["t"] = max(gate["t"], t)
        if gate["left"] == 0:
            next_layer(0)(gate["t"])

    sim.tuning(0.0, per.to_tuning_latency_ns, per.to_tuning_power_mW_per_fsr, "to", loaded)
    sim.io(0.0, "in", loaded)
    sim.eng.run()
    return _result(sim, name or model_name)


def _result(sim: _Simulation, name: str) -> SimulationResult:
    metrics = sim.finish(name)
    audit = sim.eng.audit
    return SimulationResult(metrics, sim.eng.trace, audit.ok, len(audit.violations))


def simulate_layer(workload: ConvWorkload, config: AcceleratorConfig, **kwargs) -> Metrics:
    return run_layer(workload, config, **kwargs).metrics


def simulate_network(layers: ModelSpec | Sequence, config: AcceleratorConfig,
                     **kwargs) -> Metrics:
    return run_network(layers, config, **kwargs).metrics
