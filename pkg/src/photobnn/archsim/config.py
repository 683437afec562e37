"""Accelerator configurations: built-in variants, overrides and config files."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields, replace
from typing import Mapping

from ..errors import ValidationError
from ..linkbudget import LinkBudgetParams
from ..mapping import POLICIES
from ..pca import PcaCapacity, PcaParams, capacity

BUILTIN_VARIANTS = ("OXBNN_5", "OXBNN_50", "ROBIN_PO", "ROBIN_EO", "LIGHTBULB")


@dataclass(frozen=True)
class PeripheralParams:
    """Peripheral unit power, latency and area, in the units they are tabulated in.

    Bus and router latencies are in cycles; one cycle is one PASS period.
    Tuning powers are per microring for a full FSR of tuning.
    """

    reduction_power_mW: float = 0.050
    reduction_latency_ns: float = 3.125
    reduction_area_mm2: float = 3.00e-5
    activation_power_mW: float = 0.52
    activation_latency_ns: float = 0.78
    activation_area_mm2: float = 6.00e-5
    io_power_mW: float = 140.18
    io_latency_ns: float = 0.78
    io_area_mm2: float = 2.44e-2
    pooling_power_mW: float = 0.4
    pooling_latency_ns: float = 3.125
    pooling_area_mm2: float = 2.40e-4
    edram_power_mW: float = 41.1
    edram_latency_ns: float = 1.56
    edram_area_mm2: float = 1.66e-1
    bus_power_mW: float = 7.0
    bus_latency_cycles: float = 5.0
    bus_area_mm2: float = 9.00e-3
    router_power_mW: float = 42.0
    router_latency_cycles: float = 2.0
    router_area_mm2: float = 1.50e-2
    eo_tuning_power_mW_per_fsr: float = 0.080
    eo_tuning_latency_ns: float = 20.0
    to_tuning_power_mW_per_fsr: float = 275.0
    to_tuning_latency_ns: float = 4000.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (math.isfinite(v) and v >= 0):
                raise ValidationError(f"peripheral {f.name} must be finite and >= 0, got {v!r}")

    def with_overrides(self, overrides: Mapping[str, object]) -> "PeripheralParams":
        known = {f.name for f in fields(self)}
        bad = sorted(set(overrides) - known)
        if bad:
            raise ValidationError(f"unknown peripheral parameter(s): {', '.join(bad)}")
        return replace(self, **{k: float(v) for k, v in overrides.items()})


@dataclass(frozen=True)
class AcceleratorConfig:
    """One accelerator variant.

    ``gates_per_xnor`` counts resonators spent on one XNOR bit; it scales
    the per-bit gate energy and the number of tuned rings. ``None`` unit
    counts default to one unit per XPE (reduction lanes, comparators).
    """

    name: str
    datarate_GSps: float
    xpe_size: int
    xpe_count: int
    xpes_per_xpc: int
    policy: str
    xpcs_per_tile: int = 4
    oxg_energy_per_op_J: float = 0.032e-9
    oxg_area_mm2: float = 0.011
    gates_per_xnor: int = 1
    pca_capacity: PcaCapacity | None = None
    peripherals: PeripheralParams = field(default_factory=PeripheralParams)
    laser_power_per_wavelength_dBm: float | None = None
    link: LinkBudgetParams = field(default_factory=LinkBudgetParams)
    pca: PcaParams | None = None
    reduction_units: int | None = None
    activation_units: int | None = None
    pooling_units_per_tile: int = 4

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValidationError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if not (math.isfinite(self.datarate_GSps) and self.datarate_GSps > 0):
            raise ValidationError("datarate_GSps must be positive")
        for name in ("xpe_size", "xpe_count", "xpes_per_xpc", "xpcs_per_tile",
                     "gates_per_xnor", "pooling_units_per_tile"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValidationError(f"{name} must be a positive integer, got {v!r}")
        for name in ("reduction_units", "activation_units"):
            v = getattr(self, name)
            if v is not None and (int(v) != v or v < 1):
                raise ValidationError(f"{name} must be a positive integer, got {v!r}")
        if self.oxg_energy_per_op_J < 0:
            raise ValidationError("oxg_energy_per_op_J must be non-negative")
        if self.policy == "oxbnn":
            if self.pca_capacity is None:
                raise ValidationError("oxbnn configs need a PCA capacity")
            if self.pca_capacity.n != self.xpe_size:
                raise ValidationError("PCA capacity was computed for a different XPE size")

    @property
    def tau_s(self) -> float:
        """PASS period."""
        return 1.0 / (self.datarate_GSps * 1e9)

    @property
    def xpc_count(self) -> int:
        return math.ceil(self.xpe_count / self.xpes_per_xpc)

    @property
    def tile_count(self) -> int:
        return math.ceil(self.xpc_count / self.xpcs_per_tile)

    @property
    def alpha(self) -> int | None:
        return None if self.pca_capacity is None else self.pca_capacity.alpha

    @property
    def ring_count(self) -> int:
        return self.xpe_count * self.xpe_size * self.gates_per_xnor

    @property
    def n_reduction_units(self) -> int:
        return self.reduction_units or self.xpe_count

    @property
    def n_activation_units(self) -> int:
        return self.activation_units or self.xpe_count

    @property
    def n_pooling_units(self) -> int:
        return self.tile_count * self.pooling_units_per_tile

    @property
    def laser_dBm(self) -> float:
        if self.laser_power_per_wavelength_dBm is None:
            return self.link.laser_power_dBm
        return self.laser_power_per_wavelength_dBm

    @property
    def pca_params(self) -> PcaParams:
        return self.pca or PcaParams.for_datarate(self.datarate_GSps)

    @property
    def discharge_latency_s(self) -> float:
        lat = self.pca_params.discharge_latency_s
        return self.tau_s if lat is None else lat


_BUILTIN = {
    # name: (DR GS/s, N, XPE count, policy, gates per XNOR)
    "OXBNN_5": (5, 53, 100, "oxbnn", 1),
    "OXBNN_50": (50, 19, 1123, "oxbnn", 1),
    "ROBIN_PO": (5, 50, 183, "baseline", 2),
    "ROBIN_EO": (5, 10, 916, "baseline", 2),
    "LIGHTBULB": (50, 16, 1139, "baseline", 3),
}

_SCALAR_FIELDS = {
    "name": str, "datarate_GSps": float, "xpe_size": int, "xpe_count": int,
    "xpes_per_xpc": int, "policy": str, "xpcs_per_tile": int,
    "oxg_energy_per_op_J": float, "oxg_area_mm2": float, "gates_per_xnor": int,
    "laser_power_per_wavelength_dBm": float, "reduction_units": int,
    "activation_units": int, "pooling_units_per_tile": int,
}
_PCA_FIELDS = {f.name for f in fields(PcaParams)}


def _coerce(key, value, kind):
    if value is None or kind is str:
        return value
    try:
        if kind is int:
            as_float = float(value)
            if as_float != int(as_float):
                raise ValueError
            return int(as_float)
        return float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"bad value {value!r} for {key}") from None


def build_config(variant_name: str, overrides: Mapping[str, object] | None = None) -> AcceleratorConfig:
    """Build a built-in variant (or ``custom``) and apply overrides.

    Override keys are the scalar ``AcceleratorConfig`` fields plus
    ``pca_gamma`` (accumulator capacity in ones), ``peripherals`` /
    ``link`` / ``pca`` (mappings of their own fields). ``custom`` starts
    from OXBNN_50 and is renamed ``custom`` unless a name is given.
    """
    overrides = dict(overrides or {})
    key = variant_name.upper()
    if variant_name == "custom":
        base_key = "OXBNN_50"
    elif key in _BUILTIN:
        base_key = key
    else:
        raise ValidationError(
            f"unknown variant {variant_name!r}; expected one of {BUILTIN_VARIANTS} or 'custom'"
        )
    dr, n, count, policy, gates = _BUILTIN[base_key]
    values = {
        "name": "custom" if variant_name == "custom" else base_key,
        "datarate_GSps": float(dr), "xpe_size": n, "xpe_count": count,
        "xpes_per_xpc": n, "policy": policy, "gates_per_xnor": gates,
    }
    peripherals = PeripheralParams().with_overrides(overrides.pop("peripherals", {}) or {})
    link = LinkBudgetParams().with_overrides(overrides.pop("link", {}) or {})
    pca_over = dict(overrides.pop("pca", {}) or {})
    gamma = overrides.pop("pca_gamma", pca_over.pop("gamma", None))
    bad = sorted(set(overrides) - set(_SCALAR_FIELDS))
    if bad:
        raise ValidationError(f"unknown config key(s): {', '.join(bad)}")
    for k, v in overrides.items():
        values[k] = _coerce(k, v, _SCALAR_FIELDS[k])
    if "xpe_size" in overrides and "xpes_per_xpc" not in overrides:
        values["xpes_per_xpc"] = values["xpe_size"]

    bad = sorted(set(pca_over) - _PCA_FIELDS)
    if bad:
        raise ValidationError(f"unknown pca parameter(s): {', '.join(bad)}")
    pca = None
    if pca_over:
        pca = PcaParams.for_datarate(
            values["datarate_GSps"], **{k: float(v) for k, v in pca_over.items()}
        )
    cap = None
    if values["policy"] == "oxbnn" or gamma is not None:
        if gamma is not None:
            cap = PcaCapacity.from_gamma(_coerce("pca_gamma", gamma, int), values["xpe_size"])
        else:
            params = pca or PcaParams.for_datarate(values["datarate_GSps"])
            mode = "analytic" if params.charge_per_one is not None else "table"
            cap = capacity(params, values["xpe_size"], values["datarate_GSps"], mode)
    return AcceleratorConfig(
        peripherals=peripherals, link=link, pca=pca, pca_capacity=cap, **values
    )


def load_config_file(path) -> AcceleratorConfig:
    """Read an INI file with [accelerator], [peripherals], [link] and [pca] sections.

    ``variant`` in [accelerator] picks the starting point (default ``custom``);
    every other key overrides the field of the same name.
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ValidationError(f"{path}: {exc}") from None
    unknown = set(parser.sections()) - {"accelerator", "peripherals", "link", "pca"}
    if unknown:
        raise ValidationError(f"{path}: unknown section(s) {sorted(unknown)}")
    acc = dict(parser["accelerator"]) if parser.has_section("accelerator") else {}
    variant = acc.pop("variant", "custom")
    overrides: dict[str, object] = dict(acc)
    for section in ("peripherals", "link", "pca"):
        if parser.has_section(section):
            overrides[section] = dict(parser[section])
    return build_config(variant, overrides)


def dump_config_file(config: AcceleratorConfig) -> str:
    """Serialize a config into the INI layout read by ``load_config_file``."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    acc = {"variant": "custom"}
    for name in _SCALAR_FIELDS:
        v = getattr(config, name)
        if v is not None:
            acc[name] = repr(v) if isinstance(v, float) else str(v)
    if config.pca_capacity is not None:
        acc["pca_gamma"] = str(config.pca_capacity.gamma)
    parser["accelerator"] = acc
    parser["peripherals"] = {f.name: repr(getattr(config.peripherals, f.name))
                             for f in fields(config.peripherals)}
    parser["link"] = {f.name: (getattr(config.link, f.name) if f.name == "enob_form"
                               else repr(getattr(config.link, f.name)))
                      for f in fields(config.link)}
    if config.pca is not None:
        parser["pca"] = {f.name: repr(getattr(config.pca, f.name))
                         for f in fields(config.pca) if getattr(config.pca, f.name) is not None}
    import io
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
