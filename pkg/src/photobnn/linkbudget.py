"""Optical link budget and XPE scalability solver.

Three relations are implemented:

* the ENOB-style bit precision a photodetector achieves for a received
  power and datarate, together with its noise spectral density ``beta``;
* the laser power an XPC of ``M`` XPEs with ``N`` gates each needs to put
  ``P_PD`` on every photodetector;
* the solvers built on them: detector sensitivity per datarate and the
  largest XPE size ``N`` (with ``M = N``) the laser budget supports.

Two modes exist. ``table`` takes detector sensitivities from the published
scalability table and is the reproducible path; ``analytic`` solves the
precision equation from the physical constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Mapping

from scipy import constants

from .errors import SolverError, TableLookupError, ValidationError

MODES = ("analytic", "table")
ENOB_FORMS = ("typeset", "standard")

# Published scalability rows: DR (GS/s) -> (P_PD-opt dBm, N, gamma, alpha).
PUBLISHED_SCALABILITY = {
    3: (-24.69, 66, 39682, 601),
    5: (-23.49, 53, 29761, 561),
    10: (-21.9, 39, 19841, 508),
    20: (-20.5, 29, 14880, 513),
    30: (-19.5, 24, 10822, 450),
    40: (-18.9, 21, 9920, 472),
    50: (-18.5, 19, 8503, 447),
}
PUBLISHED_DATARATES = tuple(sorted(PUBLISHED_SCALABILITY))

# Search constants.
PD_BRACKET_DBM = (-60.0, 10.0)
PD_SEARCH_TOL_DB = 0.01
N_SEARCH_RANGE = (1, 512)

# Calibration of the laser-power relation, produced by ``fit_calibration``
# over the seven published rows (see tests/test_linkbudget.py, which refits
# and checks these constants).
DEFAULT_EXCESS_LOSS_PER_GATE_DB = 0.0026
DEFAULT_CALIBRATION_OFFSET_DB = -10.2267


@dataclass(frozen=True)
class LinkBudgetParams:
    """Every symbol of the link-budget equations, in the units they are tabulated in.

    Losses are positive dB quantities. ``calibration_offset_dB`` and
    ``excess_loss_per_gate_dB`` are fitted, not physical; they close the
    gap between the laser-power relation and the published ``N`` column.
    """

    laser_power_dBm: float = 5.0
    responsivity: float = 1.2
    load_resistance: float = 50.0
    dark_current: float = 35e-9
    temperature: float = 300.0
    rin_dB_per_Hz: float = -140.0
    wall_plug_efficiency: float = 0.1
    il_smf_dB: float = 0.0
    il_ec_dB: float = 1.6
    wg_loss_dB_per_mm: float = 0.3
    splitter_loss_dB: float = 0.01
    il_oxg_dB: float = 4.0
    obl_oxg_dB: float = 0.01
    il_penalty_dB: float = 4.8
    d_oxg_mm: float = 0.020
    d_element_mm: float = 0.0
    electron_charge: float = constants.e
    boltzmann: float = constants.k
    fsr_nm: float = 50.0
    channel_gap_nm: float = 0.7
    calibration_offset_dB: float = DEFAULT_CALIBRATION_OFFSET_DB
    excess_loss_per_gate_dB: float = DEFAULT_EXCESS_LOSS_PER_GATE_DB
    enob_form: str = "typeset"

    def __post_init__(self):
        for f in fields(self):
            if f.name == "enob_form":
                continue
            v = getattr(self, f.name)
            if not math.isfinite(v):
                raise ValidationError(f"{f.name} must be finite, got {v!r}")
        for name in ("responsivity", "load_resistance", "temperature",
                     "wall_plug_efficiency", "fsr_nm", "channel_gap_nm"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be strictly positive")
        if self.dark_current < 0:
            raise ValidationError("dark_current must be non-negative")
        if self.enob_form not in ENOB_FORMS:
            raise ValidationError(f"enob_form must be one of {ENOB_FORMS}")

    @property
    def rin_linear(self) -> float:
        return 10.0 ** (self.rin_dB_per_Hz / 10.0)

    def with_overrides(self, overrides: Mapping[str, object]) -> "LinkBudgetParams":
        known = {f.name: f for f in fields(self)}
        clean = {}
        for key, value in overrides.items():
            if key not in known:
                raise ValidationError(f"unknown link-budget parameter {key!r}")
            clean[key] = value if key == "enob_form" else float(value)
        return replace(self, **clean)


@dataclass(frozen=True)
class ScalabilityRow:
    datarate_GSps: float
    pd_sensitivity_dBm: float
    max_n: int

    def __post_init__(self):
        if self.max_n < 1:
            raise ValidationError("max_n must be at least 1")
        if not math.isfinite(self.pd_sensitivity_dBm):
            raise ValidationError("pd_sensitivity_dBm must be finite")


def dbm_to_watts(p_dbm: float) -> float:
    return 1e-3 * 10.0 ** (p_dbm / 10.0)


def watts_to_dbm(p_watts: float) -> float:
    if p_watts <= 0:
        raise ValidationError(f"power must be positive to express in dBm, got {p_watts}")
    return 10.0 * math.log10(p_watts / 1e-3)


def load_params_file(path) -> LinkBudgetParams:
    """Read ``key = value`` overrides (one Table I symbol per line)."""
    overrides = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            overrides[key] = value
    return LinkBudgetParams().with_overrides(overrides)


# --------------------------------------------------------------------------
# Detector noise and precision


def noise_beta(p_pd_watts: float, params: LinkBudgetParams = LinkBudgetParams()) -> float:
    """Total noise current density (A/sqrt(Hz)): shot + thermal + RIN."""
    if p_pd_watts < 0:
        raise ValidationError(f"optical power must be non-negative, got {p_pd_watts}")
    signal = params.responsivity * p_pd_watts
    shot = 2.0 * params.electron_charge * (signal + params.dark_current)
    thermal = 4.0 * params.boltzmann * params.temperature / params.load_resistance
    rin = signal * signal * params.rin_linear
    return math.sqrt(shot + thermal + rin)


def snr_amplitude(p_pd_watts: float, datarate_Sps: float,
                  params: LinkBudgetParams = LinkBudgetParams()) -> float:
    """Signal-to-noise amplitude ratio fed to the logarithm of the precision formula."""
    if p_pd_watts <= 0 or datarate_Sps <= 0:
        raise ValidationError("power and datarate must be strictly positive")
    noise = noise_beta(p_pd_watts, params) * math.sqrt(datarate_Sps / math.sqrt(2.0))
    return params.responsivity * p_pd_watts / noise


def bit_precision(p_pd_watts: float, datarate_Sps: float,
                  params: LinkBudgetParams = LinkBudgetParams()) -> float:
    """Effective bits resolvable at the detector.

    ``typeset`` subtracts 1.76 inside the logarithm's argument; it returns
    ``-inf`` when the argument is not positive. ``standard`` is the usual
    ENOB expression ``(20 log10(snr) - 1.76) / 6.02``.
    """
    x = snr_amplitude(p_pd_watts, datarate_Sps, params)
    if params.enob_form == "standard":
        return (20.0 * math.log10(x) - 1.76) / 6.02
    arg = x - 1.76
    if arg <= 0:
        return -math.inf
    return 20.0 * math.log10(arg) / 6.02


def solve_pd_sensitivity(datarate_Sps: float, target_bits: float = 1.0,
                         params: LinkBudgetParams = LinkBudgetParams()) -> float:
    """Smallest detector power (dBm) reaching ``target_bits`` at this datarate.

    Bisection over the fixed dBm bracket; the returned point always
    satisfies the target and sits within ``PD_SEARCH_TOL_DB`` of the root.
    """
    if target_bits < 1:
        raise ValidationError(f"target_bits must be >= 1, got {target_bits}")
    if datarate_Sps <= 0:
        raise ValidationError("datarate must be strictly positive")

    def ok(p_dbm):
        return bit_precision(dbm_to_watts(p_dbm), datarate_Sps, params) >= target_bits

    lo, hi = PD_BRACKET_DBM
    if ok(lo) or not ok(hi):
        raise SolverError(
            f"no sensitivity bracket in {PD_BRACKET_DBM} dBm for "
            f"DR={datarate_Sps:g} S/s, B={target_bits}"
        )
    while hi - lo > PD_SEARCH_TOL_DB:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


# --------------------------------------------------------------------------
# Laser power


def _validate_nm(n, m):
    if int(n) != n or int(m) != m or n < 1 or m < 1:
        raise ValidationError(f"N and M must be positive integers, got N={n}, M={m}")


def required_laser_power(n: int, m: int, p_pd_dBm: float,
                         params: LinkBudgetParams = LinkBudgetParams()) -> float:
    """Per-wavelength laser power (dBm) that delivers ``p_pd_dBm`` to each detector."""
    _validate_nm(n, m)
    p = params
    waveguide = p.wg_loss_dB_per_mm * (n * p.d_oxg_mm + p.d_element_mm)
    return (
        p_pd_dBm
        + p.il_penalty_dB
        + waveguide
        + 10.0 * math.log10(m)
        + p.il_smf_dB
        + p.il_ec_dB
        + p.il_oxg_dB
        - 10.0 * math.log10(p.wall_plug_efficiency)
        + (n - 1) * p.obl_oxg_dB
        + math.log2(m) * p.splitter_loss_dB
        + n * p.excess_loss_per_gate_dB
        + p.calibration_offset_dB
    )


def required_laser_power_linear(n: int, m: int, p_pd_dBm: float,
                                params: LinkBudgetParams = LinkBudgetParams()) -> float:
    """Same quantity as ``required_laser_power`` evaluated as a product of linear factors."""
    _validate_nm(n, m)
    p = params

    def gain(db):  # dB loss -> linear transmission
        return 10.0 ** (-db / 10.0)

    p_pd_mw = 10.0 ** (p_pd_dBm / 10.0)
    numerator = 10.0 ** (p.wg_loss_dB_per_mm * (n * p.d_oxg_mm + p.d_element_mm) / 10.0) * m
    denominator = gain(p.il_smf_dB) * gain(p.il_ec_dB) * p.wall_plug_efficiency * gain(p.il_oxg_dB)
    tail = gain(p.obl_oxg_dB) ** (n - 1) * gain(p.splitter_loss_dB) ** math.log2(m)
    calib = 10.0 ** ((n * p.excess_loss_per_gate_dB + p.calibration_offset_dB) / 10.0)
    p_mw = numerator / denominator * p_pd_mw / gain(p.il_penalty_dB) / tail * calib
    return 10.0 * math.log10(p_mw)


def check_fsr_constraint(n: int, fsr_nm: float = 50.0, channel_gap_nm: float = 0.7) -> bool:
    """True when ``n`` channels spaced ``channel_gap_nm`` fit inside one FSR."""
    if fsr_nm <= 0 or channel_gap_nm <= 0:
        raise ValidationError("FSR and channel gap must be positive")
    return n < fsr_nm / channel_gap_nm


def _published_row(datarate_GSps):
    key = _datarate_key(datarate_GSps)
    if key is None:
        raise TableLookupError(
            f"no published row for DR={datarate_GSps:g} GS/s "
            f"(known: {', '.join(map(str, PUBLISHED_DATARATES))})"
        )
    return PUBLISHED_SCALABILITY[key]


def _datarate_key(datarate_GSps):
    for dr in PUBLISHED_DATARATES:
        if abs(dr - datarate_GSps) < 1e-9:
            return dr
    return None


def pd_sensitivity(datarate_GSps: float, mode: str = "table",
                   params: LinkBudgetParams = LinkBudgetParams()) -> float:
    """Detector sensitivity (dBm) for ``datarate_GSps`` in the chosen mode."""
    if mode == "table":
        return _published_row(datarate_GSps)[0]
    if mode == "analytic":
        return solve_pd_sensitivity(datarate_GSps * 1e9, 1.0, params)
    raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")


def solve_max_n(datarate_Sps: float, params: LinkBudgetParams = LinkBudgetParams(),
                mode: str = "table") -> ScalabilityRow:
    """Largest N (with M = N) whose required laser power fits the budget.

    The search never returns an N whose channels overflow the FSR.
    """
    dr_gsps = datarate_Sps / 1e9
    p_pd = pd_sensitivity(dr_gsps, mode, params)
    lo, hi = N_SEARCH_RANGE
    best = None
    for n in range(lo, hi + 1):
        if not check_fsr_constraint(n, params.fsr_nm, params.channel_gap_nm):
            break
        if required_laser_power(n, n, p_pd, params) > params.laser_power_dBm:
            break
        best = n
    if best is None:
        raise SolverError(f"no feasible XPE size at DR={dr_gsps:g} GS/s ({mode} mode)")
    return ScalabilityRow(dr_gsps, p_pd, best)


def scalability_table(mode: str = "table", params: LinkBudgetParams = LinkBudgetParams(),
                      datarates=PUBLISHED_DATARATES) -> list[ScalabilityRow]:
    return [solve_max_n(dr * 1e9, params, mode) for dr in datarates]


def fit_calibration(params: LinkBudgetParams = LinkBudgetParams(), step_dB: float = 1e-4,
                    max_excess_dB: float = 0.05) -> tuple[float, float]:
    """Fit (excess loss per gate, offset) so table mode reproduces every published N.

    For each candidate per-gate excess loss on a ``step_dB`` grid, the
    offsets that keep every published N feasible and N+1 infeasible form an
    interval. The excess with the widest interval wins and the offset is
    that interval's midpoint. Returns ``(excess_dB, offset_dB)``.
    """
    uncal = replace(params, calibration_offset_dB=0.0, excess_loss_per_gate_dB=0.0)
    rows = [(p_pd, n) for p_pd, n, _, _ in PUBLISHED_SCALABILITY.values()]
    fits = [(required_laser_power(n, n, p, uncal), n) for p, n in rows]
    breaks = [(required_laser_power(n + 1, n + 1, p, uncal), n + 1) for p, n in rows]
    best = None
    for i in range(int(round(max_excess_dB / step_dB)) + 1):
        excess = i * step_dB
        hi = min(params.laser_power_dBm - (p + n * excess) for p, n in fits)
        lo = max(params.laser_power_dBm - (p + n * excess) for p, n in breaks)
        if lo < hi and (best is None or hi - lo > best[0]):
            best = (hi - lo, excess, 0.5 * (lo + hi))
    if best is None:
        raise SolverError("no calibration reproduces the published XPE sizes")
    return best[1], best[2]
