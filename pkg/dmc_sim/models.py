"""
Pydantic models for the DMC simulator.
Defines parameters, limits, scenario configuration, summaries and run manifests.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


# ============================================================================
# ENUMS
# ============================================================================

class BusMode(str, Enum):
    """MVDC bus tie configuration."""
    RING = "ring"
    SPLIT_PLANT = "split_plant"


class ControlMode(str, Enum):
    """Which disturbance metric the controller caps during a run."""
    M1 = "m1"
    M2 = "m2"


class ControlPhase(str, Enum):
    """Charging controller phases."""
    IDLE = "idle"
    PROBING = "probing"
    SUSPENDED = "suspended"
    FIXED_TRACKING = "fixed_tracking"
    BAND_TRACKING = "band_tracking"
    DONE = "done"


class SwitchCommand(str, Enum):
    """Gate command for an IGBT."""
    OPEN = "open"
    CLOSED = "closed"


class SwitchActual(str, Enum):
    """Conduction state of an IGBT."""
    OPEN = "open"
    CLOSED = "closed"
    TURNING_OFF = "turning_off"


class IntegratorMethod(str, Enum):
    """Fixed-step integration scheme for the charger."""
    EULER = "euler"
    HEUN = "heun"


# ============================================================================
# PLANT PARAMETERS
# ============================================================================

class GeneratorParams(BaseModel):
    """Aggregate generator + exciter seen by the PPL-side bus (AC-equivalent quantities)."""
    model_config = ConfigDict(frozen=True)

    emf_nominal: float = Field(..., gt=0, description="Internal EMF at the operating point [V]")
    x_sync: float = Field(..., gt=0, description="Synchronous reactance X_g [ohm]")
    x_transient: float = Field(..., gt=0, description="Transient reactance X'_g [ohm]")
    t_reactance_relax: float = Field(0.6, gt=0, description="X'_g -> X_g relaxation [s]")
    t_exciter: float = Field(1.0, gt=0, description="Exciter first-order lag [s]")
    emf_ceiling: float = Field(..., gt=0, description="Exciter ceiling [V]")
    v_terminal_setpoint: float = Field(..., ge=0, description="AVR terminal voltage setpoint [V]")
    emf_reference: float = Field(..., ge=0, description="Exciter output at zero voltage error [V]")
    avr_gain: float = Field(4.0, ge=0, description="AVR proportional gain [V/V]")
    rated_mva: float = Field(..., gt=0, description="Aggregate rating [VA]")

    @model_validator(mode="after")
    def _check_reactances(self) -> "GeneratorParams":
        if not self.x_transient < self.x_sync:
            raise ValueError("x_transient must be smaller than x_sync")
        if self.emf_ceiling < self.emf_nominal:
            raise ValueError("emf_ceiling must be at least emf_nominal")
        return self


class NetworkParams(BaseModel):
    """DC network between the rectifier and the PPL module."""
    model_config = ConfigDict(frozen=True)

    r_line: float = Field(0.002, gt=0, description="Line resistance R_Line [ohm]")
    r_load: float = Field(..., gt=0, description="Lumped propulsion + zonal load R_Load [ohm]")
    r_commutation: float = Field(0.06, ge=0, description="Rectifier commutation drop [ohm]")
    rectifier_gain: float = Field(1.35, gt=0, description="AC magnitude to DC voltage ratio")
    bus_rated_voltage: float = Field(5000.0, gt=0, description="Rated MVDC bus voltage [V]")
    mode: BusMode = BusMode.RING
    disturbance_threshold: float = Field(0.05, gt=0, description="Admittance step that resets X'_g")

    @model_validator(mode="after")
    def _check_load(self) -> "NetworkParams":
        if self.r_load < 10.0 * self.r_line:
            raise ValueError("r_load must be much larger than r_line")
        return self


class BuckParams(BaseModel):
    """Buck charger and supercapacitor sizing."""
    model_config = ConfigDict(frozen=True)

    l_filter: float = Field(1e-3, gt=0, description="Filter inductance [H]")
    r_parasitic: float = Field(1e-3, ge=0, description="Inductor path resistance [ohm]")
    capacitance: float = Field(37.5, gt=0, description="Supercapacitor bank [F]")
    initial_voltage: float = Field(0.0, ge=0, description="Supercapacitor voltage at t=0 [V]")


class SwitchgearParams(BaseModel):
    """IGBT ratings for S1 and S2."""
    model_config = ConfigDict(frozen=True)

    turnoff_delay: float = Field(7.3e-6, ge=0, description="Turn-off delay [s]")
    blocking_voltage_limit: float = Field(6500.0, gt=0, description="Blocking rating [V]")


class PlantParams(BaseModel):
    """Everything plant_step needs besides state and command."""
    model_config = ConfigDict(frozen=True)

    generator: GeneratorParams
    network: NetworkParams
    buck: BuckParams = Field(default_factory=BuckParams)
    switchgear: SwitchgearParams = Field(default_factory=SwitchgearParams)
    integrator: IntegratorMethod = IntegratorMethod.EULER


# ============================================================================
# CONTROLLER PARAMETERS
# ============================================================================

class Limits(BaseModel):
    """Disturbance-metric limits and procedure settings."""
    model_config = ConfigDict(frozen=True)

    v_bus_limit: float = Field(5000.0, gt=0, description="V_bus,lim in M1 = |V_bus,lim - V_bus| [V]")
    m1_limit: float = Field(800.0, ge=0, description="Upper bound on M1 [V]")
    m1_alert: float = Field(780.0, ge=0, description="M1 suspension threshold [V]")
    q_limit: float = Field(10e6, ge=0, description="Upper bound on M2 [var]")
    q_alert: float = Field(9.5e6, ge=0, description="M2 suspension threshold [var]")
    attenuation: float = Field(0.95, gt=0, lt=1, description="Attenuation factor alpha")
    band_coefficient: float = Field(0.9, gt=0, lt=1, description="Lower/upper band ratio")
    target_cap_voltage: float = Field(4000.0, gt=0, description="Charge target [V]")
    control_period: float = Field(50e-6, gt=0, description="Controller period [s]")
    probe_slew: float = Field(5000.0, gt=0, description="Probing ramp rate [A/s]")
    probe_lag: float = Field(50.0, gt=0, description="Max reference lead over measured current [A]")
    band_slew: float = Field(5000.0, gt=0, description="Band-tracking reference ramp rate [A/s]")
    band_tolerance: float = Field(0.005, ge=0, lt=0.05, description="Band edge tolerance, fraction of i_max")
    grace_window: float = Field(3.0, ge=0, description="Exciter settling window after band setup [s]")
    suspend_monitor: float = Field(0.5, ge=0, description="Minimum M2 suspension before deciding [s]")
    attenuation_cap: int = Field(50, ge=1, description="Max attenuation iterations")


class TrackerParams(BaseModel):
    """Charging-current tracker tuning."""
    model_config = ConfigDict(frozen=True)

    loop_gain: float = Field(0.2, ge=0, lt=1, description="Proportional gain on the current error")
    integral_rate: float = Field(20.0, ge=0, description="Integral gain [1/s]")
    integrator_limit: float = Field(500.0, gt=0, description="Anti-windup clamp [A]")


# ============================================================================
# SCENARIO CONFIGURATION
# ============================================================================

class GeneratorSetConfig(BaseModel):
    """Per generator set (one MTG + one ATG) values before calibration."""
    model_config = ConfigDict(frozen=True)

    x_sync: float = Field(0.024, gt=0, description="Per-set synchronous reactance [ohm]")
    x_transient: float = Field(0.0068, gt=0, description="Per-set transient reactance [ohm]")
    r_commutation: float = Field(0.12, ge=0, description="Per-set commutation drop [ohm]")
    t_reactance_relax: float = Field(0.6, gt=0)
    t_exciter: float = Field(1.0, gt=0)
    avr_gain: float = Field(4.0, ge=0)
    ceiling_ratio: float = Field(1.3, ge=1.0, description="emf_ceiling / emf_nominal")
    mtg_rating: float = Field(36e6, gt=0, description="Main turbine generator rating [W]")
    atg_rating: float = Field(5e6, ge=0, description="Auxiliary turbine generator rating [W]")

    @model_validator(mode="after")
    def _check_ratio(self) -> "GeneratorSetConfig":
        if not self.x_transient < self.x_sync:
            raise ValueError("x_transient must be smaller than x_sync")
        return self


class NetworkConfig(BaseModel):
    """Network values before calibration (R_Load is solved for)."""
    model_config = ConfigDict(frozen=True)

    r_line: float = Field(0.002, gt=0)
    rectifier_gain: float = Field(1.35, gt=0)
    bus_rated_voltage: float = Field(5000.0, gt=0)
    disturbance_threshold: float = Field(0.05, gt=0)


class ScenarioConfig(BaseModel):
    """One simulated test case."""
    model_config = ConfigDict(frozen=True)

    name: str = "custom"
    mode: BusMode = BusMode.RING
    controller_mode: ControlMode = ControlMode.M1
    initial_p: float = Field(70e6, ge=0, description="Initial generation [W]")
    initial_q: float = Field(5e6, ge=0, description="Initial reactive output [var]")
    initial_bus_voltage: Optional[float] = Field(None, gt=0, description="Optional pre-charge bus target [V]")
    charge_start: float = Field(5.0, ge=0, description="Controller engagement time [s]")
    sim_duration: float = Field(30.0, gt=0, description="Simulated time cap [s]")
    dt: float = Field(50e-6, gt=0, description="Plant step [s]")
    decimation: int = Field(10, ge=1, description="Record every n-th step")
    post_done_tail: float = Field(1.0, ge=0, description="Simulated time kept after Done [s]")
    watchdog_window: float = Field(15.0, gt=0, description="Zero-progress window [s]")
    watchdog_min_progress: float = Field(1.0, gt=0, description="V_c progress that resets the watchdog [V]")
    integrator: IntegratorMethod = IntegratorMethod.EULER
    limits: Limits = Field(default_factory=Limits)
    generator: GeneratorSetConfig = Field(default_factory=GeneratorSetConfig)
    network: NetworkConfig = Field(default_factory=NetworkConfig)
    buck: BuckParams = Field(default_factory=BuckParams)
    tracker: TrackerParams = Field(default_factory=TrackerParams)
    switchgear: SwitchgearParams = Field(default_factory=SwitchgearParams)

    @model_validator(mode="after")
    def _check_window(self) -> "ScenarioConfig":
        if self.charge_start > self.sim_duration:
            raise ValueError("charge_start must not exceed sim_duration")
        return self

    @property
    def control_stride(self) -> int:
        """Plant steps per controller invocation."""
        return max(1, round(self.limits.control_period / self.dt))

    @property
    def test_setting(self) -> str:
        """Table-style label, e.g. 'M1_limit=0.8 kV'."""
        if self.controller_mode is ControlMode.M1:
            return f"M1_limit={self.limits.m1_limit / 1e3:g} kV"
        return f"M2_limit={self.limits.q_limit / 1e6:g} Mvar"


# ============================================================================
# PER-STEP VALUES
# ============================================================================
# Built every plant step, so slotted but not frozen. Never mutated in place;
# derive new values with dataclasses.replace.

@dataclass(slots=True)
class ChargeCommand:
    """Controller output for one control period."""
    gate_s1: SwitchCommand = SwitchCommand.OPEN
    current_reference: float = 0.0
    duty: float = 0.0

    def __post_init__(self) -> None:
        if self.current_reference < 0.0:
            raise ValueError("current_reference must be non-negative")
        if self.gate_s1 is SwitchCommand.OPEN and (self.current_reference or self.duty):
            raise ValueError("an open gate carries no reference or duty")


IDLE_COMMAND = ChargeCommand()


@dataclass(slots=True)
class MetricSample:
    """What the controller sees of the plant."""
    time: float
    v_bus: float
    q_mtg: float
    i_charge: float
    v_cap: float
    i_inductor: float = 0.0
    stored_energy: float = 0.0


@dataclass(slots=True)
class TelemetryRecord:
    """One recorded step, in CSV column order."""
    time: float
    v_bus: float
    q_mtg: float
    i_charge: float
    v_cap: float
    energy: float
    phase: ControlPhase
    duty: float
    reference: float
    attenuation_count: int = 0


# ============================================================================
# RESULT MODELS
# ============================================================================

class SummaryRow(BaseModel):
    """Per-run aggregates, one row of the results table."""

    test_setting: str
    metric_unit: str
    max_metric: Optional[float] = None
    min_metric: Optional[float] = None
    avg_metric: Optional[float] = None
    charging_current: Optional[float] = Field(None, description="Fixed current (M1) [A]")
    charging_band: Optional[tuple[float, float]] = Field(None, description="(lower, upper) band (M2) [A]")
    charging_time: Optional[float] = Field(None, description="charge_start to Done [s]")
    attenuation: Optional[float] = None
    attenuation_count: int = 0
    completed: bool = False
    empty: bool = False

    @model_validator(mode="after")
    def _check_order(self) -> "SummaryRow":
        if None not in (self.max_metric, self.min_metric, self.avg_metric):
            if not self.min_metric <= self.avg_metric <= self.max_metric:
                raise ValueError("summary requires min <= avg <= max")
        if self.completed and not (self.charging_time and self.charging_time > 0):
            raise ValueError("completed runs need a positive charging_time")
        return self

    @field_validator("max_metric", "min_metric", "avg_metric", "charging_time")
    @classmethod
    def _finite(cls, value: Optional[float]) -> Optional[float]:
        if value is not None and not math.isfinite(value):
            raise ValueError("summary values must be finite")
        return value


class RunManifest(BaseModel):
    """What produced an output directory."""
    config_path: Optional[str] = None
    output_dir: str
    scenario_ids: list[str] = Field(default_factory=list)
    tool_version: str
    runtime_s: dict[str, float] = Field(default_factory=dict, description="Wall-clock per scenario")


class ErrorResponse(BaseModel):
    """Error report printed by the CLI."""
    success: bool = False
    error: str
    code: str
