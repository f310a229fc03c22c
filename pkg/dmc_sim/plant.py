"""
Electrical model of the PPL-side MVDC bus and the supercapacitor charger.

Closed-form relations (terminal current, bus voltage, transient charging
current, capacitor sizing) sit next to the fixed-step model that composes
them: generator behind an effective reactance, proportional AVR with a
first-order exciter, averaged rectifier, lumped load, and an average-value
buck converter charging the supercapacitor bank.

All quantities are SI. Generator quantities are AC-equivalent magnitudes;
the rectifier maps them to the DC side with `rectifier_gain`.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

from .errors import DomainError, NumericalError
from .models import (
    ChargeCommand,
    IntegratorMethod,
    MetricSample,
    PlantParams,
    SwitchActual,
    SwitchCommand,
)
from .switchgear import SwitchBank, apply_gate, check_blocking, conduction_fraction, new_bank

logger = logging.getLogger(__name__)


# ============================================================================
# STATE
# ============================================================================

@dataclass(slots=True)
class GeneratorState:
    emf: float
    x_effective: float
    q_output: float
    p_output: float
    last_disturbance_time: float = -math.inf
    v_terminal: float = 0.0
    i_terminal: float = 0.0
    # pre-disturbance current that keeps the EMF behind x_effective continuous
    i_disturbance: float = 0.0


@dataclass(slots=True)
class BuckState:
    inductor_current: float = 0.0
    duty: float = 0.0
    input_current: float = 0.0
    l_filter: float = 1e-3
    r_parasitic: float = 1e-3


@dataclass(slots=True)
class SupercapState:
    capacitance: float
    voltage: float = 0.0

    @property
    def stored_energy(self) -> float:
        return 0.5 * self.capacitance * self.voltage * self.voltage


@dataclass(slots=True)
class PlantState:
    time: float
    generator: GeneratorState
    bus_voltage: float
    bus_current: float
    buck: BuckState
    supercap: SupercapState
    switches: SwitchBank
    load_admittance: float = 0.0
    # energy ledger [J]
    energy_bus_in: float = 0.0
    energy_cap_in: float = 0.0
    energy_loss: float = 0.0


# ============================================================================
# CLOSED-FORM RELATIONS
# ============================================================================

def _require_finite(**values: float) -> None:
    for name, value in values.items():
        if not math.isfinite(value):
            raise DomainError(f"{name} must be finite, got {value!r}")


def steady_terminal_current(emf: float, x_g: float, r_line: float, r_load: float) -> float:
    """|E / (jX_g + R_line + R_load)| before charging starts."""
    _require_finite(emf=emf, x_g=x_g, r_line=r_line, r_load=r_load)
    if x_g < 0:
        raise DomainError("x_g must be non-negative")
    impedance = complex(r_line + r_load, x_g)
    if impedance == 0:
        raise DomainError("zero impedance between source and load")
    return abs(emf / impedance)


def steady_bus_voltage(emf: float, x_g: float, i_load: float) -> float:
    """Magnitude-level bus voltage E - X_g * I_load."""
    _require_finite(emf=emf, x_g=x_g, i_load=i_load)
    return emf - x_g * i_load


def transient_charging_current(emf: float, x_eff: float, r_line: float) -> float:
    """
    |E / (jX_eff + R_line)|: the instant after charging starts, with the
    empty supercapacitor shorting the load out of the path.
    """
    if math.isinf(r_line) and r_line > 0:
        return 0.0
    _require_finite(emf=emf, x_eff=x_eff, r_line=r_line)
    impedance = complex(r_line, x_eff)
    if impedance == 0:
        raise DomainError("zero impedance in the charging path")
    return abs(emf / impedance)


def supercap_energy(cap: SupercapState) -> float:
    return cap.stored_energy


def required_capacitance(energy: float, v_final: float) -> float:
    """C = 2E / V^2."""
    if v_final == 0:
        raise DomainError("final voltage must be non-zero")
    return 2.0 * energy / (v_final * v_final)


# ============================================================================
# BUCK CONVERTER
# ============================================================================

def buck_average_step(
    buck: BuckState,
    v_bus: float,
    cap: SupercapState,
    gate_on: bool,
    dt: float,
    *,
    duty: Optional[float] = None,
    conduction: float = 1.0,
    method: IntegratorMethod = IntegratorMethod.EULER,
    l_inv: Optional[float] = None,
    c_inv: Optional[float] = None,
) -> tuple[BuckState, SupercapState]:
    """
    Advance the averaged buck + supercapacitor by one step.

    dI_L/dt = (d*V_bus - V_c - R*I_L) / L and dV_c/dt = I_L / C, with
    d = duty * conduction while the gate is on and 0 otherwise. The diode
    keeps I_L >= 0. The bus-side current is d * I_L at the start of the step.
    `l_inv` and `c_inv` may carry precomputed 1/L and 1/C.
    """
    if dt <= 0:
        raise DomainError("dt must be positive")
    duty = buck.duty if duty is None else duty
    if not 0.0 <= duty <= 1.0:
        raise DomainError(f"duty {duty!r} outside [0, 1]")

    d_eff = duty * conduction if gate_on else 0.0
    i0 = buck.inductor_current
    v0 = cap.voltage
    if i0 == 0.0 and d_eff == 0.0:
        if buck.input_current == 0.0 and buck.duty == duty:
            return buck, cap
        return replace(buck, duty=duty, input_current=0.0), cap

    if l_inv is None:
        l_inv = 1.0 / buck.l_filter
    if c_inv is None:
        c_inv = 1.0 / cap.capacitance
    r = buck.r_parasitic
    drive = d_eff * v_bus

    di0 = (drive - v0 - r * i0) * l_inv
    dv0 = i0 * c_inv
    if method is IntegratorMethod.HEUN:
        ip = max(0.0, i0 + dt * di0)
        vp = v0 + dt * dv0
        di1 = (drive - vp - r * ip) * l_inv
        dv1 = ip * c_inv
        i1 = max(0.0, i0 + 0.5 * dt * (di0 + di1))
        v1 = v0 + 0.5 * dt * (dv0 + dv1)
    else:
        i1 = max(0.0, i0 + dt * di0)
        v1 = v0 + dt * dv0

    return (
        BuckState(i1, duty, d_eff * i0, buck.l_filter, r),
        SupercapState(cap.capacitance, v1),
    )


# ============================================================================
# GENERATOR + NETWORK
# ============================================================================

class BusSolution(NamedTuple):
    v_bus: float
    i_dc: float
    i_terminal: float
    v_terminal: float
    v_rectifier: float


def solve_bus(
    params: PlantParams,
    emf_internal: float,
    x_eff: float,
    i_charge: float,
) -> BusSolution:
    """
    Algebraic bus solution for a given EMF behind `x_eff` and charger draw.

    The rectifier output is k*V_t - r_c*I_dc with I_t = k*I_dc, so the bus
    sees a Thevenin source k*E behind k^2*x_eff + r_c + r_line feeding the
    load conductance and the charger in parallel.
    """
    net = params.network
    k = net.rectifier_gain
    g = 0.0 if math.isinf(net.r_load) else 1.0 / net.r_load
    z = k * k * x_eff + net.r_commutation + net.r_line
    v_bus = (k * emf_internal - z * i_charge) / (1.0 + z * g)
    if v_bus < 0.0:
        v_bus = 0.0
    i_dc = v_bus * g + i_charge
    i_t = k * i_dc
    return BusSolution(
        v_bus=v_bus,
        i_dc=i_dc,
        i_terminal=i_t,
        v_terminal=emf_internal - x_eff * i_t,
        v_rectifier=v_bus + net.r_line * i_dc,
    )


def initial_state(params: PlantParams, v_cap: Optional[float] = None) -> PlantState:
    """Pre-charge equilibrium: x_eff = X_g, EMF at nominal, switches open."""
    gen = params.generator
    sol = solve_bus(params, gen.emf_nominal, gen.x_sync, 0.0)
    cap_voltage = params.buck.initial_voltage if v_cap is None else v_cap
    return PlantState(
        time=0.0,
        generator=GeneratorState(
            emf=gen.emf_nominal,
            x_effective=gen.x_sync,
            q_output=sol.i_terminal * (gen.emf_nominal - sol.v_terminal),
            p_output=sol.v_rectifier * sol.i_dc,
            v_terminal=sol.v_terminal,
            i_terminal=sol.i_terminal,
        ),
        bus_voltage=sol.v_bus,
        bus_current=sol.i_dc,
        buck=BuckState(l_filter=params.buck.l_filter, r_parasitic=params.buck.r_parasitic),
        supercap=SupercapState(capacitance=params.buck.capacitance, voltage=cap_voltage),
        switches=new_bank(params.switchgear),
        load_admittance=sol.i_dc / sol.v_bus if sol.v_bus > 0 else 0.0,
    )


class StepConstants(NamedTuple):
    """Per-run factors that stay fixed while `dt` and the parameters do."""
    dt: float
    reactance_decay: float
    l_inv: float
    c_inv: float


def step_constants(params: PlantParams, dt: float) -> StepConstants:
    if dt <= 0:
        raise DomainError("dt must be positive")
    return StepConstants(
        dt=dt,
        reactance_decay=math.exp(-dt / params.generator.t_reactance_relax),
        l_inv=1.0 / params.buck.l_filter,
        c_inv=1.0 / params.buck.capacitance,
    )


def _check_finite(time: float, **values: float) -> None:
    # a sum of finite magnitudes this size stays finite; any inf or nan does not
    if math.isfinite(sum(values.values())):
        return
    for name, value in values.items():
        if not math.isfinite(value):
            raise NumericalError(name, time, value)


def plant_step(
    state: PlantState,
    params: PlantParams,
    command: ChargeCommand,
    dt: float,
    constants: Optional[StepConstants] = None,
) -> PlantState:
    """
    Advance the plant by one fixed step.

    Order within the step: gate command, charger draw from the current
    inductor state, bus solve (with a reactance reset if the load admittance
    jumped), buck/supercapacitor update, then exciter and reactance
    relaxation toward the next step. `constants` from step_constants(params,
    dt) skips recomputing the fixed factors.
    """
    if constants is not None and constants.dt == dt:
        decay, l_inv, c_inv = constants.reactance_decay, constants.l_inv, constants.c_inv
    else:
        if dt <= 0:
            raise DomainError("dt must be positive")
        decay = math.exp(-dt / params.generator.t_reactance_relax)
        l_inv = c_inv = None
    gen_p = params.generator
    gen = state.generator
    t = state.time

    bank = apply_gate(state.switches, command.gate_s1, SwitchCommand.OPEN, t)
    conduction = conduction_fraction(bank.s1, t, dt)
    gate_on = conduction > 0.0
    duty = command.duty
    if bank.s1.actual is SwitchActual.TURNING_OFF:
        # still conducting at the last commanded duty until the deadline
        duty = state.buck.duty
    d_eff = duty * conduction
    i_charge = d_eff * state.buck.inductor_current

    x = gen_p.x_sync
    x_eff = gen.x_effective
    i_dist = gen.i_disturbance
    last_disturbance = gen.last_disturbance_time
    sol = solve_bus(params, gen.emf - (x - x_eff) * i_dist, x_eff, i_charge)
    admittance = sol.i_dc / sol.v_bus if sol.v_bus > 0.0 else math.inf

    y_prev = state.load_admittance
    if y_prev > 0.0 and abs(admittance - y_prev) > params.network.disturbance_threshold * y_prev:
        x_t = gen_p.x_transient
        i_dist = ((x - x_eff) * i_dist + (x_eff - x_t) * gen.i_terminal) / (x - x_t)
        x_eff = x_t
        last_disturbance = t
        sol = solve_bus(params, gen.emf - (x - x_eff) * i_dist, x_eff, i_charge)
        admittance = sol.i_dc / sol.v_bus if sol.v_bus > 0.0 else math.inf
        logger.debug("Reactance reset at t=%.6f s (admittance %.4g -> %.4g S)", t, y_prev, admittance)

    buck, cap = buck_average_step(
        state.buck,
        sol.v_bus,
        state.supercap,
        gate_on,
        dt,
        duty=duty,
        conduction=conduction,
        method=params.integrator,
        l_inv=l_inv,
        c_inv=c_inv,
    )

    # ledger
    i0 = state.buck.inductor_current
    v0 = state.supercap.voltage
    if params.integrator is IntegratorMethod.HEUN:
        i1 = buck.inductor_current
        v1 = cap.voltage
        cap_in = 0.5 * dt * (v0 * i0 + v1 * i1)
        loss = 0.5 * dt * buck.r_parasitic * (i0 * i0 + i1 * i1)
    else:
        cap_in = dt * v0 * i0
        loss = dt * buck.r_parasitic * i0 * i0

    emf_target = gen_p.emf_reference + gen_p.avr_gain * (gen_p.v_terminal_setpoint - sol.v_terminal)
    emf_target = min(max(emf_target, 0.0), gen_p.emf_ceiling)
    emf_next = gen.emf + dt * (emf_target - gen.emf) / gen_p.t_exciter
    x_next = x - (x - x_eff) * decay

    t_next = t + dt
    q = sol.i_terminal * (gen.emf - sol.v_terminal)
    _check_finite(
        t_next,
        bus_voltage=sol.v_bus,
        reactive_power=q,
        emf=emf_next,
        inductor_current=buck.inductor_current,
        cap_voltage=cap.voltage,
    )
    bank = check_blocking(bank, sol.v_bus, cap.voltage)

    # positional: field order of GeneratorState and PlantState
    generator = GeneratorState(
        emf_next, x_next, q, sol.v_rectifier * sol.i_dc,
        last_disturbance, sol.v_terminal, sol.i_terminal, i_dist,
    )
    return PlantState(
        t_next, generator, sol.v_bus, sol.i_dc, buck, cap, bank, admittance,
        state.energy_bus_in + dt * sol.v_bus * buck.input_current,
        state.energy_cap_in + cap_in,
        state.energy_loss + loss,
    )


def measure(state: PlantState) -> MetricSample:
    """Snapshot of what the controller can observe."""
    buck = state.buck
    cap = state.supercap
    return MetricSample(
        state.time, state.bus_voltage, state.generator.q_output, buck.input_current,
        cap.voltage, buck.inductor_current, cap.stored_energy,
    )
