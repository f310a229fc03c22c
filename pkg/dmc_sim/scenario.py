"""
Scenario assembly: calibrate the plant to the initial operating point, run
the plant/controller loop, record telemetry and reduce it to a summary row.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy.optimize import root

from .config import load_scenario
from .controller import ControllerState, check_limits, controller_step, new_controller
from .errors import CalibrationError, InfeasibleLimitsError, NonConvergenceError, StalledRunError
from .models import (
    IDLE_COMMAND,
    BusMode,
    ControlMode,
    ControlPhase,
    GeneratorParams,
    NetworkParams,
    PlantParams,
    ScenarioConfig,
    SummaryRow,
    TelemetryRecord,
)
from .plant import PlantState, initial_state, measure, plant_step, solve_bus, step_constants

logger = logging.getLogger(__name__)

CALIBRATION_TOLERANCE = 0.005

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"
CANONICAL_CASES = ("m1_0.6kV", "m1_0.8kV", "m2_6Mvar", "m2_10Mvar")


# ============================================================================
# CALIBRATION
# ============================================================================

def _operating_point(
    p: float, q: float, x: float, r_c: float, r_line: float, k: float, v_bus: Optional[float]
) -> tuple[float, float, float]:
    """Closed-form (r_load, emf, x) that deliver (p, q) at the rectifier."""
    if v_bus is None:
        i_t = math.sqrt(q / x)
        i_dc = i_t / k
        v_r = p / i_dc
        v_bus = v_r - r_line * i_dc
    else:
        # p = (v_bus + r_line * i_dc) * i_dc
        i_dc = (-v_bus + math.sqrt(v_bus * v_bus + 4.0 * r_line * p)) / (2.0 * r_line)
        i_t = k * i_dc
        x = q / (i_t * i_t)
        v_r = v_bus + r_line * i_dc
    v_t = (v_r + r_c * i_dc) / k
    return v_bus / i_dc, v_t + x * i_t, x


def calibrate_operating_point(config: ScenarioConfig) -> PlantParams:
    """
    Solve R_Load and the exciter operating point so the pre-charge steady
    state delivers initial_p and initial_q (within 0.5 %).

    Ring mode aggregates two generator sets; split-plant mode leaves the
    charging bus with one set carrying half of the initial output. When
    `initial_bus_voltage` is set, the reactance scale is solved as well.
    """
    gen_cfg = config.generator
    net_cfg = config.network
    n_sets = 2 if config.mode is BusMode.RING else 1
    p = config.initial_p * n_sets / 2.0
    q = config.initial_q * n_sets / 2.0
    rating = n_sets * (gen_cfg.mtg_rating + gen_cfg.atg_rating)
    if p > rating:
        raise CalibrationError(
            f"initial output {p / 1e6:.2f} MW exceeds the {rating / 1e6:.0f} MW rating "
            f"in {config.mode.value} mode",
            achieved={"p_requested": p, "rating": rating},
        )

    k = net_cfg.rectifier_gain
    r_line = net_cfg.r_line
    x = gen_cfg.x_sync / n_sets
    x_t = gen_cfg.x_transient / n_sets
    r_c = gen_cfg.r_commutation / n_sets
    target_bus = config.initial_bus_voltage

    def build(r_load: float, emf: float, scale: float) -> PlantParams:
        network = NetworkParams(
            r_line=r_line,
            r_load=r_load,
            r_commutation=r_c,
            rectifier_gain=k,
            bus_rated_voltage=net_cfg.bus_rated_voltage,
            mode=config.mode,
            disturbance_threshold=net_cfg.disturbance_threshold,
        )
        draft = PlantParams(
            generator=GeneratorParams(
                emf_nominal=emf,
                x_sync=x * scale,
                x_transient=x_t * scale,
                t_reactance_relax=gen_cfg.t_reactance_relax,
                t_exciter=gen_cfg.t_exciter,
                emf_ceiling=gen_cfg.ceiling_ratio * emf,
                v_terminal_setpoint=0.0,
                emf_reference=emf,
                avr_gain=gen_cfg.avr_gain,
                rated_mva=rating,
            ),
            network=network,
            buck=config.buck,
            switchgear=config.switchgear,
            integrator=config.integrator,
        )
        sol = solve_bus(draft, emf, x * scale, 0.0)
        generator = draft.generator.model_copy(update={"v_terminal_setpoint": sol.v_terminal})
        return draft.model_copy(update={"generator": generator})

    if p == 0.0:
        v_nl = target_bus or net_cfg.bus_rated_voltage
        if q > 0.0:
            logger.warning("No real load: reactive target %.3g var cannot be met, using 0", q)
        params = build(math.inf, v_nl / k, 1.0)
        logger.info("Calibrated open-circuit bus: E=%.1f V, V_bus=%.1f V", v_nl / k, v_nl)
        return params
    if q <= 0.0:
        raise CalibrationError("reactive output must be positive while delivering power",
                               achieved={"q_requested": q})

    r_load0, emf0, x0 = _operating_point(p, q, x, r_c, r_line, k, target_bus)
    scale0 = x0 / x

    def achieved(r_load: float, emf: float, scale: float) -> dict[str, float]:
        params = build(r_load, emf, scale)
        sol = solve_bus(params, emf, x * scale, 0.0)
        return {
            "p": sol.v_rectifier * sol.i_dc,
            "q": sol.i_terminal * (emf - sol.v_terminal),
            "v_bus": sol.v_bus,
        }

    def residual(z: np.ndarray) -> list[float]:
        r_load, emf = math.exp(z[0]), z[1]
        scale = math.exp(z[2]) if target_bus is not None else 1.0
        got = achieved(r_load, emf, scale)
        res = [(got["p"] - p) / p, (got["q"] - q) / q]
        if target_bus is not None:
            res.append((got["v_bus"] - target_bus) / target_bus)
        return res

    z0 = [math.log(r_load0), emf0] + ([math.log(scale0)] if target_bus is not None else [])
    solution = root(residual, np.asarray(z0), method="hybr", tol=1e-12)
    r_load = math.exp(solution.x[0])
    emf = float(solution.x[1])
    scale = math.exp(solution.x[2]) if target_bus is not None else 1.0
    got = achieved(r_load, emf, scale)

    errors = [abs(got["p"] - p) / p, abs(got["q"] - q) / q]
    if target_bus is not None:
        errors.append(abs(got["v_bus"] - target_bus) / target_bus)
    if not solution.success and max(errors) > CALIBRATION_TOLERANCE:
        raise CalibrationError(f"operating point not reached: {solution.message}", achieved=got)
    if max(errors) > CALIBRATION_TOLERANCE:
        raise CalibrationError("operating point outside tolerance", achieved=got)

    params = build(r_load, emf, scale)
    logger.info(
        "Calibrated %s: R_load=%.4f ohm, E=%.1f V, V_bus=%.1f V, P=%.3g W, Q=%.3g var",
        config.mode.value, r_load, emf, got["v_bus"], got["p"], got["q"],
    )
    return params


# ============================================================================
# CLOSED LOOP
# ============================================================================

class AttenuationEvent(NamedTuple):
    """One M2 attenuation: the recorded maximum before and after."""
    time: float
    i_max_before: float
    i_max_after: float


@dataclass
class RunResult:
    """Everything a run produces."""
    config: ScenarioConfig
    params: PlantParams
    telemetry: list[TelemetryRecord]
    summary: SummaryRow
    final_state: PlantState
    controller: ControllerState
    steps: int = 0
    extras: dict[str, float] = field(default_factory=dict)
    attenuations: list[AttenuationEvent] = field(default_factory=list)


def _record(state: PlantState, ctrl: ControllerState, duty: float, reference: float) -> TelemetryRecord:
    return TelemetryRecord(
        time=state.time,
        v_bus=state.bus_voltage,
        q_mtg=state.generator.q_output,
        i_charge=state.buck.input_current,
        v_cap=state.supercap.voltage,
        energy=state.supercap.stored_energy,
        phase=ctrl.phase,
        duty=duty,
        reference=reference,
        attenuation_count=ctrl.attenuation_count,
    )


def run(
    config: ScenarioConfig,
    params: Optional[PlantParams] = None,
    on_progress: Optional[Callable[[float], None]] = None,
) -> RunResult:
    """
    Simulate one scenario.

    The controller engages at charge_start and runs every control period;
    the run stops at sim_duration or post_done_tail after Done. Records are
    taken every `decimation` steps and on every phase change.
    """
    params = params or calibrate_operating_point(config)
    check_limits(config.limits, config.controller_mode)

    dt = config.dt
    stride = config.control_stride
    limits = config.limits.model_copy(update={"control_period": stride * dt})
    tuning = config.tracker
    decimation = config.decimation
    n_steps = int(round(config.sim_duration / dt))
    start_step = int(math.ceil(config.charge_start / dt - 1e-9))
    stop_time = math.inf

    state = initial_state(params)
    constants = step_constants(params, dt)
    ctrl = new_controller(config.controller_mode)
    command = IDLE_COMMAND
    records: list[TelemetryRecord] = []
    attenuations: list[AttenuationEvent] = []
    last_recorded = -1

    progress_v = state.supercap.voltage
    progress_t = config.charge_start
    progress_every = max(1, n_steps // 100)

    step = 0
    for step in range(n_steps):
        phase_changed = False
        if step >= start_step and ctrl.phase is not ControlPhase.DONE and (step - start_step) % stride == 0:
            previous = ctrl
            try:
                ctrl, command = controller_step(ctrl, measure(state), limits, tuning)
            except (InfeasibleLimitsError, NonConvergenceError) as exc:
                raise type(exc)(f"{exc.message} (t={state.time:.6f} s)") from exc
            phase_changed = ctrl.phase is not previous.phase
            if ctrl.attenuation_count != previous.attenuation_count:
                attenuations.append(
                    AttenuationEvent(state.time, previous.i_max_recorded or 0.0, ctrl.i_max_recorded or 0.0)
                )
            if ctrl.phase is ControlPhase.DONE:
                stop_time = state.time + config.post_done_tail

        if phase_changed or step % decimation == 0:
            records.append(_record(state, ctrl, command.duty, command.current_reference))
            last_recorded = step

        if state.time >= stop_time:
            break

        state = plant_step(state, params, command, dt, constants)

        if ctrl.phase is not ControlPhase.IDLE and ctrl.phase is not ControlPhase.DONE:
            v_cap = state.supercap.voltage
            if v_cap >= progress_v + config.watchdog_min_progress:
                progress_v, progress_t = v_cap, state.time
            elif state.time - progress_t > config.watchdog_window:
                raise StalledRunError(
                    f"supercapacitor stuck at {v_cap:.1f} V for {config.watchdog_window:g} s "
                    f"(t={state.time:.3f} s, phase {ctrl.phase.value})"
                )
        if on_progress is not None and step % progress_every == 0:
            on_progress(state.time / config.sim_duration)
    else:
        step = n_steps

    if last_recorded != step:
        records.append(_record(state, ctrl, command.duty, command.current_reference))

    summary = summarize(records, config)
    logger.info(
        "Run '%s' finished at t=%.3f s: phase %s, V_c=%.1f V",
        config.name, state.time, ctrl.phase.value, state.supercap.voltage,
    )
    return RunResult(
        config=config,
        params=params,
        telemetry=records,
        summary=summary,
        final_state=state,
        controller=ctrl,
        steps=step,
        extras={
            "peak_blocking_v": state.switches.peak_blocking,
            "interlock_rejections": float(state.switches.interlock_rejections),
            "energy_bus_in_j": state.energy_bus_in,
            "energy_cap_in_j": state.energy_cap_in,
            "energy_loss_j": state.energy_loss,
        },
        attenuations=attenuations,
    )


# ============================================================================
# SUMMARY
# ============================================================================

def summarize_arrays(
    time: np.ndarray,
    v_bus: np.ndarray,
    q_mtg: np.ndarray,
    phase: Sequence[str],
    reference: np.ndarray,
    attenuation_count: int,
    config: ScenarioConfig,
) -> SummaryRow:
    """Reduce telemetry columns to a summary row (shared by in-run and CSV paths)."""
    mode = config.controller_mode
    metric_unit = "V" if mode is ControlMode.M1 else "var"
    phases = np.asarray([ControlPhase(p).value for p in phase], dtype=object)
    base = {
        "test_setting": config.test_setting,
        "metric_unit": metric_unit,
        "attenuation": config.limits.attenuation if mode is ControlMode.M2 else None,
        "attenuation_count": attenuation_count,
    }

    done_idx = np.flatnonzero(phases == ControlPhase.DONE.value)
    done_time = float(time[done_idx[0]]) if done_idx.size else None
    end = done_time if done_time is not None else (float(time[-1]) if time.size else config.charge_start)
    # engaged records only: step-accumulated time may sit a hair off charge_start
    window = (phases != ControlPhase.IDLE.value) & (time <= end)
    if not window.any():
        return SummaryRow(**base, empty=True)

    values = (v_bus if mode is ControlMode.M1 else q_mtg)[window]
    lo = float(values.min())
    hi = float(values.max())
    avg = min(max(float(values.mean()), lo), hi)

    charging_current = None
    charging_band = None
    if mode is ControlMode.M1:
        fixed = np.flatnonzero(phases == ControlPhase.FIXED_TRACKING.value)
        if fixed.size:
            charging_current = float(reference[fixed[-1]])
    else:
        band = np.flatnonzero(phases == ControlPhase.BAND_TRACKING.value)
        if band.size:
            # final contiguous band-tracking episode
            breaks = np.flatnonzero(np.diff(band) > 1)
            episode = band[breaks[-1] + 1:] if breaks.size else band
            upper = float(reference[episode].max())
            charging_band = (config.limits.band_coefficient * upper, upper)

    charging_time = None
    if done_time is not None:
        charging_time = done_time - config.charge_start
    return SummaryRow(
        **base,
        max_metric=hi,
        min_metric=lo,
        avg_metric=avg,
        charging_current=charging_current,
        charging_band=charging_band,
        charging_time=charging_time,
        completed=charging_time is not None and charging_time > 0,
    )


def summarize(telemetry: Sequence[TelemetryRecord], config: ScenarioConfig) -> SummaryRow:
    """Summary row for the charging window [charge_start, Done]."""
    return summarize_arrays(
        np.asarray([r.time for r in telemetry], dtype=float),
        np.asarray([r.v_bus for r in telemetry], dtype=float),
        np.asarray([r.q_mtg for r in telemetry], dtype=float),
        [r.phase for r in telemetry],
        np.asarray([r.reference for r in telemetry], dtype=float),
        telemetry[-1].attenuation_count if telemetry else 0,
        config,
    )


# ============================================================================
# CANONICAL CASES
# ============================================================================

def canonical_cases(config_dir: Optional[Path] = None) -> list[tuple[Path, ScenarioConfig]]:
    """The four shipped test cases, in table order."""
    config_dir = config_dir or CONFIG_DIR
    return [
        (config_dir / f"{name}.cfg", load_scenario(config_dir / f"{name}.cfg"))
        for name in CANONICAL_CASES
    ]
