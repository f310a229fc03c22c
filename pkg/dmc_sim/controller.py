"""
Disturbance Metric Control for supercapacitor charging.

Two procedures cap a live disturbance metric while the bank charges:

* M1 caps the bus-voltage deviation |V_bus,lim - V_bus|. Probe the charging
  current upward until the alert, record it, then hold it.
* M2 caps the generator reactive power. Probe to the alert, record, monitor
  during a suspension and attenuate the recorded current while reactive
  power overshoots, then toggle inside [coeff * i_max, i_max].

Every step is a pure function of (state, sample, limits): replaying a sample
stream reproduces the same commands.
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional

from .errors import InfeasibleLimitsError, NonConvergenceError
from .models import (
    IDLE_COMMAND,
    ChargeCommand,
    ControlMode,
    ControlPhase,
    Limits,
    MetricSample,
    SwitchCommand,
    TrackerParams,
)

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class ControllerState:
    mode: ControlMode
    phase: ControlPhase = ControlPhase.IDLE
    i_max_recorded: Optional[float] = None
    i_lower: float = 0.0
    tracking_ref: float = 0.0
    band_high: bool = True
    attenuation_count: int = 0
    integrator: float = 0.0
    phase_since: float = 0.0
    band_since: float = 0.0
    attenuated_in_suspension: bool = False
    done_time: Optional[float] = None


def _closed(reference: float) -> ChargeCommand:
    return ChargeCommand(SwitchCommand.CLOSED, reference)


def _evolve(
    ctrl: ControllerState,
    *,
    tracking_ref: Optional[float] = None,
    band_high: Optional[bool] = None,
    integrator: Optional[float] = None,
) -> ControllerState:
    """Copy with the fields that change every control period."""
    # positional: field order of ControllerState
    return ControllerState(
        ctrl.mode,
        ctrl.phase,
        ctrl.i_max_recorded,
        ctrl.i_lower,
        ctrl.tracking_ref if tracking_ref is None else tracking_ref,
        ctrl.band_high if band_high is None else band_high,
        ctrl.attenuation_count,
        ctrl.integrator if integrator is None else integrator,
        ctrl.phase_since,
        ctrl.band_since,
        ctrl.attenuated_in_suspension,
        ctrl.done_time,
    )


def _enter(ctrl: ControllerState, phase: ControlPhase, now: float, **changes) -> ControllerState:
    logger.info("Controller %s -> %s at t=%.4f s", ctrl.phase.value, phase.value, now)
    return replace(ctrl, phase=phase, phase_since=now, **changes)


# ============================================================================
# METRICS AND FEASIBILITY
# ============================================================================

def compute_metrics(sample: MetricSample, limits: Limits) -> tuple[float, float]:
    """(m1, m2) = (|v_bus_limit - v_bus|, q_mtg)."""
    return abs(limits.v_bus_limit - sample.v_bus), sample.q_mtg


def check_limits(limits: Limits, mode: ControlMode) -> None:
    """Reject limit sets that no run could honour."""
    if mode is ControlMode.M1:
        limit, alert, unit = limits.m1_limit, limits.m1_alert, "V"
    else:
        limit, alert, unit = limits.q_limit, limits.q_alert, "var"
    if limit <= 0:
        raise InfeasibleLimitsError(f"{mode.value} limit must be positive, got {limit:g} {unit}")
    if not alert < limit:
        raise InfeasibleLimitsError(
            f"{mode.value} alert {alert:g} {unit} must lie below the limit {limit:g} {unit}"
        )


def _check_start(sample: MetricSample, limits: Limits, mode: ControlMode) -> None:
    check_limits(limits, mode)
    m1, m2 = compute_metrics(sample, limits)
    metric, alert = (m1, limits.m1_alert) if mode is ControlMode.M1 else (m2, limits.q_alert)
    if metric >= alert:
        raise InfeasibleLimitsError(
            f"{mode.value} metric {metric:.6g} already at or above alert {alert:.6g} before charging"
        )


# ============================================================================
# REFERENCE SHAPING AND TRACKING
# ============================================================================

def probe_ramp(
    ctrl: ControllerState,
    limits: Limits,
    dt: float,
    measured: Optional[float] = None,
) -> float:
    """
    Next probing reference: linear slew, capped at the recorded maximum.

    The reference holds while the measured current trails it by more than
    `probe_lag`.
    """
    ref = ctrl.tracking_ref
    if measured is not None and measured < ref - limits.probe_lag:
        return ref
    ref += limits.probe_slew * dt
    if ctrl.i_max_recorded is not None and ref > ctrl.i_max_recorded:
        ref = ctrl.i_max_recorded
    return ref


def current_tracker(
    reference: float,
    measured: float,
    ctrl: ControllerState,
    dt: float,
    *,
    i_inductor: float,
    tuning: TrackerParams,
) -> tuple[float, ControllerState]:
    """
    Duty for the next period from a PI law on the bus-side current error.

    The bus-side current is duty * I_L, so the law commands a current
    (reference plus PI correction, never above the reference) and divides by
    the inductor current. Integration stops while the duty saturates.
    """
    if reference <= 0.0:
        if ctrl.integrator == 0.0:
            return 0.0, ctrl
        return 0.0, _evolve(ctrl, integrator=0.0)

    error = reference - measured
    wanted = min(reference, reference + tuning.loop_gain * error + ctrl.integrator)
    if i_inductor > 0.0:
        raw = wanted / i_inductor
    else:
        raw = 1.0 if wanted > 0.0 else 0.0
    duty = min(1.0, max(0.0, raw))

    if duty != raw:
        return duty, ctrl
    integrator = ctrl.integrator + tuning.integral_rate * dt * error
    limit = tuning.integrator_limit
    integrator = min(limit, max(-limit, integrator))
    if integrator == ctrl.integrator:
        return duty, ctrl
    return duty, _evolve(ctrl, integrator=integrator)


# ============================================================================
# PROCEDURES
# ============================================================================

def _finish(ctrl: ControllerState, sample: MetricSample) -> tuple[ControllerState, ChargeCommand]:
    ctrl = _enter(ctrl, ControlPhase.DONE, sample.time, tracking_ref=0.0, done_time=sample.time)
    return ctrl, IDLE_COMMAND


def _start(
    ctrl: ControllerState, sample: MetricSample, limits: Limits
) -> tuple[ControllerState, ChargeCommand]:
    if sample.v_cap >= limits.target_cap_voltage:
        return _finish(ctrl, sample)
    _check_start(sample, limits, ctrl.mode)
    ctrl = _enter(ctrl, ControlPhase.PROBING, sample.time, tracking_ref=0.0)
    return ctrl, _closed(0.0)


def dmc_m1_step(
    ctrl: ControllerState, sample: MetricSample, limits: Limits
) -> tuple[ControllerState, ChargeCommand]:
    """One control period of the bus-voltage procedure."""
    if ctrl.phase is ControlPhase.DONE:
        return ctrl, IDLE_COMMAND
    if ctrl.phase is ControlPhase.IDLE:
        return _start(ctrl, sample, limits)
    if sample.v_cap >= limits.target_cap_voltage:
        return _finish(ctrl, sample)

    m1, _ = compute_metrics(sample, limits)
    now = sample.time

    if ctrl.phase is ControlPhase.PROBING:
        if m1 >= limits.m1_alert:
            logger.info("M1 alert at %.1f V, recording %.1f A", m1, sample.i_charge)
            ctrl = _enter(
                ctrl, ControlPhase.SUSPENDED, now,
                i_max_recorded=sample.i_charge, tracking_ref=0.0,
            )
            return ctrl, IDLE_COMMAND
        ref = probe_ramp(ctrl, limits, limits.control_period, sample.i_charge)
        return _evolve(ctrl, tracking_ref=ref), _closed(ref)

    if ctrl.phase is ControlPhase.SUSPENDED:
        i_max = ctrl.i_max_recorded or 0.0
        ctrl = _enter(ctrl, ControlPhase.FIXED_TRACKING, now, tracking_ref=i_max)
        return ctrl, _closed(i_max)

    # fixed tracking
    return ctrl, _closed(ctrl.tracking_ref)


def _attenuate(ctrl: ControllerState, limits: Limits, m2: float) -> ControllerState:
    count = ctrl.attenuation_count + 1
    if count > limits.attenuation_cap:
        raise NonConvergenceError(
            f"reactive power still {m2:.6g} var above limit {limits.q_limit:.6g} "
            f"after {limits.attenuation_cap} attenuations"
        )
    i_max = limits.attenuation * (ctrl.i_max_recorded or 0.0)
    logger.info("M2 overshoot %.4g var: attenuation #%d, i_max -> %.1f A", m2, count, i_max)
    return replace(
        ctrl,
        i_max_recorded=i_max,
        i_lower=limits.band_coefficient * i_max,
        attenuation_count=count,
        attenuated_in_suspension=True,
    )


def dmc_m2_step(
    ctrl: ControllerState, sample: MetricSample, limits: Limits
) -> tuple[ControllerState, ChargeCommand]:
    """One control period of the adaptive reactive-power procedure."""
    if ctrl.phase is ControlPhase.DONE:
        return ctrl, IDLE_COMMAND
    if ctrl.phase is ControlPhase.IDLE:
        return _start(ctrl, sample, limits)
    if sample.v_cap >= limits.target_cap_voltage:
        return _finish(ctrl, sample)

    _, m2 = compute_metrics(sample, limits)
    now = sample.time
    tol = limits.band_tolerance

    if ctrl.phase is ControlPhase.PROBING:
        i_max = ctrl.i_max_recorded
        if m2 >= limits.q_alert:
            recorded = sample.i_charge if i_max is None else min(i_max, sample.i_charge)
            logger.info("M2 alert at %.4g var, recording %.1f A", m2, recorded)
        elif i_max is not None and sample.i_charge >= i_max * (1.0 - tol):
            recorded = i_max
        else:
            ref = probe_ramp(ctrl, limits, limits.control_period, sample.i_charge)
            return _evolve(ctrl, tracking_ref=ref), _closed(ref)
        ctrl = _enter(
            ctrl, ControlPhase.SUSPENDED, now,
            i_max_recorded=recorded, tracking_ref=0.0, attenuated_in_suspension=False,
        )
        return ctrl, IDLE_COMMAND

    if ctrl.phase is ControlPhase.SUSPENDED:
        if m2 > limits.q_limit and not ctrl.attenuated_in_suspension:
            ctrl = _attenuate(ctrl, limits, m2)
        if now - ctrl.phase_since >= limits.suspend_monitor and m2 < limits.q_alert:
            if ctrl.attenuated_in_suspension:
                ctrl = _enter(ctrl, ControlPhase.PROBING, now, tracking_ref=0.0, integrator=0.0)
                return ctrl, _closed(0.0)
            i_max = ctrl.i_max_recorded or 0.0
            ctrl = _enter(
                ctrl, ControlPhase.BAND_TRACKING, now,
                i_lower=limits.band_coefficient * i_max,
                tracking_ref=i_max,
                band_high=True,
                band_since=now,
            )
            return ctrl, _closed(i_max)
        return ctrl, IDLE_COMMAND

    # band tracking
    if now - ctrl.band_since >= limits.grace_window and m2 > limits.q_limit:
        ctrl = _attenuate(ctrl, limits, m2)
        ctrl = _enter(ctrl, ControlPhase.SUSPENDED, now, tracking_ref=0.0)
        return ctrl, IDLE_COMMAND

    i_max = ctrl.i_max_recorded or 0.0
    band_high = ctrl.band_high
    if band_high and sample.i_charge >= i_max - tol * i_max:
        band_high = False
    elif not band_high and sample.i_charge <= ctrl.i_lower + tol * i_max:
        band_high = True
    target = i_max if band_high else ctrl.i_lower
    step = limits.band_slew * limits.control_period
    ref = ctrl.tracking_ref
    ref = min(ref + step, target) if ref < target else max(ref - step, target)
    return _evolve(ctrl, tracking_ref=ref, band_high=band_high), _closed(ref)


# ============================================================================
# COMBINED STEP
# ============================================================================

def new_controller(mode: ControlMode) -> ControllerState:
    return ControllerState(mode=mode)


def controller_step(
    ctrl: ControllerState,
    sample: MetricSample,
    limits: Limits,
    tuning: TrackerParams,
) -> tuple[ControllerState, ChargeCommand]:
    """Procedure step for the configured mode followed by the current tracker."""
    if ctrl.mode is ControlMode.M1:
        ctrl, command = dmc_m1_step(ctrl, sample, limits)
    else:
        ctrl, command = dmc_m2_step(ctrl, sample, limits)

    if command.gate_s1 is SwitchCommand.OPEN:
        if ctrl.integrator != 0.0:
            ctrl = _evolve(ctrl, integrator=0.0)
        return ctrl, command

    duty, ctrl = current_tracker(
        command.current_reference,
        sample.i_charge,
        ctrl,
        limits.control_period,
        i_inductor=sample.i_inductor,
        tuning=tuning,
    )
    return ctrl, ChargeCommand(command.gate_s1, command.current_reference, duty)
