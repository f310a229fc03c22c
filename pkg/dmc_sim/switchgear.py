"""
IGBT switchgear for the charging (S1) and discharge (S2) paths.

Switches close at the next plant step, open after the turn-off delay, and
are interlocked so that both can never conduct at once.
"""

import logging
from dataclasses import dataclass, replace

from .errors import DeviceOverstressError
from .models import SwitchActual, SwitchCommand, SwitchgearParams

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class SwitchState:
    name: str
    commanded: SwitchCommand = SwitchCommand.OPEN
    actual: SwitchActual = SwitchActual.OPEN
    turnoff_deadline: float = 0.0
    turnoff_delay: float = 7.3e-6
    blocking_voltage_limit: float = 6500.0

    @property
    def conducting(self) -> bool:
        return self.actual is not SwitchActual.OPEN


@dataclass(slots=True)
class SwitchBank:
    s1: SwitchState
    s2: SwitchState
    interlock_rejections: int = 0
    peak_blocking_s1: float = 0.0
    peak_blocking_s2: float = 0.0

    @property
    def peak_blocking(self) -> float:
        return max(self.peak_blocking_s1, self.peak_blocking_s2)


def new_bank(params: SwitchgearParams) -> SwitchBank:
    """Both switches open, no history."""
    def make(name: str) -> SwitchState:
        return SwitchState(
            name=name,
            turnoff_delay=params.turnoff_delay,
            blocking_voltage_limit=params.blocking_voltage_limit,
        )
    return SwitchBank(s1=make("S1"), s2=make("S2"))


def _settle(switch: SwitchState, now: float) -> SwitchState:
    if switch.actual is SwitchActual.TURNING_OFF and now >= switch.turnoff_deadline:
        return replace(switch, actual=SwitchActual.OPEN)
    return switch


def _open(switch: SwitchState, now: float) -> SwitchState:
    if switch.commanded is SwitchCommand.OPEN:
        return switch
    if switch.actual is SwitchActual.CLOSED:
        if switch.turnoff_delay <= 0.0:
            return replace(switch, commanded=SwitchCommand.OPEN, actual=SwitchActual.OPEN)
        return replace(
            switch,
            commanded=SwitchCommand.OPEN,
            actual=SwitchActual.TURNING_OFF,
            turnoff_deadline=now + switch.turnoff_delay,
        )
    return replace(switch, commanded=SwitchCommand.OPEN)


def _close(switch: SwitchState) -> SwitchState:
    if switch.commanded is SwitchCommand.CLOSED and switch.actual is SwitchActual.CLOSED:
        return switch
    return replace(switch, commanded=SwitchCommand.CLOSED, actual=SwitchActual.CLOSED)


def apply_gate(
    bank: SwitchBank,
    s1_cmd: SwitchCommand,
    s2_cmd: SwitchCommand,
    now: float,
) -> SwitchBank:
    """
    Apply gate commands at time `now`.

    Expired turn-offs settle first, then open commands start their delay,
    then close commands are granted (S1 first) unless the other switch still
    conducts. A rejected close leaves that switch untouched and is counted.
    Returns the same object when nothing changes.
    """
    s1 = _settle(bank.s1, now)
    s2 = _settle(bank.s2, now)

    if s1_cmd is SwitchCommand.OPEN:
        s1 = _open(s1, now)
    if s2_cmd is SwitchCommand.OPEN:
        s2 = _open(s2, now)

    rejections = bank.interlock_rejections
    if s1_cmd is SwitchCommand.CLOSED:
        if s2.conducting:
            rejections += 1
            logger.warning("Interlock: S1 close rejected at t=%.6f s (S2 %s)", now, s2.actual.value)
        else:
            s1 = _close(s1)
    if s2_cmd is SwitchCommand.CLOSED:
        if s1.conducting:
            rejections += 1
            logger.warning("Interlock: S2 close rejected at t=%.6f s (S1 %s)", now, s1.actual.value)
        else:
            s2 = _close(s2)

    if s1 is bank.s1 and s2 is bank.s2 and rejections == bank.interlock_rejections:
        return bank
    return replace(bank, s1=s1, s2=s2, interlock_rejections=rejections)


def conduction_fraction(switch: SwitchState, t: float, dt: float) -> float:
    """Share of the step [t, t + dt) during which the switch conducts."""
    if switch.actual is SwitchActual.CLOSED:
        return 1.0
    if switch.actual is SwitchActual.TURNING_OFF:
        return min(1.0, max(0.0, (switch.turnoff_deadline - t) / dt))
    return 0.0


def check_blocking(bank: SwitchBank, v_across_s1: float, v_across_s2: float) -> SwitchBank:
    """
    Record peak blocking voltage on open switches.

    Raises DeviceOverstressError when an open switch sees more than its rating.
    """
    peak1, peak2 = bank.peak_blocking_s1, bank.peak_blocking_s2
    if bank.s1.actual is SwitchActual.OPEN:
        v1 = abs(v_across_s1)
        if v1 > bank.s1.blocking_voltage_limit:
            raise DeviceOverstressError(bank.s1.name, v1, bank.s1.blocking_voltage_limit)
        peak1 = max(peak1, v1)
    if bank.s2.actual is SwitchActual.OPEN:
        v2 = abs(v_across_s2)
        if v2 > bank.s2.blocking_voltage_limit:
            raise DeviceOverstressError(bank.s2.name, v2, bank.s2.blocking_voltage_limit)
        peak2 = max(peak2, v2)
    if peak1 == bank.peak_blocking_s1 and peak2 == bank.peak_blocking_s2:
        return bank
    return SwitchBank(bank.s1, bank.s2, bank.interlock_rejections, peak1, peak2)
