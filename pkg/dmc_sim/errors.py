"""
Error types for the DMC simulator.
Every error carries a stable machine-readable code, mirrored in ErrorResponse.
"""

from typing import Optional


def _restore(cls, args, state):
    exc = cls.__new__(cls, *args)
    exc.args = args
    exc.__dict__.update(state)
    return exc


class DmcSimError(Exception):
    """Base class for all simulator errors."""

    code: str = "DMC_SIM_ERROR"

    def __init__(self, message: str, *, code: Optional[str] = None):
        super().__init__(message)
        if code is not None:
            self.code = code

    @property
    def message(self) -> str:
        return self.args[0] if self.args else ""

    def __reduce__(self):
        # Rebuilt from args and attributes without calling __init__, so
        # subclasses with context arguments cross process boundaries intact.
        return _restore, (type(self), self.args, dict(self.__dict__))


class ConfigError(DmcSimError):
    """Unreadable config file, unknown section/key or unparsable value."""

    code = "CONFIG_INVALID"

    def __init__(self, message: str, *, path: Optional[str] = None,
                 line: Optional[int] = None, key: Optional[str] = None):
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        if key is not None:
            message = f"{message} (key '{key}')"
        super().__init__(location + message)
        self.path = path
        self.line = line
        self.key = key


class DomainError(DmcSimError, ValueError):
    """Mathematical domain violation (zero denominator, zero final voltage)."""

    code = "DOMAIN_ERROR"


class NumericalError(DmcSimError):
    """A state quantity became non-finite during integration."""

    code = "NUMERIC_FAULT"

    def __init__(self, quantity: str, time: float, value: float):
        super().__init__(f"non-finite {quantity}={value!r} at t={time:.6f} s")
        self.quantity = quantity
        self.time = time
        self.value = value


class DeviceOverstressError(DmcSimError):
    """An open IGBT saw more than its blocking voltage rating."""

    code = "DEVICE_OVERSTRESS"

    def __init__(self, switch: str, voltage: float, limit: float):
        super().__init__(
            f"switch {switch} blocking {voltage:.1f} V exceeds rating {limit:.1f} V"
        )
        self.switch = switch
        self.voltage = voltage
        self.limit = limit


class InfeasibleLimitsError(DmcSimError):
    """Configured limits cannot be honoured (alert outside limit, metric already past alert)."""

    code = "INFEASIBLE_LIMITS"


class NonConvergenceError(DmcSimError):
    """The reactive-power attenuation loop hit its iteration cap."""

    code = "ATTENUATION_NON_CONVERGENCE"


class CalibrationError(DmcSimError):
    """Operating point could not be reached; carries what was achieved."""

    code = "CALIBRATION_FAILED"

    def __init__(self, message: str, achieved: Optional[dict] = None):
        if achieved:
            detail = ", ".join(f"{k}={v:.6g}" for k, v in achieved.items())
            message = f"{message} (achieved: {detail})"
        super().__init__(message)
        self.achieved = achieved or {}


class StalledRunError(DmcSimError):
    """Supercapacitor voltage made no progress within the watchdog window."""

    code = "RUN_STALLED"
