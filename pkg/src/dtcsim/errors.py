"""Exception hierarchy. Every error raised on purpose derives from DtcSimError."""


class DtcSimError(Exception):
    pass


class ConfigError(DtcSimError):
    """Malformed device, schedule or scenario file."""

    def __init__(self, message, key=None, line=None, path=None):
        self.key = key
        self.line = line
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class InvalidParameterError(DtcSimError, ValueError):
    pass


class InvalidNetworkError(DtcSimError, ValueError):
    pass


class ConditioningError(DtcSimError):
    pass


class DispersiveRegimeError(DtcSimError, ZeroDivisionError):
    pass


class ResolutionError(DtcSimError):
    pass


class StateError(DtcSimError):
    pass


class SizeError(DtcSimError):
    pass


class AmbiguousLabelingError(DtcSimError):
    def __init__(self, message, label=None, overlap=None):
        self.label = label
        self.overlap = overlap
        super().__init__(message)


class NotFoundError(DtcSimError):
    def __init__(self, message, best_flux=None, best_value=None):
        self.best_flux = best_flux
        self.best_value = best_value
        super().__init__(message)


class ScheduleError(DtcSimError):
    pass


class IntegratorError(DtcSimError):
    pass


class StabilityError(DtcSimError):
    pass


class FitError(DtcSimError):
    def __init__(self, message, residual=None, raw=None):
        self.residual = residual
        self.raw = raw
        super().__init__(message)


class OptimizationError(DtcSimError):
    def __init__(self, message, best=None):
        self.best = best
        super().__init__(message)


class BasisError(DtcSimError):
    pass
