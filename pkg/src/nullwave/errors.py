"""Exception types shared across nullwave."""


class NullwaveError(Exception):
    pass


class ConfigError(NullwaveError):
    """Bad configuration. `key` and `line` point at the offending entry when known."""

    def __init__(self, msg, key=None, line=None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if key is not None:
            loc.append(f"key '{key}'")
        super().__init__(f"{msg} ({', '.join(loc)})" if loc else msg)
        self.key = key
        self.line = line


class DomainError(NullwaveError, ValueError):
    pass


class OutOfRange(NullwaveError, ValueError):
    pass


class NotNull(NullwaveError, ValueError):
    pass


class BlowupDetected(NullwaveError):
    def __init__(self, t_star, location):
        super().__init__(f"blowup detected at t*={t_star:.6g}, (u, v)={location}")
        self.t_star = t_star
        self.location = location


class NotConverged(NullwaveError):
    def __init__(self, history, msg="Picard iteration did not converge"):
        super().__init__(f"{msg}; d_n = {list(history)}")
        self.history = list(history)


class NoBlowup(NullwaveError):
    pass


class InsufficientData(NullwaveError, ValueError):
    pass


class WindowError(NullwaveError, ValueError):
    pass


class HypothesisFails(NullwaveError):
    pass


class IoError(NullwaveError, OSError):
    pass
