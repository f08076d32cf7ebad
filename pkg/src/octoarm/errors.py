"""Exception types shared across the simulator."""


class OctoArmError(Exception):
    pass


class DomainError(OctoArmError, ValueError):
    pass


class ConfigError(OctoArmError, ValueError):
    """Bad scenario configuration. ``line`` is the 1-based source line, if known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalBlowup(OctoArmError, FloatingPointError):
    def __init__(self, where, step=None, snapshot=None):
        self.step = step
        self.snapshot = snapshot or {}
        msg = f"non-finite values in {where}"
        if step is not None:
            msg += f" at step {step}"
        super().__init__(msg)


class ConvergenceError(OctoArmError, RuntimeError):
    def __init__(self, message, history=None):
        self.history = list(history or [])
        super().__init__(message)


class NoBumpError(OctoArmError, ValueError):
    pass
