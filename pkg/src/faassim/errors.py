"""Exception types shared across the simulator."""


class ConfigError(ValueError):
    """Invalid user input: a process spec, simulation config or config file.

    ``field`` names the offending key (dotted path) when known.
    """

    def __init__(self, message, field=None):
        self.field = field
        if field is not None and field not in message:
            message = f"{field}: {message}"
        super().__init__(message)


class InstanceStateError(RuntimeError):
    """Illegal transition requested on a function instance (simulator bug)."""


class SimulationError(RuntimeError):
    """A run aborted because its internal state became inconsistent."""


class EstimationError(ValueError):
    """Not enough data in a request log to estimate a parameter."""
