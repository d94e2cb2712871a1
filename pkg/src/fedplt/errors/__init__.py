EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4


class FedPLTError(Exception):
    """Base class for simulator errors."""
    exit_code: int = 1

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class ConfigError(FedPLTError):
    """Raised when a configuration value is missing or invalid. `field_path` is dotted, e.g. `fleet.template[1]`."""
    exit_code = EXIT_CONFIG

    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field_path = field_path


class UnknownStrategyError(ConfigError):
    """Raised when a training or mask strategy name is not known."""

    def __init__(self, field_path: str, strategy: str, known: tuple[str, ...] | list[str]):
        super().__init__(field_path, f"unknown strategy '{strategy}', expected one of {sorted(known)}")
        self.strategy = strategy


class TopologyError(ConfigError, ValueError):
    """Raised when layer sizes do not describe a valid dense network."""

    def __init__(self, message: str, field_path: str = "topology"):
        super().__init__(field_path, "bad topology: " + message)


class ShapeMismatchError(FedPLTError, ValueError):
    """Raised when tensors, vectors or masks do not line up."""

    def __init__(self, message: str):
        super().__init__("Shape mismatch: " + message)


class InfeasibleError(FedPLTError, ValueError):
    """Base class for optimization problems without a feasible point."""
    exit_code = EXIT_INFEASIBLE


class InfeasibleBudgetError(InfeasibleError):
    """Raised when a sampling budget cannot be met by probabilities in (0, 1]."""

    def __init__(self, message: str):
        super().__init__("Infeasible sampling budget: " + message)


class InfeasibleAllocationError(InfeasibleError):
    """Raised when a training ratio or contribution vector is outside the feasible set."""

    def __init__(self, message: str):
        super().__init__("Infeasible allocation: " + message)


class NumericalError(FedPLTError):
    """Raised when a loss or parameter becomes NaN or infinite."""
    exit_code = EXIT_NUMERICAL

    def __init__(self, message: str):
        super().__init__("Numerical failure: " + message)


class UndefinedMetricError(FedPLTError, ValueError):
    """Raised when a diagnostic has no defined value for the given input."""

    def __init__(self, message: str):
        super().__init__("Undefined metric: " + message)
