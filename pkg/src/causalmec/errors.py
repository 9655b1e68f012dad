"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Malformed argument: bad shape, out-of-range index, infeasible parameter."""


class CapacityError(InvalidInputError):
    """Problem size exceeds what an exhaustive routine is willing to handle."""


class DegenerateDataError(ValueError):
    """Data does not support the requested statistic (singular covariance, ...)."""


class SampleSizeError(DegenerateDataError):
    """Too few observations for the requested test."""


class ContractError(RuntimeError):
    """A caller-side contract was violated (e.g. missing sepset for a UT)."""


class ConstraintViolationError(RuntimeError):
    """Orientation constraints admit no consistent extension."""

    def __init__(self, message, demanded=None, blocking_cycle=None):
        super().__init__(message)
        self.demanded = demanded
        self.blocking_cycle = list(blocking_cycle) if blocking_cycle else []


class NumericError(FloatingPointError):
    """NaN or Inf encountered in a numeric value."""


class TrainingDivergedError(RuntimeError):
    """Training loss became non-finite."""


class CheckpointError(RuntimeError):
    """Checkpoint file is malformed or fails validation."""
