"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures to its
documented exit classes (2 config, 3 model/shape, 4 device, 5 no results).
"""


class PruneKitError(Exception):
    exit_code = 1


class ConfigError(PruneKitError):
    """Bad flags, config file values, or budgets."""

    exit_code = 2


class BudgetTooLarge(ConfigError):
    exit_code = 2


class ProtocolMismatch(ConfigError):
    """Latency reports measured under different protocols were compared."""

    exit_code = 2


class ModelError(PruneKitError):
    exit_code = 3


class UnsupportedArchitecture(ModelError):
    pass


class ShapeMismatch(ModelError):
    """Stored weights contradict the architecture descriptor."""

    pass


class InvalidPlan(ModelError):
    pass


class EmptyModel(InvalidPlan):
    pass


class FloorViolation(ModelError):
    """A layer would fall below the minimum-filter floor."""

    pass


class DependencyViolation(ModelError):
    """Removal would break channel agreement across a shortcut connection."""

    pass


class CriterionInapplicable(ModelError):
    pass


class NoGradients(ModelError):
    pass


class MismatchedUnits(ModelError):
    pass


class EmptyClass(ModelError):
    def __init__(self, class_id):
        super().__init__(f"no samples observed for class {class_id}")
        self.class_id = class_id


class Exhausted(ModelError):
    """No prunable filter remains."""

    pass


class Divergence(PruneKitError):
    """Training loss became non-finite."""

    exit_code = 1


class DeviceError(PruneKitError):
    exit_code = 4


class DeviceUnavailable(DeviceError):
    pass


class OutOfMemory(DeviceError):
    def __init__(self, batch_size, original=None):
        super().__init__(f"out of memory at batch size {batch_size}")
        self.batch_size = batch_size
        self.original = original


class MeasurementActive(DeviceError):
    """Another latency measurement is already running in this process."""

    pass


class NoResults(PruneKitError):
    exit_code = 5
