"""Exception hierarchy shared by the library and the command line."""


class DrPriceError(Exception):
    """Base class for every error raised by this package."""


class InputError(DrPriceError, ValueError):
    """Malformed arguments, typically mismatched dimensions."""


class ModelError(DrPriceError):
    """Demand model cannot be used, e.g. a singular sensitivity matrix."""


class DegenerateControlError(DrPriceError):
    """HVAC efficiency is zero, so the control input has no effect."""


class NonAffineDemandError(DrPriceError):
    """Aggregate demand failed the affine reconstruction check."""


class PolicyError(DrPriceError):
    """A pricing policy could not produce a price."""


class UsageError(DrPriceError):
    """Stateful object driven out of order (e.g. observing a day twice)."""


class ConfigError(DrPriceError):
    """Invalid experiment configuration; the message names the field path."""


class DataFileError(DrPriceError):
    """An input data file (trace or model) is missing or unreadable."""


class TraceError(DataFileError):
    """Trace file is missing records, out of order, or unparseable."""


class SimulationError(DrPriceError):
    """Failure inside a simulated episode, tagged with the day index."""

    def __init__(self, day, cause):
        self.day = day
        self.cause = cause
        super().__init__(f"day {day}: {cause}")
