"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: configuration problems exit
with 2, bad input data with 3, and simulation faults with 4.
"""


class ConfigError(ValueError):
    """Invalid scene, probe, transport or scenario configuration."""


class RangeError(ConfigError):
    """A parameter lies outside the interval where the model is defined."""


class SceneError(ConfigError):
    """A tissue scene cannot be constructed as requested."""


class SafetyError(ConfigError):
    """A drive setting exceeds the emitter's safety cap."""


class DomainError(ValueError):
    """A numeric argument is outside a formula's mathematical domain."""


class DegenerateInputError(DomainError):
    """Statistics requested on data that cannot support them."""


class InputDataError(ValueError):
    """Malformed session data (CSV parse or schema failure)."""


class SimulationFault(RuntimeError):
    """Transport produced a non-finite photon state.

    ``dump`` holds the offending photon index and its last known state.
    """

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump or {}
