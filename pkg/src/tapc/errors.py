"""Exception types shared across the toolchain.

The CLI maps these onto process exit codes, so raising the right class
matters more than the message text.
"""


class TapcError(Exception):
    """Base class for all toolchain errors."""


class FormatError(TapcError):
    """Malformed manifest, weight blob, feature map, program or stats file."""


class CapacityError(TapcError):
    """A layer does not fit the accelerator geometry (rows, columns or APs)."""


class LutDerivationError(TapcError):
    """No valid pass table exists within the search budget for the requested op."""


class SimulationError(TapcError):
    """Internal consistency violation during execution (width, alignment, geometry)."""
