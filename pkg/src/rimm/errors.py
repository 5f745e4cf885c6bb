"""Semantic exceptions shared across the package.

The CLI maps these onto exit codes: NotGammaCompleteError -> 2, everything
else that prevents a run from starting (bad config, unparseable file) -> 3.
"""


class RimmError(Exception):
    """Base class for all package errors."""


class FormatError(RimmError):
    """A data file does not parse under its declared format."""


class MissingValueError(RimmError):
    """A masked-out entry was read through the checked accessor."""


class NotGammaCompleteError(RimmError):
    """Dataset fails the per-coordinate presence requirement."""

    def __init__(self, min_fraction: float, gamma: float, coordinate: int):
        self.min_fraction = min_fraction
        self.gamma = gamma
        self.coordinate = coordinate
        super().__init__(
            f"dataset is not {gamma:g}-complete: coordinate {coordinate + 1} "
            f"is present in only a {min_fraction:g} fraction of examples"
        )


class ConfigError(RimmError):
    """Invalid configuration or CLI arguments."""


class EigensolverError(RimmError):
    """Power iteration failed to converge; carries the best residual seen."""

    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (best residual {residual:.3e})")
