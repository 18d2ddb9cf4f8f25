"""
Exceptions raised by the tensor network lab.
"""


class TNGeoError(Exception):
    """Base class for every error raised by the library."""


class DimensionMismatch(TNGeoError):
    pass


class InvalidPermutation(TNGeoError):
    pass


class InvalidBipartition(TNGeoError):
    pass


class InvalidSpec(TNGeoError):
    pass


class NotATreeBond(TNGeoError):
    pass


class NotATree(TNGeoError):
    pass


class Disconnected(TNGeoError):
    pass


class TargetTooLarge(TNGeoError):
    pass


class DegenerateState(TNGeoError):
    pass


class NoSuchNode(TNGeoError):
    pass


class TargetFormatError(TNGeoError):
    """Target file with a bad header, size or sidecar."""


class ConfigError(TNGeoError):
    """Malformed experiment config or command line."""
