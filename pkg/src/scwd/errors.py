"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line front end:
2 for usage/config problems, 3 for data/format problems, 4 for numerical
failures (empty kernel, empty sample).
"""


class ScwdError(Exception):
    exit_code = 3


class InvalidArgumentError(ScwdError, ValueError):
    exit_code = 2


class ConfigError(ScwdError):
    exit_code = 2


class InvalidCoordinateError(ScwdError, ValueError):
    pass


class UnsupportedGridError(ScwdError):
    pass


class GridMismatchError(ScwdError):
    pass


class MalformedFileError(ScwdError):
    pass


class NotAStackError(MalformedFileError):
    pass


class VersionError(MalformedFileError):
    pass


class CacheMismatchError(ScwdError):
    pass


class OracleSizeError(ScwdError):
    exit_code = 2


class EmptyKernelError(ScwdError):
    exit_code = 4

    def __init__(self, lat, lon):
        super().__init__(
            f"no work-grid cell carries kernel weight for center "
            f"(lat={lat:g}, lon={lon:g})"
        )
        self.lat = lat
        self.lon = lon


class EmptySampleError(ScwdError):
    exit_code = 4


class EmptyMapError(ScwdError):
    exit_code = 4
