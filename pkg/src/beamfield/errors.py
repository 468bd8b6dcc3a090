"""Exception types shared across the package."""


class SceneError(ValueError):
    """Raised for malformed scene files or invalid geometry."""


class ConfigError(ValueError):
    """Raised for missing, unknown, or out-of-range configuration keys."""


class CalibrationError(RuntimeError):
    """Raised when the free-field calibration cannot produce a stable scale."""


class DegenerateBeamError(ValueError):
    """Raised when a beam's dynamic matrices violate their regularity conditions."""


class BudgetError(ValueError):
    """Raised when a memory budget cannot fit even a single ray."""
