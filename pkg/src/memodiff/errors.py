"""Exception types shared across the package."""


class MemodiffError(Exception):
    """Base class for all domain-specific failures."""


class CoercivityError(MemodiffError):
    """Main diffusion form is not coercive (lower coefficient bound <= 0)."""


class MisalignedAtomError(MemodiffError):
    """A delay atom does not sit on the time grid within tolerance."""


class UnsupportedKernelError(MemodiffError):
    """Kernel variant not representable by the requested operation."""


class InsufficientHistoryError(MemodiffError):
    """Signal does not cover the history window required by the kernel."""


class NoAdmissibleDeltaError(MemodiffError):
    """No subinterval width makes the fixed-point map a contraction."""


class PicardDivergenceError(MemodiffError):
    """Fixed-point sweeps grow instead of contracting."""


class NonFiniteStateError(MemodiffError):
    """Time stepping produced a NaN or infinity."""


class ResolutionError(MemodiffError):
    """Requested feature is below the resolution of the current grid."""


class ConfigError(MemodiffError):
    """Scenario configuration file is missing, malformed, or inconsistent."""
