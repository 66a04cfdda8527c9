"""Named failure modes raised by the solver stages."""


class TranshockError(Exception):
    """Base class; ``stage`` and ``where`` carry optional diagnostics."""

    def __init__(self, message: str = "", *, stage: str | None = None, where=None):
        self.stage = stage
        self.where = where
        parts = [message]
        if stage:
            parts.append(f"[stage={stage}]")
        if where is not None:
            parts.append(f"[at={where}]")
        super().__init__(" ".join(p for p in parts if p))


class NonPositiveDensity(TranshockError):
    pass


class SonicEncountered(TranshockError):
    pass


class NoSubsonicRoot(TranshockError):
    pass


class PressureOutOfRange(TranshockError):
    pass


class BisectionStalled(TranshockError):
    pass


class CoefficientSignViolation(TranshockError):
    pass


class SupersonicLost(TranshockError):
    pass


class CFLViolation(TranshockError):
    pass


class OutOfDomain(TranshockError):
    pass


class VacuumBernoulli(TranshockError):
    pass


class DegenerateJ(TranshockError):
    pass


class DegenerateMap(TranshockError):
    pass


class VelocityFloor(TranshockError):
    pass


class TrajectoryEscape(TranshockError):
    pass


class DivergenceResidualTooLarge(TranshockError):
    pass


class SolvabilityViolated(TranshockError):
    pass


class SingularMode(TranshockError):
    pass


class NotConverged(TranshockError):
    def __init__(self, message: str = "", *, history=None, state=None, **kw):
        super().__init__(message, **kw)
        self.history = history
        self.state = state


class EntropyViolated(TranshockError):
    pass


class CompatibilityViolation(TranshockError):
    pass


class ConfigError(TranshockError):
    pass
