"""Exception hierarchy shared by every stage of the pipeline."""


class KoopmanError(Exception):
    """Base class; the CLI maps any subclass to exit status 1."""


class CapacityError(KoopmanError):
    """A basis or index set is larger than the configured budget."""


class DimensionError(KoopmanError, ValueError):
    pass


class SpectrumError(KoopmanError):
    """The equilibrium is not hyperbolic and stable."""


class ResonanceError(KoopmanError):
    def __init__(self, k, i, gap):
        self.k = tuple(int(e) for e in k)
        self.i = int(i)
        self.gap = float(gap)
        super().__init__(
            f"resonance: <k, lambda> = lambda_{self.i} for k={self.k} (gap {self.gap:.3e})"
        )


class BoundError(KoopmanError, ValueError):
    """Invalid bound inputs or an internally inconsistent tail sum."""


class SingularJacobianError(KoopmanError):
    def __init__(self, x, det):
        self.x = [float(v) for v in x]
        self.det = float(det)
        super().__init__(f"eigenfunction Jacobian is singular at x={self.x} (|det|={self.det:.3e})")


class ConfigError(KoopmanError, ValueError):
    pass


class StageError(KoopmanError):
    """A pipeline stage failed; wraps the original error with the stage name."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
