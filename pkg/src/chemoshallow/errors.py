"""Exception types raised by the solver stack."""


class ValidationError(ValueError):
    """Input or configuration outside the admissible range."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class GridMismatchError(ValidationError):
    """Fields living on different grids were combined."""


class SolverError(RuntimeError):
    """An iterative linear solve failed to reach its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class CharacteristicExitError(RuntimeError):
    """A backward characteristic left the domain by more than one cell."""


class VacuumError(RuntimeError):
    """Height dropped below the regularization floor in the momentum solve."""

    def __init__(self, message, node=None, value=None):
        super().__init__(message)
        self.node = node
        self.value = value


class SweepError(RuntimeError):
    """A sub-solver failed inside a Picard sweep."""

    def __init__(self, message, stage, frame):
        super().__init__(f"{stage} failed at frame {frame}: {message}")
        self.stage = stage
        self.frame = frame
