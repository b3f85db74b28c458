"""Exception types shared across the package."""


class ComparisonClassError(ValueError):
    """A function does not belong to the comparison class it is used as."""


class NumericError(ArithmeticError):
    """An iterative numerical routine failed to converge."""


class BlowUpError(ArithmeticError):
    """A simulation produced non-finite values.

    Attributes
    ----------
    time : float
        Simulation time at which the blow-up was detected.
    trajectory : Trajectory or None
        Recorded states up to the last finite step.
    """

    def __init__(self, time, trajectory=None):
        super().__init__(f"solution blew up at t={time:.6g}")
        self.time = time
        self.trajectory = trajectory
