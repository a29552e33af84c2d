"""Exception hierarchy for the BMV measure toolkit."""


class BmvError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(BmvError, ValueError):
    """Input matrices do not describe a valid problem instance."""


class DimensionMismatch(ValidationError):
    pass


class NotHermitian(ValidationError):
    def __init__(self, which, deviation):
        self.which = which
        self.deviation = float(deviation)
        super().__init__(f"matrix {which} is not Hermitian (max deviation {deviation:.3e})")


class NotPositiveSemidefinite(ValidationError):
    def __init__(self, min_eigenvalue):
        self.min_eigenvalue = float(min_eigenvalue)
        super().__init__(f"B is not positive semidefinite (min eigenvalue {min_eigenvalue:.6g})")


class DegenerateB(ValidationError):
    """B has repeated or zero eigenvalues where distinct positive ones are needed."""

    def __init__(self, detail=""):
        msg = (
            "Assumption violated: the contour construction needs distinct positive eigenvalues of B; "
            "regularize with perturb_B (B + eps*diag(1..n), CLI flag --epsilon)"
        )
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


class NotCommuting(ValidationError):
    pass


class NumericalError(BmvError, ArithmeticError):
    """The computation could not be carried out to the requested accuracy."""


class NoConvergence(NumericalError):
    def __init__(self, iterations, residual, what="iteration"):
        self.iterations = iterations
        self.residual = float(residual)
        super().__init__(f"{what} did not converge after {iterations} iterations (worst residual {residual:.3e})")


class LabelAmbiguity(NumericalError):
    pass


class CollisionGuardTripped(NumericalError):
    pass


class CancellationOverflow(NumericalError):
    pass


class PoleTooCloseToContour(NumericalError):
    pass


class OracleUnstable(NumericalError):
    pass
