"""Exception types shared across the package."""


class AtomdemixError(Exception):
    """Base class for all library-specific errors."""


class NonHermitianInput(AtomdemixError):
    """Matrix argument was required to be Hermitian but is not."""


class ConvergenceFailure(AtomdemixError):
    """An iterative factorization failed to converge."""


class SingularSystem(AtomdemixError):
    """Linear system is singular or numerically too ill-conditioned to solve.

    Carries the condition estimate that triggered the failure.
    """

    def __init__(self, message, condition_estimate=None):
        super().__init__(message)
        self.condition_estimate = condition_estimate


class RankDeficient(AtomdemixError):
    """Least-squares matrix does not have full column rank."""


class OutOfRangeTau(AtomdemixError):
    """A location parameter fell outside the unit interval [0, 1)."""


class LengthMismatch(AtomdemixError):
    """Vector lengths are inconsistent with the bandwidth parameter."""


class InfeasibleSeparation(AtomdemixError):
    """Requested minimum separation cannot be met on the unit circle."""


class NotConverged(AtomdemixError):
    """A solver hit its iteration cap without meeting tolerances."""


class NoPeaksFound(AtomdemixError):
    """Peak search found no candidate above the detection threshold."""


class DegenerateM(AtomdemixError):
    """Bandwidth parameter too small for the squared-kernel construction."""


class DuplicateSupport(AtomdemixError):
    """A support set contains (numerically) repeated locations."""


class SingularFisher(AtomdemixError):
    """Fisher information matrix is not invertible."""
