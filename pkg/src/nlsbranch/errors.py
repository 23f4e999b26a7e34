"""Exception hierarchy shared across the package."""


class NLSBranchError(Exception):
    """Base class; ``code`` is the machine-readable tag used by the CLI."""

    code = "error"


class InadmissibleModel(NLSBranchError, ValueError):
    code = "inadmissible_model"


class DomainError(NLSBranchError, ValueError):
    code = "domain_error"


class GridMismatch(NLSBranchError, ValueError):
    code = "grid_mismatch"


class NoGroundState(NLSBranchError):
    code = "no_ground_state"


class NoConvergence(NLSBranchError):
    code = "no_convergence"


class SolveFailure(NLSBranchError):
    code = "solve_failure"


class NoRealEigenvalue(NLSBranchError):
    code = "no_real_eigenvalue"


class DegenerateNormalization(NLSBranchError):
    code = "degenerate_normalization"


class DegenerateSlope(NLSBranchError):
    code = "degenerate_slope"


class NonConvergence(NLSBranchError):
    """Inner fixed-point iteration of a time step did not converge."""

    code = "non_convergence"


class NumericalBlowupSuspected(NLSBranchError):
    code = "numerical_blowup_suspected"


class NewtonDiverged(NLSBranchError):
    code = "newton_diverged"


class OutOfBranch(NLSBranchError):
    code = "out_of_branch"


class UnachievableAlpha(NLSBranchError, ValueError):
    code = "unachievable_alpha"


class WindowTooShort(NLSBranchError):
    code = "window_too_short"
