"""Exception and warning types shared across the package."""

from __future__ import annotations


class QGTError(Exception):
    """Base class for all package errors."""


class NotHermitianError(QGTError, ValueError):
    def __init__(self, deviation: float, tol: float):
        super().__init__(f"matrix is not Hermitian: |H - H^dag| = {deviation:.3e} > tol {tol:.3e}")
        self.deviation = deviation
        self.tol = tol


class ConvergenceError(QGTError, ArithmeticError):
    def __init__(self, sweeps: int, residual: float):
        super().__init__(f"Jacobi iteration did not converge after {sweeps} sweeps (off-diagonal norm {residual:.3e})")
        self.sweeps = sweeps
        self.residual = residual


class SingularMatrixError(QGTError, ArithmeticError):
    """Raised when an overlap matrix is (numerically) singular.

    Carries the smallest singular value so callers can tell a band crossing
    from a step that is merely too large.
    """

    def __init__(self, smallest_singular_value: float, tol: float, context: str = ""):
        msg = f"matrix is singular: smallest singular value {smallest_singular_value:.3e} <= {tol:.3e}"
        if context:
            msg = f"{context}: {msg}"
        super().__init__(msg)
        self.smallest_singular_value = smallest_singular_value
        self.tol = tol


class SingularPointError(QGTError, ArithmeticError):
    """The tracked subspace is not separated from the rest of the spectrum."""

    def __init__(self, point, gap: float, tol: float):
        super().__init__(f"gap closes at {point}: gap {gap:.3e} <= {tol:.3e}")
        self.point = point
        self.gap = gap
        self.tol = tol


class ChartPoleError(QGTError, ArithmeticError):
    """The (theta, phi) chart of the Bloch sphere is singular at this point."""

    def __init__(self, rho: float):
        super().__init__(
            f"azimuth undefined (d1^2 + d2^2 = {rho ** 2:.3e}); use the projector method at this point"
        )
        self.rho = rho


class CriticalRegionError(QGTError, ArithmeticError):
    def __init__(self, singular_cells: int, total_cells: int, limit: float):
        super().__init__(
            f"{singular_cells}/{total_cells} singular cells exceeds the {limit:.0%} limit; "
            "the model is likely at a critical point"
        )
        self.singular_cells = singular_cells
        self.total_cells = total_cells


class LatticeError(QGTError, ArithmeticError):
    """Link variables or plaquettes are ill-defined; refine the grid."""


class CriticalRegionWarning(UserWarning):
    """Many grid cells were excluded because the gap closes on them."""
