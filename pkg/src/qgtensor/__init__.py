"""Abelian and non-Abelian quantum geometric tensor of parameterized Hamiltonians."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ChartPoleError,
    ConvergenceError,
    CriticalRegionError,
    CriticalRegionWarning,
    LatticeError,
    NotHermitianError,
    QGTError,
    SingularMatrixError,
    SingularPointError,
)
from .linalg import HermEig, eig_hermitian, polar_unitary, unitary_align  # noqa: E402
from .measure import (  # noqa: E402
    CriticalPointEstimate,
    SweepResult,
    chern_sweep,
    detect_critical_points,
    fidelity_susceptibility,
    integrated_metric_sweep,
)
from .models import (  # noqa: E402
    DVector,
    HamiltonianFamily,
    ParameterPoint,
    constant_family,
    doubled_qwz_family,
    load_dvector_csv,
    make_family,
    qwz_family,
)
from .qgt import (  # noqa: E402
    FieldGrid,
    Frame,
    GridSpec,
    QGTensor,
    Subspace,
    aligned_frame,
    eigenframe,
    frame_grid,
    qgt_analytic_twoband,
    qgt_grid,
    qgt_point,
)
from .topology import (  # noqa: E402
    ChernResult,
    Holonomy,
    chern_direct,
    chern_lattice,
    link_variable,
    small_loop_check,
    wilson_loop,
)
