"""Spectral simulation of a small, heavy rigid body moving in a viscous fluid.

The fluid lives in a periodic box and is advanced with a pseudo-spectral
Navier-Stokes solver; the body is coupled through volume penalization.  The
package also contains the cut-off and stream-function machinery needed to
test the vanishing-body limit against a body-free reference run.
"""

__version__ = "0.1.0"

from .grid import Grid, ScalarField, VectorField, leray_project, curl, lebesgue_norm, sobolev_norm
from .rates import RateFit, ScalingReport, fit_rate
from .biot_savart import stream_function, modified_stream_function, verify_local_stream_bound
from .cutoff import CutoffFamily, CutoffProfile, make_test_function, measure_cutoff_scalings
from .rigid_body import RigidBodyState, Shape, advance_body, inertia_tensor
from .solver import SimulationConfig, Trajectory, BlowUpError, run, reference_run
from .limit import SweepPlan, SweepReport, TestField, run_sweep, weak_residual, xi_diagnostic

__all__ = [
    "Grid",
    "ScalarField",
    "VectorField",
    "leray_project",
    "curl",
    "lebesgue_norm",
    "sobolev_norm",
    "RateFit",
    "ScalingReport",
    "fit_rate",
    "stream_function",
    "modified_stream_function",
    "verify_local_stream_bound",
    "CutoffFamily",
    "CutoffProfile",
    "make_test_function",
    "measure_cutoff_scalings",
    "RigidBodyState",
    "Shape",
    "advance_body",
    "inertia_tensor",
    "SimulationConfig",
    "Trajectory",
    "BlowUpError",
    "run",
    "reference_run",
    "SweepPlan",
    "SweepReport",
    "TestField",
    "run_sweep",
    "weak_residual",
    "xi_diagnostic",
]
