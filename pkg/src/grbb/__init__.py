"""Repeated balls-into-bins dynamics and their mean-field limits.

At each step every non-empty bin releases one ball and all released balls
are reassigned at once by a classical occupancy statistic (Fermi-Dirac,
Maxwell-Boltzmann or Bose-Einstein).  The package provides exact finite
laws and samplers, couplings with mismatch accounting, the deterministic
measure recursion with its queue-based stationary theory, and experiment
harnesses with structured reports.
"""

from ._kernels import BACKEND
from .couplings import (
    CouplingSample,
    be_coupling_sample,
    be_coupling_samples,
    mb_coupling_sample,
    mb_coupling_samples,
    mismatch_probability,
    polya_second_color_samples,
)
from .experiments import (
    ChaosConfig,
    ExperimentReport,
    chaos_sweep,
    child_rng,
    coupling_experiment,
    equilibrium_experiment,
    mixing_experiment,
    tv_bound_suite,
)
from .measures import (
    JointPmf,
    Pmf,
    empirical_measure,
    joint_tv_distance,
    product_pmf,
    tv_distance,
)
from .nonlinear import (
    DriftConstants,
    FixedPoint,
    UnstableQueueError,
    drift_constants,
    evolve_measure,
    fixed_point,
    iterate_measure,
    queue_stationary,
    queue_step,
    simulate_nonlinear_path,
    stationary_char_fn,
    stationary_mean,
)
from .process import (
    exact_mixing_time,
    exact_transition_matrix,
    grbb_step,
    grbb_trajectory,
    stationary_exact,
    write_trajectory_csv,
)
from .statistics import (
    ReassignmentLaw,
    condition1_gap,
    limit_law,
    one_site_marginal,
    psi,
    reference_product_law,
    sample_occupancy,
    two_site_joint,
)

__version__ = "0.1.0"
