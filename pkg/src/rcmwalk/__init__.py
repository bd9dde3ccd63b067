"""Random walks among bounded random conductances on Z^d.

Simulation and verification toolkit: explicit environment laws, exact and
Monte Carlo heat kernels, the coarse-grained walk on the strong percolation
component, isoperimetric profiles, block renormalization events, and trap
statistics.
"""

__version__ = "0.1.0"

from .laws import (
    ConductanceLaw,
    LawError,
    bernoulli_perc,
    custom_table,
    dyadic_polylog,
    homogeneous,
    p_c,
    q_from_lambda,
    sparse_scales,
    two_value,
    wedge_min,
)
from .field import (
    ConductanceField,
    FieldError,
    IsolatedSiteError,
    LocalStep,
    field_from_arrays,
    load_field,
    plant_trap,
    sample_field,
    sample_occupancy,
    save_field,
    step_distribution,
)
from .cluster import (
    ClusterLabeling,
    UnionFind,
    WeakComponent,
    chemical_distance,
    chemical_distances_from,
    components,
    select_alpha,
    weak_component,
)
from .kernel import (
    DecayFit,
    KernelSeries,
    annealed_return,
    evolve,
    fit_decay,
    mc_return,
    return_series,
)
from .coarse import HatChain, hat_chain, hiding_time_census, mc_coarse_return
from .iso import (
    ChainView,
    CutRecord,
    ProfileEstimate,
    check_isoperimetry,
    connected_subsets,
    cut_stats,
    gn_probability,
    grow_connected_set,
    hat_chain_view,
    lattice_chain,
    matrix_chain,
    morris_peres_n,
    profile,
    two_step,
)
from .traps import (
    TrapRecord,
    census_two_value,
    detect_traps,
    hitting_prob,
    trap_lower_bound,
    trap_sum,
)
from .experiments import (
    ExperimentConfig,
    RunManifest,
    emit_report,
    run_experiment,
)
