"""Discrete Frenet-frame backbones, lattice multi-solitons and Glauber folding.

The toolkit represents a C-alpha trace by its bond/torsion angle profile,
constructs low-energy multi-kink profiles of a gauge-invariant lattice
energy, and simulates heating/cooling with heat-bath Monte Carlo.
"""

from .geometry import (
    AngleProfile,
    CalphaChain,
    CoincidentVertices,
    DegenerateFrame,
    FrenetFrame,
    GeometryError,
    InconsistentLengths,
    Point3,
    compute_angles,
    compute_frames,
    detect_flattening_points,
    radius_of_gyration,
    reconstruct,
    rmsd,
    so2_gauge,
    transfer_matrix,
    unfold_gauge,
    wrap_angle,
    z2_gauge,
)
from .energy import (
    EnergyParams,
    effective_potential,
    effective_potential_prime,
    effective_potential_reference,
    energy_gradient,
    per_site_couplings,
    torsion_of_kappa,
    total_energy,
)
from .soliton import (
    Diverged,
    FitDiverged,
    NoSignChange,
    RelaxationReport,
    SolitonAnsatz,
    continuum_kink,
    dnls_residual,
    fit_ansatz,
    fit_multisoliton,
    kink_ansatz,
    profile_from_kappa,
    relax,
)
from .dynamics import (
    InsufficientData,
    MCConfig,
    MCState,
    ScalingFit,
    Trajectory,
    debye_waller,
    fit_scaling,
    geometric_schedule,
    glauber_accept,
    glauber_probability,
    mc_step,
    propose_move,
    run_schedule,
    self_avoidance_ok,
    theta_scan,
)
from .structure_io import (
    MalformedRecord,
    NoAtoms,
    NoSuchChain,
    ParsedStructure,
    PdbRecord,
    parse_calpha,
    profile_from_csv,
    profile_from_json,
    profile_to_csv,
    profile_to_json,
    write_chain,
)

__version__ = "0.1.0"
