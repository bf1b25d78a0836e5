"""Fisher information from detector data-fitting patterns.

Estimate how much a detector can tell about a phase (and a second rotation
angle) using only its measured responses to the six Pauli eigenstates,
choose the probe that extracts the most, and compute the same quantities
for weak-field homodyne detection of Gaussian states.
"""

__version__ = "0.1.0"

from .base import (
    PROB_FLOOR,
    DfpError,
    FisherMatrix,
    InfeasibleProbeError,
    NormalizationError,
    SingularFisherError,
)
from .fisher import (
    DfpTable,
    ProbabilityVector,
    dfp_probabilities,
    effective_fisher,
    fisher_from_dfp,
    fisher_from_probabilities,
    massar_ratio,
    positivity_filter,
    predict_probabilities,
)
from .probe_search import (
    ProbeOptimizer,
    ProbeParam,
    SearchReport,
    evaluate_probe,
    optimize_single,
    optimize_two_parameter,
)
from .qubit import (
    FIDUCIAL_BLOCH,
    FIDUCIAL_LABELS,
    ChannelOrder,
    ChannelParams,
    PureQubit,
    coefficient_derivatives,
    decompose,
    density_of,
    evolve,
    qfi_matrix,
    reconstruct,
)
from .tableio import read_table, write_table
from .tomo import (
    Povm,
    PovmTomography,
    beamsplitter_povm,
    fisher_from_povm,
    ideal_povm,
    reconstruct_povm,
    synth_dfp,
    waveplate_povm,
)
from .wfh import (
    GaussianWigner,
    KernelTerm,
    WfhDetector,
    dfp_probability,
    kernel_terms,
    mean_photon,
    outcome_fisher,
    probability_wigner,
    squeeze_tradeoff_scan,
    wigner_dsv,
    zeta,
)
