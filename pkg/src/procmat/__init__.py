"""procmat — process matrices, causal adapters, and SDP resource monotones.

Layers, bottom to top:

* :mod:`procmat.labeled`   — labeled tensor factors, partial operations,
  the link product, JSON (de)serialization.
* :mod:`procmat.basis`     — orthonormal Hermitian product basis and
  trace-replace polynomials (diagonal superoperators).
* :mod:`procmat.processes` — process-matrix validity, ordered combs,
  named constructors, comb dilation.
* :mod:`procmat.sdp`       — conic modeling over Hermitian blocks with
  clarabel / SCS backends.
* :mod:`procmat.adapters`  — higher-order maps between processes and the
  admissible / free-preserving / AFP / NS hierarchy.
* :mod:`procmat.robustness`— signalling and causal robustness, distance
  to the process subspace, adapter-optimized overlap.
* :mod:`procmat.search`    — sampling, seesaw, conversion feasibility,
  AFP non-separability search, order degradation.
* :mod:`procmat.cli`       — command-line front end (``procmat …``).
"""

from .labeled import (
    LabeledOperator,
    SpaceLabel,
    Tolerance,
    choi_identity,
    identity_operator,
    is_psd,
    link_product,
    min_eigenvalue,
    operator_from_json,
    operator_load,
    operator_dump,
    operator_to_json,
    partial_trace,
    partial_transpose,
    tensor,
    trace_replace,
)
from .processes import (
    Party,
    PartyLayout,
    ProcessMatrix,
    ValidationReport,
    bipartite_layout,
    chain_layout,
    classify,
    comb_project_ordered,
    dilate_ordered_comb,
    is_causally_separable,
    is_free,
    is_ordered,
    make_Z,
    make_a2b,
    make_b2a,
    make_free,
    make_fully_signalling,
    make_mix,
    make_ocb,
    project_valid,
    validate_process,
)
from .adapters import (
    Adapter,
    apply_adapter,
    compose_adapters,
    identity_adapter,
    is_admissible,
    is_afp,
    is_free_preserving,
    is_ns,
    make_lose,
    make_swap1,
    make_swap2,
    make_trace_replace_adapter,
    mix_adapter,
    project_ns_channel,
)
from .robustness import (
    RobustnessResult,
    Witness,
    causal_robustness,
    extract_witness,
    monotone_fQ,
    robustness_to_proc,
    signalling_robustness,
)
from .search import (
    FeasibilityResult,
    SeesawTrace,
    conversion_feasible,
    degrade_to_order,
    sample_process,
    search_afp_nonsep,
    seesaw_causal,
)
from .sdp import SDPProblem, SDPSolution, SolverOptions, solve

__version__ = "0.1.0"
