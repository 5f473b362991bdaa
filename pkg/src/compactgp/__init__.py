"""compactgp: Gaussian processes with parametric compactly-supported kernels."""

__version__ = "0.1.0"

from .basis import BasisFamily, BasisSpec, make_basis
from .kernels import (
    CompactKernel,
    TargetFamily,
    TargetKernel,
    kernel_eval,
    kernel_from_json,
    kernel_grad_A,
    kernel_to_json,
    load_kernel,
    make_compact_kernel,
    save_kernel,
    target_eval,
    tensor_product_eval,
)
from .phi import (
    PhiMatrix,
    compute_phi,
    phi_eval,
    phi_numeric_oracle,
    rank_dimension,
)
from .approx import (
    ApproxProblem,
    ApproxResult,
    QuadratureSpec,
    approximate_target,
    build_problem,
    compute_B,
    compute_R,
    l2_error,
    project_psd,
    solve_compact_approx,
)
from .sparse import (
    CGStats,
    SparseKernelMatrix,
    SparsityPattern,
    assemble,
    conjugate_gradient,
    hutchinson_trace,
    sparsity_pattern_generic,
    sparsity_pattern_sorted,
    spmv,
)
from .gp import (
    FitConfig,
    FitReport,
    GPDataset,
    PosteriorResult,
    fit_mle,
    metrics,
    nll_dense,
    nll_grad_A,
    posterior,
    sample_gp,
)
