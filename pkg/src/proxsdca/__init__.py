"""Stochastic dual coordinate ascent with proximal regularizer handling.

A solver library and CLI for regularized loss minimization of linear
predictors: five per-coordinate update rules, duality-gap certificates,
accuracy-driven l1 front ends, and a dual-free multiclass/structured
trainer.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DimensionError,
    DomainError,
    NonConvergence,
    ParseError,
    ProxSdcaError,
    TraceError,
    UnsupportedNormPair,
    UnsupportedOption,
)
from .losses import (
    CostMatrix,
    HingeLoss,
    LogisticLoss,
    MulticlassHingeLoss,
    SmoothedHingeLoss,
    SquaredLoss,
    make_loss,
)
from .problem import (
    Checkpoint,
    Dataset,
    DualState,
    GapReport,
    Problem,
    RunTrace,
    dual_objective,
    dual_to_primal,
    duality_gap,
    primal_objective,
)
from .regularizers import (
    ElasticNetRegularizer,
    L2Regularizer,
    QNormRegularizer,
    make_regularizer,
    soft_threshold,
)
from .sparsevec import ExampleBlock, NormPair, SparseVec, op_norm, sparse_from_dense
from .solver import (
    RunResult,
    SolverConfig,
    StepDiagnostics,
    UpdateRule,
    coordinate_step,
    run,
    schedule_from_step_bound,
    schedule_lipschitz,
    schedule_smooth,
    seeded_streams,
    step_adaptive,
    step_conservative,
    step_exact,
    step_line_search,
    step_smooth_fixed,
)
from .structured import (
    DecodeResult,
    MulticlassState,
    StructuredResult,
    class_blocked_dataset,
    feature_radius,
    multiclass_oracle,
    schedule_structured,
    structured_step,
    train_structured,
)
from .l1 import (
    L1Certificate,
    L1Config,
    L1Result,
    certify_l1,
    l1_objective,
    solve_l1_l2,
    solve_l1_linf,
)
from .reference import (
    OracleConfig,
    brute_force_conjugate,
    expected_improvement_check,
    prox_grad_reference,
)
from .dataio import (
    ModelFile,
    load_model,
    parse_svmlight,
    read_cost_matrix,
    save_model,
    write_trace_csv,
)
