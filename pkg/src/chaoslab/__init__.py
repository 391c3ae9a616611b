"""chaoslab: exact chaos-expansion calculus for the compensated Poisson process.

Finite chaos expansions over grid-discretized kernels make the whole operator
calculus (derivative, divergence, conditioning, products) exactly computable,
while a Monte Carlo path layer verifies each identity by simulation.
"""
from .grid import (
    CellSet,
    Partition,
    SymKernel,
    common_refinement,
    contract,
    indicator_kernel,
    inner,
    lift,
    make_uniform_partition,
    refine,
    symmetrize,
    tensor_power_kernel,
)
from .chaos import (
    ChaosExpansion,
    DegreeCapExceeded,
    ProcessExpansion,
    condition,
    condition_process,
    cross_moment,
    expectation,
    indefinite_skorohod,
    linear_combine,
    mderivative,
    multiply,
    process_seminorm,
    second_moment,
    seminorm,
    skorohod,
)
from .pathsim import (
    McEstimate,
    PathTrace,
    PoissonPath,
    charlier,
    eval_chaos,
    ito_integral,
    mc_estimate,
    sample_path,
    trace_y_lambda,
)
from .represent import (
    ProjectedIntegrand,
    clark_ocone,
    clark_ocone_delta,
    forward_backward,
    assemble_forward_backward,
    ito_skorohod_w,
    pi_approximation,
    predictable_projection,
    split_tensor_power,
    v_norm,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
